#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <sstream>

#include "complab/target.hpp"

using namespace complab;

TEST_CASE("support size follows |V| * k^(n-1)") {
    TargetSpec spec{5, 5, {0.8, 0.2}, 7};
    TargetDistribution t = TargetDistribution::build(spec);
    CHECK(t.support_count() == 80);

    // brute force over the whole space
    SequenceCodec codec = t.codec();
    int64_t nonzero = 0;
    double mass = 0.0;
    for (uint64_t id = 0; id < codec.total(); ++id) {
        const double p = t.probability(id);
        if (p > 0.0) {
            ++nonzero;
            mass += p;
        }
    }
    CHECK(nonzero == 80);
    CHECK(mass == Catch::Approx(1.0).margin(1e-12));

    TargetSpec three{5, 5, {0.6, 0.3, 0.1}, 7};
    CHECK(TargetDistribution::build(three).support_count() == 405);
}

TEST_CASE("n=1 target equals its first step") {
    TargetSpec spec{3, 1, {1.0}, 11};
    TargetDistribution t = TargetDistribution::build(spec);
    for (int32_t c = 0; c < 3; ++c) {
        CHECK(t.probability(static_cast<uint64_t>(c)) ==
              Catch::Approx(t.first_step()[static_cast<size_t>(c)]));
    }
    CHECK(t.analytic_entropy() == Catch::Approx(entropy_nats(t.first_step())).margin(1e-15));
}

TEST_CASE("spec validation") {
    TargetSpec long_pattern{2, 3, {0.5, 0.3, 0.2}, 1};
    CHECK_THROWS_MATCHES(TargetDistribution::build(long_pattern), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::spec; }));
    TargetSpec bad_sum{5, 3, {0.8, 0.1}, 1};
    CHECK_THROWS_MATCHES(TargetDistribution::build(bad_sum), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::spec; }));
}

TEST_CASE("per-step entropy closed forms") {
    auto per_step = [](std::vector<double> pattern) { return entropy_nats(pattern); };
    CHECK(per_step({0.8, 0.2}) == Catch::Approx(0.500402).margin(5e-7));
    CHECK(per_step({0.9, 0.1}) == Catch::Approx(0.325083).margin(5e-7));
    CHECK(per_step({0.6, 0.3, 0.1}) == Catch::Approx(0.897946).margin(5e-7));
}

TEST_CASE("analytic entropy equals enumeration entropy") {
    for (uint64_t seed : {1ULL, 9ULL, 123ULL}) {
        TargetSpec spec{4, 4, {0.8, 0.2}, seed};
        TargetDistribution t = TargetDistribution::build(spec);
        double brute = 0.0;
        for (uint64_t id = 0; id < t.codec().total(); ++id) {
            const double p = t.probability(id);
            if (p > 0.0) {
                brute -= p * std::log(p);
            }
        }
        CHECK(t.analytic_entropy() == Catch::Approx(brute).margin(1e-12));
    }
}

TEST_CASE("conditional lookup") {
    TargetSpec spec{5, 5, {0.8, 0.2}, 3};
    TargetDistribution t = TargetDistribution::build(spec);

    const auto root = t.conditional(std::span<const int32_t>{});
    REQUIRE(root.has_value());
    CHECK(std::equal(root->begin(), root->end(), t.first_step().begin()));

    // every reachable row sums to 1 and has exactly two positive entries
    std::vector<int32_t> prefix;
    for (int32_t c = 0; c < 5; ++c) {
        prefix = {c};
        const auto row = t.conditional(prefix);
        REQUIRE(row.has_value());
        double sum = 0.0;
        int positives = 0;
        for (double p : *row) {
            sum += p;
            positives += p > 0.0 ? 1 : 0;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        CHECK(positives == 2);

        // extend with a zero-probability character: unreachable
        for (int32_t nxt = 0; nxt < 5; ++nxt) {
            if ((*row)[static_cast<size_t>(nxt)] == 0.0) {
                const std::vector<int32_t> bad = {c, nxt};
                CHECK_FALSE(t.conditional(bad).has_value());
                break;
            }
        }
    }

    const std::vector<int32_t> too_long = {0, 1, 0, 1, 0};
    CHECK_THROWS_MATCHES(t.conditional(too_long), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::range; }));
}

TEST_CASE("dataset sampling is reproducible and in-support") {
    TargetSpec spec{5, 5, {0.8, 0.2}, 21};
    TargetDistribution t = TargetDistribution::build(spec);

    Dataset a = sample_dataset(t, 2000, 77);
    Dataset b = sample_dataset(t, 2000, 77);
    CHECK(a.tokens == b.tokens);

    for (int64_t i = 0; i < a.count; ++i) {
        CHECK(t.sequence_probability(a.row(i)) > 0.0);
    }
}

TEST_CASE("empirical distribution counting") {
    Dataset d;
    d.vocab_size = 3;
    d.length = 2;
    d.count = 4;
    d.tokens = {0, 1, 0, 1, 0, 1, 2, 2};  // three copies of (0,1), one (2,2)
    EmpiricalDistribution e = EmpiricalDistribution::from(d);
    const SequenceCodec codec{3, 2};
    const std::vector<int32_t> s01 = {0, 1};
    const std::vector<int32_t> s22 = {2, 2};
    CHECK(e.probability(codec.encode(s01)) == Catch::Approx(0.75));
    CHECK(e.probability(codec.encode(s22)) == Catch::Approx(0.25));

    double total = 0.0;
    e.for_each_support([&](uint64_t, double p) { total += p; });
    CHECK(total == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("sampled entropy concentrates on the analytic value") {
    TargetSpec spec{5, 5, {0.8, 0.2}, 7};
    TargetDistribution t = TargetDistribution::build(spec);
    Dataset d = sample_dataset(t, 65536, 13);
    EmpiricalDistribution e = EmpiricalDistribution::from(d);
    CHECK(std::abs(e.entropy() - t.analytic_entropy()) < 0.02);
}

TEST_CASE("degenerate target: one-hot first step, deterministic transitions") {
    // constructed through the text format; the builder's simplex draw never
    // produces a one-hot first step
    std::stringstream ss;
    ss << "complab-target v1\n"
       << "vocab_size 3\n"
       << "length 3\n"
       << "pattern 1\n"
       << "seed 0\n"
       << "first_step 1 0 0\n"
       << "transition 1 0 0 1 0\n"
       << "transition 2 0 1 0 0 1\n"
       << "end\n";
    TargetDistribution t = TargetDistribution::load(ss);
    CHECK(t.analytic_entropy() == 0.0);

    Dataset d = sample_dataset(t, 16, 99);
    for (int64_t i = 0; i < d.count; ++i) {
        const auto row = d.row(i);
        CHECK(row[0] == 0);
        CHECK(row[1] == 1);
        CHECK(row[2] == 2);
    }
}

TEST_CASE("sequence codec round trip over the full range") {
    const SequenceCodec codec{4, 5};
    std::vector<int32_t> seq(5);
    for (uint64_t id = 0; id < codec.total(); ++id) {
        codec.decode(id, seq);
        CHECK(codec.encode(seq) == id);
    }
    // most significant digit is the first character
    codec.decode(3 * 4 * 4 * 4 * 4, seq);
    CHECK(seq[0] == 3);
    CHECK(seq[4] == 0);
}

TEST_CASE("target serialization round trip") {
    TargetSpec spec{5, 5, {0.8, 0.2}, 99};
    TargetDistribution t = TargetDistribution::build(spec);

    std::stringstream ss;
    t.save(ss);
    TargetDistribution back = TargetDistribution::load(ss);

    CHECK(back.spec().vocab_size == 5);
    CHECK(back.spec().seed == 99);
    for (uint64_t id = 0; id < t.codec().total(); ++id) {
        const double p0 = t.probability(id);
        const double p1 = back.probability(id);
        CHECK(std::memcmp(&p0, &p1, sizeof(double)) == 0);
    }
}

TEST_CASE("dataset serialization round trip") {
    TargetSpec spec{5, 5, {0.8, 0.2}, 5};
    TargetDistribution t = TargetDistribution::build(spec);
    Dataset d = sample_dataset(t, 64, 3);
    std::stringstream ss;
    d.save(ss);
    Dataset back = Dataset::load(ss);
    CHECK(back.tokens == d.tokens);
    CHECK(back.count == d.count);
}
