#pragma once

// Per-epoch scalar measurements and their CSV serialization. Column order is
// part of the file contract; reals print at 9 significant digits.

#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "complab/common.hpp"

namespace complab {

struct MetricsRecord {
    int64_t epoch = 0;  // 1-based
    double mean_train_loss = 0.0;
    double model_entropy = 0.0;
    double kl_vs_empirical_target = 0.0;
    double cross_entropy_full = 0.0;
    double sparse_part_entropy = 0.0;
    double nonsparse_part_entropy = 0.0;
    double dead_proportion = 0.0;
    double mean_active_fraction = 0.0;
    int spike_flag = 0;
};

inline const char* kMetricsHeader =
    "epoch,mean_train_loss,model_entropy,kl_vs_empirical_target,cross_entropy_full,"
    "sparse_part_entropy,nonsparse_part_entropy,dead_proportion,mean_active_fraction,spike_flag";

inline void write_metrics_csv(const std::vector<MetricsRecord>& records, std::ostream& os) {
    require(!records.empty(), Errc::parameter, "no metrics records to write");
    os << kMetricsHeader << "\n";
    char buf[256];
    for (const MetricsRecord& r : records) {
        std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d",
                      static_cast<long long>(r.epoch), r.mean_train_loss, r.model_entropy,
                      r.kl_vs_empirical_target, r.cross_entropy_full, r.sparse_part_entropy,
                      r.nonsparse_part_entropy, r.dead_proportion, r.mean_active_fraction,
                      r.spike_flag);
        os << buf << "\n";
    }
}

inline std::vector<MetricsRecord> read_metrics_csv(std::istream& is) {
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), Errc::io, "empty metrics file");
    require(line == kMetricsHeader, Errc::io, "unexpected metrics header");
    std::vector<MetricsRecord> out;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        MetricsRecord r;
        std::istringstream ss(line);
        std::string field;
        auto next = [&]() {
            require(static_cast<bool>(std::getline(ss, field, ',')), Errc::io,
                    "short metrics row");
            return field;
        };
        r.epoch = std::stoll(next());
        r.mean_train_loss = std::stod(next());
        r.model_entropy = std::stod(next());
        r.kl_vs_empirical_target = std::stod(next());
        r.cross_entropy_full = std::stod(next());
        r.sparse_part_entropy = std::stod(next());
        r.nonsparse_part_entropy = std::stod(next());
        r.dead_proportion = std::stod(next());
        r.mean_active_fraction = std::stod(next());
        r.spike_flag = std::stoi(next());
        out.push_back(r);
    }
    return out;
}

}  // namespace complab
