#pragma once

#include <filesystem>

#include <nlohmann/json_fwd.hpp>

#include "flycl/metrics.hpp"

namespace flycl {

// One CSV per run: header `seed,task_t,task_i,metric,value`, stage indices
// 1-based, blank where a dimension does not apply. A .meta.json sidecar
// carries the config echo. Writes are atomic.
void write_ledger_csv(const std::filesystem::path& csv_path, const MetricsLedger& ledger,
                      const nlohmann::json& meta);

// Rebuilds a ledger from its CSV (derived rows like avg_acc are recomputed
// from the base rows, not trusted).
MetricsLedger read_ledger_csv(const std::filesystem::path& csv_path);

nlohmann::json read_ledger_meta(const std::filesystem::path& csv_path);

// Summary scalars of one finished run, used by summaries and figures.
struct FinalMetrics {
    double final_avg_acc = -1.0;
    double final_acc_acc = -1.0;
    double final_bwt = 0.0;
    bool has_bwt = false;
    double final_fwt = 0.0;
    bool has_fwt = false;
    double mean_online_acc = -1.0;
    bool has_online = false;
};

FinalMetrics final_metrics(const MetricsLedger& ledger);

}  // namespace flycl
