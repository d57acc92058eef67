#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <vector>

#include "flycl/acceptance.hpp"
#include "flycl/ledger_io.hpp"

namespace flycl {

struct AggregationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LoadedRun {
    MetricsLedger ledger;
    nlohmann::json meta;
    std::filesystem::path path;
};

// Recursively loads every run CSV (with its .meta.json sidecar) under dir.
std::vector<LoadedRun> load_runs(const std::filesystem::path& dir);

struct Aggregate {
    double mean = 0.0;
    double stdev = 0.0;  // sample standard deviation; 0 with single_seed set
    int n = 0;
    bool single_seed = false;
};

Aggregate aggregate_values(const std::vector<double>& v);

// Acceptance verdicts from whatever ledgers are present; criteria that are
// pure computations are always evaluated, training-based ones only when
// their runs exist in the directory.
std::vector<acceptance::CriterionResult> evaluate_criteria(const std::vector<LoadedRun>& runs);

// Aggregates across seeds, emits one CSV per recognized figure panel plus
// the acceptance verdict JSON and a group summary.
void write_report(const std::filesystem::path& ledger_dir, const std::filesystem::path& out_dir);

}  // namespace flycl
