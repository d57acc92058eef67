#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flycl/fly_model.hpp"

namespace flycl {

// Per-checkpoint plasticity diagnostics, sampled at task boundaries on a
// fixed probe batch.
struct Diagnostics {
    double dormant_all = 0.0;  // pre-layer and coded expansion units combined
    double dormant_pre = 0.0;
    double dormant_kc = 0.0;
    bool has_pre = false;
    bool has_kc = false;
    std::optional<int> stable_rank;  // of the layer feeding the expansion; absent without pre-layers
    double weight_mag = 0.0;         // mean |w| over all trainable parameters
    double head_weight_mag = 0.0;
};

// Append-only record of one run. Stage indices are 1-based in the metric
// formulas below; storage is 0-based.
struct MetricsLedger {
    std::uint64_t seed = 0;
    int n_tasks = 0;
    std::vector<std::vector<double>> acc;        // acc[t][i], i <= t
    std::vector<double> scratch_acc;             // scratch_acc[i]; entries < 0 mean "not measured"
    std::vector<std::vector<double>> batch_acc;  // streaming: per task, prequential batch accuracies
    std::vector<Diagnostics> diags;              // one per task boundary
    std::vector<double> wall_clock_s;            // per task
    std::map<std::string, double> extras;        // scalar facts: task_grad_angle, imbalance_ratio, ...
    std::string eval_masking = "seen-classes";
    bool aborted = false;
    std::string abort_reason;

    bool has_scratch(int i /*1-based*/) const {
        return i >= 1 && i <= static_cast<int>(scratch_acc.size()) && scratch_acc[i - 1] >= 0.0;
    }
};

// A_t = (1/t) sum_{i<=t} a_{t,i}
double average_accuracy(const MetricsLedger& ledger, int t);

// bar A_t = (1/t) sum_{i<=t} A_i
double accumulated_accuracy(const MetricsLedger& ledger, int t);

// BWT_t = (1/(t-1)) sum_{i<=t} (a_{t,i} - a_{i,i}); the i = t term is zero
double backward_transfer(const MetricsLedger& ledger, int t);

// FWT_t = (1/(t-1)) sum_{i=2..t} (a_{i,i} - scratch_i)
double forward_transfer(const MetricsLedger& ledger, int t);

// mean prequential batch accuracy of one task (1-based)
double online_accuracy(const MetricsLedger& ledger, int task_i);

// fraction of units whose probe-batch mean |activation| falls below delta
double dormant_units(const Vec& mean_abs_activation, double delta = 0.01);

// smallest k whose leading singular values hold a 1-delta fraction of the
// total singular value mass
int stable_rank(const Mat& W, double delta = 0.01);

double avg_weight_magnitude(const Vec& params);
double avg_weight_magnitude(const std::vector<ParamRef>& params);

}  // namespace flycl
