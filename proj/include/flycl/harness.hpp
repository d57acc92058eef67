#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flycl/learners.hpp"
#include "flycl/metrics.hpp"
#include "flycl/tasks.hpp"

namespace flycl {

struct ModelSpec {
    int pn = 50;  // width entering the expansion stage
    int kc = 2000;
    int degree = 6;
    double coding_level = 0.01;
    std::vector<PreLayerSpec> pre;
    bool ablate = false;
    bool head_bias = false;
};

enum class DatasetKind { Odor, Flyf, Idx, Synth };

struct TaskSpec {
    DatasetKind dataset = DatasetKind::Odor;
    Protocol protocol = Protocol::ClassIncremental;
    int n_tasks = 5;
    int classes_per_task = 2;
    ClassOrder class_order = ClassOrder::Natural;

    OdorConfig odor;  // the per-run seed is injected by the harness

    PermuteMode permute_mode = PermuteMode::Input;
    int samples_per_task = 10000;
    int base_pool = 10000;  // pool size for generated streaming bases

    std::string feature_file;       // FLYF train
    std::string feature_file_test;  // FLYF test (CIL)
    std::string idx_images;
    std::string idx_labels;

    bool imbalanced = false;
    double gamma = 1.0;
    ImbalanceOrder imbalance_order = ImbalanceOrder::Normal;
    int n_max = 0;
};

struct ExperimentConfig {
    ModelSpec model;
    LearnerSpec learner;
    TaskSpec task;
    int epochs = 1;
    int batch_size = 64;
    double lr = 0.005;
    ClipConfig clip;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::string out_dir = "out";
    int eval_batch = 512;
    int probe_size = 1000;
    bool snapshot_heads = false;
    bool scratch = true;  // measure from-scratch baselines in CIL runs
};

struct RunResult {
    MetricsLedger ledger;
    std::vector<Mat> head_snapshots;              // when snapshot_heads
    std::optional<double> task_grad_angle;        // first-vs-last stage task gradients
    std::optional<FlyModel> final_model;
};

// Deterministic in (spec, seed).
TaskStream build_task_stream(const TaskSpec& spec, std::uint64_t seed);

// Accuracy of argmax-over-allowed predictions, evaluated in pure batches.
double evaluate_accuracy(const FlyModel& model, const Dataset& data, const std::vector<std::uint8_t>& allowed,
                         int eval_batch = 512);

Diagnostics compute_diagnostics(const FlyModel& model, const Mat& probe, int eval_batch = 512);

// Sequential class-incremental training: trains task by task, evaluates the
// lower-triangular accuracy matrix with seen-classes-so-far masking, runs
// the learner's boundary hooks, and (optionally) the scratch baselines.
RunResult run_cil(const ExperimentConfig& cfg, std::uint64_t seed);

// ~a_i: the model reinitialized from the seed and trained on task i alone
// with the same budget, evaluated on task i's classes. Index 0 is left
// unmeasured (-1); the metric only consumes i >= 2.
std::vector<double> run_scratch_baselines(const ExperimentConfig& cfg, std::uint64_t seed, const TaskStream& stream);

// One pass over a streaming task sequence with prequential batch scoring
// and boundary diagnostics on a fixed probe batch.
RunResult run_streaming(const ExperimentConfig& cfg, std::uint64_t seed);

// Dispatch on the protocol.
RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed);

// --- sweeps ---

struct SweepRun {
    double value = 0.0;
    std::uint64_t seed = 0;
    RunResult result;
};

bool is_sweepable_parameter(const std::string& name);

// Applies one swept value to a copy of the config. expansion_ratio sets
// kc = value * pn.
ExperimentConfig apply_sweep_value(const ExperimentConfig& cfg, const std::string& parameter, double value);

// Full experiment per (value, seed), fanned across worker threads.
std::vector<SweepRun> sweep(const ExperimentConfig& cfg, const std::string& parameter,
                            const std::vector<double>& values, int threads = 1);

// Runs all seeds of one config, fanned across worker threads.
std::vector<RunResult> run_all_seeds(const ExperimentConfig& cfg, int threads = 1);

}  // namespace flycl
