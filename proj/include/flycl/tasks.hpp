#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flycl/fly_model.hpp"

namespace flycl {

// Immutable after construction. Samples are stored one per column so a
// contiguous block of columns is a ready-made batch.
struct Dataset {
    Mat features;  // (dim x n)
    std::vector<std::int32_t> labels;
    int n_classes = 0;

    int size() const { return static_cast<int>(features.cols()); }
    int dim() const { return static_cast<int>(features.rows()); }
};

void validate_dataset(const Dataset& d);

enum class Protocol { ClassIncremental, Streaming };

struct Task {
    Dataset train;
    Dataset test;  // empty in streaming protocol
    std::vector<int> classes;
};

struct TaskStream {
    std::vector<Task> tasks;
    Protocol protocol = Protocol::ClassIncremental;
    int n_classes = 0;
    int epochs_per_task = 1;
};

// --- synthetic odors ---

struct OdorConfig {
    int n_dims = 50;
    int n_classes = 10;
    double noise_sigma = 0.5;
    int train_per_class = 5000;
    int test_per_class = 1000;
    std::uint64_t seed = 0;
};

struct OdorData {
    Dataset train;
    Dataset test;
    Mat prototypes;  // (n_dims x n_classes)
};

// Prototypes from U[0,1]^n, one per class; samples add i.i.d. Gaussian
// noise per dimension. Train and test are disjoint draws around the same
// prototypes.
OdorData gen_odor_dataset(const OdorConfig& cfg);

// --- class-incremental splitting ---

enum class ClassOrder { Natural, Random };

TaskStream split_cil(const Dataset& train, const Dataset& test, int classes_per_task, std::uint64_t seed,
                     ClassOrder order = ClassOrder::Natural);

// --- permuted streams ---

enum class PermuteMode { Input, Label };

struct PermutationSpec {
    PermuteMode mode = PermuteMode::Input;
    std::uint64_t seed = 0;
    bool identity_first = true;  // task 0 keeps the base ordering
};

// The bijection used for a given task; deterministic in (spec.seed, task).
std::vector<int> permutation_for(const PermutationSpec& spec, int task, int n);

// Streaming protocol: every task draws samples_per_task samples from the
// base pool (with replacement only if the pool is smaller), then permutes
// pixels (input mode) or labels (label mode).
TaskStream make_permuted_stream(const Dataset& base, const PermutationSpec& spec, int n_tasks, int samples_per_task);

// --- class imbalance ---

enum class ImbalanceOrder { Normal, Reverse, Random };

struct ImbalanceSpec {
    double gamma = 1.0;  // max/min class-size ratio
    ImbalanceOrder order = ImbalanceOrder::Normal;
    int n_max = 0;  // largest class size; 0 means "smallest available class count"
    std::uint64_t seed = 0;
};

// Subsamples so class sizes follow n_max * gamma^(-(k-1)/(C-1)) along the
// learning order: Normal gives the first-learned class the largest count,
// Reverse inverts, Random shuffles the size sequence per seed.
Dataset apply_imbalance(const Dataset& data, const ImbalanceSpec& spec, const std::vector<int>& class_order);

// --- containers ---

// FLYF feature file, little-endian: magic, u16 version, u32 rows/cols/
// classes, f32 features row-major, u32 labels.
Dataset load_feature_file(const std::filesystem::path& path);
void save_feature_file(const std::filesystem::path& path, const Dataset& data);

// IDX (big-endian headers), pixels scaled to [0,1].
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

// MNIST-shaped synthetic stand-in: 784-wide, 10 classes, multimodal class
// prototypes with clipped Gaussian noise. Used where the real IDX files are
// not on disk.
Dataset gen_synthetic_mnist(int n_samples, std::uint64_t seed, int n_modes_per_class = 3, double noise_sigma = 0.25);

}  // namespace flycl
