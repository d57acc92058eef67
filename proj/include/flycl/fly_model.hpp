#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flycl/errors.hpp"
#include "flycl/rng.hpp"

namespace flycl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Frozen expansion wiring. Row i lists the degree input indices that feed
// unit i; the implied matrix entry is 1 on those indices and 0 elsewhere,
// so no weights are stored. Construction is deterministic per seed and the
// wiring is never touched by training.
struct SparseBinaryProjection {
    int n_in = 0;
    int n_out = 0;
    int degree = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint32_t> flat;  // n_out rows of exactly degree sorted indices

    std::span<const std::uint32_t> row(int i) const {
        return {flat.data() + static_cast<std::size_t>(i) * degree, static_cast<std::size_t>(degree)};
    }
};

SparseBinaryProjection build_projection(int n_in, int n_out, int degree, std::uint64_t seed);

// out[i] = sum of x over row i's indices
void expand(const SparseBinaryProjection& proj, const Vec& x, Vec& out);
Vec expand(const SparseBinaryProjection& proj, const Vec& x);

// Winner-take-all configuration. active_count = ceil(k * n_out).
struct CodingConfig {
    double coding_level = 1.0;
    int active_count = 1;
};

CodingConfig make_coding(double coding_level, int n_out);

// Keeps the active_count largest entries (ties broken toward the lowest
// index), zeroes the rest. active_set comes back sorted ascending.
void top_k_code(const Vec& raw, const CodingConfig& coding, Vec& coded, std::vector<int>& active_set);

enum class Activation : std::uint8_t { Identity = 0, Relu = 1 };

struct DensePreLayer {
    Mat W;  // (out x in)
    Vec b;
    Activation act = Activation::Relu;
};

struct DenseLinearHead {
    Mat W;  // (n_classes x input_dim)
    Vec b;  // empty when the head has no bias
    bool has_bias() const { return b.size() > 0; }
};

struct PreLayerSpec {
    int width = 0;
    Activation act = Activation::Relu;
};

struct ModelConfig {
    int n_features = 50;
    std::vector<PreLayerSpec> pre;
    int n_kc = 2000;
    int degree = 6;
    double coding_level = 0.01;
    int n_classes = 10;
    bool ablate_kc = false;
    bool head_bias = false;
    std::uint64_t seed = 0;

    // Dimension of the vector entering the expansion stage (or the head,
    // when ablated): the last pre-layer width, else the raw feature width.
    int expansion_input_dim() const { return pre.empty() ? n_features : pre.back().width; }
    int head_input_dim() const { return ablate_kc ? expansion_input_dim() : n_kc; }
};

struct FlyModel {
    ModelConfig config;
    std::vector<DensePreLayer> pre;
    SparseBinaryProjection projection;
    CodingConfig coding;
    DenseLinearHead head;
    bool ablate_kc = false;

    int input_dim() const { return config.n_features; }
    int n_classes() const { return static_cast<int>(head.W.rows()); }
};

// Builds the full network from config: seeded uniform init on
// [-1/sqrt(fan_in), 1/sqrt(fan_in)] for every trainable layer, and the
// frozen projection from its own derived substream.
FlyModel make_model(const ModelConfig& cfg);

struct ForwardTrace {
    Vec input;
    std::vector<Vec> pre_lin;  // per pre-layer, W x + b before the activation
    std::vector<Vec> pre_out;  // per pre-layer, after the activation
    Vec kc_raw;                // empty when ablated
    Vec kc_coded;              // empty when ablated
    std::vector<int> active_set;
    Vec logits;
};

ForwardTrace forward(const FlyModel& model, const Vec& x);

struct GradientSet {
    std::vector<Mat> pre_W;
    std::vector<Vec> pre_b;
    Mat head_W;
    Vec head_b;  // sized 0 when the head has no bias

    void set_zero();
};

GradientSet zeros_like(const FlyModel& model);

// Gradients of the scalar loss whose logit-gradient is given. The head
// gradient is exactly zero outside the trace's active columns; the frozen
// projection never receives a gradient.
GradientSet backward(const FlyModel& model, const ForwardTrace& trace, const Vec& loss_grad_logits);

// Softmax cross entropy with max subtraction. Returns (loss, dloss/dlogits).
std::pair<double, Vec> cross_entropy_loss(const Vec& logits, int label);

// Same, restricted to the allowed classes: disallowed logits are excluded
// from the softmax and get zero gradient. allowed.size() must equal the
// class count; the label must be allowed.
std::pair<double, Vec> cross_entropy_loss_masked(const Vec& logits, int label, const std::vector<std::uint8_t>& allowed);

// --- flat traversal over trainable parameters (projection excluded) ---

struct ParamRef {
    double* data = nullptr;
    std::ptrdiff_t n = 0;
};

// Order is frozen (pre-layer W then b, in depth order, then head W, then
// head bias): learner state vectors and checkpoints rely on it.
std::vector<ParamRef> trainable_params(FlyModel& model);
std::vector<ParamRef> grad_refs(GradientSet& grads);
std::int64_t trainable_count(const FlyModel& model);

Vec flatten(const std::vector<ParamRef>& refs);
void unflatten(const Vec& flat, const std::vector<ParamRef>& refs);

// --- batched path: one column per sample ---

struct BatchTrace {
    Mat input;                             // (n_features x B)
    std::vector<Mat> pre_lin;              // per layer (width x B)
    std::vector<Mat> pre_out;
    std::vector<std::vector<int>> active;  // per sample, sorted active units
    std::vector<Vec> active_vals;          // per sample, retained values
    Mat logits;                            // (n_classes x B)
    int batch() const { return static_cast<int>(input.cols()); }
};

BatchTrace forward_batch(const FlyModel& model, const Mat& X);

// Sum over samples of the per-sample gradients; scale the logit gradients
// beforehand for a batch mean.
GradientSet backward_batch(const FlyModel& model, const BatchTrace& trace, const Mat& logit_grads);

}  // namespace flycl
