#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flycl/fly_model.hpp"

namespace flycl {

// Density of the angle between two random directions in n dimensions:
// Z_n sin^(n-2)(theta) with Z_n = Gamma(n/2) / (Gamma((n-1)/2) sqrt(pi)),
// computed through log-gamma. Uniform 1/pi at n = 2.
double angle_pdf(int n, double theta);

// Adaptive Simpson quadrature; tol is an absolute error target.
double integrate_adaptive(const std::function<double(double)>& f, double a, double b, double tol = 1e-10);

// Integral of the pdf over [0, pi]; 1 up to quadrature error.
double angle_pdf_normalization(int n);

// Var of theta about pi/2 under the angle pdf, by quadrature.
double angle_variance(int n);

struct AngleHistogram {
    std::vector<double> edges;  // bins + 1 monotone edges spanning [0, pi]
    std::vector<double> prob;   // empirical probability mass per bin
    int n_pairs = 0;
};

AngleHistogram sample_angle_histogram(int n, int n_pairs, std::uint64_t seed, int bins = 30);

// Probability mass the analytic pdf assigns to [lo, hi].
double analytic_angle_prob(int n, double lo, double hi);

// L1 distance between the empirical histogram and the analytic masses.
double histogram_l1_distance(int n, const AngleHistogram& h);

struct BirthdayResult {
    double p = 0.0;
    double log_p = 0.0;  // -inf when p = 0
};

// Probability that m draws from the C(n,r) possible input subsets are all
// distinct, evaluated in log space.
BirthdayResult birthday_probability(int n, int r, std::int64_t m);

// log C(n, r) through log-gamma
double log_binomial(int n, int r);

// arccos of the clamped cosine similarity, in degrees.
double gradient_angle_degrees(const Vec& g1, const Vec& g2);

// The gradients at two task optima are considered undefined when either
// norm is below this threshold.
inline constexpr double kGradientNormFloor = 1e-10;

struct TaskOptimaInputs {
    const FlyModel* model_template = nullptr;      // architecture carrier
    const Mat* head_a = nullptr;                   // head weights at the first stage's end
    const Mat* head_b = nullptr;                   // head weights at the last stage's end
    const Mat* features_a = nullptr;               // first task's training features
    const std::vector<std::int32_t>* labels_a = nullptr;
    const Mat* features_b = nullptr;
    const std::vector<std::int32_t>* labels_b = nullptr;
    std::vector<std::uint8_t> mask_a;              // classes in the softmax at each stage
    std::vector<std::uint8_t> mask_b;
};

// Full-batch loss gradient of task A at its stage-end head vs. task B at
// its own; flattened over head parameters. nullopt when either gradient is
// numerically zero.
std::optional<double> task_optima_gradient_angle(const TaskOptimaInputs& in);

// Jaccard index of the per-task "active profiles": units active in at
// least half of a task's samples.
double kc_overlap(const std::vector<std::vector<int>>& active_sets_a,
                  const std::vector<std::vector<int>>& active_sets_b, int n_units);

struct FlopsReport {
    std::int64_t dense_forward_flops = 0;  // 2 n_in n_kc: one multiply and one add per entry
    std::int64_t fly_forward_flops = 0;    // r n_kc: additions only
    std::int64_t head_update_flops = 0;    // 6 ceil(k n_kc) n_classes
    std::string notes;
};

FlopsReport flops_report(int n_in, int n_kc, int r, double k, int n_classes);

// --- mean-value identity on the loss difference ---

// L(w) = 0.5 (w - w0)' H (w - w0); gradient H (w - w0).
struct QuadraticLoss {
    Mat H;
    Vec w0;
    double value(const Vec& w) const;
    Vec grad(const Vec& w) const;
};

struct MvtCheckResult {
    double xi = 0.0;        // location in [0,1] minimizing the residual
    double residual = 0.0;  // |lhs - rhs| at that xi
    double loss_diff = 0.0; // L1(w) - L1(w - eta grad_t(w))
    double inner = 0.0;     // <grad_1(w), grad_t(w)>
};

// Scans xi over a grid (with bisection refinement between the bracketing
// grid points) for the identity
//   L1(w) - L1(w') = eta <grad_1(w - xi eta grad_t(w)), grad_t(w)>,
// where w' = w - eta grad_t(w).
MvtCheckResult loss_difference_mvt(const QuadraticLoss& l1, const QuadraticLoss& lt, const Vec& w, double eta,
                                   int grid = 1024);

}  // namespace flycl
