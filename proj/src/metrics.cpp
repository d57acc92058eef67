#include "flycl/metrics.hpp"

#include <Eigen/SVD>
#include <cassert>
#include <cmath>

namespace flycl {

namespace {

void require_row(const MetricsLedger& ledger, int t) {
    if (t < 1 || t > static_cast<int>(ledger.acc.size())) throw DataError("ledger row " + std::to_string(t) + " missing");
    if (static_cast<int>(ledger.acc[t - 1].size()) < t)
        throw DataError("ledger row " + std::to_string(t) + " incomplete");
}

}  // namespace

double average_accuracy(const MetricsLedger& ledger, int t) {
    require_row(ledger, t);
    double s = 0.0;
    for (int i = 1; i <= t; ++i) s += ledger.acc[t - 1][i - 1];
    return s / t;
}

double accumulated_accuracy(const MetricsLedger& ledger, int t) {
    double s = 0.0;
    for (int i = 1; i <= t; ++i) s += average_accuracy(ledger, i);
    return s / t;
}

double backward_transfer(const MetricsLedger& ledger, int t) {
    if (t < 2) throw MetricError("backward transfer undefined for t < 2");
    require_row(ledger, t);
    double with_t = 0.0, without_t = 0.0;
    for (int i = 1; i <= t; ++i) {
        const double d = ledger.acc[t - 1][i - 1] - ledger.acc[i - 1][i - 1];
        with_t += d;
        if (i < t) without_t += d;
    }
    // the i = t term is identically zero; both index conventions agree
    assert(with_t == without_t);
    return with_t / (t - 1);
}

double forward_transfer(const MetricsLedger& ledger, int t) {
    if (t < 2) throw MetricError("forward transfer undefined for t < 2");
    double s = 0.0;
    for (int i = 2; i <= t; ++i) {
        require_row(ledger, i);
        if (!ledger.has_scratch(i)) throw DataError("scratch baseline for task " + std::to_string(i) + " missing");
        s += ledger.acc[i - 1][i - 1] - ledger.scratch_acc[i - 1];
    }
    return s / (t - 1);
}

double online_accuracy(const MetricsLedger& ledger, int task_i) {
    if (task_i < 1 || task_i > static_cast<int>(ledger.batch_acc.size()) || ledger.batch_acc[task_i - 1].empty())
        throw DataError("no batch accuracies logged for task " + std::to_string(task_i));
    const auto& b = ledger.batch_acc[task_i - 1];
    double s = 0.0;
    for (double v : b) s += v;
    return s / static_cast<double>(b.size());
}

double dormant_units(const Vec& mean_abs_activation, double delta) {
    if (mean_abs_activation.size() == 0) throw DataError("dormant_units: empty activation vector");
    int n = 0;
    for (Eigen::Index i = 0; i < mean_abs_activation.size(); ++i)
        if (mean_abs_activation[i] < delta) ++n;
    return static_cast<double>(n) / static_cast<double>(mean_abs_activation.size());
}

int stable_rank(const Mat& W, double delta) {
    if (W.size() == 0 || W.cwiseAbs().maxCoeff() == 0.0) throw MetricError("stable rank undefined for a zero matrix");
    Eigen::BDCSVD<Mat> svd(W);
    Vec sv = svd.singularValues();
    const double cutoff = 1e-12 * sv[0];
    double total = 0.0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv[i] < cutoff) sv[i] = 0.0;
        total += sv[i];
    }
    const double target = (1.0 - delta) * total;
    double cum = 0.0;
    for (Eigen::Index k = 0; k < sv.size(); ++k) {
        cum += sv[k];
        if (cum >= target) return static_cast<int>(k) + 1;
    }
    return static_cast<int>(sv.size());
}

double avg_weight_magnitude(const Vec& params) {
    if (params.size() == 0) throw DataError("avg_weight_magnitude: empty parameter vector");
    return params.cwiseAbs().sum() / static_cast<double>(params.size());
}

double avg_weight_magnitude(const std::vector<ParamRef>& params) {
    double s = 0.0;
    std::ptrdiff_t n = 0;
    for (const auto& seg : params) {
        for (std::ptrdiff_t i = 0; i < seg.n; ++i) s += std::abs(seg.data[i]);
        n += seg.n;
    }
    if (n == 0) throw DataError("avg_weight_magnitude: empty parameter vector");
    return s / static_cast<double>(n);
}

}  // namespace flycl
