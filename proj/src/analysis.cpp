#include "flycl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flycl/rng.hpp"

namespace flycl {

double angle_pdf(int n, double theta) {
    if (n < 2) throw DomainError("angle pdf requires n >= 2");
    if (theta < 0.0 || theta > M_PI) throw DomainError("theta outside [0, pi]");
    const double log_z = std::lgamma(n / 2.0) - std::lgamma((n - 1) / 2.0) - 0.5 * std::log(M_PI);
    if (n == 2) return std::exp(log_z);
    const double s = std::sin(theta);
    if (s <= 0.0) return 0.0;
    return std::exp(log_z + (n - 2) * std::log(s));
}

namespace {

double simpson(double a, double fa, double fm, double b, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive(const std::function<double(double)>& f, double a, double fa, double b, double fb, double m,
                double fm, double whole, double tol, int depth) {
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(a, fa, flm, m, fm);
    const double right = simpson(m, fm, frm, b, fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
           adaptive(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate_adaptive(const std::function<double(double)>& f, double a, double b, double tol) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fb = f(b), fm = f(m);
    const double whole = simpson(a, fa, fm, b, fb);
    return adaptive(f, a, fa, b, fb, m, fm, whole, tol, 48);
}

double angle_pdf_normalization(int n) {
    return integrate_adaptive([n](double t) { return angle_pdf(n, t); }, 0.0, M_PI, 1e-12);
}

double angle_variance(int n) {
    return integrate_adaptive(
        [n](double t) {
            const double d = t - 0.5 * M_PI;
            return d * d * angle_pdf(n, t);
        },
        0.0, M_PI, 1e-12);
}

AngleHistogram sample_angle_histogram(int n, int n_pairs, std::uint64_t seed, int bins) {
    if (n < 2) throw DomainError("angle sampling requires n >= 2");
    if (n_pairs < 1 || bins < 1) throw ConfigError("angle histogram: need n_pairs >= 1 and bins >= 1");

    AngleHistogram h;
    h.n_pairs = n_pairs;
    h.edges.resize(bins + 1);
    for (int b = 0; b <= bins; ++b) h.edges[b] = M_PI * b / bins;
    h.prob.assign(bins, 0.0);

    Rng rng(seed);
    Vec u(n), v(n);
    for (int p = 0; p < n_pairs; ++p) {
        for (int i = 0; i < n; ++i) u[i] = rng.normal();
        for (int i = 0; i < n; ++i) v[i] = rng.normal();
        const double cosang = std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0);
        const double ang = std::acos(cosang);
        int b = static_cast<int>(ang / M_PI * bins);
        if (b == bins) b = bins - 1;
        h.prob[b] += 1.0;
    }
    for (auto& q : h.prob) q /= n_pairs;
    return h;
}

double analytic_angle_prob(int n, double lo, double hi) {
    return integrate_adaptive([n](double t) { return angle_pdf(n, t); }, lo, hi, 1e-12);
}

double histogram_l1_distance(int n, const AngleHistogram& h) {
    double l1 = 0.0;
    for (std::size_t b = 0; b + 1 < h.edges.size(); ++b)
        l1 += std::abs(h.prob[b] - analytic_angle_prob(n, h.edges[b], h.edges[b + 1]));
    return l1;
}

double log_binomial(int n, int r) {
    return std::lgamma(n + 1.0) - std::lgamma(r + 1.0) - std::lgamma(n - r + 1.0);
}

BirthdayResult birthday_probability(int n, int r, std::int64_t m) {
    if (r < 1 || r > n) throw DomainError("birthday probability requires 1 <= r <= n");
    if (m < 1) throw DomainError("birthday probability requires m >= 1");

    const double R = std::exp(log_binomial(n, r));

    // ln p = sum_{i=0}^{m-1} ln(1 - i/R); once i reaches R a collision is
    // forced and p is exactly 0
    double log_p = 0.0;
    for (std::int64_t i = 1; i < m; ++i) {
        const double frac = static_cast<double>(i) / R;
        if (frac >= 1.0) return {0.0, -std::numeric_limits<double>::infinity()};
        log_p += std::log1p(-frac);
    }
    return {std::exp(log_p), log_p};
}

double gradient_angle_degrees(const Vec& g1, const Vec& g2) {
    const double n1 = g1.norm(), n2 = g2.norm();
    if (n1 == 0.0 || n2 == 0.0) throw MetricError("gradient angle undefined for a zero vector");
    const double c = std::clamp(g1.dot(g2) / (n1 * n2), -1.0, 1.0);
    return std::acos(c) * 180.0 / M_PI;
}

namespace {

// Full-batch head gradient of the masked cross entropy at the given head
// weights, flattened. Only head parameters participate; pre-layers and the
// expansion act as the (frozen) feature map they were at that stage.
Vec full_batch_head_gradient(const FlyModel& model_arch, const Mat& head_W, const Mat& X,
                             const std::vector<std::int32_t>& labels, const std::vector<std::uint8_t>& mask) {
    FlyModel model = model_arch;
    model.head.W = head_W;
    Mat grad = Mat::Zero(head_W.rows(), head_W.cols());
    const int n = static_cast<int>(X.cols());
    for (int s = 0; s < n; ++s) {
        const ForwardTrace t = forward(model, X.col(s));
        auto [loss, g] = cross_entropy_loss_masked(t.logits, labels[s], mask);
        (void)loss;
        if (!model.ablate_kc) {
            for (int j : t.active_set) grad.col(j) += g * t.kc_coded[j];
        } else {
            const Vec& head_in = model.pre.empty() ? t.input : t.pre_out.back();
            grad += g * head_in.transpose();
        }
    }
    grad /= static_cast<double>(n);
    return Eigen::Map<Vec>(grad.data(), grad.size());
}

}  // namespace

std::optional<double> task_optima_gradient_angle(const TaskOptimaInputs& in) {
    if (!in.model_template || !in.head_a || !in.head_b || !in.features_a || !in.features_b || !in.labels_a ||
        !in.labels_b)
        throw DataError("task optima gradient angle: missing snapshots or task data");
    const Vec ga = full_batch_head_gradient(*in.model_template, *in.head_a, *in.features_a, *in.labels_a, in.mask_a);
    const Vec gb = full_batch_head_gradient(*in.model_template, *in.head_b, *in.features_b, *in.labels_b, in.mask_b);
    if (ga.norm() < kGradientNormFloor || gb.norm() < kGradientNormFloor) return std::nullopt;
    // orientation-independent: interference depends on |cos|, so angles fold
    // onto [0, 90]
    const double a = gradient_angle_degrees(ga, gb);
    return std::min(a, 180.0 - a);
}

double kc_overlap(const std::vector<std::vector<int>>& active_sets_a,
                  const std::vector<std::vector<int>>& active_sets_b, int n_units) {
    auto profile = [n_units](const std::vector<std::vector<int>>& sets) {
        std::vector<int> count(n_units, 0);
        for (const auto& s : sets)
            for (int j : s) count[j] += 1;
        std::vector<std::uint8_t> active(n_units, 0);
        const double half = 0.5 * static_cast<double>(sets.size());
        for (int j = 0; j < n_units; ++j)
            if (count[j] >= half && count[j] > 0) active[j] = 1;
        return active;
    };
    if (active_sets_a.empty() || active_sets_b.empty()) throw MetricError("kc overlap: empty trace set");
    const auto pa = profile(active_sets_a);
    const auto pb = profile(active_sets_b);
    std::int64_t inter = 0, uni = 0;
    for (int j = 0; j < n_units; ++j) {
        if (pa[j] && pb[j]) ++inter;
        if (pa[j] || pb[j]) ++uni;
    }
    if (uni == 0) throw MetricError("kc overlap undefined: both active profiles are empty");
    return static_cast<double>(inter) / static_cast<double>(uni);
}

FlopsReport flops_report(int n_in, int n_kc, int r, double k, int n_classes) {
    if (n_in < 1 || n_kc < 1) throw ShapeError("flops report: dimensions must be positive");
    FlopsReport rep;
    rep.dense_forward_flops = 2LL * n_in * n_kc;
    rep.fly_forward_flops = static_cast<std::int64_t>(r) * n_kc;
    const auto active = static_cast<std::int64_t>(std::ceil(k * n_kc));
    rep.head_update_flops = 6LL * active * n_classes;
    rep.notes =
        "dense: multiply+add per entry; fly: additions only; head update: 6 ops per plastic weight "
        "(opaque per-weight constant) x active units x classes";
    return rep;
}

double QuadraticLoss::value(const Vec& w) const {
    const Vec d = w - w0;
    return 0.5 * d.dot(H * d);
}

Vec QuadraticLoss::grad(const Vec& w) const { return H * (w - w0); }

MvtCheckResult loss_difference_mvt(const QuadraticLoss& l1, const QuadraticLoss& lt, const Vec& w, double eta,
                                   int grid) {
    const Vec gt = lt.grad(w);
    const Vec w_next = w - eta * gt;
    const double lhs = l1.value(w) - l1.value(w_next);

    auto rhs = [&](double xi) { return eta * l1.grad(w - xi * eta * gt).dot(gt); };
    auto residual = [&](double xi) { return lhs - rhs(xi); };

    double best_xi = 0.0;
    double best_abs = std::abs(residual(0.0));
    double prev_res = residual(0.0);
    double prev_xi = 0.0;
    double bracket_lo = -1.0, bracket_hi = -1.0;
    for (int g = 1; g <= grid; ++g) {
        const double xi = static_cast<double>(g) / grid;
        const double res = residual(xi);
        if (std::abs(res) < best_abs) {
            best_abs = std::abs(res);
            best_xi = xi;
        }
        if (bracket_lo < 0.0 && ((prev_res <= 0.0 && res >= 0.0) || (prev_res >= 0.0 && res <= 0.0))) {
            bracket_lo = prev_xi;
            bracket_hi = xi;
        }
        prev_res = res;
        prev_xi = xi;
    }
    if (bracket_lo >= 0.0) {
        double lo = bracket_lo, hi = bracket_hi;
        double flo = residual(lo);
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double fmid = residual(mid);
            if (std::abs(fmid) < best_abs) {
                best_abs = std::abs(fmid);
                best_xi = mid;
            }
            if ((flo <= 0.0 && fmid <= 0.0) || (flo >= 0.0 && fmid >= 0.0)) {
                lo = mid;
                flo = fmid;
            } else {
                hi = mid;
            }
            if (hi - lo < 1e-16) break;
        }
    }

    MvtCheckResult out;
    out.xi = best_xi;
    out.residual = best_abs;
    out.loss_diff = lhs;
    out.inner = l1.grad(w).dot(gt);
    return out;
}

}  // namespace flycl
