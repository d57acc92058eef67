#include "flycl/acceptance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "flycl/analysis.hpp"
#include "flycl/checkpoint.hpp"
#include "flycl/ledger_io.hpp"

namespace flycl::acceptance {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

struct CheckList {
    bool all = true;
    std::string detail;
    void expect(bool ok, const std::string& what) {
        all = all && ok;
        if (!detail.empty()) detail += "; ";
        detail += std::string(ok ? "ok: " : "FAIL: ") + what;
    }
};

}  // namespace

double mean_final_avg_acc(const Group& g) {
    std::vector<double> v;
    for (const auto& l : g.ledgers) v.push_back(final_metrics(l).final_avg_acc);
    return mean(v);
}

double mean_final_bwt(const Group& g) {
    std::vector<double> v;
    for (const auto& l : g.ledgers) v.push_back(final_metrics(l).final_bwt);
    return mean(v);
}

double mean_final_fwt(const Group& g) {
    std::vector<double> v;
    for (const auto& l : g.ledgers) v.push_back(final_metrics(l).final_fwt);
    return mean(v);
}

double mean_online_over_tasks(const Group& g, int first_task, int last_task) {
    std::vector<double> v;
    for (const auto& l : g.ledgers) {
        double s = 0.0;
        int n = 0;
        for (int t = first_task; t <= last_task; ++t) {
            s += online_accuracy(l, t);
            ++n;
        }
        v.push_back(s / n);
    }
    return mean(v);
}

namespace {

template <class F>
double mean_final_diag(const Group& g, F&& f) {
    std::vector<double> v;
    for (const auto& l : g.ledgers) {
        if (l.diags.empty()) throw DataError("group has a ledger without diagnostics");
        v.push_back(f(l.diags.back()));
    }
    return mean(v);
}

}  // namespace

double mean_final_dormant_pre(const Group& g) {
    return mean_final_diag(g, [](const Diagnostics& d) { return d.dormant_pre; });
}

double mean_final_stable_rank(const Group& g) {
    return mean_final_diag(g, [](const Diagnostics& d) { return d.stable_rank ? double(*d.stable_rank) : 0.0; });
}

double mean_final_weight_mag(const Group& g) {
    return mean_final_diag(g, [](const Diagnostics& d) { return d.weight_mag; });
}

double mean_final_head_weight_mag(const Group& g) {
    return mean_final_diag(g, [](const Diagnostics& d) { return d.head_weight_mag; });
}

double mean_extra(const Group& g, const std::string& name) {
    std::vector<double> v;
    for (const auto& l : g.ledgers) {
        const auto it = l.extras.find(name);
        if (it == l.extras.end()) throw DataError("group has a ledger without extra '" + name + "'");
        v.push_back(it->second);
    }
    return mean(v);
}

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) throw DataError("spearman: need two aligned series");
    auto ranks = [](const std::vector<double>& v) {
        std::vector<int> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    double d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    const double dn = static_cast<double>(n);
    return 1.0 - 6.0 * d2 / (dn * (dn * dn - 1.0));
}

// --- pinned configurations ---

ExperimentConfig odor_base_config(Strategy kind, bool fly) {
    ExperimentConfig cfg;
    cfg.task.dataset = DatasetKind::Odor;
    cfg.task.protocol = Protocol::ClassIncremental;
    cfg.task.n_tasks = 5;
    cfg.task.classes_per_task = 2;
    cfg.task.odor = OdorConfig{};  // 50 dims, 10 classes, sigma 0.5, 5000/1000 per class
    cfg.model.pn = 50;
    cfg.model.kc = 2000;
    cfg.model.degree = 6;
    cfg.model.coding_level = 0.01;
    cfg.model.ablate = !fly;
    cfg.learner.kind = kind;
    cfg.learner.c = 5.0;       // SI row of the hyperparameter table
    cfg.learner.lambda = 100.0;
    cfg.lr = 0.005;
    cfg.epochs = 1;
    cfg.batch_size = 64;
    cfg.seeds = {1, 2, 3, 4, 5};
    cfg.scratch = true;
    return cfg;
}

ExperimentConfig coding_sweep_base() {
    ExperimentConfig cfg = odor_base_config(Strategy::Sgd, true);
    return cfg;
}

ExperimentConfig expansion_sweep_base() {
    ExperimentConfig cfg = odor_base_config(Strategy::Sgd, true);
    cfg.snapshot_heads = true;
    return cfg;
}

ExperimentConfig streaming_config(Strategy kind, bool fly) {
    ExperimentConfig cfg;
    cfg.task.dataset = DatasetKind::Synth;
    cfg.task.protocol = Protocol::Streaming;
    cfg.task.n_tasks = 20;
    cfg.task.samples_per_task = 2000;
    cfg.task.base_pool = 10000;
    cfg.task.permute_mode = PermuteMode::Input;
    cfg.model.pn = 784;
    cfg.model.kc = 30000;
    cfg.model.degree = 40;
    cfg.model.coding_level = 0.001;
    cfg.model.pre = {{784, Activation::Relu}, {784, Activation::Identity}};
    cfg.model.ablate = !fly;
    cfg.learner.kind = kind;
    cfg.learner.lambda = 10.0;  // EWC, Input-Permuted row
    cfg.learner.c = 0.01;       // SI, same row
    cfg.lr = 0.05;
    cfg.epochs = 1;
    cfg.batch_size = 100;
    cfg.clip.max_norm = 1.0;
    cfg.seeds = {1, 2, 3};
    cfg.scratch = false;
    return cfg;
}

ExperimentConfig imbalance_config(Strategy kind, bool fly, double gamma, ImbalanceOrder order) {
    ExperimentConfig cfg = odor_base_config(kind, fly);
    cfg.task.imbalanced = true;
    cfg.task.gamma = gamma;
    cfg.task.imbalance_order = order;
    cfg.seeds = {1, 2, 3};
    return cfg;
}

// --- criteria ---

CriterionResult check_odor_cil(const Group& sgd_fly, const Group& si_fly, const Group& sgd_abl,
                               const Group& si_abl, double runtime_s) {
    CriterionResult r{"C1", "odor class-incremental separation", true, false, ""};
    CheckList c;
    const double a_sgd_fly = mean_final_avg_acc(sgd_fly);
    const double a_si_fly = mean_final_avg_acc(si_fly);
    const double a_sgd_abl = mean_final_avg_acc(sgd_abl);
    const double a_si_abl = mean_final_avg_acc(si_abl);
    c.expect(a_sgd_fly >= a_sgd_abl + 0.15,
             "sgd fly " + fmt(a_sgd_fly) + " >= ablated " + fmt(a_sgd_abl) + " + 15pp");
    c.expect(a_si_fly >= a_si_abl + 0.15, "si fly " + fmt(a_si_fly) + " >= ablated " + fmt(a_si_abl) + " + 15pp");
    const double bwt_sgd_abl = mean_final_bwt(sgd_abl);
    const double fwt_sgd_abl = mean_final_fwt(sgd_abl);
    const double fwt_si_abl = mean_final_fwt(si_abl);
    c.expect(bwt_sgd_abl <= -0.30, "ablated sgd bwt " + fmt(bwt_sgd_abl) + " <= -30pp");
    c.expect(fwt_sgd_abl >= -0.05, "ablated sgd fwt " + fmt(fwt_sgd_abl) + " >= -5pp");
    c.expect(fwt_si_abl < fwt_sgd_abl, "ablated si fwt " + fmt(fwt_si_abl) + " < ablated sgd fwt");
    if (runtime_s >= 0.0) c.expect(runtime_s < 300.0, "runtime " + fmt(runtime_s) + "s < 300s");
    r.pass = c.all;
    r.detail = c.detail;
    return r;
}

CriterionResult check_coding_sweep(const std::map<double, Group>& by_k) {
    CriterionResult r{"C2", "coding-level sweep shape", true, false, ""};
    CheckList c;
    std::vector<double> ks, bwt, fwt, acc;
    for (const auto& [k, g] : by_k) {
        ks.push_back(k);
        bwt.push_back(mean_final_bwt(g));
        fwt.push_back(mean_final_fwt(g));
        acc.push_back(mean_final_avg_acc(g));
    }
    const double rho = spearman_rho(ks, bwt);
    c.expect(rho < -0.8, "spearman(k, bwt) " + fmt(rho) + " < -0.8");

    const auto at = [&](double k) {
        const auto it = std::find(ks.begin(), ks.end(), k);
        if (it == ks.end()) throw DataError("coding sweep missing k=" + fmt(k));
        return static_cast<std::size_t>(it - ks.begin());
    };
    c.expect(fwt[at(0.05)] >= fwt[at(0.001)] + 0.02,
             "fwt(k=0.05) " + fmt(fwt[at(0.05)]) + " >= fwt(k=0.001) " + fmt(fwt[at(0.001)]) + " + 2pp");

    const std::size_t best = static_cast<std::size_t>(std::max_element(acc.begin(), acc.end()) - acc.begin());
    c.expect(best != 0 && best != acc.size() - 1, "avg-acc argmax k=" + fmt(ks[best]) + " is interior");
    r.pass = c.all;
    r.detail = c.detail;
    return r;
}

CriterionResult check_expansion_sweep(const std::map<double, Group>& by_ratio) {
    CriterionResult r{"C3", "expansion-ratio effects", true, false, ""};
    CheckList c;
    std::vector<double> ratios, angle, wmag, acc;
    for (const auto& [v, g] : by_ratio) {
        ratios.push_back(v);
        angle.push_back(mean_extra(g, "task_grad_angle"));
        wmag.push_back(mean_final_head_weight_mag(g));
        acc.push_back(mean_final_avg_acc(g));
    }
    bool angle_up = true, wmag_down = true, acc_up = true;
    for (std::size_t i = 1; i < ratios.size(); ++i) {
        angle_up = angle_up && angle[i] > angle[i - 1];
        wmag_down = wmag_down && wmag[i] < wmag[i - 1];
        acc_up = acc_up && acc[i] >= acc[i - 1];
    }
    c.expect(angle_up, "gradient angle increases " + fmt(angle.front()) + " -> " + fmt(angle.back()));
    c.expect(angle.back() >= 85.0, "angle at ratio 40 " + fmt(angle.back()) + " >= 85 deg");
    c.expect(wmag_down, "head weight magnitude decreases " + fmt(wmag.front()) + " -> " + fmt(wmag.back()));
    c.expect(acc_up, "avg acc nondecreasing " + fmt(acc.front()) + " -> " + fmt(acc.back()));
    const double first_gain = acc[1] - acc[0];
    const double last_gain = acc[acc.size() - 1] - acc[acc.size() - 2];
    c.expect(last_gain <= first_gain, "saturating gains " + fmt(first_gain) + " -> " + fmt(last_gain));
    r.pass = c.all;
    r.detail = c.detail;
    return r;
}

CriterionResult check_birthday_combinatorics() {
    CriterionResult r{"C4", "distinct-wiring probability", true, false, ""};
    CheckList c;

    int argmax_r = 0;
    double best = -1.0;
    for (int rr = 1; rr <= 50; ++rr) {
        const double p = birthday_probability(50, rr, 2000).p;
        if (p > best) {
            best = p;
            argmax_r = rr;
        }
    }
    c.expect(argmax_r == 25, "argmax_r p(50, r, 2000) = " + std::to_string(argmax_r) + " == 25");

    // exact rational arithmetic on (n=4, r=2): R = 6 subsets
    bool exact_ok = true;
    for (int m = 1; m <= 6; ++m) {
        std::uint64_t num = 1, den = 1;
        for (int i = 1; i < m; ++i) {
            num *= static_cast<std::uint64_t>(6 - i);
            den *= 6;
        }
        const double exact = static_cast<double>(num) / static_cast<double>(den);
        const double got = birthday_probability(4, 2, m).p;
        exact_ok = exact_ok && std::abs(got - exact) <= 1e-12 * std::max(1.0, exact);
    }
    c.expect(exact_ok, "log-space matches exact rationals on (4,2,m<=6) to 1e-12");

    // Monte Carlo oracle on (4,2,2): sample two 2-of-4 subsets, count distinct pairs
    Rng rng(20240001);
    const int trials = 1000000;
    int distinct = 0;
    for (int t = 0; t < trials; ++t) {
        const auto a = rng.sample_indices(4, 2);
        const auto b = rng.sample_indices(4, 2);
        if (a != b) ++distinct;
    }
    const double phat = static_cast<double>(distinct) / trials;
    const double p = 5.0 / 6.0;
    const double sigma = std::sqrt(p * (1.0 - p) / trials);
    c.expect(std::abs(phat - p) <= 3.0 * sigma,
             "monte carlo " + fmt(phat) + " within 3 sigma of 5/6 (sigma " + fmt(sigma) + ")");
    r.pass = c.all;
    r.detail = c.detail;
    return r;
}

CriterionResult check_angle_distribution() {
    CriterionResult r{"C5", "random-vector angle distribution", true, false, ""};
    CheckList c;
    for (int n : {2, 10, 100, 2000}) {
        const double z = angle_pdf_normalization(n);
        c.expect(std::abs(z - 1.0) < 1e-6, "integral p_" + std::to_string(n) + " = " + fmt(z));
    }
    bool decreasing = true;
    double prev = angle_variance(2);
    for (int n = 3; n <= 200; ++n) {
        const double v = angle_variance(n);
        decreasing = decreasing && v < prev;
        prev = v;
    }
    c.expect(decreasing, "variance strictly decreasing over n in [2,200]");
    for (int n : {2, 10, 100}) {
        const auto h = sample_angle_histogram(n, 100000, 777000 + n);
        const double l1 = histogram_l1_distance(n, h);
        c.expect(l1 < 0.02, "L1(n=" + std::to_string(n) + ") " + fmt(l1) + " < 0.02");
    }
    r.pass = c.all;
    r.detail = c.detail;
    return r;
}

CriterionResult check_flops_accounting() {
    CriterionResult r{"C6", "flops accounting", true, false, ""};
    CheckList c;
    const auto rep = flops_report(50, 2000, 6, 0.01, 10);
    c.expect(rep.dense_forward_flops == 200000, "dense = " + std::to_string(rep.dense_forward_flops));
    c.expect(rep.fly_forward_flops == 12000, "fly = " + std::to_string(rep.fly_forward_flops));
    c.expect(rep.head_update_flops == 1200, "head update = " + std::to_string(rep.head_update_flops));
    r.pass = c.all;
    r.detail = c.detail;
    return r;
}

CriterionResult check_streaming_plasticity(const Group& ewc_fly, const Group& si_fly, const Group& ewc_abl,
                                           const Group& si_abl, double runtime_s) {
    CriterionResult r{"C7", "streaming plasticity", true, false, ""};
    CheckList c;
    const int T = ewc_abl.ledgers.front().n_tasks;
    auto first5 = [&](const Group& g) { return mean_online_over_tasks(g, 1, 5); };
    auto last5 = [&](const Group& g) { return mean_online_over_tasks(g, T - 4, T); };

    c.expect(last5(ewc_abl) < first5(ewc_abl),
             "ablated ewc online acc decays " + fmt(first5(ewc_abl)) + " -> " + fmt(last5(ewc_abl)));
    c.expect(last5(si_abl) < first5(si_abl),
             "ablated si online acc decays " + fmt(first5(si_abl)) + " -> " + fmt(last5(si_abl)));
    c.expect(last5(ewc_fly) >= last5(ewc_abl) + 0.03,
             "ewc fly last-5 " + fmt(last5(ewc_fly)) + " >= ablated " + fmt(last5(ewc_abl)) + " + 3pp");
    c.expect(last5(si_fly) >= last5(si_abl) + 0.03,
             "si fly last-5 " + fmt(last5(si_fly)) + " >= ablated " + fmt(last5(si_abl)) + " + 3pp");

    for (auto [fly, abl, name] : {std::tuple<const Group*, const Group*, const char*>{&ewc_fly, &ewc_abl, "ewc"},
                                  {&si_fly, &si_abl, "si"}}) {
        c.expect(mean_final_dormant_pre(*fly) < mean_final_dormant_pre(*abl),
                 std::string(name) + " dormant pre " + fmt(mean_final_dormant_pre(*fly)) + " < " +
                     fmt(mean_final_dormant_pre(*abl)));
        c.expect(mean_final_stable_rank(*fly) > mean_final_stable_rank(*abl),
                 std::string(name) + " stable rank " + fmt(mean_final_stable_rank(*fly)) + " > " +
                     fmt(mean_final_stable_rank(*abl)));
        c.expect(mean_final_weight_mag(*fly) < mean_final_weight_mag(*abl),
                 std::string(name) + " weight magnitude " + fmt(mean_final_weight_mag(*fly)) + " < " +
                     fmt(mean_final_weight_mag(*abl)));
    }
    if (runtime_s >= 0.0) c.expect(runtime_s < 900.0, "runtime " + fmt(runtime_s) + "s < 900s");
    r.pass = c.all;
    r.detail = c.detail;
    return r;
}

namespace {

Dataset tiny_random_dataset(int dim, int n_classes, int n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.n_classes = n_classes;
    d.features.resize(dim, n);
    d.labels.resize(n);
    for (int s = 0; s < n; ++s) {
        for (int i = 0; i < dim; ++i) d.features(i, s) = rng.normal();
        d.labels[s] = static_cast<int>(rng.below(n_classes));
    }
    return d;
}

double fd_gradient_check(const ModelConfig& mc, std::uint64_t seed) {
    FlyModel model = make_model(mc);
    Rng rng(seed);
    Vec x(mc.n_features);
    for (int i = 0; i < x.size(); ++i) x[i] = rng.normal();
    const int label = static_cast<int>(rng.below(mc.n_classes));

    const ForwardTrace trace = forward(model, x);
    auto [loss0, ce_grad] = cross_entropy_loss(trace.logits, label);
    (void)loss0;
    GradientSet grads = backward(model, trace, ce_grad);

    auto params = trainable_params(model);
    auto grefs = grad_refs(grads);
    const double h = 1e-6;
    double num = 0.0, den = 0.0;
    for (std::size_t s = 0; s < params.size(); ++s) {
        for (std::ptrdiff_t i = 0; i < params[s].n; ++i) {
            const double orig = params[s].data[i];
            params[s].data[i] = orig + h;
            const double lp = cross_entropy_loss(forward(model, x).logits, label).first;
            params[s].data[i] = orig - h;
            const double lm = cross_entropy_loss(forward(model, x).logits, label).first;
            params[s].data[i] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = grefs[s].data[i];
            num += (an - fd) * (an - fd);
            den += an * an;
        }
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

// 50 SGD-equivalent steps (one boundary in the middle); returns the final
// flattened parameters.
Vec off_switch_trajectory(const LearnerSpec& spec, const Dataset& data, const ModelConfig& mc) {
    FlyModel model = make_model(mc);
    auto learner = make_learner(spec, model, 7);
    std::vector<std::uint8_t> allowed(mc.n_classes, 1);
    const int bs = 4;
    for (int step = 0; step < 50; ++step) {
        const int begin = (step * bs) % (data.size() - bs);
        const Mat X = data.features.middleCols(begin, bs);
        BatchTrace trace = forward_batch(model, X);
        Mat lg(trace.logits.rows(), bs);
        for (int s = 0; s < bs; ++s)
            lg.col(s) = cross_entropy_loss_masked(trace.logits.col(s), data.labels[begin + s], allowed).second / bs;
        GradientSet grads = backward_batch(model, trace, lg);
        learner->add_penalty_grad(model, grads);
        learner->apply_step(model, grads, 0.05);
        learner->after_step(model, trace);
        if (step == 25) learner->on_task_end(model, data, allowed);
    }
    auto params = trainable_params(model);
    return flatten(params);
}

}  // namespace

CriterionResult check_property_suite() {
    CriterionResult r{"C8", "property suite", true, false, ""};
    CheckList c;

    // exact top-k support on random vectors
    {
        Rng rng(404);
        bool ok = true;
        const struct {
            int m;
            double k;
        } combos[] = {{2000, 0.01}, {500, 0.013}, {64, 0.5}};
        for (const auto& combo : combos) {
            const CodingConfig coding = make_coding(combo.k, combo.m);
            const int expected = static_cast<int>(std::ceil(combo.k * combo.m));
            Vec raw(combo.m), coded;
            std::vector<int> active;
            for (int trial = 0; trial < 1000; ++trial) {
                for (int i = 0; i < combo.m; ++i) raw[i] = rng.normal();
                top_k_code(raw, coding, coded, active);
                int nonzero = 0;
                for (int i = 0; i < combo.m; ++i)
                    if (coded[i] != 0.0) ++nonzero;
                ok = ok && static_cast<int>(active.size()) == expected && nonzero <= expected;
            }
        }
        c.expect(ok, "top-k support size is exactly ceil(k*m) on 1000 random vectors");
    }

    // head-gradient support within the active set on every step
    {
        ModelConfig mc;
        mc.n_features = 20;
        mc.n_kc = 200;
        mc.degree = 5;
        mc.coding_level = 0.05;
        mc.n_classes = 4;
        mc.seed = 11;
        FlyModel model = make_model(mc);
        LearnerSpec spec;
        auto learner = make_learner(spec, model, 11);
        const Dataset data = tiny_random_dataset(20, 4, 512, 12);
        std::vector<std::uint8_t> allowed(4, 1);
        bool ok = true;
        const int bs = 8;
        for (int step = 0; step < 100; ++step) {
            const int begin = (step * bs) % (data.size() - bs);
            const Mat X = data.features.middleCols(begin, bs);
            BatchTrace trace = forward_batch(model, X);
            Mat lg(trace.logits.rows(), bs);
            for (int s = 0; s < bs; ++s)
                lg.col(s) =
                    cross_entropy_loss_masked(trace.logits.col(s), data.labels[begin + s], allowed).second / bs;
            GradientSet grads = backward_batch(model, trace, lg);
            std::vector<std::uint8_t> in_active(mc.n_kc, 0);
            for (const auto& act : trace.active)
                for (int j : act) in_active[j] = 1;
            for (int j = 0; j < mc.n_kc && ok; ++j)
                if (!in_active[j] && grads.head_W.col(j).cwiseAbs().maxCoeff() != 0.0) ok = false;
            learner->apply_step(model, grads, 0.05);
        }
        c.expect(ok, "head-gradient support within the active set over a 100-step run");
    }

    // central finite differences, with and without pre-layers
    {
        ModelConfig plain;
        plain.n_features = 20;
        plain.n_kc = 60;
        plain.degree = 4;
        plain.coding_level = 0.1;
        plain.n_classes = 4;
        plain.seed = 21;
        const double e1 = fd_gradient_check(plain, 22);

        ModelConfig with_pre = plain;
        with_pre.n_features = 12;
        with_pre.pre = {{10, Activation::Relu}};
        with_pre.seed = 23;
        const double e2 = fd_gradient_check(with_pre, 24);
        c.expect(e1 < 1e-4, "finite-difference error (no pre-layers) " + fmt(e1) + " < 1e-4");
        c.expect(e2 < 1e-4, "finite-difference error (with pre-layers) " + fmt(e2) + " < 1e-4");
    }

    // off-switch equivalence: every strategy at zero strength walks the
    // exact SGD trajectory
    {
        ModelConfig mc;
        mc.n_features = 12;
        mc.pre = {{8, Activation::Relu}};
        mc.n_kc = 40;
        mc.degree = 3;
        mc.coding_level = 0.1;
        mc.n_classes = 3;
        mc.seed = 31;
        const Dataset data = tiny_random_dataset(12, 3, 256, 32);

        const Vec base = off_switch_trajectory(LearnerSpec{}, data, mc);
        bool ok = true;
        LearnerSpec ewc;
        ewc.kind = Strategy::Ewc;
        ewc.lambda = 0.0;
        ok = ok && (off_switch_trajectory(ewc, data, mc) - base).cwiseAbs().maxCoeff() == 0.0;
        LearnerSpec si;
        si.kind = Strategy::Si;
        si.c = 0.0;
        ok = ok && (off_switch_trajectory(si, data, mc) - base).cwiseAbs().maxCoeff() == 0.0;
        LearnerSpec l2;
        l2.kind = Strategy::L2Init;
        l2.alpha = 0.0;
        ok = ok && (off_switch_trajectory(l2, data, mc) - base).cwiseAbs().maxCoeff() == 0.0;
        LearnerSpec sp;
        sp.kind = Strategy::ShrinkPerturb;
        sp.shrink = 0.0;
        sp.perturb = 0.0;
        ok = ok && (off_switch_trajectory(sp, data, mc) - base).cwiseAbs().maxCoeff() == 0.0;
        LearnerSpec cbp;
        cbp.kind = Strategy::Cbp;
        cbp.cbp_rate = 0.0;
        ok = ok && (off_switch_trajectory(cbp, data, mc) - base).cwiseAbs().maxCoeff() == 0.0;
        c.expect(ok, "zero-strength learners match sgd bit for bit over 50 steps");
    }

    // container round trips
    {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "flycl_prop";
        fs::create_directories(dir);

        Dataset d = tiny_random_dataset(7, 3, 20, 41);
        // quantize through f32 so the on-disk representation is exact
        for (int s = 0; s < d.size(); ++s)
            for (int i = 0; i < d.dim(); ++i) d.features(i, s) = static_cast<float>(d.features(i, s));
        save_feature_file(dir / "a.flyf", d);
        const Dataset d2 = load_feature_file(dir / "a.flyf");
        save_feature_file(dir / "b.flyf", d2);
        const auto bytes_a = read_file_bytes(dir / "a.flyf");
        const auto bytes_b = read_file_bytes(dir / "b.flyf");
        bool ok = bytes_a == bytes_b && d2.labels == d.labels && d2.features == d.features;

        ModelConfig mc;
        mc.n_features = 12;
        mc.pre = {{8, Activation::Relu}};
        mc.n_kc = 40;
        mc.degree = 3;
        mc.coding_level = 0.1;
        mc.n_classes = 3;
        mc.head_bias = true;
        mc.seed = 42;
        FlyModel model = make_model(mc);
        save_model(dir / "m.flym", model);
        const FlyModel m2 = load_model(dir / "m.flym");
        ok = ok && m2.head.W == model.head.W && m2.head.b == model.head.b &&
             m2.projection.flat == model.projection.flat;
        for (std::size_t l = 0; l < model.pre.size(); ++l)
            ok = ok && m2.pre[l].W == model.pre[l].W && m2.pre[l].b == model.pre[l].b;

        LearnerSpec si;
        si.kind = Strategy::Si;
        si.c = 0.7;
        auto learner = make_learner(si, model, 5);
        save_experiment(dir / "e.flym", model, *learner);
        const auto restored = load_experiment(dir / "e.flym");
        BinWriter wa, wb;
        learner->save(wa);
        restored.learner->save(wb);
        ok = ok && restored.learner && wa.bytes() == wb.bytes();
        c.expect(ok, "FLYF, model, and experiment checkpoints round-trip bit-exactly");
    }

    r.pass = c.all;
    r.detail = c.detail;
    return r;
}

CriterionResult check_imbalance(const std::map<ImbalanceKey, ImbalanceCell>& cells) {
    CriterionResult r{"C9", "class-imbalance robustness", true, false, ""};
    CheckList c;
    for (const auto& [key, cell] : cells) {
        const auto [gamma, order, strategy] = key;
        std::string tag = strategy_name(strategy) + "/g" + fmt(gamma) + "/" +
                          (order == ImbalanceOrder::Normal   ? "normal"
                           : order == ImbalanceOrder::Reverse ? "reverse"
                                                              : "random");
        const double ratio = mean_extra(cell.fly, "imbalance_ratio");
        c.expect(std::abs(ratio - gamma) < 0.05, tag + " realized ratio " + fmt(ratio));
        const double a_fly = mean_final_avg_acc(cell.fly);
        const double a_abl = mean_final_avg_acc(cell.ablated);
        c.expect(a_fly >= a_abl, tag + " fly " + fmt(a_fly) + " >= ablated " + fmt(a_abl));
    }
    r.pass = c.all;
    r.detail = c.detail;
    return r;
}

CriterionResult check_mvt_identity() {
    CriterionResult r{"C10", "mean-value identity on the loss difference", true, false, ""};
    CheckList c;

    QuadraticLoss l1;
    l1.H = Mat::Zero(2, 2);
    l1.H << 2.0, 0.3, 0.3, 1.0;
    l1.w0 = Vec::Zero(2);

    const Vec w = (Vec(2) << 1.0, 0.5).finished();
    const Vec g1 = l1.grad(w);
    const double eta = 0.01;

    std::vector<double> absdiff;
    bool residual_ok = true, xi_ok = true, prop_ok = true;
    for (double deg : {0.0, 30.0, 60.0, 85.0}) {
        const double th = deg * M_PI / 180.0;
        // task-t quadratic whose gradient at w is g1 rotated by th
        Vec d(2);
        d << std::cos(th) * g1[0] - std::sin(th) * g1[1], std::sin(th) * g1[0] + std::cos(th) * g1[1];
        QuadraticLoss lt;
        lt.H = Mat::Identity(2, 2);
        lt.w0 = w - d;

        const auto res = loss_difference_mvt(l1, lt, w, eta);
        residual_ok = residual_ok && res.residual < 1e-8;
        xi_ok = xi_ok && res.xi >= 0.0 && res.xi <= 1.0;
        // exact quadratic identity: loss_diff = eta <g1, d> - eta^2/2 d'H1 d
        const double correction = 0.5 * eta * eta * d.dot(l1.H * d);
        prop_ok = prop_ok && std::abs(res.loss_diff - eta * res.inner + correction) < 1e-12;
        absdiff.push_back(std::abs(res.loss_diff));
    }
    c.expect(residual_ok, "mvt residual < 1e-8 with xi in [0,1]");
    c.expect(xi_ok, "xi within [0,1]");
    c.expect(prop_ok, "loss difference tracks the gradient inner product (exact quadratic identity)");
    bool shrink = true;
    for (std::size_t i = 1; i < absdiff.size(); ++i) shrink = shrink && absdiff[i] < absdiff[i - 1];
    c.expect(shrink, "loss-difference magnitude shrinks toward orthogonality " + fmt(absdiff.front()) + " -> " +
                         fmt(absdiff.back()));
    r.pass = c.all;
    r.detail = c.detail;
    return r;
}

}  // namespace flycl::acceptance
