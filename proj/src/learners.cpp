#include "flycl/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flycl {

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Sgd: return "sgd";
        case Strategy::Ewc: return "ewc";
        case Strategy::Si: return "si";
        case Strategy::L2Init: return "l2init";
        case Strategy::ShrinkPerturb: return "sp";
        case Strategy::Cbp: return "cbp";
    }
    return "?";
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "sgd") return Strategy::Sgd;
    if (name == "ewc") return Strategy::Ewc;
    if (name == "si") return Strategy::Si;
    if (name == "l2init") return Strategy::L2Init;
    if (name == "sp") return Strategy::ShrinkPerturb;
    if (name == "cbp") return Strategy::Cbp;
    throw ConfigError("unknown learner strategy '" + name + "'");
}

void sgd_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads, const SgdConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (params.size() != grads.size()) throw ShapeError("sgd_step: segment count mismatch");
    for (std::size_t s = 0; s < params.size(); ++s) {
        if (params[s].n != grads[s].n) throw ShapeError("sgd_step: segment length mismatch");
        double* p = params[s].data;
        const double* g = grads[s].data;
        for (std::ptrdiff_t i = 0; i < params[s].n; ++i) p[i] -= cfg.learning_rate * g[i];
    }
}

double global_grad_norm(const std::vector<ParamRef>& grads) {
    double sq = 0.0;
    for (const auto& seg : grads)
        for (std::ptrdiff_t i = 0; i < seg.n; ++i) sq += seg.data[i] * seg.data[i];
    return std::sqrt(sq);
}

double clip_gradients(const std::vector<ParamRef>& grads, const ClipConfig& cfg) {
    const double norm = global_grad_norm(grads);
    if (!cfg.enabled() || norm <= cfg.max_norm) return norm;
    const double scale = cfg.max_norm / norm;
    for (const auto& seg : grads)
        for (std::ptrdiff_t i = 0; i < seg.n; ++i) seg.data[i] *= scale;
    return norm;
}

// --- EWC ---

EwcState make_ewc_state(double lambda, std::int64_t n_params) {
    EwcState s;
    s.lambda = lambda;
    s.fisher = Vec::Zero(n_params);
    s.anchor = Vec::Zero(n_params);
    return s;
}

std::pair<double, Vec> ewc_penalty_and_grad(const Vec& params, const EwcState& state) {
    Vec grad = Vec::Zero(params.size());
    if (state.tasks_consolidated == 0) return {0.0, grad};
    if (params.size() != state.fisher.size()) throw ShapeError("ewc: state size mismatch");
    double penalty = 0.0;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double d = params[i] - state.anchor[i];
        penalty += state.fisher[i] * d * d;
        grad[i] = state.lambda * state.fisher[i] * d;
    }
    return {0.5 * state.lambda * penalty, grad};
}

namespace {

int predicted_label(const Vec& logits, const std::vector<std::uint8_t>& allowed) {
    int best = -1;
    for (int i = 0; i < logits.size(); ++i) {
        if (!allowed[i]) continue;
        if (best < 0 || logits[i] > logits[best]) best = i;
    }
    return best;
}

// Accumulates the squared gradient of log p(label | x) into the fisher
// slices without materializing a GradientSet per sample.
void accumulate_sq_loglik_grad(FlyModel& model, const Vec& x, const std::vector<std::uint8_t>& allowed,
                               std::vector<Eigen::Map<Vec>>& fisher) {
    const ForwardTrace trace = forward(model, x);
    const int label = predicted_label(trace.logits, allowed);
    auto [loss, ce_grad] = cross_entropy_loss_masked(trace.logits, label, allowed);
    (void)loss;
    const Vec g = -ce_grad;  // d log p(label) / d logits

    const std::size_t n_pre = model.pre.size();
    std::size_t seg = 2 * n_pre;  // head weight slice index

    if (!model.ablate_kc) {
        const int c = static_cast<int>(model.head.W.rows());
        auto& fw = fisher[seg];
        for (int j : trace.active_set) {
            const double zj = trace.kc_coded[j];
            for (int r = 0; r < c; ++r) fw[static_cast<Eigen::Index>(j) * c + r] += g[r] * g[r] * zj * zj;
        }
    } else {
        const Vec& head_in = model.pre.empty() ? trace.input : trace.pre_out.back();
        const int c = static_cast<int>(model.head.W.rows());
        auto& fw = fisher[seg];
        for (Eigen::Index j = 0; j < head_in.size(); ++j) {
            const double hj2 = head_in[j] * head_in[j];
            for (int r = 0; r < c; ++r) fw[j * c + r] += g[r] * g[r] * hj2;
        }
    }
    if (model.head.has_bias()) {
        auto& fb = fisher[seg + 1];
        for (int r = 0; r < g.size(); ++r) fb[r] += g[r] * g[r];
    }

    if (model.pre.empty()) return;

    Vec delta;
    if (!model.ablate_kc) {
        delta.setZero(model.projection.n_in);
        for (int j : trace.active_set) {
            const double dz = model.head.W.col(j).dot(g);
            for (std::uint32_t src : model.projection.row(j)) delta[src] += dz;
        }
    } else {
        delta = model.head.W.transpose() * g;
    }

    for (int l = static_cast<int>(n_pre) - 1; l >= 0; --l) {
        const auto& layer = model.pre[l];
        if (layer.act == Activation::Relu) {
            for (int i = 0; i < delta.size(); ++i)
                if (trace.pre_lin[l][i] <= 0.0) delta[i] = 0.0;
        }
        const Vec& in = (l == 0) ? trace.input : trace.pre_out[l - 1];
        auto& fw = fisher[2 * l];
        auto& fb = fisher[2 * l + 1];
        const Eigen::Index rows = layer.W.rows();
        for (Eigen::Index j = 0; j < in.size(); ++j) {
            const double in2 = in[j] * in[j];
            if (in2 == 0.0) continue;
            double* col = fw.data() + j * rows;
            for (Eigen::Index i = 0; i < rows; ++i) col[i] += delta[i] * delta[i] * in2;
        }
        for (Eigen::Index i = 0; i < rows; ++i) fb[i] += delta[i] * delta[i];
        if (l > 0) delta = layer.W.transpose() * delta;
    }
}

}  // namespace

void ewc_consolidate(FlyModel& model, const Dataset& task_data, const std::vector<std::uint8_t>& allowed,
                     EwcState& state) {
    if (task_data.size() == 0) throw DataError("ewc_consolidate: empty task data");
    auto params = trainable_params(model);
    const std::int64_t n = trainable_count(model);
    if (state.fisher.size() != n) throw ShapeError("ewc_consolidate: state size mismatch");

    // per-segment views into a scratch accumulator laid out like the flat state
    Vec acc = Vec::Zero(n);
    std::vector<Eigen::Map<Vec>> slices;
    std::ptrdiff_t at = 0;
    for (const auto& seg : params) {
        slices.emplace_back(acc.data() + at, seg.n);
        at += seg.n;
    }

    for (int s = 0; s < task_data.size(); ++s) accumulate_sq_loglik_grad(model, task_data.features.col(s), allowed, slices);
    state.fisher += acc / static_cast<double>(task_data.size());
    state.anchor = flatten(params);
    state.tasks_consolidated += 1;
}

// --- SI ---

SiState make_si_state(double c, double xi, const Vec& params_now) {
    SiState s;
    s.c = c;
    s.xi = xi;
    s.omega_running = Vec::Zero(params_now.size());
    s.Omega = Vec::Zero(params_now.size());
    s.anchor = params_now;
    s.task_start = params_now;
    return s;
}

void si_accumulate_step(SiState& state, const Vec& grads, const Vec& param_delta) {
    if (grads.size() != state.omega_running.size() || param_delta.size() != grads.size())
        throw ShapeError("si_accumulate_step: size mismatch");
    state.omega_running -= grads.cwiseProduct(param_delta);
}

void si_consolidate(SiState& state, const Vec& params_at_task_end) {
    if (params_at_task_end.size() != state.Omega.size()) throw ShapeError("si_consolidate: size mismatch");
    for (Eigen::Index k = 0; k < state.Omega.size(); ++k) {
        const double d = params_at_task_end[k] - state.task_start[k];
        const double w = std::max(state.omega_running[k], 0.0);
        state.Omega[k] += w / (d * d + state.xi);
    }
    state.anchor = params_at_task_end;
    state.task_start = params_at_task_end;
    state.omega_running.setZero();
}

std::pair<double, Vec> si_penalty_and_grad(const Vec& params, const SiState& state) {
    if (params.size() != state.Omega.size()) throw ShapeError("si_penalty_and_grad: size mismatch");
    double penalty = 0.0;
    Vec grad(params.size());
    for (Eigen::Index k = 0; k < params.size(); ++k) {
        const double d = params[k] - state.anchor[k];
        penalty += state.Omega[k] * d * d;
        grad[k] = 2.0 * state.c * state.Omega[k] * d;
    }
    return {state.c * penalty, grad};
}

// --- L2 Init ---

std::pair<double, Vec> l2init_penalty_and_grad(const Vec& params, const L2InitState& state) {
    if (params.size() != state.theta0.size()) throw ShapeError("l2init: size mismatch");
    const Vec d = params - state.theta0;
    return {state.alpha * d.squaredNorm(), 2.0 * state.alpha * d};
}

// --- shrink and perturb ---

void shrink_perturb_apply(const std::vector<ParamRef>& params, const ShrinkPerturbConfig& cfg) {
    std::ptrdiff_t at = 0;
    for (const auto& seg : params) {
        for (std::ptrdiff_t i = 0; i < seg.n; ++i)
            seg.data[i] = (1.0 - cfg.shrink) * seg.data[i] + cfg.perturb * cfg.w0[at + i];
        at += seg.n;
    }
    if (at != cfg.w0.size()) throw ShapeError("shrink_perturb: snapshot size mismatch");
}

// --- CBP ---

CbpState make_cbp_state(const FlyModel& model, double decay, double replacement_rate, int maturity_threshold) {
    if (model.pre.empty()) throw NotApplicableError("cbp requires at least one hidden pre-layer");
    CbpState s;
    s.decay = decay;
    s.replacement_rate = replacement_rate;
    s.maturity_threshold = maturity_threshold;
    for (std::size_t l = 0; l < model.pre.size(); ++l) {
        CbpLayerState ls;
        const int width = static_cast<int>(model.pre[l].W.rows());
        ls.utilities = Vec::Zero(width);
        ls.ages.assign(width, 0);
        if (l + 1 == model.pre.size() && !model.ablate_kc) {
            // the consumer is the frozen binary expansion: outgoing weight
            // mass is the count of expansion rows wired to each neuron
            ls.frozen_out_weight = Vec::Zero(width);
            for (std::uint32_t idx : model.projection.flat) ls.frozen_out_weight[idx] += 1.0;
        }
        s.layers.push_back(std::move(ls));
    }
    return s;
}

void cbp_step(FlyModel& model, const BatchTrace& trace, CbpState& state, Rng& rng) {
    if (model.pre.empty()) throw NotApplicableError("cbp requires at least one hidden pre-layer");
    if (state.layers.size() != model.pre.size()) throw ShapeError("cbp_step: state layer count mismatch");

    const double B = static_cast<double>(trace.batch());
    for (std::size_t l = 0; l < model.pre.size(); ++l) {
        auto& layer = model.pre[l];
        auto& ls = state.layers[l];
        const Vec h_abs = trace.pre_out[l].cwiseAbs().rowwise().sum() / B;

        Vec out_sum;
        const bool last = (l + 1 == model.pre.size());
        if (!last) {
            out_sum = model.pre[l + 1].W.cwiseAbs().colwise().sum().transpose();
        } else if (model.ablate_kc) {
            out_sum = model.head.W.cwiseAbs().colwise().sum().transpose();
        } else {
            out_sum = ls.frozen_out_weight;
        }

        ls.utilities = state.decay * ls.utilities + (1.0 - state.decay) * h_abs.cwiseProduct(out_sum);

        std::vector<int> eligible;
        for (std::size_t i = 0; i < ls.ages.size(); ++i) {
            ls.ages[i] += 1;
            if (ls.ages[i] >= state.maturity_threshold) eligible.push_back(static_cast<int>(i));
        }
        if (eligible.empty() || state.replacement_rate <= 0.0) continue;

        ls.replace_accum += state.replacement_rate * static_cast<double>(eligible.size());
        int n_replace = static_cast<int>(std::floor(ls.replace_accum));
        if (n_replace <= 0) continue;
        ls.replace_accum -= n_replace;
        n_replace = std::min<int>(n_replace, static_cast<int>(eligible.size()));

        const double* u = ls.utilities.data();
        std::partial_sort(eligible.begin(), eligible.begin() + n_replace, eligible.end(),
                          [u](int a, int b) { return u[a] < u[b] || (u[a] == u[b] && a < b); });

        const int fan_in = static_cast<int>(layer.W.cols());
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int t = 0; t < n_replace; ++t) {
            const int i = eligible[t];
            for (int j = 0; j < fan_in; ++j) layer.W(i, j) = rng.uniform(-bound, bound);
            layer.b[i] = rng.uniform(-bound, bound);
            if (!last) {
                model.pre[l + 1].W.col(i).setZero();
            } else if (model.ablate_kc) {
                model.head.W.col(i).setZero();
            }
            // when the consumer is the frozen expansion there is no
            // trainable outgoing weight to zero
            ls.utilities[i] = 0.0;
            ls.ages[i] = 0;
        }
    }
}

// --- learner wrappers ---

void Learner::apply_step(FlyModel& model, GradientSet& grads, double lr) {
    auto params = trainable_params(model);
    auto g = grad_refs(grads);
    sgd_step(params, g, SgdConfig{lr});
}

namespace {

// penalty += coef_p * w (theta-anchor)^2, grad += coef_g * w (theta-anchor);
// weight == nullptr means uniform weight 1
double add_anchored_quadratic(FlyModel& model, GradientSet& grads, const Vec& anchor, const Vec* weight,
                              double coef_p, double coef_g) {
    auto params = trainable_params(model);
    auto g = grad_refs(grads);
    double penalty = 0.0;
    std::ptrdiff_t at = 0;
    for (std::size_t s = 0; s < params.size(); ++s) {
        const double* p = params[s].data;
        double* gr = g[s].data;
        const double* a = anchor.data() + at;
        const double* w = weight ? weight->data() + at : nullptr;
        for (std::ptrdiff_t i = 0; i < params[s].n; ++i) {
            const double d = p[i] - a[i];
            const double wi = w ? w[i] : 1.0;
            penalty += wi * d * d;
            gr[i] += coef_g * wi * d;
        }
        at += params[s].n;
    }
    return coef_p * penalty;
}

class SgdLearner final : public Learner {
  public:
    Strategy kind() const override { return Strategy::Sgd; }
    void save(BinWriter& w) const override { w.u8(static_cast<std::uint8_t>(Strategy::Sgd)); }
};

class EwcLearner final : public Learner {
  public:
    EwcLearner(EwcState state) : state_(std::move(state)) {}
    Strategy kind() const override { return Strategy::Ewc; }

    double add_penalty_grad(FlyModel& model, GradientSet& grads) override {
        if (state_.tasks_consolidated == 0 || state_.lambda == 0.0) return 0.0;
        return add_anchored_quadratic(model, grads, state_.anchor, &state_.fisher, 0.5 * state_.lambda,
                                      state_.lambda);
    }

    void on_task_end(FlyModel& model, const Dataset& train, const std::vector<std::uint8_t>& allowed) override {
        ewc_consolidate(model, train, allowed, state_);
    }

    void save(BinWriter& w) const override {
        w.u8(static_cast<std::uint8_t>(Strategy::Ewc));
        w.f64(state_.lambda);
        w.u32(static_cast<std::uint32_t>(state_.tasks_consolidated));
        w.u64(static_cast<std::uint64_t>(state_.fisher.size()));
        w.raw(state_.fisher.data(), sizeof(double) * state_.fisher.size());
        w.raw(state_.anchor.data(), sizeof(double) * state_.anchor.size());
    }

    EwcState state_;
};

class SiLearner final : public Learner {
  public:
    SiLearner(SiState state) : state_(std::move(state)) {}
    Strategy kind() const override { return Strategy::Si; }

    double add_penalty_grad(FlyModel& model, GradientSet& grads) override {
        if (state_.c == 0.0) return 0.0;
        return add_anchored_quadratic(model, grads, state_.anchor, &state_.Omega, state_.c, 2.0 * state_.c);
    }

    // Fused descent + path-integral accumulation using the realized deltas.
    void apply_step(FlyModel& model, GradientSet& grads, double lr) override {
        auto params = trainable_params(model);
        auto g = grad_refs(grads);
        std::ptrdiff_t at = 0;
        double* omega = state_.omega_running.data();
        for (std::size_t s = 0; s < params.size(); ++s) {
            double* p = params[s].data;
            const double* gr = g[s].data;
            for (std::ptrdiff_t i = 0; i < params[s].n; ++i) {
                const double old = p[i];
                p[i] = old - lr * gr[i];
                omega[at + i] -= gr[i] * (p[i] - old);
            }
            at += params[s].n;
        }
    }

    void on_task_end(FlyModel& model, const Dataset&, const std::vector<std::uint8_t>&) override {
        auto params = trainable_params(model);
        si_consolidate(state_, flatten(params));
    }

    void save(BinWriter& w) const override {
        w.u8(static_cast<std::uint8_t>(Strategy::Si));
        w.f64(state_.c);
        w.f64(state_.xi);
        w.u64(static_cast<std::uint64_t>(state_.Omega.size()));
        w.raw(state_.omega_running.data(), sizeof(double) * state_.omega_running.size());
        w.raw(state_.Omega.data(), sizeof(double) * state_.Omega.size());
        w.raw(state_.anchor.data(), sizeof(double) * state_.anchor.size());
        w.raw(state_.task_start.data(), sizeof(double) * state_.task_start.size());
    }

    SiState state_;
};

class L2InitLearner final : public Learner {
  public:
    L2InitLearner(L2InitState state) : state_(std::move(state)) {}
    Strategy kind() const override { return Strategy::L2Init; }

    double add_penalty_grad(FlyModel& model, GradientSet& grads) override {
        if (state_.alpha == 0.0) return 0.0;
        return add_anchored_quadratic(model, grads, state_.theta0, nullptr, state_.alpha, 2.0 * state_.alpha);
    }

    void save(BinWriter& w) const override {
        w.u8(static_cast<std::uint8_t>(Strategy::L2Init));
        w.f64(state_.alpha);
        w.u64(static_cast<std::uint64_t>(state_.theta0.size()));
        w.raw(state_.theta0.data(), sizeof(double) * state_.theta0.size());
    }

    L2InitState state_;
};

class SpLearner final : public Learner {
  public:
    SpLearner(ShrinkPerturbConfig cfg) : cfg_(std::move(cfg)) {}
    Strategy kind() const override { return Strategy::ShrinkPerturb; }

    void on_task_end(FlyModel& model, const Dataset&, const std::vector<std::uint8_t>&) override {
        if (cfg_.shrink == 0.0 && cfg_.perturb == 0.0) return;
        auto params = trainable_params(model);
        shrink_perturb_apply(params, cfg_);
    }

    void save(BinWriter& w) const override {
        w.u8(static_cast<std::uint8_t>(Strategy::ShrinkPerturb));
        w.f64(cfg_.shrink);
        w.f64(cfg_.perturb);
        w.u64(static_cast<std::uint64_t>(cfg_.w0.size()));
        w.raw(cfg_.w0.data(), sizeof(double) * cfg_.w0.size());
    }

    ShrinkPerturbConfig cfg_;
};

class CbpLearner final : public Learner {
  public:
    CbpLearner(CbpState state, Rng rng) : state_(std::move(state)), rng_(rng) {}
    Strategy kind() const override { return Strategy::Cbp; }

    void after_step(FlyModel& model, const BatchTrace& trace) override {
        if (state_.replacement_rate <= 0.0 && state_.decay >= 1.0) return;
        cbp_step(model, trace, state_, rng_);
    }

    void save(BinWriter& w) const override {
        w.u8(static_cast<std::uint8_t>(Strategy::Cbp));
        w.f64(state_.decay);
        w.f64(state_.replacement_rate);
        w.u32(static_cast<std::uint32_t>(state_.maturity_threshold));
        w.u32(static_cast<std::uint32_t>(state_.layers.size()));
        for (const auto& ls : state_.layers) {
            w.u64(static_cast<std::uint64_t>(ls.utilities.size()));
            w.raw(ls.utilities.data(), sizeof(double) * ls.utilities.size());
            for (auto a : ls.ages) w.u64(static_cast<std::uint64_t>(a));
            w.f64(ls.replace_accum);
        }
    }

    CbpState state_;
    Rng rng_;
};

Vec read_vec(BinReader& r, std::uint64_t n) {
    Vec v(static_cast<Eigen::Index>(n));
    r.raw(v.data(), sizeof(double) * n);
    return v;
}

}  // namespace

std::unique_ptr<Learner> make_learner(const LearnerSpec& spec, FlyModel& model, std::uint64_t seed) {
    auto params = trainable_params(model);
    const std::int64_t n = trainable_count(model);
    switch (spec.kind) {
        case Strategy::Sgd: return std::make_unique<SgdLearner>();
        case Strategy::Ewc: return std::make_unique<EwcLearner>(make_ewc_state(spec.lambda, n));
        case Strategy::Si: return std::make_unique<SiLearner>(make_si_state(spec.c, spec.xi, flatten(params)));
        case Strategy::L2Init: {
            L2InitState st;
            st.alpha = spec.alpha;
            st.theta0 = flatten(params);
            return std::make_unique<L2InitLearner>(std::move(st));
        }
        case Strategy::ShrinkPerturb: {
            ShrinkPerturbConfig cfg;
            cfg.shrink = spec.shrink;
            cfg.perturb = spec.perturb;
            cfg.w0 = flatten(params);
            return std::make_unique<SpLearner>(std::move(cfg));
        }
        case Strategy::Cbp: {
            auto state = make_cbp_state(model, spec.cbp_decay, spec.cbp_rate, spec.cbp_maturity);
            return std::make_unique<CbpLearner>(std::move(state), Rng(derive_seed(seed, {seed_tag::kCbp})));
        }
    }
    throw ConfigError("unknown learner kind");
}

std::unique_ptr<Learner> load_learner(BinReader& r, FlyModel& model) {
    const std::int64_t n = trainable_count(model);
    const auto kind = static_cast<Strategy>(r.u8());
    auto expect_n = [&](std::uint64_t got) {
        if (got != static_cast<std::uint64_t>(n))
            throw FormatError("learner state size does not match the model", r.pos());
    };
    switch (kind) {
        case Strategy::Sgd: return std::make_unique<SgdLearner>();
        case Strategy::Ewc: {
            EwcState st;
            st.lambda = r.f64();
            st.tasks_consolidated = static_cast<int>(r.u32());
            const auto sz = r.u64();
            expect_n(sz);
            st.fisher = read_vec(r, sz);
            st.anchor = read_vec(r, sz);
            return std::make_unique<EwcLearner>(std::move(st));
        }
        case Strategy::Si: {
            SiState st;
            st.c = r.f64();
            st.xi = r.f64();
            const auto sz = r.u64();
            expect_n(sz);
            st.omega_running = read_vec(r, sz);
            st.Omega = read_vec(r, sz);
            st.anchor = read_vec(r, sz);
            st.task_start = read_vec(r, sz);
            return std::make_unique<SiLearner>(std::move(st));
        }
        case Strategy::L2Init: {
            L2InitState st;
            st.alpha = r.f64();
            const auto sz = r.u64();
            expect_n(sz);
            st.theta0 = read_vec(r, sz);
            return std::make_unique<L2InitLearner>(std::move(st));
        }
        case Strategy::ShrinkPerturb: {
            ShrinkPerturbConfig cfg;
            cfg.shrink = r.f64();
            cfg.perturb = r.f64();
            const auto sz = r.u64();
            expect_n(sz);
            cfg.w0 = read_vec(r, sz);
            return std::make_unique<SpLearner>(std::move(cfg));
        }
        case Strategy::Cbp: {
            CbpState st = make_cbp_state(model, 0.99, 1e-4, 100);
            st.decay = r.f64();
            st.replacement_rate = r.f64();
            st.maturity_threshold = static_cast<int>(r.u32());
            const auto n_layers = r.u32();
            if (n_layers != st.layers.size()) throw FormatError("cbp layer count mismatch", r.pos());
            for (auto& ls : st.layers) {
                const auto sz = r.u64();
                if (sz != static_cast<std::uint64_t>(ls.utilities.size()))
                    throw FormatError("cbp layer width mismatch", r.pos());
                ls.utilities = read_vec(r, sz);
                for (auto& a : ls.ages) a = static_cast<std::int64_t>(r.u64());
                ls.replace_accum = r.f64();
            }
            return std::make_unique<CbpLearner>(std::move(st), Rng(0));
        }
    }
    throw FormatError("unknown learner tag", r.pos());
}

}  // namespace flycl
