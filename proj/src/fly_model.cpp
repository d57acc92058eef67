#include "flycl/fly_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flycl {

SparseBinaryProjection build_projection(int n_in, int n_out, int degree, std::uint64_t seed) {
    if (n_in <= 0 || n_out <= 0) throw ShapeError("projection dimensions must be positive");
    if (degree < 1 || degree > n_in)
        throw DegreeError("degree " + std::to_string(degree) + " outside [1, " + std::to_string(n_in) + "]");

    SparseBinaryProjection proj;
    proj.n_in = n_in;
    proj.n_out = n_out;
    proj.degree = degree;
    proj.seed = seed;
    proj.flat.reserve(static_cast<std::size_t>(n_out) * degree);

    Rng rng(derive_seed(seed, {seed_tag::kProjection}));
    for (int i = 0; i < n_out; ++i) {
        auto row = rng.sample_indices(static_cast<std::uint32_t>(n_in), static_cast<std::uint32_t>(degree));
        proj.flat.insert(proj.flat.end(), row.begin(), row.end());
    }
    return proj;
}

void expand(const SparseBinaryProjection& proj, const Vec& x, Vec& out) {
    if (x.size() != proj.n_in)
        throw ShapeError("expand: input length " + std::to_string(x.size()) + " != n_in " + std::to_string(proj.n_in));
    out.resize(proj.n_out);
    const std::uint32_t* idx = proj.flat.data();
    const double* xp = x.data();
    const int r = proj.degree;
    for (int i = 0; i < proj.n_out; ++i) {
        double s = 0.0;
        for (int j = 0; j < r; ++j) s += xp[idx[j]];
        out[i] = s;
        idx += r;
    }
}

Vec expand(const SparseBinaryProjection& proj, const Vec& x) {
    Vec out;
    expand(proj, x, out);
    return out;
}

CodingConfig make_coding(double coding_level, int n_out) {
    if (!(coding_level > 0.0) || coding_level > 1.0)
        throw ConfigError("coding level must lie in (0, 1], got " + std::to_string(coding_level));
    CodingConfig c;
    c.coding_level = coding_level;
    c.active_count = static_cast<int>(std::ceil(coding_level * n_out));
    if (c.active_count < 1) c.active_count = 1;
    if (c.active_count > n_out) c.active_count = n_out;
    return c;
}

void top_k_code(const Vec& raw, const CodingConfig& coding, Vec& coded, std::vector<int>& active_set) {
    const int m = static_cast<int>(raw.size());
    const int a = coding.active_count;
    active_set.resize(m);
    std::iota(active_set.begin(), active_set.end(), 0);
    if (a < m) {
        const double* v = raw.data();
        std::nth_element(active_set.begin(), active_set.begin() + (a - 1), active_set.end(),
                         [v](int i, int j) { return v[i] > v[j] || (v[i] == v[j] && i < j); });
        active_set.resize(a);
    }
    std::sort(active_set.begin(), active_set.end());
    coded.setZero(m);
    for (int i : active_set) coded[i] = raw[i];
}

namespace {

void apply_activation(Activation act, Mat& x) {
    if (act == Activation::Relu) x = x.cwiseMax(0.0);
}

Vec activated(Activation act, const Vec& x) {
    if (act == Activation::Relu) return x.cwiseMax(0.0);
    return x;
}

Mat init_matrix(int rows, int cols, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Mat W(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) W(r, c) = rng.uniform(-bound, bound);
    return W;
}

Vec init_vector(int n, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform(-bound, bound);
    return v;
}

}  // namespace

FlyModel make_model(const ModelConfig& cfg) {
    if (cfg.n_features <= 0 || cfg.n_classes <= 0) throw ShapeError("model dimensions must be positive");
    for (const auto& p : cfg.pre)
        if (p.width <= 0) throw ShapeError("pre-layer width must be positive");

    FlyModel m;
    m.config = cfg;
    m.ablate_kc = cfg.ablate_kc;

    int in_dim = cfg.n_features;
    for (std::size_t l = 0; l < cfg.pre.size(); ++l) {
        Rng rng(derive_seed(cfg.seed, {seed_tag::kPreInit, static_cast<std::uint64_t>(l)}));
        DensePreLayer layer;
        layer.W = init_matrix(cfg.pre[l].width, in_dim, in_dim, rng);
        layer.b = init_vector(cfg.pre[l].width, in_dim, rng);
        layer.act = cfg.pre[l].act;
        in_dim = cfg.pre[l].width;
        m.pre.push_back(std::move(layer));
    }

    if (!cfg.ablate_kc) {
        m.projection = build_projection(in_dim, cfg.n_kc, cfg.degree, cfg.seed);
        m.coding = make_coding(cfg.coding_level, cfg.n_kc);
    }

    const int head_in = cfg.ablate_kc ? in_dim : cfg.n_kc;
    Rng hrng(derive_seed(cfg.seed, {seed_tag::kHeadInit}));
    m.head.W = init_matrix(cfg.n_classes, head_in, head_in, hrng);
    if (cfg.head_bias) m.head.b = init_vector(cfg.n_classes, head_in, hrng);
    return m;
}

ForwardTrace forward(const FlyModel& model, const Vec& x) {
    if (x.size() != model.input_dim())
        throw ShapeError("forward: input length " + std::to_string(x.size()) + " != model input dim " +
                         std::to_string(model.input_dim()));

    ForwardTrace t;
    t.input = x;
    Vec cur = x;
    for (std::size_t l = 0; l < model.pre.size(); ++l) {
        const auto& layer = model.pre[l];
        if (layer.W.cols() != cur.size())
            throw ShapeError("forward: shape mismatch at pre-layer " + std::to_string(l));
        Vec lin = layer.W * cur + layer.b;
        t.pre_lin.push_back(lin);
        cur = activated(layer.act, lin);
        t.pre_out.push_back(cur);
    }

    const Vec* head_in = &cur;
    if (!model.ablate_kc) {
        expand(model.projection, cur, t.kc_raw);
        top_k_code(t.kc_raw, model.coding, t.kc_coded, t.active_set);
        head_in = &t.kc_coded;
    }

    if (model.head.W.cols() != head_in->size()) throw ShapeError("forward: shape mismatch at head");
    if (!model.ablate_kc) {
        // exploit the coded sparsity
        t.logits.setZero(model.head.W.rows());
        for (int j : t.active_set) t.logits += model.head.W.col(j) * t.kc_coded[j];
    } else {
        t.logits = model.head.W * (*head_in);
    }
    if (model.head.has_bias()) t.logits += model.head.b;
    return t;
}

void GradientSet::set_zero() {
    for (auto& W : pre_W) W.setZero();
    for (auto& b : pre_b) b.setZero();
    head_W.setZero();
    head_b.setZero();
}

GradientSet zeros_like(const FlyModel& model) {
    GradientSet g;
    for (const auto& layer : model.pre) {
        g.pre_W.emplace_back(Mat::Zero(layer.W.rows(), layer.W.cols()));
        g.pre_b.emplace_back(Vec::Zero(layer.b.size()));
    }
    g.head_W = Mat::Zero(model.head.W.rows(), model.head.W.cols());
    g.head_b = model.head.has_bias() ? Vec::Zero(model.head.b.size()) : Vec();
    return g;
}

GradientSet backward(const FlyModel& model, const ForwardTrace& trace, const Vec& loss_grad_logits) {
    if (loss_grad_logits.size() != model.head.W.rows()) throw TraceError("backward: logit gradient length mismatch");
    if (trace.input.size() != model.input_dim()) throw TraceError("backward: trace input dim mismatch");
    if (trace.pre_lin.size() != model.pre.size()) throw TraceError("backward: trace pre-layer count mismatch");
    if (!model.ablate_kc && trace.kc_coded.size() != model.projection.n_out)
        throw TraceError("backward: trace expansion size mismatch");

    GradientSet g = zeros_like(model);
    const Vec& head_in =
        model.ablate_kc ? (model.pre.empty() ? trace.input : trace.pre_out.back()) : trace.kc_coded;
    if (head_in.size() != model.head.W.cols()) throw TraceError("backward: trace head input mismatch");

    // head gradient: outer product, restricted to the active columns when
    // the coding stage is present
    if (!model.ablate_kc) {
        for (int j : trace.active_set) g.head_W.col(j) = loss_grad_logits * head_in[j];
    } else {
        g.head_W = loss_grad_logits * head_in.transpose();
    }
    if (model.head.has_bias()) g.head_b = loss_grad_logits;

    if (model.pre.empty()) return g;

    // gradient w.r.t. the vector feeding the head, pushed back to the last
    // pre-layer output
    Vec delta;
    if (!model.ablate_kc) {
        // through the head on active columns, then through the fixed top-k
        // mask and the frozen binary fan-in
        delta.setZero(model.projection.n_in);
        for (int j : trace.active_set) {
            const double dz = model.head.W.col(j).dot(loss_grad_logits);
            for (std::uint32_t src : model.projection.row(j)) delta[src] += dz;
        }
    } else {
        delta = model.head.W.transpose() * loss_grad_logits;
    }

    for (int l = static_cast<int>(model.pre.size()) - 1; l >= 0; --l) {
        const auto& layer = model.pre[l];
        if (layer.act == Activation::Relu) {
            for (int i = 0; i < delta.size(); ++i)
                if (trace.pre_lin[l][i] <= 0.0) delta[i] = 0.0;
        }
        const Vec& in = (l == 0) ? trace.input : trace.pre_out[l - 1];
        g.pre_W[l] = delta * in.transpose();
        g.pre_b[l] = delta;
        if (l > 0) delta = layer.W.transpose() * delta;
    }
    return g;
}

std::pair<double, Vec> cross_entropy_loss(const Vec& logits, int label) {
    std::vector<std::uint8_t> allowed(static_cast<std::size_t>(logits.size()), 1);
    return cross_entropy_loss_masked(logits, label, allowed);
}

std::pair<double, Vec> cross_entropy_loss_masked(const Vec& logits, int label,
                                                 const std::vector<std::uint8_t>& allowed) {
    const int c = static_cast<int>(logits.size());
    if (static_cast<int>(allowed.size()) != c) throw ShapeError("class mask length mismatch");
    if (label < 0 || label >= c || !allowed[label])
        throw LabelError("label " + std::to_string(label) + " outside the allowed class set");

    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < c; ++i)
        if (allowed[i] && logits[i] > mx) mx = logits[i];
    double z = 0.0;
    Vec p = Vec::Zero(c);
    for (int i = 0; i < c; ++i) {
        if (!allowed[i]) continue;
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    p /= z;
    const double loss = -(logits[label] - mx - std::log(z));
    Vec grad = p;
    grad[label] -= 1.0;
    return {loss, grad};
}

std::vector<ParamRef> trainable_params(FlyModel& model) {
    std::vector<ParamRef> refs;
    for (auto& layer : model.pre) {
        refs.push_back({layer.W.data(), layer.W.size()});
        refs.push_back({layer.b.data(), layer.b.size()});
    }
    refs.push_back({model.head.W.data(), model.head.W.size()});
    if (model.head.has_bias()) refs.push_back({model.head.b.data(), model.head.b.size()});
    return refs;
}

std::vector<ParamRef> grad_refs(GradientSet& grads) {
    std::vector<ParamRef> refs;
    for (std::size_t l = 0; l < grads.pre_W.size(); ++l) {
        refs.push_back({grads.pre_W[l].data(), grads.pre_W[l].size()});
        refs.push_back({grads.pre_b[l].data(), grads.pre_b[l].size()});
    }
    refs.push_back({grads.head_W.data(), grads.head_W.size()});
    if (grads.head_b.size() > 0) refs.push_back({grads.head_b.data(), grads.head_b.size()});
    return refs;
}

std::int64_t trainable_count(const FlyModel& model) {
    std::int64_t n = 0;
    for (const auto& layer : model.pre) n += layer.W.size() + layer.b.size();
    n += model.head.W.size() + model.head.b.size();
    return n;
}

Vec flatten(const std::vector<ParamRef>& refs) {
    std::ptrdiff_t total = 0;
    for (const auto& r : refs) total += r.n;
    Vec out(total);
    std::ptrdiff_t at = 0;
    for (const auto& r : refs) {
        std::copy(r.data, r.data + r.n, out.data() + at);
        at += r.n;
    }
    return out;
}

void unflatten(const Vec& flat, const std::vector<ParamRef>& refs) {
    std::ptrdiff_t at = 0;
    for (const auto& r : refs) {
        std::copy(flat.data() + at, flat.data() + at + r.n, r.data);
        at += r.n;
    }
}

BatchTrace forward_batch(const FlyModel& model, const Mat& X) {
    if (X.rows() != model.input_dim()) throw ShapeError("forward_batch: feature dim mismatch");
    const int B = static_cast<int>(X.cols());

    BatchTrace t;
    t.input = X;
    Mat cur = X;
    for (std::size_t l = 0; l < model.pre.size(); ++l) {
        const auto& layer = model.pre[l];
        Mat lin = (layer.W * cur).colwise() + layer.b;
        t.pre_lin.push_back(lin);
        apply_activation(layer.act, lin);
        t.pre_out.push_back(lin);
        cur = t.pre_out.back();
    }

    if (!model.ablate_kc) {
        t.active.resize(B);
        t.active_vals.resize(B);
        const int m = model.projection.n_out;
        Vec h(m), coded(m);
        for (int s = 0; s < B; ++s) {
            const Vec col = cur.col(s);
            expand(model.projection, col, h);
            top_k_code(h, model.coding, coded, t.active[s]);
            Vec vals(static_cast<int>(t.active[s].size()));
            for (std::size_t i = 0; i < t.active[s].size(); ++i) vals[static_cast<int>(i)] = h[t.active[s][i]];
            t.active_vals[s] = std::move(vals);
        }
        t.logits.setZero(model.head.W.rows(), B);
        for (int s = 0; s < B; ++s) {
            auto& act = t.active[s];
            for (std::size_t i = 0; i < act.size(); ++i)
                t.logits.col(s) += model.head.W.col(act[i]) * t.active_vals[s][static_cast<int>(i)];
        }
    } else {
        t.logits = model.head.W * cur;
    }
    if (model.head.has_bias()) t.logits.colwise() += model.head.b;
    return t;
}

GradientSet backward_batch(const FlyModel& model, const BatchTrace& trace, const Mat& logit_grads) {
    const int B = trace.batch();
    if (logit_grads.rows() != model.head.W.rows() || logit_grads.cols() != B)
        throw TraceError("backward_batch: logit gradient shape mismatch");

    GradientSet g = zeros_like(model);
    const bool need_delta = !model.pre.empty();

    Mat delta;  // (dim x B) gradient flowing into the pre-layer stack
    if (!model.ablate_kc) {
        if (need_delta) delta.setZero(model.projection.n_in, B);
        for (int s = 0; s < B; ++s) {
            const auto& act = trace.active[s];
            for (std::size_t i = 0; i < act.size(); ++i) {
                const int j = act[i];
                const double zj = trace.active_vals[s][static_cast<int>(i)];
                g.head_W.col(j) += logit_grads.col(s) * zj;
                if (need_delta) {
                    const double dz = model.head.W.col(j).dot(logit_grads.col(s));
                    for (std::uint32_t src : model.projection.row(j)) delta(src, s) += dz;
                }
            }
        }
    } else {
        const Mat& head_in = model.pre.empty() ? trace.input : trace.pre_out.back();
        g.head_W = logit_grads * head_in.transpose();
        if (need_delta) delta = model.head.W.transpose() * logit_grads;
    }
    if (model.head.has_bias()) g.head_b = logit_grads.rowwise().sum();

    for (int l = static_cast<int>(model.pre.size()) - 1; l >= 0; --l) {
        const auto& layer = model.pre[l];
        if (layer.act == Activation::Relu)
            delta = (trace.pre_lin[l].array() > 0.0).select(delta, Mat::Zero(delta.rows(), delta.cols()));
        const Mat& in = (l == 0) ? trace.input : trace.pre_out[l - 1];
        g.pre_W[l] = delta * in.transpose();
        g.pre_b[l] = delta.rowwise().sum();
        if (l > 0) delta = layer.W.transpose() * delta;
    }
    return g;
}

}  // namespace flycl
