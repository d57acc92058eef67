#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "flycl/checkpoint.hpp"
#include "flycl/fly_model.hpp"
#include "flycl/learners.hpp"
#include "oracles.hpp"

using namespace flycl;

TEST_CASE("projection: full connectivity is forced when degree = n_in") {
    const auto proj = build_projection(4, 3, 4, 123);
    for (int i = 0; i < 3; ++i) {
        const auto row = proj.row(i);
        CHECK(std::vector<std::uint32_t>(row.begin(), row.end()) == std::vector<std::uint32_t>{0, 1, 2, 3});
    }
}

TEST_CASE("projection: deterministic per seed") {
    const auto a = build_projection(50, 2000, 6, 77);
    const auto b = build_projection(50, 2000, 6, 77);
    CHECK(a.flat == b.flat);
    const auto c = build_projection(50, 2000, 6, 78);
    CHECK(a.flat != c.flat);
}

TEST_CASE("projection: row invariants") {
    const auto proj = build_projection(50, 500, 6, 9);
    for (int i = 0; i < proj.n_out; ++i) {
        const auto row = proj.row(i);
        CHECK(row.size() == 6);
        for (std::size_t j = 0; j + 1 < row.size(); ++j) CHECK(row[j] < row[j + 1]);  // sorted, distinct
        for (auto v : row) CHECK(v < 50u);
    }
}

TEST_CASE("projection: errors") {
    CHECK_THROWS_AS(build_projection(4, 3, 5, 1), DegreeError);
    CHECK_THROWS_AS(build_projection(4, 3, 0, 1), DegreeError);
    CHECK_THROWS_AS(build_projection(0, 3, 1, 1), ShapeError);
    CHECK_THROWS_AS(build_projection(4, 0, 1, 1), ShapeError);
}

TEST_CASE("projection: column usage is uniform across seeds") {
    // counts per input column over 100 seeds, within 3 sigma of binomial
    const int n_in = 50, n_out = 200, degree = 6, seeds = 100;
    std::vector<std::int64_t> count(n_in, 0);
    for (int s = 0; s < seeds; ++s) {
        const auto proj = build_projection(n_in, n_out, degree, 55000 + s);
        for (auto j : proj.flat) count[j] += 1;
    }
    const double draws = static_cast<double>(n_out) * seeds;  // rows drawn overall
    const double p = static_cast<double>(degree) / n_in;
    const double mean = draws * p;
    const double sigma = std::sqrt(draws * p * (1.0 - p));
    for (int j = 0; j < n_in; ++j) CHECK(std::abs(count[j] - mean) <= 3.0 * sigma);
}

TEST_CASE("expand: two-term sum and zero input") {
    SparseBinaryProjection proj;
    proj.n_in = 4;
    proj.n_out = 1;
    proj.degree = 2;
    proj.flat = {0, 2};
    Vec x(4);
    x << 1, 2, 3, 4;
    CHECK(expand(proj, x)[0] == 4.0);
    CHECK(expand(proj, Vec::Zero(4)).isZero(0.0));
    CHECK_THROWS_AS(expand(proj, Vec::Zero(3)), ShapeError);
}

TEST_CASE("expand: matches the dense 0/1 matrix oracle and is linear") {
    const auto proj = build_projection(30, 120, 5, 4);
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Vec x(30), y(30);
        for (int i = 0; i < 30; ++i) {
            x[i] = rng.normal();
            y[i] = rng.normal();
        }
        const Vec ex = expand(proj, x);
        CHECK((ex - oracle::dense_expand(proj, x)).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
        const Vec sum = expand(proj, x + y);
        CHECK((sum - ex - expand(proj, y)).cwiseAbs().maxCoeff() < 1e-12);
        const double a = 1.7, b = -0.3;
        const Vec lin = expand(proj, (a * x + b * y).eval());
        CHECK((lin - a * ex - b * expand(proj, y)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("top-k: direct selection and tie policy") {
    Vec raw(5), coded;
    std::vector<int> active;
    raw << 0.5, -1, 3, 2, 0.1;
    top_k_code(raw, CodingConfig{0.4, 2}, coded, active);
    CHECK(active == std::vector<int>{2, 3});
    Vec want(5);
    want << 0, 0, 3, 2, 0;
    CHECK(coded == want);

    Vec ties = Vec::Ones(4);
    top_k_code(ties, CodingConfig{0.5, 2}, coded, active);
    CHECK(active == std::vector<int>{0, 1});
    CHECK(coded[0] == 1.0);
    CHECK(coded[1] == 1.0);
    CHECK(coded[2] == 0.0);
}

TEST_CASE("top-k: agrees with the sort oracle on random vectors") {
    Rng rng(6);
    Vec coded;
    std::vector<int> active;
    for (int trial = 0; trial < 1000; ++trial) {
        const int m = 20 + static_cast<int>(rng.below(200));
        const int a = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
        Vec raw(m);
        for (int i = 0; i < m; ++i) raw[i] = rng.normal();
        top_k_code(raw, CodingConfig{static_cast<double>(a) / m, a}, coded, active);
        CHECK(active == oracle::sort_topk(raw, a));
        for (int j : active) CHECK(coded[j] == raw[j]);  // retained values unmodified
    }
}

TEST_CASE("coding config: validation and ceil rule") {
    CHECK(make_coding(0.01, 2000).active_count == 20);
    CHECK(make_coding(0.001, 2000).active_count == 2);
    CHECK(make_coding(1.0, 7).active_count == 7);
    CHECK(make_coding(0.0001, 50).active_count == 1);  // at least one winner
    CHECK_THROWS_AS(make_coding(0.0, 10), ConfigError);
    CHECK_THROWS_AS(make_coding(1.5, 10), ConfigError);
}

TEST_CASE("forward: ablated pass-through") {
    ModelConfig mc;
    mc.n_features = 4;
    mc.n_classes = 1;
    mc.ablate_kc = true;
    mc.seed = 3;
    FlyModel m = make_model(mc);
    m.head.W.setZero();
    m.head.W(0, 0) = 1.0;
    Vec x = Vec::Zero(4);
    x[0] = 1.0;
    const auto t = forward(m, x);
    CHECK(t.logits.size() == 1);
    CHECK(t.logits[0] == 1.0);
}

TEST_CASE("forward: coding level 1 retains the raw expansion exactly") {
    ModelConfig mc;
    mc.n_features = 10;
    mc.n_kc = 40;
    mc.degree = 3;
    mc.coding_level = 1.0;
    mc.n_classes = 3;
    mc.seed = 8;
    const FlyModel m = make_model(mc);
    Rng rng(9);
    Vec x(10);
    for (int i = 0; i < 10; ++i) x[i] = rng.normal();
    const auto t = forward(m, x);
    CHECK(t.kc_coded == t.kc_raw);
    CHECK(static_cast<int>(t.active_set.size()) == 40);
}

TEST_CASE("forward: repeated calls are bit-identical") {
    ModelConfig mc;
    mc.n_features = 12;
    mc.pre = {{9, Activation::Relu}};
    mc.n_kc = 50;
    mc.degree = 4;
    mc.coding_level = 0.1;
    mc.n_classes = 4;
    mc.seed = 10;
    const FlyModel m = make_model(mc);
    Rng rng(11);
    Vec x(12);
    for (int i = 0; i < 12; ++i) x[i] = rng.normal();
    const auto t1 = forward(m, x);
    const auto t2 = forward(m, x);
    CHECK(t1.logits == t2.logits);
    CHECK(t1.kc_coded == t2.kc_coded);
    CHECK(t1.active_set == t2.active_set);
}

TEST_CASE("forward: shape errors name the stage") {
    ModelConfig mc;
    mc.n_features = 6;
    mc.n_kc = 20;
    mc.degree = 2;
    mc.coding_level = 0.2;
    mc.n_classes = 2;
    mc.seed = 1;
    const FlyModel m = make_model(mc);
    CHECK_THROWS_AS(forward(m, Vec::Zero(5)), ShapeError);
}

TEST_CASE("backward: head gradient support is the active set") {
    ModelConfig mc;
    mc.n_features = 10;
    mc.n_kc = 5;
    mc.degree = 2;
    mc.coding_level = 0.4;  // 2 active of 5
    mc.n_classes = 3;
    mc.seed = 12;
    const FlyModel m = make_model(mc);
    Rng rng(13);
    Vec x(10);
    for (int i = 0; i < 10; ++i) x[i] = rng.normal();
    const auto t = forward(m, x);
    auto [loss, g] = cross_entropy_loss(t.logits, 1);
    (void)loss;
    const auto grads = backward(m, t, g);
    for (int j = 0; j < 5; ++j) {
        const bool active = std::find(t.active_set.begin(), t.active_set.end(), j) != t.active_set.end();
        if (!active) CHECK(grads.head_W.col(j).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("backward: ablated model matches the dense network oracle") {
    ModelConfig mc;
    mc.n_features = 7;
    mc.pre = {{6, Activation::Relu}, {5, Activation::Relu}};
    mc.n_classes = 3;
    mc.ablate_kc = true;
    mc.head_bias = false;
    mc.seed = 14;
    FlyModel m = make_model(mc);

    oracle::DenseNet net;
    net.W = {m.pre[0].W, m.pre[1].W, m.head.W};
    net.b = {m.pre[0].b, m.pre[1].b, Vec()};
    net.relu = {true, true, false};

    Rng rng(15);
    Vec x(7);
    for (int i = 0; i < 7; ++i) x[i] = rng.normal();

    const auto t = forward(m, x);
    CHECK((t.logits - net.forward(x)).cwiseAbs().maxCoeff() < 1e-12);

    auto [loss, g] = cross_entropy_loss(t.logits, 2);
    (void)loss;
    const auto grads = backward(m, t, g);
    std::vector<Mat> gW;
    std::vector<Vec> gb;
    net.backward(x, g, gW, gb);
    CHECK((grads.pre_W[0] - gW[0]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((grads.pre_W[1] - gW[1]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((grads.pre_b[0] - gb[0]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((grads.head_W - gW[2]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward: finite differences on the full model") {
    for (bool with_pre : {false, true}) {
        ModelConfig mc;
        mc.n_features = with_pre ? 9 : 15;
        if (with_pre) mc.pre = {{8, Activation::Relu}};
        mc.n_kc = 40;
        mc.degree = 3;
        mc.coding_level = 0.1;
        mc.n_classes = 3;
        mc.seed = 16;
        FlyModel m = make_model(mc);
        Rng rng(17);
        Vec x(mc.n_features);
        for (int i = 0; i < x.size(); ++i) x[i] = rng.normal();
        const int label = 1;

        const auto t = forward(m, x);
        auto [l0, g] = cross_entropy_loss(t.logits, label);
        (void)l0;
        auto grads = backward(m, t, g);

        auto params = trainable_params(m);
        auto grefs = grad_refs(grads);
        const double h = 1e-6;
        double num = 0.0, den = 0.0;
        for (std::size_t s = 0; s < params.size(); ++s) {
            for (std::ptrdiff_t i = 0; i < params[s].n; ++i) {
                const double orig = params[s].data[i];
                params[s].data[i] = orig + h;
                const double lp = cross_entropy_loss(forward(m, x).logits, label).first;
                params[s].data[i] = orig - h;
                const double lm = cross_entropy_loss(forward(m, x).logits, label).first;
                params[s].data[i] = orig;
                const double fd = (lp - lm) / (2 * h);
                num += (grefs[s].data[i] - fd) * (grefs[s].data[i] - fd);
                den += grefs[s].data[i] * grefs[s].data[i];
            }
        }
        CHECK(std::sqrt(num / den) < 1e-4);
    }
}

TEST_CASE("backward: stale trace is rejected") {
    ModelConfig mc;
    mc.n_features = 6;
    mc.n_kc = 20;
    mc.degree = 2;
    mc.coding_level = 0.2;
    mc.n_classes = 2;
    mc.seed = 18;
    const FlyModel m = make_model(mc);
    ModelConfig other = mc;
    other.n_kc = 30;
    const FlyModel m2 = make_model(other);
    const auto t = forward(m2, Vec::Ones(6));
    auto [loss, g] = cross_entropy_loss(t.logits, 0);
    (void)loss;
    CHECK_THROWS_AS(backward(m, t, g), TraceError);
}

TEST_CASE("cross entropy: symmetric, stable, and softmax identity") {
    Vec logits(2);
    logits << 0, 0;
    auto [loss, grad] = cross_entropy_loss(logits, 0);
    CHECK(loss == doctest::Approx(std::log(2.0)));
    CHECK(grad[0] == doctest::Approx(-0.5));
    CHECK(grad[1] == doctest::Approx(0.5));

    logits << 1000, 0;
    auto [big, g2] = cross_entropy_loss(logits, 0);
    CHECK(std::isfinite(big));
    CHECK(big == doctest::Approx(0.0));
    CHECK(std::isfinite(g2[1]));

    Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        Vec l(6);
        for (int i = 0; i < 6; ++i) l[i] = rng.normal(0, 5);
        auto [lv, gv] = cross_entropy_loss(l, static_cast<int>(rng.below(6)));
        (void)lv;
        CHECK(gv.sum() == doctest::Approx(0.0).epsilon(1e-12));
    }

    CHECK_THROWS_AS(cross_entropy_loss(logits, 2), LabelError);
    CHECK_THROWS_AS(cross_entropy_loss(logits, -1), LabelError);
}

TEST_CASE("masked cross entropy: disallowed classes get no probability and no gradient") {
    Vec logits(4);
    logits << 5, 1, 2, 3;
    std::vector<std::uint8_t> allowed{1, 1, 0, 0};
    auto [loss, grad] = cross_entropy_loss_masked(logits, 1, allowed);
    CHECK(grad[2] == 0.0);
    CHECK(grad[3] == 0.0);
    // equals the two-class problem on the allowed subset
    Vec sub(2);
    sub << 5, 1;
    auto [loss2, grad2] = cross_entropy_loss(sub, 1);
    CHECK(loss == doctest::Approx(loss2));
    CHECK(grad[0] == doctest::Approx(grad2[0]));
    CHECK(grad[1] == doctest::Approx(grad2[1]));
    CHECK_THROWS_AS(cross_entropy_loss_masked(logits, 2, allowed), LabelError);
}

TEST_CASE("batch path agrees with the per-sample path") {
    ModelConfig mc;
    mc.n_features = 11;
    mc.pre = {{9, Activation::Relu}};
    mc.n_kc = 60;
    mc.degree = 4;
    mc.coding_level = 0.1;
    mc.n_classes = 4;
    mc.seed = 20;
    const FlyModel m = make_model(mc);
    Rng rng(21);
    const int B = 7;
    Mat X(11, B);
    for (int s = 0; s < B; ++s)
        for (int i = 0; i < 11; ++i) X(i, s) = rng.normal();

    const auto bt = forward_batch(m, X);
    Mat logit_grads(4, B);
    GradientSet want = zeros_like(m);
    for (int s = 0; s < B; ++s) {
        const auto t = forward(m, X.col(s));
        CHECK((bt.logits.col(s) - t.logits).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(bt.active[s] == t.active_set);
        auto [loss, g] = cross_entropy_loss(t.logits, s % 4);
        (void)loss;
        logit_grads.col(s) = g;
        const auto gs = backward(m, t, g);
        for (std::size_t l = 0; l < want.pre_W.size(); ++l) {
            want.pre_W[l] += gs.pre_W[l];
            want.pre_b[l] += gs.pre_b[l];
        }
        want.head_W += gs.head_W;
    }
    const auto got = backward_batch(m, bt, logit_grads);
    CHECK((got.head_W - want.head_W).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((got.pre_W[0] - want.pre_W[0]).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((got.pre_b[0] - want.pre_b[0]).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("training never touches the frozen projection") {
    ModelConfig mc;
    mc.n_features = 10;
    mc.n_kc = 50;
    mc.degree = 3;
    mc.coding_level = 0.1;
    mc.n_classes = 3;
    mc.seed = 22;
    FlyModel m = make_model(mc);
    const auto wiring = m.projection.flat;

    Rng rng(23);
    for (int step = 0; step < 200; ++step) {
        Vec x(10);
        for (int i = 0; i < 10; ++i) x[i] = rng.normal();
        const auto t = forward(m, x);
        auto [loss, g] = cross_entropy_loss(t.logits, static_cast<int>(rng.below(3)));
        (void)loss;
        auto grads = backward(m, t, g);
        auto params = trainable_params(m);
        auto grefs = grad_refs(grads);
        sgd_step(params, grefs, SgdConfig{0.05});
    }
    CHECK(m.projection.flat == wiring);
}

TEST_CASE("model checkpoint round trip is bit exact") {
    namespace fs = std::filesystem;
    ModelConfig mc;
    mc.n_features = 13;
    mc.pre = {{7, Activation::Relu}, {6, Activation::Identity}};
    mc.n_kc = 30;
    mc.degree = 5;
    mc.coding_level = 0.2;
    mc.n_classes = 4;
    mc.head_bias = true;
    mc.seed = 24;
    const FlyModel m = make_model(mc);
    const auto path = fs::temp_directory_path() / "flycl_test_model.flym";
    save_model(path, m);
    const FlyModel r = load_model(path);
    CHECK(r.head.W == m.head.W);
    CHECK(r.head.b == m.head.b);
    CHECK(r.projection.flat == m.projection.flat);
    CHECK(r.pre.size() == m.pre.size());
    for (std::size_t l = 0; l < m.pre.size(); ++l) {
        CHECK(r.pre[l].W == m.pre[l].W);
        CHECK(r.pre[l].b == m.pre[l].b);
        CHECK(r.pre[l].act == m.pre[l].act);
    }
    CHECK(r.config.coding_level == mc.coding_level);

    // truncation is detected, never a partial model
    auto bytes = read_file_bytes(path);
    bytes.resize(bytes.size() / 2);
    const auto bad = fs::temp_directory_path() / "flycl_test_trunc.flym";
    atomic_write_file(bad, bytes);
    CHECK_THROWS_AS(load_model(bad), FormatError);
}
