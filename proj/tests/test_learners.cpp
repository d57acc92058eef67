#include <doctest.h>

#include <cmath>

#include "flycl/learners.hpp"
#include "oracles.hpp"

using namespace flycl;

namespace {

std::vector<ParamRef> refs_of(Vec& v) { return {{v.data(), v.size()}}; }

}  // namespace

TEST_CASE("sgd step: direct arithmetic and fixed point") {
    Vec p(1), g(1);
    p << 1;
    g << 2;
    sgd_step(refs_of(p), refs_of(g), SgdConfig{0.5});
    CHECK(p[0] == 0.0);

    Vec p2(3);
    p2 << 1, 2, 3;
    Vec zero = Vec::Zero(3);
    sgd_step(refs_of(p2), refs_of(zero), SgdConfig{0.1});
    CHECK(p2[0] == 1.0);
    CHECK(p2[2] == 3.0);

    CHECK_THROWS_AS(sgd_step(refs_of(p), refs_of(zero), SgdConfig{0.1}), ShapeError);
    CHECK_THROWS_AS(sgd_step(refs_of(p), refs_of(g), SgdConfig{0.0}), ConfigError);
}

TEST_CASE("sgd step: two small steps differ from one summed step on a nonlinear loss") {
    // loss(theta) = theta^4, grad = 4 theta^3; the second step sees a moved
    // parameter, so folding both gradients into one step is not equivalent
    auto grad = [](double th) { return 4.0 * th * th * th; };
    const double lr = 0.01;
    double theta = 1.0;
    const double g1 = grad(theta);
    theta -= lr * g1;
    theta -= lr * grad(theta);
    const double one_shot = 1.0 - lr * (g1 + g1);  // both gradients taken at the start
    CHECK(theta != one_shot);
}

TEST_CASE("clip: pass-through, rescale, and norm bound") {
    Vec g(2);
    g << 3, 4;
    clip_gradients(refs_of(g), ClipConfig{10.0});
    CHECK(g[0] == 3.0);
    CHECK(g[1] == 4.0);

    clip_gradients(refs_of(g), ClipConfig{1.0});
    CHECK(g[0] == doctest::Approx(0.6));
    CHECK(g[1] == doctest::Approx(0.8));

    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        Vec v(17);
        for (int i = 0; i < 17; ++i) v[i] = rng.normal(0, 10);
        clip_gradients(refs_of(v), ClipConfig{2.5});
        CHECK(v.norm() <= 2.5 + 1e-12);
    }
}

TEST_CASE("ewc: single-term formula and anchor fixed point") {
    EwcState st = make_ewc_state(4.0, 1);
    st.fisher << 0.5;
    st.anchor << 0.0;
    st.tasks_consolidated = 1;
    Vec theta(1);
    theta << 2.0;
    auto [pen, grad] = ewc_penalty_and_grad(theta, st);
    CHECK(pen == doctest::Approx(4.0));
    CHECK(grad[0] == doctest::Approx(4.0));

    auto [pen0, grad0] = ewc_penalty_and_grad(st.anchor, st);
    CHECK(pen0 == 0.0);
    CHECK(grad0[0] == 0.0);

    EwcState fresh = make_ewc_state(4.0, 1);
    auto [penf, gradf] = ewc_penalty_and_grad(theta, fresh);  // never consolidated
    CHECK(penf == 0.0);
    CHECK(gradf[0] == 0.0);
}

TEST_CASE("ewc: penalty gradient matches finite differences") {
    Rng rng(2);
    const int n = 24;
    EwcState st = make_ewc_state(1.7, n);
    for (int i = 0; i < n; ++i) {
        st.fisher[i] = std::abs(rng.normal());
        st.anchor[i] = rng.normal();
    }
    st.tasks_consolidated = 1;
    Vec theta(n);
    for (int i = 0; i < n; ++i) theta[i] = rng.normal();
    auto [pen, grad] = ewc_penalty_and_grad(theta, st);
    (void)pen;
    const double h = 1e-6;
    for (int i = 0; i < n; ++i) {
        Vec tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        const double fd =
            (ewc_penalty_and_grad(tp, st).first - ewc_penalty_and_grad(tm, st).first) / (2 * h);
        CHECK(std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd)) < 1e-8);
    }
}

TEST_CASE("ewc consolidation: additive accumulation and the logistic-toy oracle") {
    // one-feature, two-class ablated model: exactly 2 trainable parameters
    ModelConfig mc;
    mc.n_features = 1;
    mc.n_classes = 2;
    mc.ablate_kc = true;
    mc.seed = 3;
    FlyModel m = make_model(mc);
    m.head.W(0, 0) = 0.7;
    m.head.W(1, 0) = -0.4;

    Dataset data;
    data.n_classes = 2;
    data.features.resize(1, 5);
    data.features << 0.5, -1.0, 2.0, 0.1, -0.7;
    data.labels = {0, 1, 0, 1, 0};

    std::vector<std::uint8_t> allowed{1, 1};
    EwcState st = make_ewc_state(1.0, 2);
    ewc_consolidate(m, data, allowed, st);
    CHECK(st.tasks_consolidated == 1);

    // brute-force per-sample squared gradient of log p(predicted label):
    // logits (w0 x, w1 x); d log p(y) / d w_c = (1[y=c] - p_c) x
    Vec fisher_oracle = Vec::Zero(2);
    for (int s = 0; s < 5; ++s) {
        const double x = data.features(0, s);
        const double l0 = 0.7 * x, l1 = -0.4 * x;
        const int pred = l0 >= l1 ? 0 : 1;
        const double mx = std::max(l0, l1);
        const double z = std::exp(l0 - mx) + std::exp(l1 - mx);
        const double p0 = std::exp(l0 - mx) / z, p1 = std::exp(l1 - mx) / z;
        const double g0 = ((pred == 0 ? 1.0 : 0.0) - p0) * x;
        const double g1 = ((pred == 1 ? 1.0 : 0.0) - p1) * x;
        fisher_oracle[0] += g0 * g0;
        fisher_oracle[1] += g1 * g1;
    }
    fisher_oracle /= 5.0;
    CHECK(st.fisher[0] == doctest::Approx(fisher_oracle[0]).epsilon(1e-12));
    CHECK(st.fisher[1] == doctest::Approx(fisher_oracle[1]).epsilon(1e-12));

    // identical data again: entries double, anchor at current params
    ewc_consolidate(m, data, allowed, st);
    CHECK(st.fisher[0] == doctest::Approx(2 * fisher_oracle[0]).epsilon(1e-12));
    CHECK(st.anchor[0] == 0.7);

    Dataset empty;
    empty.n_classes = 2;
    empty.features.resize(1, 0);
    CHECK_THROWS_AS(ewc_consolidate(m, empty, allowed, st), DataError);
}

TEST_CASE("ewc consolidation: a parameter with zero gradient contributes nothing") {
    // second feature is always zero, so its head column never gets gradient
    ModelConfig mc;
    mc.n_features = 2;
    mc.n_classes = 2;
    mc.ablate_kc = true;
    mc.seed = 4;
    FlyModel m = make_model(mc);
    Dataset data;
    data.n_classes = 2;
    data.features.resize(2, 4);
    data.features << 1.0, -0.5, 0.3, 2.0, 0.0, 0.0, 0.0, 0.0;
    data.labels = {0, 1, 0, 1};
    EwcState st = make_ewc_state(1.0, 4);
    ewc_consolidate(m, data, {1, 1}, st);
    // parameters (0,1) and (1,1) multiply the zero feature
    CHECK(st.fisher[2] == 0.0);
    CHECK(st.fisher[3] == 0.0);
    CHECK(st.fisher[0] > 0.0);
}

TEST_CASE("si: per-step sign convention and consolidation formula") {
    Vec params = Vec::Zero(1);
    SiState st = make_si_state(1.0, 0.01, params);
    Vec g(1), d(1);
    g << 2.0;
    d << -0.1;
    si_accumulate_step(st, g, d);
    CHECK(st.omega_running[0] == doctest::Approx(0.2));

    si_accumulate_step(st, g, Vec::Zero(1));
    CHECK(st.omega_running[0] == doctest::Approx(0.2));

    // omega=0.2, delta=0.1, xi=0.01 -> increment 0.2 / 0.02 = 10
    Vec end(1);
    end << 0.1;
    si_consolidate(st, end);
    CHECK(st.Omega[0] == doctest::Approx(10.0));
    CHECK(st.omega_running[0] == 0.0);
    CHECK(st.anchor[0] == 0.1);

    // negative omega clamps to zero
    SiState neg = make_si_state(1.0, 0.01, Vec::Zero(1));
    si_accumulate_step(neg, g, (Vec(1) << 0.05).finished());  // ascent motion
    CHECK(neg.omega_running[0] < 0.0);
    si_consolidate(neg, (Vec(1) << 0.05).finished());
    CHECK(neg.Omega[0] == 0.0);

    // zero displacement stays finite through the damping
    SiState still = make_si_state(1.0, 0.01, Vec::Zero(1));
    si_accumulate_step(still, (Vec(1) << -3.0).finished(), (Vec(1) << 0.0).finished());
    still.omega_running[0] = 0.2;
    si_consolidate(still, Vec::Zero(1));
    CHECK(still.Omega[0] == doctest::Approx(20.0));
}

TEST_CASE("si: path integral approximates the loss decrease on a quadratic") {
    // L(theta) = 0.5 theta' H theta
    Mat H(3, 3);
    H << 2.0, 0.2, 0.0, 0.2, 1.5, 0.1, 0.0, 0.1, 1.0;
    Vec theta(3);
    theta << 1.0, -2.0, 0.5;
    const double l_start = 0.5 * theta.dot(H * theta);
    SiState st = make_si_state(1.0, 1e-3, theta);
    const double lr = 1e-3;
    for (int step = 0; step < 2000; ++step) {
        const Vec g = H * theta;
        const Vec before = theta;
        theta -= lr * g;
        si_accumulate_step(st, g, theta - before);
    }
    const double l_end = 0.5 * theta.dot(H * theta);
    const double drop = l_start - l_end;
    const double integral = st.omega_running.sum();
    CHECK(std::abs(integral - drop) / drop < 1e-3);
}

TEST_CASE("si penalty: formula, off switch, finite differences") {
    SiState st = make_si_state(1.0, 1e-3, Vec::Zero(1));
    st.Omega << 3.0;
    st.anchor << 1.0;
    Vec theta(1);
    theta << 2.0;
    auto [pen, grad] = si_penalty_and_grad(theta, st);
    CHECK(pen == doctest::Approx(3.0));
    CHECK(grad[0] == doctest::Approx(6.0));

    st.c = 0.0;
    auto [pen0, grad0] = si_penalty_and_grad(theta, st);
    CHECK(pen0 == 0.0);
    CHECK(grad0[0] == 0.0);

    Rng rng(5);
    const int n = 16;
    SiState big = make_si_state(0.8, 1e-3, Vec::Zero(n));
    for (int i = 0; i < n; ++i) {
        big.Omega[i] = std::abs(rng.normal());
        big.anchor[i] = rng.normal();
    }
    Vec th(n);
    for (int i = 0; i < n; ++i) th[i] = rng.normal();
    auto [p1, g1] = si_penalty_and_grad(th, big);
    (void)p1;
    const double h = 1e-6;
    for (int i = 0; i < n; ++i) {
        Vec tp = th, tm = th;
        tp[i] += h;
        tm[i] -= h;
        const double fd = (si_penalty_and_grad(tp, big).first - si_penalty_and_grad(tm, big).first) / (2 * h);
        CHECK(std::abs(g1[i] - fd) / std::max(1.0, std::abs(fd)) < 1e-8);
    }
}

TEST_CASE("l2 init: formula, fixed point, finite differences") {
    L2InitState st;
    st.alpha = 0.5;
    st.theta0 = Vec::Zero(2);
    Vec theta(2);
    theta << 1, 2;
    auto [pen, grad] = l2init_penalty_and_grad(theta, st);
    CHECK(pen == doctest::Approx(2.5));
    CHECK(grad[0] == doctest::Approx(1.0));
    CHECK(grad[1] == doctest::Approx(2.0));

    auto [pen0, grad0] = l2init_penalty_and_grad(st.theta0, st);
    CHECK(pen0 == 0.0);
    CHECK(grad0.cwiseAbs().maxCoeff() == 0.0);

    Rng rng(6);
    const int n = 12;
    L2InitState big;
    big.alpha = 0.3;
    big.theta0 = Vec(n);
    Vec th(n);
    for (int i = 0; i < n; ++i) {
        big.theta0[i] = rng.normal();
        th[i] = rng.normal();
    }
    auto [p1, g1] = l2init_penalty_and_grad(th, big);
    (void)p1;
    const double h = 1e-6;
    for (int i = 0; i < n; ++i) {
        Vec tp = th, tm = th;
        tp[i] += h;
        tm[i] -= h;
        const double fd =
            (l2init_penalty_and_grad(tp, big).first - l2init_penalty_and_grad(tm, big).first) / (2 * h);
        CHECK(std::abs(g1[i] - fd) / std::max(1.0, std::abs(fd)) < 1e-8);
    }
}

TEST_CASE("shrink and perturb: blend, identity, full reset") {
    ShrinkPerturbConfig cfg;
    cfg.w0 = (Vec(1) << 0.5).finished();

    Vec w(1);
    w << 1.0;
    cfg.shrink = 0.1;
    cfg.perturb = 0.2;
    shrink_perturb_apply(refs_of(w), cfg);
    CHECK(w[0] == doctest::Approx(1.0));  // 0.9 + 0.1

    cfg.shrink = 0.0;
    cfg.perturb = 0.0;
    w << 0.73;
    shrink_perturb_apply(refs_of(w), cfg);
    CHECK(w[0] == 0.73);

    cfg.shrink = 1.0;
    cfg.perturb = 1.0;
    shrink_perturb_apply(refs_of(w), cfg);
    CHECK(w[0] == 0.5);
}

TEST_CASE("cbp: utility decay formula") {
    // eta 0.9, u 1.0, |h| 2, sum|w| 3 -> 0.9 + 0.1*6 = 1.5
    ModelConfig mc;
    mc.n_features = 2;
    mc.pre = {{1, Activation::Identity}};
    mc.n_classes = 2;
    mc.ablate_kc = true;
    mc.seed = 7;
    FlyModel m = make_model(mc);
    m.pre[0].W << 0.0, 0.0;  // force the hidden activation via bias
    m.pre[0].b << 2.0;       // |h| = 2 for any input
    m.head.W << 1.0, -2.0;   // sum |w_out| = 3

    CbpState st = make_cbp_state(m, 0.9, 0.0, 1000000);
    st.layers[0].utilities[0] = 1.0;

    Mat X = Mat::Zero(2, 4);
    const BatchTrace trace = forward_batch(m, X);
    Rng rng(8);
    cbp_step(m, trace, st, rng);
    CHECK(st.layers[0].utilities[0] == doctest::Approx(1.5));
    CHECK(m.pre[0].b[0] == 2.0);  // replacement rate 0: weights untouched
}

TEST_CASE("cbp: forced reinit zeroes the outgoing column and resets age") {
    ModelConfig mc;
    mc.n_features = 3;
    mc.pre = {{4, Activation::Relu}, {3, Activation::Relu}};
    mc.n_classes = 2;
    mc.ablate_kc = true;
    mc.seed = 9;
    FlyModel m = make_model(mc);
    CbpState st = make_cbp_state(m, 0.9, 1.0, 0);  // replace everything eligible immediately

    Mat X = Mat::Ones(3, 2);
    const BatchTrace trace = forward_batch(m, X);
    Rng rng(10);
    cbp_step(m, trace, st, rng);

    bool some_zero_col = false;
    for (int i = 0; i < 4; ++i) {
        if (m.pre[1].W.col(i).cwiseAbs().maxCoeff() == 0.0) {
            some_zero_col = true;
            CHECK(st.layers[0].ages[i] == 0);
            CHECK(st.layers[0].utilities[i] == 0.0);
        }
    }
    CHECK(some_zero_col);
}

TEST_CASE("cbp: requires hidden neurons") {
    ModelConfig mc;
    mc.n_features = 4;
    mc.n_kc = 10;
    mc.degree = 2;
    mc.coding_level = 0.2;
    mc.n_classes = 2;
    mc.seed = 11;
    FlyModel m = make_model(mc);
    CHECK_THROWS_AS(make_cbp_state(m, 0.9, 0.1, 10), NotApplicableError);
}

TEST_CASE("fisher and importance accumulators never decrease") {
    ModelConfig mc;
    mc.n_features = 3;
    mc.n_classes = 2;
    mc.ablate_kc = true;
    mc.seed = 12;
    FlyModel m = make_model(mc);
    Dataset data;
    data.n_classes = 2;
    data.features.resize(3, 6);
    Rng rng(13);
    for (int s = 0; s < 6; ++s)
        for (int i = 0; i < 3; ++i) data.features(i, s) = rng.normal();
    data.labels = {0, 1, 0, 1, 1, 0};

    EwcState ewc = make_ewc_state(1.0, trainable_count(m));
    Vec prev = ewc.fisher;
    for (int round = 0; round < 3; ++round) {
        ewc_consolidate(m, data, {1, 1}, ewc);
        for (int i = 0; i < ewc.fisher.size(); ++i) CHECK(ewc.fisher[i] >= prev[i]);
        prev = ewc.fisher;
        m.head.W(0, 0) += 0.05;  // drift between consolidations
    }

    auto params = trainable_params(m);
    SiState si = make_si_state(0.5, 1e-3, flatten(params));
    Vec omega_prev = si.Omega;
    for (int round = 0; round < 3; ++round) {
        si.omega_running.setConstant(round % 2 == 0 ? 0.3 : -0.2);
        Vec end = flatten(params);
        end[0] += 0.01 * (round + 1);
        si_consolidate(si, end);
        for (int i = 0; i < si.Omega.size(); ++i) CHECK(si.Omega[i] >= omega_prev[i]);
        omega_prev = si.Omega;
    }
}
