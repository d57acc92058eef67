#include <doctest.h>

#include <cmath>

#include "flycl/metrics.hpp"
#include "flycl/rng.hpp"

using namespace flycl;

namespace {

MetricsLedger ledger_from(const std::vector<std::vector<double>>& acc) {
    MetricsLedger l;
    l.acc = acc;
    l.n_tasks = static_cast<int>(acc.size());
    return l;
}

}  // namespace

TEST_CASE("average accuracy") {
    const auto l = ledger_from({{0.5}, {0.6, 0.7}, {0.7, 0.85, 0.95}});
    CHECK(average_accuracy(l, 3) == doctest::Approx(0.83333333333));
    CHECK(average_accuracy(l, 1) == 0.5);
    const auto ones = ledger_from({{1.0}, {1.0, 1.0}});
    CHECK(average_accuracy(ones, 2) == 1.0);
    CHECK_THROWS_AS(average_accuracy(l, 4), DataError);
}

TEST_CASE("accumulated accuracy") {
    const auto l = ledger_from({{0.9}, {0.7, 0.9}});  // A_1 = 0.9, A_2 = 0.8
    CHECK(accumulated_accuracy(l, 2) == doctest::Approx(0.85));
    const auto flat = ledger_from({{0.6}, {0.6, 0.6}, {0.6, 0.6, 0.6}});
    CHECK(accumulated_accuracy(flat, 3) == doctest::Approx(0.6));
    // bounded by the extremes of the stage averages
    const double a1 = average_accuracy(l, 1), a2 = average_accuracy(l, 2);
    const double acc = accumulated_accuracy(l, 2);
    CHECK(acc >= std::min(a1, a2));
    CHECK(acc <= std::max(a1, a2));
}

TEST_CASE("backward transfer") {
    const auto l = ledger_from({{0.9}, {0.8, 0.9}, {0.7, 0.85, 0.95}});
    CHECK(backward_transfer(l, 3) == doctest::Approx(-0.125));
    const auto frozen = ledger_from({{0.9}, {0.9, 0.8}, {0.9, 0.8, 0.7}});
    CHECK(backward_transfer(frozen, 3) == 0.0);
    CHECK_THROWS_AS(backward_transfer(l, 1), MetricError);
    CHECK(backward_transfer(l, 2) >= -1.0);
    CHECK(backward_transfer(l, 2) <= 1.0);
}

TEST_CASE("forward transfer") {
    auto l = ledger_from({{0.9}, {0.7, 0.85}, {0.6, 0.8, 0.95}});
    l.scratch_acc = {-1.0, 0.9, 0.92};
    CHECK(forward_transfer(l, 3) == doctest::Approx(((0.85 - 0.9) + (0.95 - 0.92)) / 2.0));
    l.scratch_acc = {-1.0, 0.85, 0.95};  // scratch equal to the diagonal
    CHECK(forward_transfer(l, 3) == doctest::Approx(0.0));
    CHECK_THROWS_AS(forward_transfer(l, 1), MetricError);
    l.scratch_acc = {-1.0, -1.0, 0.95};
    CHECK_THROWS_AS(forward_transfer(l, 3), DataError);
}

TEST_CASE("online accuracy") {
    MetricsLedger l;
    l.batch_acc = {{0.2, 0.4, 0.6}, {0.5}};
    l.n_tasks = 2;
    CHECK(online_accuracy(l, 1) == doctest::Approx(0.4));
    CHECK(online_accuracy(l, 2) == 0.5);
    CHECK_THROWS_AS(online_accuracy(l, 3), DataError);
}

TEST_CASE("dormant units") {
    CHECK(dormant_units(Vec::Zero(5)) == 1.0);
    CHECK(dormant_units(Vec::Ones(5)) == 0.0);
    Vec mixed(4);
    mixed << 0.005, 0.02, 0.0, 5.0;
    CHECK(dormant_units(mixed) == 0.5);
    // lowering the threshold never raises the fraction
    for (double hi : {0.05, 0.01, 0.005, 0.001})
        CHECK(dormant_units(mixed, hi / 2) <= dormant_units(mixed, hi));
}

TEST_CASE("stable rank: threshold mass and invariance to rotations") {
    Mat d = Mat::Zero(3, 3);
    d.diagonal() << 0.97, 0.02, 0.01;
    CHECK(stable_rank(d) == 2);

    Mat eq = Mat::Identity(100, 100);
    CHECK(stable_rank(eq) == 99);

    Mat rank1 = Vec::Ones(6) * Vec::Ones(4).transpose();
    CHECK(stable_rank(rank1) == 1);

    CHECK_THROWS_AS(stable_rank(Mat::Zero(3, 3)), MetricError);

    // random rotations leave singular values unchanged
    Rng rng(5);
    Mat A(8, 8);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) A(i, j) = rng.normal();
    Mat G(8, 8);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) G(i, j) = rng.normal();
    const Mat Q = Eigen::HouseholderQR<Mat>(G).householderQ();
    CHECK(stable_rank(Q * A) == stable_rank(A));
    CHECK(stable_rank(A * Q) == stable_rank(A));
}

TEST_CASE("average weight magnitude") {
    Vec w(2);
    w << -1, 1;
    CHECK(avg_weight_magnitude(w) == 1.0);
    CHECK(avg_weight_magnitude(Vec::Zero(4)) == 0.0);
    Vec v(3);
    v << 0.5, -2.0, 1.0;
    CHECK(avg_weight_magnitude((2.0 * v).eval()) == doctest::Approx(2.0 * avg_weight_magnitude(v)));
}
