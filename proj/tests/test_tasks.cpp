#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "flycl/io.hpp"
#include "flycl/tasks.hpp"

using namespace flycl;
namespace fs = std::filesystem;

TEST_CASE("odor generation: zero noise pins samples to their prototypes") {
    OdorConfig cfg;
    cfg.noise_sigma = 0.0;
    cfg.train_per_class = 3;
    cfg.test_per_class = 2;
    cfg.seed = 1;
    const auto d = gen_odor_dataset(cfg);
    for (int s = 0; s < d.train.size(); ++s)
        CHECK((d.train.features.col(s) - d.prototypes.col(d.train.labels[s])).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("odor generation: default shapes match the standard recipe") {
    OdorConfig cfg;
    cfg.seed = 2;
    const auto d = gen_odor_dataset(cfg);
    CHECK(d.train.size() == 50000);
    CHECK(d.test.size() == 10000);
    CHECK(d.train.dim() == 50);
    CHECK(d.train.n_classes == 10);
    // balanced class counts
    std::vector<int> count(10, 0);
    for (auto y : d.train.labels) count[y]++;
    for (int c = 0; c < 10; ++c) CHECK(count[c] == 5000);
}

TEST_CASE("odor generation: class means converge to the prototypes") {
    OdorConfig cfg;
    cfg.train_per_class = 5000;
    cfg.test_per_class = 10;
    cfg.seed = 3;
    const auto d = gen_odor_dataset(cfg);
    const double tol = 3.0 * cfg.noise_sigma / std::sqrt(5000.0);
    Mat sums = Mat::Zero(50, 10);
    for (int s = 0; s < d.train.size(); ++s) sums.col(d.train.labels[s]) += d.train.features.col(s);
    sums /= 5000.0;
    int violations = 0;
    for (int c = 0; c < 10; ++c)
        for (int i = 0; i < 50; ++i)
            if (std::abs(sums(i, c) - d.prototypes(i, c)) > tol) ++violations;
    // 3-sigma bound: ~0.27% expected violations over 500 dims
    CHECK(violations <= 5);
}

TEST_CASE("odor generation: deterministic per seed, train/test draws differ") {
    OdorConfig cfg;
    cfg.train_per_class = 10;
    cfg.test_per_class = 10;
    cfg.seed = 4;
    const auto a = gen_odor_dataset(cfg);
    const auto b = gen_odor_dataset(cfg);
    CHECK(a.train.features == b.train.features);
    CHECK(a.test.features == b.test.features);
    CHECK(a.train.features != a.test.features);
}

TEST_CASE("split: partition property and determinism") {
    OdorConfig cfg;
    cfg.train_per_class = 4;
    cfg.test_per_class = 2;
    cfg.seed = 5;
    const auto d = gen_odor_dataset(cfg);
    const auto stream = split_cil(d.train, d.test, 2, 7, ClassOrder::Natural);
    CHECK(stream.tasks.size() == 5);

    std::set<int> all;
    for (const auto& t : stream.tasks) {
        for (int c : t.classes) {
            CHECK(all.count(c) == 0);  // pairwise disjoint
            all.insert(c);
        }
        for (auto y : t.train.labels)
            CHECK(std::find(t.classes.begin(), t.classes.end(), y) != t.classes.end());
    }
    CHECK(all.size() == 10);

    const auto again = split_cil(d.train, d.test, 2, 7, ClassOrder::Natural);
    CHECK(again.tasks[3].classes == stream.tasks[3].classes);
    const auto rnd1 = split_cil(d.train, d.test, 2, 7, ClassOrder::Random);
    const auto rnd2 = split_cil(d.train, d.test, 2, 7, ClassOrder::Random);
    CHECK(rnd1.tasks[0].classes == rnd2.tasks[0].classes);

    CHECK_THROWS_AS(split_cil(d.train, d.test, 3, 7, ClassOrder::Natural), SplitError);
}

TEST_CASE("permutations: bijections, deterministic, identity first") {
    PermutationSpec spec;
    spec.seed = 11;
    const auto p0 = permutation_for(spec, 0, 100);
    for (int i = 0; i < 100; ++i) CHECK(p0[i] == i);

    const auto p3 = permutation_for(spec, 3, 100);
    std::set<int> seen(p3.begin(), p3.end());
    CHECK(seen.size() == 100);
    CHECK(p3 == permutation_for(spec, 3, 100));
    CHECK(p3 != permutation_for(spec, 4, 100));
}

namespace {

Dataset tiny_base(int dim, int n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.n_classes = 4;
    d.features.resize(dim, n);
    d.labels.resize(n);
    for (int s = 0; s < n; ++s) {
        for (int i = 0; i < dim; ++i) d.features(i, s) = rng.uniform01();
        d.labels[s] = s % 4;
    }
    return d;
}

std::multiset<double> column_multiset(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_CASE("permuted stream: pixel multisets and label histograms are preserved") {
    const Dataset base = tiny_base(12, 40, 21);
    PermutationSpec spec;
    spec.seed = 22;
    spec.mode = PermuteMode::Input;
    const auto stream = make_permuted_stream(base, spec, 3, 40);
    CHECK(stream.protocol == Protocol::Streaming);
    CHECK(stream.epochs_per_task == 1);

    // task 0 uses the identity: its columns are base columns
    std::set<std::multiset<double>> base_cols;
    for (int s = 0; s < base.size(); ++s) base_cols.insert(column_multiset(base.features.col(s)));
    for (int s = 0; s < stream.tasks[0].train.size(); ++s)
        CHECK(base_cols.count(column_multiset(stream.tasks[0].train.features.col(s))) == 1);

    // later tasks keep per-sample value multisets
    for (int s = 0; s < stream.tasks[2].train.size(); ++s)
        CHECK(base_cols.count(column_multiset(stream.tasks[2].train.features.col(s))) == 1);

    PermutationSpec lspec;
    lspec.seed = 23;
    lspec.mode = PermuteMode::Label;
    const auto lstream = make_permuted_stream(base, lspec, 3, 40);
    std::multiset<int> base_hist(base.labels.begin(), base.labels.end());
    for (const auto& t : lstream.tasks) {
        std::multiset<int> hist(t.train.labels.begin(), t.train.labels.end());
        CHECK(hist == base_hist);
    }
}

TEST_CASE("permutation round trip restores the dataset") {
    const Dataset base = tiny_base(9, 10, 31);
    PermutationSpec spec;
    spec.seed = 32;
    const auto perm = permutation_for(spec, 2, 9);
    Mat permuted(9, base.size());
    for (int d = 0; d < 9; ++d) permuted.row(perm[d]) = base.features.row(d);
    Mat restored(9, base.size());
    for (int d = 0; d < 9; ++d) restored.row(d) = permuted.row(perm[d]);
    CHECK(restored == base.features);
}

TEST_CASE("imbalance: ratio and ordering") {
    Rng rng(41);
    Dataset d;
    d.n_classes = 10;
    const int per = 500;
    d.features.resize(3, per * 10);
    d.labels.resize(per * 10);
    for (int s = 0; s < per * 10; ++s) {
        d.labels[s] = s / per;
        for (int i = 0; i < 3; ++i) d.features(i, s) = rng.normal();
    }
    std::vector<int> order(10);
    std::iota(order.begin(), order.end(), 0);

    ImbalanceSpec spec;
    spec.gamma = 10.0;
    spec.n_max = 500;
    const auto out = apply_imbalance(d, spec, order);
    std::vector<int> count(10, 0);
    for (auto y : out.labels) count[y]++;
    CHECK(count[0] == 500);
    CHECK(count[9] == 50);
    for (int c = 0; c + 1 < 10; ++c) CHECK(count[c] >= count[c + 1]);  // descending along the order
    CHECK(static_cast<double>(count[0]) / count[9] == doctest::Approx(10.0));

    spec.order = ImbalanceOrder::Reverse;
    const auto rev = apply_imbalance(d, spec, order);
    std::vector<int> rcount(10, 0);
    for (auto y : rev.labels) rcount[y]++;
    CHECK(rcount[0] == 50);
    CHECK(rcount[9] == 500);

    spec.order = ImbalanceOrder::Normal;
    spec.gamma = 1.0;
    const auto flat = apply_imbalance(d, spec, order);
    std::vector<int> fcount(10, 0);
    for (auto y : flat.labels) fcount[y]++;
    for (int c = 0; c < 10; ++c) CHECK(fcount[c] == 500);
}

TEST_CASE("imbalance: three-class worked example and the insufficient-data error") {
    Rng rng(42);
    Dataset d;
    d.n_classes = 3;
    d.features.resize(2, 1200);
    d.labels.resize(1200);
    for (int s = 0; s < 1200; ++s) {
        d.labels[s] = s % 3;
        d.features(0, s) = rng.normal();
        d.features(1, s) = rng.normal();
    }
    ImbalanceSpec spec;
    spec.gamma = 4.0;
    spec.n_max = 400;
    const auto out = apply_imbalance(d, spec, {0, 1, 2});
    std::vector<int> count(3, 0);
    for (auto y : out.labels) count[y]++;
    CHECK(count[0] == 400);
    CHECK(count[1] == 200);
    CHECK(count[2] == 100);

    spec.n_max = 4000;
    CHECK_THROWS_AS(apply_imbalance(d, spec, {0, 1, 2}), DataError);
}

TEST_CASE("flyf: round trip, truncation, label range") {
    const auto dir = fs::temp_directory_path() / "flycl_tasks";
    fs::create_directories(dir);
    Dataset d = tiny_base(5, 12, 51);
    // pass values through f32 so equality after the round trip is exact
    for (int s = 0; s < d.size(); ++s)
        for (int i = 0; i < d.dim(); ++i) d.features(i, s) = static_cast<float>(d.features(i, s));

    save_feature_file(dir / "t.flyf", d);
    const auto r = load_feature_file(dir / "t.flyf");
    CHECK(r.features == d.features);
    CHECK(r.labels == d.labels);
    CHECK(r.n_classes == d.n_classes);

    auto bytes = read_file_bytes(dir / "t.flyf");
    bytes.resize(bytes.size() - 7);
    atomic_write_file(dir / "trunc.flyf", bytes);
    CHECK_THROWS_AS(load_feature_file(dir / "trunc.flyf"), FormatError);

    // corrupt one label beyond the class count; the offset is reported
    bytes = read_file_bytes(dir / "t.flyf");
    const std::size_t label0_at = bytes.size() - 12 * 4;
    bytes[label0_at] = 99;
    atomic_write_file(dir / "badlabel.flyf", bytes);
    try {
        load_feature_file(dir / "badlabel.flyf");
        CHECK(false);
    } catch (const FormatError& e) {
        CHECK(e.offset == label0_at);
    }

    bytes = read_file_bytes(dir / "t.flyf");
    bytes[0] = 'X';
    atomic_write_file(dir / "badmagic.flyf", bytes);
    CHECK_THROWS_AS(load_feature_file(dir / "badmagic.flyf"), FormatError);
}

namespace {

void write_be32(std::ofstream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                 static_cast<char>(v)};
    out.write(b, 4);
}

void write_tiny_idx(const fs::path& images, const fs::path& labels, int n, int rows, int cols,
                    bool mismatch = false) {
    std::ofstream img(images, std::ios::binary);
    write_be32(img, 0x00000803);
    write_be32(img, n);
    write_be32(img, rows);
    write_be32(img, cols);
    for (int s = 0; s < n; ++s)
        for (int p = 0; p < rows * cols; ++p) img.put(static_cast<char>((s * 37 + p * 11) % 256));

    std::ofstream lab(labels, std::ios::binary);
    write_be32(lab, 0x00000801);
    write_be32(lab, mismatch ? n + 1 : n);
    for (int s = 0; s < (mismatch ? n + 1 : n); ++s) lab.put(static_cast<char>(s % 10));
}

}  // namespace

TEST_CASE("idx: header arithmetic, scaling, count mismatch") {
    const auto dir = fs::temp_directory_path() / "flycl_idx";
    fs::create_directories(dir);
    write_tiny_idx(dir / "img", dir / "lab", 6, 4, 7);
    const auto d = load_idx(dir / "img", dir / "lab");
    CHECK(d.size() == 6);
    CHECK(d.dim() == 28);
    CHECK(d.labels[3] == 3);
    // byte 0 -> 0.0; byte 255 -> 1.0
    bool saw_zero = false;
    for (int s = 0; s < d.size(); ++s)
        for (int i = 0; i < d.dim(); ++i) {
            CHECK(d.features(i, s) >= 0.0);
            CHECK(d.features(i, s) <= 1.0);
            if (d.features(i, s) == 0.0) saw_zero = true;
        }
    CHECK(saw_zero);

    write_tiny_idx(dir / "img2", dir / "lab2", 6, 4, 7, true);
    CHECK_THROWS_AS(load_idx(dir / "img2", dir / "lab2"), FormatError);

    // wrong magic
    {
        std::ofstream img(dir / "img3", std::ios::binary);
        write_be32(img, 0x00000802);
    }
    CHECK_THROWS_AS(load_idx(dir / "img3", dir / "lab"), FormatError);
}

TEST_CASE("synthetic image stand-in: shapes, range, determinism") {
    const auto a = gen_synthetic_mnist(200, 61);
    CHECK(a.size() == 200);
    CHECK(a.dim() == 784);
    CHECK(a.n_classes == 10);
    CHECK(a.features.minCoeff() >= 0.0);
    CHECK(a.features.maxCoeff() <= 1.0);
    const auto b = gen_synthetic_mnist(200, 61);
    CHECK(a.features == b.features);
}
