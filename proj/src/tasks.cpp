#include "flycl/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flycl/io.hpp"

namespace flycl {

void validate_dataset(const Dataset& d) {
    if (static_cast<int>(d.labels.size()) != d.size()) throw ShapeError("dataset: label count != sample count");
    for (auto y : d.labels)
        if (y < 0 || y >= d.n_classes) throw LabelError("dataset: label outside [0, n_classes)");
}

OdorData gen_odor_dataset(const OdorConfig& cfg) {
    Rng proto_rng(derive_seed(cfg.seed, {seed_tag::kData, 0}));
    Mat prototypes(cfg.n_dims, cfg.n_classes);
    for (int c = 0; c < cfg.n_classes; ++c)
        for (int d = 0; d < cfg.n_dims; ++d) prototypes(d, c) = proto_rng.uniform01();

    auto draw = [&](int per_class, std::uint64_t tag) {
        Rng rng(derive_seed(cfg.seed, {seed_tag::kData, tag}));
        Dataset out;
        out.n_classes = cfg.n_classes;
        out.features.resize(cfg.n_dims, per_class * cfg.n_classes);
        out.labels.resize(static_cast<std::size_t>(per_class) * cfg.n_classes);
        int s = 0;
        for (int c = 0; c < cfg.n_classes; ++c) {
            for (int i = 0; i < per_class; ++i, ++s) {
                for (int d = 0; d < cfg.n_dims; ++d)
                    out.features(d, s) = prototypes(d, c) + rng.normal(0.0, cfg.noise_sigma);
                out.labels[s] = c;
            }
        }
        return out;
    };

    OdorData data;
    data.prototypes = prototypes;
    data.train = draw(cfg.train_per_class, 1);
    data.test = draw(cfg.test_per_class, 2);
    return data;
}

namespace {

Dataset subset(const Dataset& d, const std::vector<int>& idx) {
    Dataset out;
    out.n_classes = d.n_classes;
    out.features.resize(d.dim(), static_cast<int>(idx.size()));
    out.labels.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.features.col(static_cast<int>(i)) = d.features.col(idx[i]);
        out.labels[i] = d.labels[idx[i]];
    }
    return out;
}

}  // namespace

TaskStream split_cil(const Dataset& train, const Dataset& test, int classes_per_task, std::uint64_t seed,
                     ClassOrder order) {
    const int C = train.n_classes;
    if (classes_per_task < 1 || C % classes_per_task != 0)
        throw SplitError("class count " + std::to_string(C) + " is not divisible by " +
                         std::to_string(classes_per_task));
    std::vector<int> class_order(C);
    std::iota(class_order.begin(), class_order.end(), 0);
    if (order == ClassOrder::Random) {
        Rng rng(derive_seed(seed, {seed_tag::kShuffle, 0xC1A55}));
        rng.shuffle(class_order);
    }

    TaskStream stream;
    stream.protocol = Protocol::ClassIncremental;
    stream.n_classes = C;
    const int T = C / classes_per_task;
    for (int t = 0; t < T; ++t) {
        Task task;
        task.classes.assign(class_order.begin() + t * classes_per_task,
                            class_order.begin() + (t + 1) * classes_per_task);
        std::sort(task.classes.begin(), task.classes.end());
        auto pick = [&](const Dataset& d) {
            std::vector<int> idx;
            for (int s = 0; s < d.size(); ++s)
                if (std::find(task.classes.begin(), task.classes.end(), d.labels[s]) != task.classes.end())
                    idx.push_back(s);
            return subset(d, idx);
        };
        task.train = pick(train);
        task.test = pick(test);
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

std::vector<int> permutation_for(const PermutationSpec& spec, int task, int n) {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    if (task == 0 && spec.identity_first) return perm;
    Rng rng(derive_seed(spec.seed, {seed_tag::kPermutation, static_cast<std::uint64_t>(task)}));
    rng.shuffle(perm);
    return perm;
}

TaskStream make_permuted_stream(const Dataset& base, const PermutationSpec& spec, int n_tasks,
                                int samples_per_task) {
    validate_dataset(base);
    if (base.size() == 0) throw DataError("permuted stream: empty base dataset");

    TaskStream stream;
    stream.protocol = Protocol::Streaming;
    stream.n_classes = base.n_classes;
    stream.epochs_per_task = 1;

    std::vector<int> all_classes(base.n_classes);
    std::iota(all_classes.begin(), all_classes.end(), 0);

    for (int t = 0; t < n_tasks; ++t) {
        Rng rng(derive_seed(spec.seed, {seed_tag::kTaskSample, static_cast<std::uint64_t>(t)}));
        std::vector<int> idx(samples_per_task);
        if (base.size() >= samples_per_task) {
            // sample the quota without replacement
            std::vector<int> pool(base.size());
            std::iota(pool.begin(), pool.end(), 0);
            rng.shuffle(pool);
            std::copy(pool.begin(), pool.begin() + samples_per_task, idx.begin());
        } else {
            for (auto& i : idx) i = static_cast<int>(rng.below(static_cast<std::uint64_t>(base.size())));
        }

        Task task;
        task.classes = all_classes;
        task.train = subset(base, idx);
        if (spec.mode == PermuteMode::Input) {
            const auto perm = permutation_for(spec, t, base.dim());
            Mat permuted(task.train.dim(), task.train.size());
            for (int d = 0; d < task.train.dim(); ++d) permuted.row(perm[d]) = task.train.features.row(d);
            task.train.features = std::move(permuted);
        } else {
            const auto perm = permutation_for(spec, t, base.n_classes);
            for (auto& y : task.train.labels) y = perm[y];
        }
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

Dataset apply_imbalance(const Dataset& data, const ImbalanceSpec& spec, const std::vector<int>& class_order) {
    if (!(spec.gamma >= 1.0)) throw ConfigError("imbalance gamma must be >= 1");
    const int C = static_cast<int>(class_order.size());
    if (C < 1) throw ConfigError("imbalance: empty class order");

    std::vector<std::vector<int>> by_class(data.n_classes);
    for (int s = 0; s < data.size(); ++s) by_class[data.labels[s]].push_back(s);

    int n_max = spec.n_max;
    if (n_max <= 0) {
        n_max = data.size();
        for (int c : class_order) n_max = std::min<int>(n_max, static_cast<int>(by_class[c].size()));
    }

    // size at position k of the learning order, k = 0..C-1
    std::vector<int> sizes(C);
    for (int k = 0; k < C; ++k) {
        const double expo = (C == 1) ? 0.0 : -static_cast<double>(k) / static_cast<double>(C - 1);
        sizes[k] = static_cast<int>(std::lround(n_max * std::pow(spec.gamma, expo)));
        sizes[k] = std::max(sizes[k], 1);
    }
    if (spec.order == ImbalanceOrder::Reverse) {
        std::reverse(sizes.begin(), sizes.end());
    } else if (spec.order == ImbalanceOrder::Random) {
        Rng rng(derive_seed(spec.seed, {seed_tag::kImbalance}));
        rng.shuffle(sizes);
    }

    std::vector<int> keep;
    for (int k = 0; k < C; ++k) {
        const int cls = class_order[k];
        const auto& pool = by_class[cls];
        if (static_cast<int>(pool.size()) < sizes[k])
            throw DataError("imbalance: class " + std::to_string(cls) + " has " + std::to_string(pool.size()) +
                            " samples, needs " + std::to_string(sizes[k]));
        keep.insert(keep.end(), pool.begin(), pool.begin() + sizes[k]);
    }
    std::sort(keep.begin(), keep.end());
    return subset(data, keep);
}

// --- FLYF ---

namespace {
constexpr std::uint16_t kFlyfVersion = 1;
}

Dataset load_feature_file(const std::filesystem::path& path) {
    BinReader r(read_file_bytes(path));
    r.expect_magic("FLYF");
    const auto version = r.u16();
    if (version != kFlyfVersion) throw FormatError("unsupported FLYF version", 4);
    const auto n_rows = r.u32();
    const auto n_cols = r.u32();
    const auto n_classes = r.u32();
    if (n_cols == 0 || n_classes == 0) throw FormatError("FLYF: zero dimension", 6);

    Dataset d;
    d.n_classes = static_cast<int>(n_classes);
    d.features.resize(n_cols, n_rows);
    for (std::uint32_t i = 0; i < n_rows; ++i)
        for (std::uint32_t j = 0; j < n_cols; ++j) d.features(j, i) = static_cast<double>(r.f32());
    d.labels.resize(n_rows);
    for (std::uint32_t i = 0; i < n_rows; ++i) {
        const std::size_t at = r.pos();
        const auto y = r.u32();
        if (y >= n_classes) throw FormatError("FLYF: label " + std::to_string(y) + " >= class count", at);
        d.labels[i] = static_cast<std::int32_t>(y);
    }
    if (!r.eof()) throw FormatError("FLYF: trailing bytes", r.pos());
    return d;
}

void save_feature_file(const std::filesystem::path& path, const Dataset& data) {
    validate_dataset(data);
    BinWriter w;
    w.magic("FLYF");
    w.u16(kFlyfVersion);
    w.u32(static_cast<std::uint32_t>(data.size()));
    w.u32(static_cast<std::uint32_t>(data.dim()));
    w.u32(static_cast<std::uint32_t>(data.n_classes));
    for (int i = 0; i < data.size(); ++i)
        for (int j = 0; j < data.dim(); ++j) w.f32(static_cast<float>(data.features(j, i)));
    for (auto y : data.labels) w.u32(static_cast<std::uint32_t>(y));
    atomic_write_file(path, w.bytes());
}

// --- IDX ---

namespace {

std::uint32_t read_be32(BinReader& r) {
    const std::size_t at = r.pos();
    std::uint8_t b[4];
    r.raw(b, 4);
    (void)at;
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    BinReader ir(read_file_bytes(images_path));
    if (read_be32(ir) != 0x00000803u) throw FormatError("IDX images: bad magic", 0);
    const auto n = read_be32(ir);
    const auto rows = read_be32(ir);
    const auto cols = read_be32(ir);
    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    if (dim == 0) throw FormatError("IDX images: zero image size", 8);

    BinReader lr(read_file_bytes(labels_path));
    if (read_be32(lr) != 0x00000801u) throw FormatError("IDX labels: bad magic", 0);
    const auto n_labels = read_be32(lr);
    if (n_labels != n)
        throw FormatError("IDX: image count " + std::to_string(n) + " != label count " + std::to_string(n_labels),
                          4);

    Dataset d;
    d.features.resize(static_cast<int>(dim), static_cast<int>(n));
    d.labels.resize(n);
    std::vector<std::uint8_t> pix(dim);
    for (std::uint32_t s = 0; s < n; ++s) {
        ir.raw(pix.data(), dim);
        for (std::size_t j = 0; j < dim; ++j) d.features(static_cast<int>(j), s) = pix[j] / 255.0;
    }
    int max_label = 0;
    for (std::uint32_t s = 0; s < n; ++s) {
        const auto y = lr.u8();
        d.labels[s] = y;
        max_label = std::max<int>(max_label, y);
    }
    d.n_classes = max_label + 1;
    if (d.n_classes < 10 && n > 0) d.n_classes = 10;  // MNIST label space even if a subset is loaded
    return d;
}

Dataset gen_synthetic_mnist(int n_samples, std::uint64_t seed, int n_modes_per_class, double noise_sigma) {
    constexpr int kDim = 784;
    constexpr int kClasses = 10;
    Rng rng(derive_seed(seed, {seed_tag::kData, 0x5EED}));

    // multimodal prototypes so a linear readout of raw pixels is not enough
    std::vector<Mat> modes(kClasses);
    for (int c = 0; c < kClasses; ++c) {
        modes[c].resize(kDim, n_modes_per_class);
        for (int m = 0; m < n_modes_per_class; ++m)
            for (int d = 0; d < kDim; ++d) modes[c](d, m) = rng.uniform01();
    }

    Dataset out;
    out.n_classes = kClasses;
    out.features.resize(kDim, n_samples);
    out.labels.resize(n_samples);
    for (int s = 0; s < n_samples; ++s) {
        const int c = s % kClasses;
        const int m = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_modes_per_class)));
        for (int d = 0; d < kDim; ++d) {
            const double v = modes[c](d, m) + rng.normal(0.0, noise_sigma);
            out.features(d, s) = std::clamp(v, 0.0, 1.0);
        }
        out.labels[s] = c;
    }
    return out;
}

}  // namespace flycl
