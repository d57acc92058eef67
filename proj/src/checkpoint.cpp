#include "flycl/checkpoint.hpp"

#include "flycl/io.hpp"

namespace flycl {

namespace {

void write_model_block(BinWriter& w, const FlyModel& m) {
    const auto& cfg = m.config;
    w.u32(static_cast<std::uint32_t>(cfg.n_features));
    w.u32(static_cast<std::uint32_t>(cfg.pre.size()));
    for (const auto& p : cfg.pre) {
        w.u32(static_cast<std::uint32_t>(p.width));
        w.u8(static_cast<std::uint8_t>(p.act));
    }
    w.u32(static_cast<std::uint32_t>(cfg.n_kc));
    w.u32(static_cast<std::uint32_t>(cfg.degree));
    w.f64(cfg.coding_level);
    w.u32(static_cast<std::uint32_t>(cfg.n_classes));
    w.u8(cfg.ablate_kc ? 1 : 0);
    w.u8(cfg.head_bias ? 1 : 0);
    w.u64(cfg.seed);

    // parameter arrays, row-major, pre-layers then head
    for (const auto& layer : m.pre) {
        for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.W.cols(); ++c) w.f64(layer.W(r, c));
        for (Eigen::Index i = 0; i < layer.b.size(); ++i) w.f64(layer.b[i]);
    }
    for (Eigen::Index r = 0; r < m.head.W.rows(); ++r)
        for (Eigen::Index c = 0; c < m.head.W.cols(); ++c) w.f64(m.head.W(r, c));
    for (Eigen::Index i = 0; i < m.head.b.size(); ++i) w.f64(m.head.b[i]);
}

FlyModel read_model_block(BinReader& r) {
    ModelConfig cfg;
    cfg.n_features = static_cast<int>(r.u32());
    const auto n_pre = r.u32();
    for (std::uint32_t l = 0; l < n_pre; ++l) {
        PreLayerSpec p;
        p.width = static_cast<int>(r.u32());
        p.act = static_cast<Activation>(r.u8());
        cfg.pre.push_back(p);
    }
    cfg.n_kc = static_cast<int>(r.u32());
    cfg.degree = static_cast<int>(r.u32());
    cfg.coding_level = r.f64();
    cfg.n_classes = static_cast<int>(r.u32());
    cfg.ablate_kc = r.u8() != 0;
    cfg.head_bias = r.u8() != 0;
    cfg.seed = r.u64();

    FlyModel m = make_model(cfg);  // rebuilds the frozen projection from the seed
    for (auto& layer : m.pre) {
        for (Eigen::Index row = 0; row < layer.W.rows(); ++row)
            for (Eigen::Index col = 0; col < layer.W.cols(); ++col) layer.W(row, col) = r.f64();
        for (Eigen::Index i = 0; i < layer.b.size(); ++i) layer.b[i] = r.f64();
    }
    for (Eigen::Index row = 0; row < m.head.W.rows(); ++row)
        for (Eigen::Index col = 0; col < m.head.W.cols(); ++col) m.head.W(row, col) = r.f64();
    for (Eigen::Index i = 0; i < m.head.b.size(); ++i) m.head.b[i] = r.f64();
    return m;
}

}  // namespace

void save_model(const std::filesystem::path& path, const FlyModel& model) {
    BinWriter w;
    w.magic("FLYM");
    w.u16(kCheckpointVersion);
    write_model_block(w, model);
    atomic_write_file(path, w.bytes());
}

FlyModel load_model(const std::filesystem::path& path) {
    BinReader r(read_file_bytes(path));
    r.expect_magic("FLYM");
    const auto version = r.u16();
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version", 4);
    return read_model_block(r);
}

void save_experiment(const std::filesystem::path& path, const FlyModel& model, const Learner& learner) {
    BinWriter w;
    w.magic("FLYM");
    w.u16(kCheckpointVersion);
    write_model_block(w, model);

    w.magic("LRNR");
    const std::size_t len_at = w.size();
    w.u64(0);  // patched below
    const std::size_t payload_start = w.size();
    learner.save(w);
    w.patch_u64(len_at, w.size() - payload_start);

    atomic_write_file(path, w.bytes());
}

ExperimentCheckpoint load_experiment(const std::filesystem::path& path) {
    BinReader r(read_file_bytes(path));
    r.expect_magic("FLYM");
    const auto version = r.u16();
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version", 4);

    ExperimentCheckpoint out{read_model_block(r), nullptr};
    while (!r.eof()) {
        const std::string tag = r.magic4();
        const auto len = r.u64();
        const std::size_t start = r.pos();
        if (tag == "LRNR") {
            out.learner = load_learner(r, out.model);
            if (r.pos() - start != len) throw FormatError("LRNR section length mismatch", start);
        } else {
            r.skip(len);
        }
    }
    return out;
}

}  // namespace flycl
