#include "flycl/config.hpp"

#include <nlohmann/json.hpp>
#include <sstream>

#include "flycl/io.hpp"

namespace flycl {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_num(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': cannot parse number from '" + v + "'");
    }
}

int parse_int(const std::string& key, const std::string& v) {
    const double x = parse_num(key, v);
    const int i = static_cast<int>(x);
    if (static_cast<double>(i) != x) throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
    return i;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("key '" + key + "': cannot parse boolean from '" + v + "'");
}

std::vector<std::string> split_commas(const std::string& v) {
    std::vector<std::string> parts;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) parts.push_back(item);
    }
    return parts;
}

std::vector<PreLayerSpec> parse_pre(const std::string& v) {
    std::vector<PreLayerSpec> layers;
    if (trim(v).empty() || v == "none") return layers;
    for (const auto& part : split_commas(v)) {
        PreLayerSpec spec;
        const auto colon = part.find(':');
        const std::string width = colon == std::string::npos ? part : part.substr(0, colon);
        spec.width = parse_int("pre", width);
        if (colon != std::string::npos) {
            const std::string act = part.substr(colon + 1);
            if (act == "relu") {
                spec.act = Activation::Relu;
            } else if (act == "identity" || act == "id" || act == "linear") {
                spec.act = Activation::Identity;
            } else {
                throw ConfigError("pre-layer activation '" + act + "' is not relu or identity");
            }
        }
        layers.push_back(spec);
    }
    return layers;
}

}  // namespace

void apply_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (key == "dataset") {
        if (v == "odor") cfg.task.dataset = DatasetKind::Odor;
        else if (v == "flyf") cfg.task.dataset = DatasetKind::Flyf;
        else if (v == "idx") cfg.task.dataset = DatasetKind::Idx;
        else if (v == "synth") cfg.task.dataset = DatasetKind::Synth;
        else throw ConfigError("unknown dataset '" + v + "'");
    } else if (key == "protocol") {
        if (v == "cil") cfg.task.protocol = Protocol::ClassIncremental;
        else if (v == "streaming") cfg.task.protocol = Protocol::Streaming;
        else throw ConfigError("unknown protocol '" + v + "'");
    } else if (key == "pn") {
        cfg.model.pn = parse_int(key, v);
        cfg.task.odor.n_dims = cfg.model.pn;
    } else if (key == "kc") {
        cfg.model.kc = parse_int(key, v);
    } else if (key == "r") {
        cfg.model.degree = parse_int(key, v);
    } else if (key == "k") {
        cfg.model.coding_level = parse_num(key, v);
    } else if (key == "lr") {
        cfg.lr = parse_num(key, v);
    } else if (key == "lambda") {
        cfg.learner.lambda = parse_num(key, v);
    } else if (key == "c") {
        cfg.learner.c = parse_num(key, v);
    } else if (key == "xi") {
        cfg.learner.xi = parse_num(key, v);
    } else if (key == "alpha") {
        cfg.learner.alpha = parse_num(key, v);
    } else if (key == "shrink") {
        cfg.learner.shrink = parse_num(key, v);
    } else if (key == "perturb") {
        cfg.learner.perturb = parse_num(key, v);
    } else if (key == "cbp_rate") {
        cfg.learner.cbp_rate = parse_num(key, v);
    } else if (key == "cbp_decay") {
        cfg.learner.cbp_decay = parse_num(key, v);
    } else if (key == "cbp_maturity") {
        cfg.learner.cbp_maturity = parse_int(key, v);
    } else if (key == "epochs") {
        cfg.epochs = parse_int(key, v);
    } else if (key == "bs") {
        cfg.batch_size = parse_int(key, v);
    } else if (key == "clip") {
        cfg.clip.max_norm = parse_num(key, v);
    } else if (key == "seeds") {
        cfg.seeds.clear();
        for (const auto& s : split_commas(v)) cfg.seeds.push_back(static_cast<std::uint64_t>(parse_num(key, s)));
        if (cfg.seeds.empty()) throw ConfigError("seeds: need at least one seed");
    } else if (key == "tasks") {
        cfg.task.n_tasks = parse_int(key, v);
    } else if (key == "classes_per_task") {
        cfg.task.classes_per_task = parse_int(key, v);
    } else if (key == "gamma") {
        cfg.task.gamma = parse_num(key, v);
        cfg.task.imbalanced = cfg.task.gamma > 1.0;
    } else if (key == "imbalance_order") {
        if (v == "normal") cfg.task.imbalance_order = ImbalanceOrder::Normal;
        else if (v == "reverse") cfg.task.imbalance_order = ImbalanceOrder::Reverse;
        else if (v == "random") cfg.task.imbalance_order = ImbalanceOrder::Random;
        else throw ConfigError("unknown imbalance_order '" + v + "'");
    } else if (key == "out_dir") {
        cfg.out_dir = v;
    } else if (key == "learner") {
        cfg.learner.kind = strategy_from_name(v);
    } else if (key == "ablate") {
        cfg.model.ablate = parse_bool(key, v);
    } else if (key == "pre") {
        cfg.model.pre = parse_pre(v);
    } else if (key == "head_bias") {
        cfg.model.head_bias = parse_bool(key, v);
    } else if (key == "sigma") {
        cfg.task.odor.noise_sigma = parse_num(key, v);
    } else if (key == "train_per_class") {
        cfg.task.odor.train_per_class = parse_int(key, v);
    } else if (key == "test_per_class") {
        cfg.task.odor.test_per_class = parse_int(key, v);
    } else if (key == "classes") {
        cfg.task.odor.n_classes = parse_int(key, v);
    } else if (key == "class_order") {
        if (v == "natural") cfg.task.class_order = ClassOrder::Natural;
        else if (v == "random") cfg.task.class_order = ClassOrder::Random;
        else throw ConfigError("unknown class_order '" + v + "'");
    } else if (key == "samples_per_task") {
        cfg.task.samples_per_task = parse_int(key, v);
    } else if (key == "base_pool") {
        cfg.task.base_pool = parse_int(key, v);
    } else if (key == "permute_mode") {
        if (v == "input") cfg.task.permute_mode = PermuteMode::Input;
        else if (v == "label") cfg.task.permute_mode = PermuteMode::Label;
        else throw ConfigError("unknown permute_mode '" + v + "'");
    } else if (key == "feature_file") {
        cfg.task.feature_file = v;
    } else if (key == "feature_file_test") {
        cfg.task.feature_file_test = v;
    } else if (key == "idx_images") {
        cfg.task.idx_images = v;
    } else if (key == "idx_labels") {
        cfg.task.idx_labels = v;
    } else if (key == "n_max") {
        cfg.task.n_max = parse_int(key, v);
    } else if (key == "eval_bs") {
        cfg.eval_batch = parse_int(key, v);
    } else if (key == "probe_size") {
        cfg.probe_size = parse_int(key, v);
    } else if (key == "snapshot_heads") {
        cfg.snapshot_heads = parse_bool(key, v);
    } else if (key == "scratch") {
        cfg.scratch = parse_bool(key, v);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
        apply_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
    const auto bytes = read_file_bytes(path);
    ExperimentConfig cfg = parse_config_text(std::string(bytes.begin(), bytes.end()));
    for (const auto& [k, v] : overrides) apply_config_key(cfg, k, v);
    return cfg;
}

nlohmann::json config_echo(const ExperimentConfig& cfg) {
    json j;
    switch (cfg.task.dataset) {
        case DatasetKind::Odor: j["dataset"] = "odor"; break;
        case DatasetKind::Flyf: j["dataset"] = "flyf"; break;
        case DatasetKind::Idx: j["dataset"] = "idx"; break;
        case DatasetKind::Synth: j["dataset"] = "synth"; break;
    }
    j["protocol"] = cfg.task.protocol == Protocol::Streaming ? "streaming" : "cil";
    j["pn"] = cfg.model.pn;
    j["kc"] = cfg.model.kc;
    j["r"] = cfg.model.degree;
    j["k"] = cfg.model.coding_level;
    json pre = json::array();
    for (const auto& p : cfg.model.pre)
        pre.push_back(std::to_string(p.width) + (p.act == Activation::Relu ? ":relu" : ":identity"));
    j["pre"] = pre;
    j["ablate"] = cfg.model.ablate;
    j["head_bias"] = cfg.model.head_bias;
    j["learner"] = strategy_name(cfg.learner.kind);
    j["lambda"] = cfg.learner.lambda;
    j["c"] = cfg.learner.c;
    j["xi"] = cfg.learner.xi;
    j["alpha"] = cfg.learner.alpha;
    j["shrink"] = cfg.learner.shrink;
    j["perturb"] = cfg.learner.perturb;
    j["cbp_rate"] = cfg.learner.cbp_rate;
    j["cbp_decay"] = cfg.learner.cbp_decay;
    j["cbp_maturity"] = cfg.learner.cbp_maturity;
    j["epochs"] = cfg.epochs;
    j["bs"] = cfg.batch_size;
    j["lr"] = cfg.lr;
    j["clip"] = cfg.clip.max_norm;
    j["seeds"] = cfg.seeds;
    j["tasks"] = cfg.task.n_tasks;
    j["classes_per_task"] = cfg.task.classes_per_task;
    j["gamma"] = cfg.task.gamma;
    switch (cfg.task.imbalance_order) {
        case ImbalanceOrder::Normal: j["imbalance_order"] = "normal"; break;
        case ImbalanceOrder::Reverse: j["imbalance_order"] = "reverse"; break;
        case ImbalanceOrder::Random: j["imbalance_order"] = "random"; break;
    }
    j["n_max"] = cfg.task.n_max;
    j["sigma"] = cfg.task.odor.noise_sigma;
    j["train_per_class"] = cfg.task.odor.train_per_class;
    j["test_per_class"] = cfg.task.odor.test_per_class;
    j["classes"] = cfg.task.odor.n_classes;
    j["class_order"] = cfg.task.class_order == ClassOrder::Random ? "random" : "natural";
    j["samples_per_task"] = cfg.task.samples_per_task;
    j["base_pool"] = cfg.task.base_pool;
    j["permute_mode"] = cfg.task.permute_mode == PermuteMode::Label ? "label" : "input";
    j["feature_file"] = cfg.task.feature_file;
    j["feature_file_test"] = cfg.task.feature_file_test;
    j["idx_images"] = cfg.task.idx_images;
    j["idx_labels"] = cfg.task.idx_labels;
    j["eval_bs"] = cfg.eval_batch;
    j["probe_size"] = cfg.probe_size;
    j["snapshot_heads"] = cfg.snapshot_heads;
    j["scratch"] = cfg.scratch;
    j["out_dir"] = cfg.out_dir;
    j["eval_masking"] = "seen-classes";
    return j;
}

}  // namespace flycl
