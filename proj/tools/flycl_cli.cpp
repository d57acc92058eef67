// Command-line front end: experiment dispatch, dataset conversion, analysis
// tables, and report assembly. Every behavior here is a thin shell over the
// library; outputs are deterministic given the config and seeds.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "flycl/acceptance.hpp"
#include "flycl/analysis.hpp"
#include "flycl/config.hpp"
#include "flycl/harness.hpp"
#include "flycl/io.hpp"
#include "flycl/ledger_io.hpp"
#include "flycl/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    int threads = 2;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config) {
    auto* opt = cmd->add_option("--config", args.config_path, "experiment config file (key = value lines)");
    if (needs_config) opt->required();
    cmd->add_option("--set", args.sets, "override a config key, repeatable (key=value)");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--threads", args.threads, "worker threads for seeds/sweep points");
    cmd->add_flag("--quiet", args.quiet, "suppress progress output");
}

std::vector<std::pair<std::string, std::string>> parse_sets(const std::vector<std::string>& sets) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw flycl::ConfigError("--set expects key=value, got '" + kv + "'");
        out.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return out;
}

flycl::ExperimentConfig resolve_config(const CommonArgs& args) {
    flycl::ExperimentConfig cfg;
    const auto overrides = parse_sets(args.sets);
    if (!args.config_path.empty()) {
        cfg = flycl::load_config(args.config_path, overrides);
    } else {
        for (const auto& [k, v] : overrides) flycl::apply_config_key(cfg, k, v);
    }
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    return cfg;
}

std::string run_label(const flycl::ExperimentConfig& cfg) {
    std::string label = flycl::config_echo(cfg)["dataset"].get<std::string>();
    label += "-" + flycl::strategy_name(cfg.learner.kind);
    label += cfg.model.ablate ? "-abl" : "-fly";
    return label;
}

json per_seed_summary(const flycl::MetricsLedger& ledger) {
    json j;
    j["seed"] = ledger.seed;
    const auto fm = flycl::final_metrics(ledger);
    if (fm.final_avg_acc >= 0) j["final_A"] = fm.final_avg_acc;
    if (fm.final_acc_acc >= 0) j["final_acc_acc"] = fm.final_acc_acc;
    if (fm.has_bwt) j["final_BWT"] = fm.final_bwt;
    if (fm.has_fwt) j["final_FWT"] = fm.final_fwt;
    if (fm.has_online) j["mean_online_acc"] = fm.mean_online_acc;
    if (ledger.aborted) j["aborted"] = ledger.abort_reason;
    return j;
}

void write_summary(const fs::path& dir, const flycl::ExperimentConfig& cfg,
                   const std::vector<flycl::RunResult>& results) {
    json summary;
    summary["config_echo"] = flycl::config_echo(cfg);
    json per_seed = json::array();
    std::vector<double> a, bwt, fwt, online;
    for (const auto& r : results) {
        per_seed.push_back(per_seed_summary(r.ledger));
        const auto fm = flycl::final_metrics(r.ledger);
        if (fm.final_avg_acc >= 0) a.push_back(fm.final_avg_acc);
        if (fm.has_bwt) bwt.push_back(fm.final_bwt);
        if (fm.has_fwt) fwt.push_back(fm.final_fwt);
        if (fm.has_online) online.push_back(fm.mean_online_acc);
    }
    summary["per_seed"] = per_seed;
    json agg;
    auto put = [&](const char* name, const std::vector<double>& v) {
        if (v.empty()) return;
        const auto s = flycl::aggregate_values(v);
        agg[name] = {{"mean", s.mean}, {"std", s.stdev}, {"n", s.n}, {"single_seed", s.single_seed}};
    };
    put("final_A", a);
    put("final_BWT", bwt);
    put("final_FWT", fwt);
    put("mean_online_acc", online);
    summary["aggregate"] = agg;
    flycl::atomic_write_file(dir / "summary.json", summary.dump(2) + "\n");
}

void save_run(const fs::path& dir, const flycl::ExperimentConfig& cfg, const flycl::RunResult& result,
              const json& extra_meta = {}) {
    json meta = flycl::config_echo(cfg);
    if (!extra_meta.is_null())
        for (const auto& [k, v] : extra_meta.items()) meta[k] = v;
    const std::string name = run_label(cfg) + "_s" + std::to_string(result.ledger.seed) + ".csv";
    flycl::write_ledger_csv(dir / name, result.ledger, meta);
}

int cmd_run(const CommonArgs& args, flycl::Protocol protocol) {
    flycl::ExperimentConfig cfg = resolve_config(args);
    cfg.task.protocol = protocol;
    const fs::path dir = cfg.out_dir;
    const auto results = flycl::run_all_seeds(cfg, args.threads);
    for (const auto& r : results) {
        save_run(dir, cfg, r);
        if (!args.quiet) {
            const auto fm = flycl::final_metrics(r.ledger);
            std::cerr << run_label(cfg) << " seed " << r.ledger.seed;
            if (fm.final_avg_acc >= 0) std::cerr << "  final A=" << fm.final_avg_acc;
            if (fm.has_online) std::cerr << "  online=" << fm.mean_online_acc;
            if (r.ledger.aborted) std::cerr << "  ABORTED: " << r.ledger.abort_reason;
            std::cerr << "\n";
        }
    }
    write_summary(dir, cfg, results);
    return 0;
}

int cmd_scratch(const CommonArgs& args) {
    flycl::ExperimentConfig cfg = resolve_config(args);
    cfg.task.protocol = flycl::Protocol::ClassIncremental;
    const fs::path dir = cfg.out_dir;
    json out;
    out["config_echo"] = flycl::config_echo(cfg);
    json per_seed = json::array();
    for (auto seed : cfg.seeds) {
        const auto stream = flycl::build_task_stream(cfg.task, seed);
        const auto scratch = flycl::run_scratch_baselines(cfg, seed, stream);
        json row;
        row["seed"] = seed;
        json accs = json::array();
        for (std::size_t i = 0; i < scratch.size(); ++i)
            if (scratch[i] >= 0) accs.push_back({{"task", i + 1}, {"scratch_acc", scratch[i]}});
        row["scratch"] = accs;
        per_seed.push_back(row);
    }
    out["per_seed"] = per_seed;
    flycl::atomic_write_file(dir / "scratch.json", out.dump(2) + "\n");
    return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& parameter, const std::vector<double>& values) {
    flycl::ExperimentConfig cfg = resolve_config(args);
    if (values.empty()) throw flycl::ConfigError("sweep needs at least one value");
    const fs::path dir = cfg.out_dir;
    const auto runs = flycl::sweep(cfg, parameter, values, args.threads);
    for (const auto& run : runs) {
        const flycl::ExperimentConfig point = flycl::apply_sweep_value(cfg, parameter, run.value);
        json extra;
        extra["sweep_parameter"] = parameter;
        extra["sweep_value"] = run.value;
        const fs::path sub = dir / (parameter + "_" + flycl::format_double(run.value));
        save_run(sub, point, run.result, extra);
        if (!args.quiet)
            std::cerr << parameter << "=" << run.value << " seed " << run.seed
                      << " final A=" << flycl::final_metrics(run.result.ledger).final_avg_acc << "\n";
    }
    return 0;
}

int cmd_analyze_angles(const CommonArgs& args, const std::vector<int>& dims, int n_pairs, int bins,
                       std::uint64_t seed) {
    std::string csv = "quantity,parameter,value\n";
    for (int n : dims) {
        csv += "pdf_integral," + std::to_string(n) + "," +
               flycl::format_double(flycl::angle_pdf_normalization(n)) + "\n";
        csv += "variance," + std::to_string(n) + "," + flycl::format_double(flycl::angle_variance(n)) + "\n";
        if (n_pairs > 0) {
            const auto h = flycl::sample_angle_histogram(n, n_pairs, seed + n, bins);
            csv += "mc_l1," + std::to_string(n) + "," +
                   flycl::format_double(flycl::histogram_l1_distance(n, h)) + "\n";
        }
    }
    const fs::path dir = args.out_dir.empty() ? fs::path(".") : fs::path(args.out_dir);
    flycl::atomic_write_file(dir / "angles.csv", csv);
    if (!args.quiet) std::cerr << "wrote " << (dir / "angles.csv").string() << "\n";
    return 0;
}

int cmd_analyze_birthday(const CommonArgs& args, int n, std::int64_t m) {
    std::string csv = "quantity,parameter,value\n";
    int argmax_r = 1;
    double best = -1.0;
    for (int r = 1; r <= n; ++r) {
        const auto res = flycl::birthday_probability(n, r, m);
        csv += "p," + std::to_string(r) + "," + flycl::format_double(res.p) + "\n";
        csv += "log_p," + std::to_string(r) + "," + flycl::format_double(res.log_p) + "\n";
        if (res.p > best) {
            best = res.p;
            argmax_r = r;
        }
    }
    csv += "argmax_r," + std::to_string(n) + "," + std::to_string(argmax_r) + "\n";
    const fs::path dir = args.out_dir.empty() ? fs::path(".") : fs::path(args.out_dir);
    flycl::atomic_write_file(dir / "birthday.csv", csv);
    if (!args.quiet) std::cerr << "argmax over r of p(" << n << ", r, " << m << ") = " << argmax_r << "\n";
    return 0;
}

int cmd_analyze_flops(const CommonArgs& args, int n_in, int n_kc, int r, double k, int classes) {
    const auto rep = flycl::flops_report(n_in, n_kc, r, k, classes);
    std::string csv = "quantity,parameter,value\n";
    csv += "dense_forward,," + std::to_string(rep.dense_forward_flops) + "\n";
    csv += "fly_forward,," + std::to_string(rep.fly_forward_flops) + "\n";
    csv += "head_update,," + std::to_string(rep.head_update_flops) + "\n";
    const fs::path dir = args.out_dir.empty() ? fs::path(".") : fs::path(args.out_dir);
    flycl::atomic_write_file(dir / "flops.csv", csv);
    if (!args.quiet)
        std::cerr << "dense=" << rep.dense_forward_flops << " fly=" << rep.fly_forward_flops
                  << " head_update=" << rep.head_update_flops << "\n";
    return 0;
}

// Per-task KC activity overlap of one model, with the configured coding and
// again with full retention.
int cmd_analyze_overlap(const CommonArgs& args) {
    flycl::ExperimentConfig cfg = resolve_config(args);
    cfg.task.protocol = flycl::Protocol::ClassIncremental;
    const auto seed = cfg.seeds.front();
    const auto stream = flycl::build_task_stream(cfg.task, seed);

    flycl::ModelConfig mc;
    mc.n_features = stream.tasks[0].train.dim();
    mc.pre = cfg.model.pre;
    mc.n_kc = cfg.model.kc;
    mc.degree = cfg.model.degree;
    mc.coding_level = cfg.model.coding_level;
    mc.n_classes = stream.n_classes;
    mc.seed = seed;
    const flycl::FlyModel model = flycl::make_model(mc);
    flycl::ModelConfig full_cfg = mc;
    full_cfg.coding_level = 1.0;
    const flycl::FlyModel full = flycl::make_model(full_cfg);

    auto profiles = [&](const flycl::FlyModel& m) {
        std::vector<std::vector<std::vector<int>>> per_task;
        for (const auto& task : stream.tasks) {
            std::vector<std::vector<int>> sets;
            const int n = std::min(task.test.size(), 512);
            for (int s = 0; s < n; ++s) {
                // count only positive coded activity as "active"
                const auto trace = flycl::forward(m, task.test.features.col(s));
                std::vector<int> act;
                for (int j : trace.active_set)
                    if (trace.kc_coded[j] > 0.0) act.push_back(j);
                sets.push_back(std::move(act));
            }
            per_task.push_back(std::move(sets));
        }
        return per_task;
    };

    const auto coded = profiles(model);
    const auto dense = profiles(full);
    std::string csv = "quantity,parameter,value\n";
    for (std::size_t a = 0; a < coded.size(); ++a) {
        for (std::size_t b = a + 1; b < coded.size(); ++b) {
            const std::string pair = std::to_string(a + 1) + "-" + std::to_string(b + 1);
            csv += "overlap_topk," + pair + "," +
                   flycl::format_double(flycl::kc_overlap(coded[a], coded[b], mc.n_kc)) + "\n";
            csv += "overlap_full," + pair + "," +
                   flycl::format_double(flycl::kc_overlap(dense[a], dense[b], mc.n_kc)) + "\n";
        }
    }
    const fs::path dir = cfg.out_dir;
    flycl::atomic_write_file(dir / "overlap.csv", csv);
    if (!args.quiet) std::cerr << "wrote " << (dir / "overlap.csv").string() << "\n";
    return 0;
}

int cmd_gen_odor(const CommonArgs& args) {
    flycl::ExperimentConfig cfg = resolve_config(args);
    flycl::OdorConfig oc = cfg.task.odor;
    oc.seed = cfg.seeds.front();
    const auto data = flycl::gen_odor_dataset(oc);
    const fs::path dir = cfg.out_dir;
    flycl::save_feature_file(dir / "odor_train.flyf", data.train);
    flycl::save_feature_file(dir / "odor_test.flyf", data.test);
    if (!args.quiet)
        std::cerr << "wrote " << data.train.size() << " train / " << data.test.size() << " test samples\n";
    return 0;
}

int cmd_ingest_idx(const CommonArgs& args, const std::string& out_file) {
    flycl::ExperimentConfig cfg = resolve_config(args);
    if (cfg.task.idx_images.empty() || cfg.task.idx_labels.empty())
        throw flycl::ConfigError("ingest-idx needs idx_images and idx_labels (via --set)");
    const auto data = flycl::load_idx(cfg.task.idx_images, cfg.task.idx_labels);
    flycl::save_feature_file(out_file, data);
    if (!args.quiet) std::cerr << "wrote " << data.size() << " samples to " << out_file << "\n";
    return 0;
}

int cmd_report(const CommonArgs& args, const std::string& in_dir) {
    const fs::path out = args.out_dir.empty() ? fs::path(in_dir) / "report" : fs::path(args.out_dir);
    flycl::write_report(in_dir, out);
    if (!args.quiet) std::cerr << "report written to " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continual-learning engine with a sparse expansion coding layer"};
    app.require_subcommand(1);

    CommonArgs args;

    auto* run_cil = app.add_subcommand("run-cil", "class-incremental experiment over all seeds");
    add_common(run_cil, args, true);

    auto* run_stream = app.add_subcommand("run-stream", "streaming experiment over all seeds");
    add_common(run_stream, args, true);

    auto* scratch = app.add_subcommand("scratch", "from-scratch per-task baselines only");
    add_common(scratch, args, true);

    std::string sweep_param;
    std::vector<double> sweep_values;
    auto* sweep = app.add_subcommand("sweep", "repeat the experiment over one parameter's values");
    add_common(sweep, args, true);
    sweep->add_option("--param", sweep_param, "parameter to sweep")->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")->required()->delimiter(',');

    std::vector<int> angle_dims{2, 10, 100, 2000};
    int angle_pairs = 0, angle_bins = 30;
    std::uint64_t angle_seed = 1234;
    auto* angles = app.add_subcommand("analyze-angles", "angle distribution tables");
    add_common(angles, args, false);
    angles->add_option("--dims", angle_dims, "dimensions to tabulate")->delimiter(',');
    angles->add_option("--pairs", angle_pairs, "Monte Carlo pairs (0 skips sampling)");
    angles->add_option("--bins", angle_bins, "histogram bins");
    angles->add_option("--seed", angle_seed, "sampling seed");

    int bd_n = 50;
    std::int64_t bd_m = 2000;
    auto* birthday = app.add_subcommand("analyze-birthday", "distinct-wiring probability over r");
    add_common(birthday, args, false);
    birthday->add_option("--n", bd_n, "input count");
    birthday->add_option("--m", bd_m, "expansion unit count");

    int fl_nin = 50, fl_kc = 2000, fl_r = 6, fl_classes = 10;
    double fl_k = 0.01;
    auto* flops = app.add_subcommand("analyze-flops", "forward/update operation counts");
    add_common(flops, args, false);
    flops->add_option("--n-in", fl_nin, "input width");
    flops->add_option("--kc", fl_kc, "expansion width");
    flops->add_option("--r", fl_r, "synaptic degree");
    flops->add_option("--k", fl_k, "coding level");
    flops->add_option("--classes", fl_classes, "output classes");

    auto* overlap = app.add_subcommand("analyze-overlap", "per-task activity overlap, coded vs full retention");
    add_common(overlap, args, true);

    auto* gen_odor = app.add_subcommand("gen-odor", "generate a synthetic odor dataset as FLYF files");
    add_common(gen_odor, args, false);

    std::string ingest_out = "ingested.flyf";
    auto* ingest = app.add_subcommand("ingest-idx", "convert an IDX image/label pair to FLYF");
    add_common(ingest, args, false);
    ingest->add_option("--to", ingest_out, "output FLYF path");

    std::string report_in;
    auto* report = app.add_subcommand("report", "aggregate ledgers, figure tables, acceptance verdicts");
    add_common(report, args, false);
    report->add_option("--in", report_in, "directory of run CSVs")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return 0;  // --help
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (run_cil->parsed()) return cmd_run(args, flycl::Protocol::ClassIncremental);
        if (run_stream->parsed()) return cmd_run(args, flycl::Protocol::Streaming);
        if (scratch->parsed()) return cmd_scratch(args);
        if (sweep->parsed()) return cmd_sweep(args, sweep_param, sweep_values);
        if (angles->parsed()) return cmd_analyze_angles(args, angle_dims, angle_pairs, angle_bins, angle_seed);
        if (birthday->parsed()) return cmd_analyze_birthday(args, bd_n, bd_m);
        if (flops->parsed()) return cmd_analyze_flops(args, fl_nin, fl_kc, fl_r, fl_k, fl_classes);
        if (overlap->parsed()) return cmd_analyze_overlap(args);
        if (gen_odor->parsed()) return cmd_gen_odor(args);
        if (ingest->parsed()) return cmd_ingest_idx(args, ingest_out);
        if (report->parsed()) return cmd_report(args, report_in);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const flycl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
