#include "flycl/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "flycl/io.hpp"

namespace flycl {

namespace {

using nlohmann::json;
using acceptance::CriterionResult;
using acceptance::Group;

json group_key(const json& meta) {
    json k = meta;
    k.erase("seed");
    k.erase("out_dir");
    k.erase("abort_reason");
    return k;
}

// shared config across the variants of one figure panel: strip the fields
// that legitimately differ between variants
json shared_key(const json& meta) {
    json k = group_key(meta);
    for (const char* f : {"learner", "ablate", "lambda", "c", "xi", "alpha", "shrink", "perturb", "cbp_rate",
                          "cbp_decay", "cbp_maturity", "sweep_parameter", "sweep_value", "kc", "k", "r",
                          "snapshot_heads", "scratch", "gamma", "imbalance_order", "n_max"})
        k.erase(f);
    return k;
}

bool has_sweep(const json& meta) { return meta.contains("sweep_parameter"); }

double num(const json& meta, const char* key, double fallback = 0.0) {
    if (!meta.contains(key) || !meta[key].is_number()) return fallback;
    return meta[key].get<double>();
}

std::string str(const json& meta, const char* key) {
    if (!meta.contains(key) || !meta[key].is_string()) return "";
    return meta[key].get<std::string>();
}

struct Selection {
    Group group;
    std::vector<const LoadedRun*> runs;
    bool found() const { return !group.ledgers.empty(); }
};

// All runs matching the predicate, required to agree on their full config
// (minus seed); a mix of configs in one selection is an error.
template <class Pred>
Selection select(const std::vector<LoadedRun>& runs, Pred&& pred) {
    Selection sel;
    json key;
    for (const auto& r : runs) {
        if (!pred(r.meta)) continue;
        const json k = group_key(r.meta);
        if (sel.group.ledgers.empty()) {
            key = k;
        } else if (k != key) {
            throw AggregationError("mixed configurations in one aggregate: " + k.dump() + " vs " + key.dump());
        }
        sel.group.ledgers.push_back(r.ledger);
        sel.runs.push_back(&r);
    }
    return sel;
}

bool is_odor_cil_base(const json& m, const std::string& learner, bool ablate) {
    return str(m, "dataset") == "odor" && str(m, "protocol") == "cil" && !has_sweep(m) &&
           num(m, "gamma", 1.0) <= 1.0 && str(m, "learner") == learner && m.value("ablate", false) == ablate;
}

bool is_streaming(const json& m, const std::string& learner, bool ablate) {
    return str(m, "protocol") == "streaming" && str(m, "learner") == learner && m.value("ablate", false) == ablate;
}

}  // namespace

std::vector<LoadedRun> load_runs(const std::filesystem::path& dir) {
    std::vector<LoadedRun> runs;
    if (!std::filesystem::exists(dir)) throw DataError("ledger directory does not exist: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        auto meta_path = f;
        meta_path.replace_extension(".meta.json");
        if (!std::filesystem::exists(meta_path)) continue;  // not a run csv
        LoadedRun run;
        run.ledger = read_ledger_csv(f);
        run.meta = read_ledger_meta(f);
        run.path = f;
        runs.push_back(std::move(run));
    }
    return runs;
}

Aggregate aggregate_values(const std::vector<double>& v) {
    Aggregate a;
    a.n = static_cast<int>(v.size());
    if (a.n == 0) return a;
    for (double x : v) a.mean += x;
    a.mean /= a.n;
    if (a.n == 1) {
        a.single_seed = true;
        return a;
    }
    double ss = 0.0;
    for (double x : v) ss += (x - a.mean) * (x - a.mean);
    a.stdev = std::sqrt(ss / (a.n - 1));
    return a;
}

std::vector<CriterionResult> evaluate_criteria(const std::vector<LoadedRun>& runs) {
    std::vector<CriterionResult> out;

    auto miss = [](const char* id, const char* name) {
        CriterionResult r{id, name, false, false, "required runs not found in the ledger directory"};
        return r;
    };

    // C1: odor class-incremental
    {
        const auto sgd_fly = select(runs, [](const json& m) { return is_odor_cil_base(m, "sgd", false); });
        const auto si_fly = select(runs, [](const json& m) { return is_odor_cil_base(m, "si", false); });
        const auto sgd_abl = select(runs, [](const json& m) { return is_odor_cil_base(m, "sgd", true); });
        const auto si_abl = select(runs, [](const json& m) { return is_odor_cil_base(m, "si", true); });
        if (sgd_fly.found() && si_fly.found() && sgd_abl.found() && si_abl.found())
            out.push_back(acceptance::check_odor_cil(sgd_fly.group, si_fly.group, sgd_abl.group, si_abl.group, -1.0));
        else
            out.push_back(miss("C1", "odor class-incremental separation"));
    }

    // C2: coding-level sweep
    {
        std::map<double, Group> by_k;
        std::set<double> values;
        for (const auto& r : runs)
            if (str(r.meta, "sweep_parameter") == "coding_level") values.insert(num(r.meta, "sweep_value"));
        for (double v : values) {
            auto sel = select(runs, [v](const json& m) {
                return str(m, "sweep_parameter") == "coding_level" && num(m, "sweep_value") == v;
            });
            by_k[v] = sel.group;
        }
        if (by_k.size() >= 3)
            out.push_back(acceptance::check_coding_sweep(by_k));
        else
            out.push_back(miss("C2", "coding-level sweep shape"));
    }

    // C3: expansion-ratio sweep
    {
        std::map<double, Group> by_ratio;
        std::set<double> values;
        for (const auto& r : runs)
            if (str(r.meta, "sweep_parameter") == "expansion_ratio") values.insert(num(r.meta, "sweep_value"));
        for (double v : values) {
            auto sel = select(runs, [v](const json& m) {
                return str(m, "sweep_parameter") == "expansion_ratio" && num(m, "sweep_value") == v;
            });
            by_ratio[v] = sel.group;
        }
        if (by_ratio.size() >= 2)
            out.push_back(acceptance::check_expansion_sweep(by_ratio));
        else
            out.push_back(miss("C3", "expansion-ratio effects"));
    }

    out.push_back(acceptance::check_birthday_combinatorics());
    out.push_back(acceptance::check_angle_distribution());
    out.push_back(acceptance::check_flops_accounting());

    // C7: streaming plasticity
    {
        const auto ewc_fly = select(runs, [](const json& m) { return is_streaming(m, "ewc", false); });
        const auto si_fly = select(runs, [](const json& m) { return is_streaming(m, "si", false); });
        const auto ewc_abl = select(runs, [](const json& m) { return is_streaming(m, "ewc", true); });
        const auto si_abl = select(runs, [](const json& m) { return is_streaming(m, "si", true); });
        if (ewc_fly.found() && si_fly.found() && ewc_abl.found() && si_abl.found())
            out.push_back(
                acceptance::check_streaming_plasticity(ewc_fly.group, si_fly.group, ewc_abl.group, si_abl.group, -1.0));
        else
            out.push_back(miss("C7", "streaming plasticity"));
    }

    out.push_back(acceptance::check_property_suite());

    // C9: imbalance grid
    {
        std::map<acceptance::ImbalanceKey, acceptance::ImbalanceCell> cells;
        bool complete = true;
        for (double gamma : acceptance::kImbalanceGammas) {
            for (auto order : acceptance::kImbalanceOrders) {
                const std::string order_name = order == ImbalanceOrder::Normal    ? "normal"
                                               : order == ImbalanceOrder::Reverse ? "reverse"
                                                                                  : "random";
                for (auto strategy : acceptance::kImbalanceStrategies) {
                    const std::string lname = strategy_name(strategy);
                    auto pick = [&](bool ablate) {
                        return select(runs, [&](const json& m) {
                            return str(m, "dataset") == "odor" && num(m, "gamma") == gamma &&
                                   str(m, "imbalance_order") == order_name && str(m, "learner") == lname &&
                                   m.value("ablate", false) == ablate && !has_sweep(m);
                        });
                    };
                    const auto fly = pick(false);
                    const auto abl = pick(true);
                    if (fly.found() && abl.found())
                        cells[{gamma, order, strategy}] = {fly.group, abl.group};
                    else
                        complete = false;
                }
            }
        }
        if (complete && !cells.empty())
            out.push_back(acceptance::check_imbalance(cells));
        else
            out.push_back(miss("C9", "class-imbalance robustness"));
    }

    out.push_back(acceptance::check_mvt_identity());

    // keep criterion order C1..C10
    std::sort(out.begin(), out.end(), [](const CriterionResult& a, const CriterionResult& b) {
        return std::stoi(a.id.substr(1)) < std::stoi(b.id.substr(1));
    });
    return out;
}

namespace {

std::string csv_escape(const std::string& s) { return s; }  // fields here never contain commas

void write_csv(const std::filesystem::path& path, const std::string& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::string out = header + "\n";
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i) out += ',';
            out += csv_escape(r[i]);
        }
        out += '\n';
    }
    atomic_write_file(path, out);
}

std::string variant_label(const json& meta) {
    std::string label = str(meta, "learner");
    label += meta.value("ablate", false) ? "" : "-fly";
    return label;
}

}  // namespace

void write_report(const std::filesystem::path& ledger_dir, const std::filesystem::path& out_dir) {
    const auto runs = load_runs(ledger_dir);
    if (runs.empty()) throw DataError("no completed ledgers under " + ledger_dir.string());
    std::filesystem::create_directories(out_dir);

    // group by config-minus-seed
    std::map<std::string, std::vector<const LoadedRun*>> groups;
    for (const auto& r : runs) groups[group_key(r.meta).dump()].push_back(&r);

    // generic per-group summary
    {
        json summary = json::array();
        for (const auto& [key, members] : groups) {
            json g;
            g["config"] = json::parse(key);
            g["n_seeds"] = members.size();
            std::vector<double> acc, bwt, fwt, online;
            for (const auto* m : members) {
                const auto fm = final_metrics(m->ledger);
                if (fm.final_avg_acc >= 0) acc.push_back(fm.final_avg_acc);
                if (fm.has_bwt) bwt.push_back(fm.final_bwt);
                if (fm.has_fwt) fwt.push_back(fm.final_fwt);
                if (fm.has_online) online.push_back(fm.mean_online_acc);
            }
            auto put = [&](const char* name, const std::vector<double>& v) {
                if (v.empty()) return;
                const auto a = aggregate_values(v);
                g[name] = {{"mean", a.mean}, {"std", a.stdev}, {"n", a.n}, {"single_seed", a.single_seed}};
            };
            put("final_avg_acc", acc);
            put("final_bwt", bwt);
            put("final_fwt", fwt);
            put("mean_online_acc", online);
            summary.push_back(g);
        }
        atomic_write_file(out_dir / "groups.json", summary.dump(2) + "\n");
    }

    // figure panels
    auto stage_rows = [&](const std::vector<const LoadedRun*>& members, const std::string& label,
                          const std::string& metric, std::vector<std::vector<std::string>>& rows) {
        const int T = members.front()->ledger.n_tasks;
        const int cpt = std::max(1, static_cast<int>(num(members.front()->meta, "classes_per_task", 1)));
        const int t0 = (metric == "avg_acc") ? 1 : 2;
        for (int t = t0; t <= T; ++t) {
            std::vector<double> vals;
            for (const auto* m : members) {
                const auto& l = m->ledger;
                if (static_cast<int>(l.acc.size()) < t || static_cast<int>(l.acc[t - 1].size()) < t) continue;
                if (metric == "avg_acc") vals.push_back(average_accuracy(l, t));
                if (metric == "bwt") vals.push_back(backward_transfer(l, t));
                if (metric == "fwt") {
                    bool ok = true;
                    for (int i = 2; i <= t; ++i) ok = ok && l.has_scratch(i);
                    if (ok) vals.push_back(forward_transfer(l, t));
                }
            }
            if (vals.empty()) continue;
            const auto a = aggregate_values(vals);
            rows.push_back({label, std::to_string(cpt * t), format_double(a.mean), format_double(a.stdev),
                            std::to_string(a.n)});
        }
    };

    // odor base panel (classes on the x axis); the variants of one panel
    // must agree on everything but the learner fields
    {
        std::vector<std::vector<std::string>> acc_rows, bwt_rows, fwt_rows;
        json panel_shared;
        for (const auto& [key, members] : groups) {
            const json meta = members.front()->meta;
            if (!(str(meta, "dataset") == "odor" && str(meta, "protocol") == "cil" && !has_sweep(meta) &&
                  num(meta, "gamma", 1.0) <= 1.0))
                continue;
            const json sk = shared_key(meta);
            if (panel_shared.is_null()) {
                panel_shared = sk;
            } else if (sk != panel_shared) {
                throw AggregationError("odor panel mixes incompatible configurations: " + sk.dump() + " vs " +
                                       panel_shared.dump());
            }
            const std::string label = variant_label(meta);
            stage_rows(members, label, "avg_acc", acc_rows);
            stage_rows(members, label, "bwt", bwt_rows);
            stage_rows(members, label, "fwt", fwt_rows);
        }
        if (!acc_rows.empty()) write_csv(out_dir / "fig2b_acc.csv", "variant,classes,mean,std,n", acc_rows);
        if (!bwt_rows.empty()) write_csv(out_dir / "fig2b_bwt.csv", "variant,classes,mean,std,n", bwt_rows);
        if (!fwt_rows.empty()) write_csv(out_dir / "fig2b_fwt.csv", "variant,classes,mean,std,n", fwt_rows);
    }

    // sweep panels: final-stage metrics against the swept value
    auto sweep_panel = [&](const std::string& parameter, const std::filesystem::path& file) {
        std::map<double, std::vector<const LoadedRun*>> by_value;
        for (const auto& r : runs)
            if (str(r.meta, "sweep_parameter") == parameter) by_value[num(r.meta, "sweep_value")].push_back(&r);
        if (by_value.empty()) return;
        std::vector<std::vector<std::string>> rows;
        for (const auto& [value, members] : by_value) {
            std::vector<double> acc, accacc, bwt, fwt;
            for (const auto* m : members) {
                const auto fm = final_metrics(m->ledger);
                if (fm.final_avg_acc >= 0) acc.push_back(fm.final_avg_acc);
                if (fm.final_acc_acc >= 0) accacc.push_back(fm.final_acc_acc);
                if (fm.has_bwt) bwt.push_back(fm.final_bwt);
                if (fm.has_fwt) fwt.push_back(fm.final_fwt);
            }
            auto add = [&](const char* name, const std::vector<double>& v) {
                if (v.empty()) return;
                const auto a = aggregate_values(v);
                rows.push_back({format_double(value), name, format_double(a.mean), format_double(a.stdev),
                                std::to_string(a.n)});
            };
            add("avg_acc", acc);
            add("acc_acc", accacc);
            add("bwt", bwt);
            add("fwt", fwt);
        }
        write_csv(file, parameter + ",metric,mean,std,n", rows);
    };
    sweep_panel("expansion_ratio", out_dir / "fig2c_expansion.csv");
    sweep_panel("degree", out_dir / "fig2d_degree.csv");
    sweep_panel("coding_level", out_dir / "fig2e_coding.csv");

    // expansion-ratio side panels: gradient angles and head weight magnitude
    {
        std::map<double, std::vector<const LoadedRun*>> by_value;
        for (const auto& r : runs)
            if (str(r.meta, "sweep_parameter") == "expansion_ratio") by_value[num(r.meta, "sweep_value")].push_back(&r);
        std::vector<std::vector<std::string>> angle_rows, wmag_rows;
        for (const auto& [value, members] : by_value) {
            std::vector<double> angles, wmags;
            for (const auto* m : members) {
                const auto it = m->ledger.extras.find("task_grad_angle");
                if (it != m->ledger.extras.end()) angles.push_back(it->second);
                if (!m->ledger.diags.empty()) wmags.push_back(m->ledger.diags.back().head_weight_mag);
            }
            if (!angles.empty()) {
                const auto a = aggregate_values(angles);
                angle_rows.push_back({format_double(value), format_double(a.mean), format_double(a.stdev),
                                      std::to_string(a.n)});
            }
            if (!wmags.empty()) {
                const auto a = aggregate_values(wmags);
                wmag_rows.push_back(
                    {format_double(value), format_double(a.mean), format_double(a.stdev), std::to_string(a.n)});
            }
        }
        if (!angle_rows.empty())
            write_csv(out_dir / "fig3b_angles.csv", "expansion_ratio,mean_angle_deg,std,n", angle_rows);
        if (!wmag_rows.empty())
            write_csv(out_dir / "fig3c_wmag.csv", "expansion_ratio,mean_head_weight_mag,std,n", wmag_rows);
    }

    // streaming panels
    {
        std::vector<std::vector<std::string>> online_rows, diag_rows;
        for (const auto& [key, members] : groups) {
            const json meta = members.front()->meta;
            if (str(meta, "protocol") != "streaming") continue;
            const std::string label = variant_label(meta);
            const int T = members.front()->ledger.n_tasks;
            for (int t = 1; t <= T; ++t) {
                std::vector<double> vals;
                for (const auto* m : members)
                    if (t <= static_cast<int>(m->ledger.batch_acc.size()) && !m->ledger.batch_acc[t - 1].empty())
                        vals.push_back(online_accuracy(m->ledger, t));
                if (vals.empty()) continue;
                const auto a = aggregate_values(vals);
                online_rows.push_back(
                    {label, std::to_string(t), format_double(a.mean), format_double(a.stdev), std::to_string(a.n)});
            }
            for (const char* metric : {"dormant_pre", "dormant_kc", "stable_rank", "weight_mag"}) {
                for (int t = 1; t <= T; ++t) {
                    std::vector<double> vals;
                    for (const auto* m : members) {
                        if (t > static_cast<int>(m->ledger.diags.size())) continue;
                        const auto& d = m->ledger.diags[t - 1];
                        if (std::string(metric) == "dormant_pre" && d.has_pre) vals.push_back(d.dormant_pre);
                        if (std::string(metric) == "dormant_kc" && d.has_kc) vals.push_back(d.dormant_kc);
                        if (std::string(metric) == "stable_rank" && d.stable_rank)
                            vals.push_back(static_cast<double>(*d.stable_rank));
                        if (std::string(metric) == "weight_mag") vals.push_back(d.weight_mag);
                    }
                    if (vals.empty()) continue;
                    const auto a = aggregate_values(vals);
                    diag_rows.push_back({label, std::to_string(t), metric, format_double(a.mean),
                                         format_double(a.stdev), std::to_string(a.n)});
                }
            }
        }
        if (!online_rows.empty())
            write_csv(out_dir / "fig6_online.csv", "variant,task,online_acc_mean,std,n", online_rows);
        if (!diag_rows.empty())
            write_csv(out_dir / "fig6_diagnostics.csv", "variant,task,metric,mean,std,n", diag_rows);
    }

    // acceptance verdicts
    {
        const auto results = evaluate_criteria(runs);
        json verdicts = json::array();
        for (const auto& r : results) {
            verdicts.push_back({{"id", r.id},
                                {"name", r.name},
                                {"pass", r.pass},
                                {"evaluated", r.evaluated},
                                {"detail", r.detail}});
        }
        atomic_write_file(out_dir / "acceptance_verdicts.json", verdicts.dump(2) + "\n");
    }
}

}  // namespace flycl
