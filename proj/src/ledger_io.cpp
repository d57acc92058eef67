#include "flycl/ledger_io.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <sstream>

#include "flycl/io.hpp"

namespace flycl {

namespace {

using nlohmann::json;

void row(std::string& out, std::uint64_t seed, int t, int i, const std::string& metric, double value) {
    out += std::to_string(seed);
    out += ',';
    if (t >= 1) out += std::to_string(t);
    out += ',';
    if (i >= 1) out += std::to_string(i);
    out += ',';
    out += metric;
    out += ',';
    out += format_double(value);
    out += '\n';
}

}  // namespace

void write_ledger_csv(const std::filesystem::path& csv_path, const MetricsLedger& ledger, const json& meta) {
    std::string out = "seed,task_t,task_i,metric,value\n";
    const auto seed = ledger.seed;

    for (int t = 1; t <= static_cast<int>(ledger.acc.size()); ++t)
        for (int i = 1; i <= static_cast<int>(ledger.acc[t - 1].size()); ++i)
            row(out, seed, t, i, "acc", ledger.acc[t - 1][i - 1]);

    for (int i = 1; i <= static_cast<int>(ledger.scratch_acc.size()); ++i)
        if (ledger.scratch_acc[i - 1] >= 0.0) row(out, seed, 0, i, "scratch_acc", ledger.scratch_acc[i - 1]);

    for (int t = 1; t <= static_cast<int>(ledger.acc.size()); ++t) {
        if (static_cast<int>(ledger.acc[t - 1].size()) < t) continue;
        row(out, seed, t, 0, "avg_acc", average_accuracy(ledger, t));
        row(out, seed, t, 0, "acc_acc", accumulated_accuracy(ledger, t));
        if (t >= 2) {
            row(out, seed, t, 0, "bwt", backward_transfer(ledger, t));
            bool have_scratch = true;
            for (int i = 2; i <= t; ++i) have_scratch = have_scratch && ledger.has_scratch(i);
            if (have_scratch) row(out, seed, t, 0, "fwt", forward_transfer(ledger, t));
        }
    }

    for (int t = 1; t <= static_cast<int>(ledger.batch_acc.size()); ++t) {
        const auto& batches = ledger.batch_acc[t - 1];
        for (int j = 1; j <= static_cast<int>(batches.size()); ++j) row(out, seed, t, j, "batch_acc", batches[j - 1]);
        if (!batches.empty()) row(out, seed, t, 0, "online_acc", online_accuracy(ledger, t));
    }

    for (int t = 1; t <= static_cast<int>(ledger.diags.size()); ++t) {
        const auto& d = ledger.diags[t - 1];
        row(out, seed, t, 0, "dormant", d.dormant_all);
        if (d.has_pre) row(out, seed, t, 0, "dormant_pre", d.dormant_pre);
        if (d.has_kc) row(out, seed, t, 0, "dormant_kc", d.dormant_kc);
        if (d.stable_rank) row(out, seed, t, 0, "stable_rank", static_cast<double>(*d.stable_rank));
        row(out, seed, t, 0, "weight_mag", d.weight_mag);
        row(out, seed, t, 0, "head_weight_mag", d.head_weight_mag);
    }

    for (int t = 1; t <= static_cast<int>(ledger.wall_clock_s.size()); ++t)
        row(out, seed, t, 0, "wall_clock_s", ledger.wall_clock_s[t - 1]);

    for (const auto& [name, value] : ledger.extras) row(out, seed, 0, 0, name, value);
    if (ledger.aborted) row(out, seed, 0, 0, "aborted", 1.0);

    atomic_write_file(csv_path, out);

    json m = meta;
    m["seed"] = seed;
    m["n_tasks"] = ledger.n_tasks;
    m["eval_masking"] = ledger.eval_masking;
    if (ledger.aborted) m["abort_reason"] = ledger.abort_reason;
    auto meta_path = csv_path;
    meta_path.replace_extension(".meta.json");
    atomic_write_file(meta_path, m.dump(2) + "\n");
}

MetricsLedger read_ledger_csv(const std::filesystem::path& csv_path) {
    const auto bytes = read_file_bytes(csv_path);
    std::stringstream ss(std::string(bytes.begin(), bytes.end()));
    std::string line;
    if (!std::getline(ss, line)) throw FormatError("empty ledger csv", 0);
    if (line != "seed,task_t,task_i,metric,value") throw FormatError("unexpected ledger csv header", 0);

    MetricsLedger ledger;
    auto ensure_rows = [&](int t) {
        if (static_cast<int>(ledger.acc.size()) < t) ledger.acc.resize(t);
    };

    // named scalar metrics we rebuild rather than read
    const std::vector<std::string> derived = {"avg_acc", "acc_acc", "bwt", "fwt", "online_acc", "wall_clock_s"};

    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string seed_s, t_s, i_s, metric, value_s;
        std::getline(ls, seed_s, ',');
        std::getline(ls, t_s, ',');
        std::getline(ls, i_s, ',');
        std::getline(ls, metric, ',');
        std::getline(ls, value_s, ',');
        ledger.seed = std::stoull(seed_s);
        const int t = t_s.empty() ? 0 : std::stoi(t_s);
        const int i = i_s.empty() ? 0 : std::stoi(i_s);
        const double v = std::stod(value_s);

        if (metric == "acc") {
            ensure_rows(t);
            if (static_cast<int>(ledger.acc[t - 1].size()) < i) ledger.acc[t - 1].resize(i, -1.0);
            ledger.acc[t - 1][i - 1] = v;
        } else if (metric == "scratch_acc") {
            if (static_cast<int>(ledger.scratch_acc.size()) < i) ledger.scratch_acc.resize(i, -1.0);
            ledger.scratch_acc[i - 1] = v;
        } else if (metric == "batch_acc") {
            if (static_cast<int>(ledger.batch_acc.size()) < t) ledger.batch_acc.resize(t);
            if (static_cast<int>(ledger.batch_acc[t - 1].size()) < i) ledger.batch_acc[t - 1].resize(i, 0.0);
            ledger.batch_acc[t - 1][i - 1] = v;
        } else if (metric == "dormant" || metric == "dormant_pre" || metric == "dormant_kc" ||
                   metric == "stable_rank" || metric == "weight_mag" || metric == "head_weight_mag") {
            if (static_cast<int>(ledger.diags.size()) < t) ledger.diags.resize(t);
            auto& d = ledger.diags[t - 1];
            if (metric == "dormant") d.dormant_all = v;
            if (metric == "dormant_pre") {
                d.dormant_pre = v;
                d.has_pre = true;
            }
            if (metric == "dormant_kc") {
                d.dormant_kc = v;
                d.has_kc = true;
            }
            if (metric == "stable_rank") d.stable_rank = static_cast<int>(v);
            if (metric == "weight_mag") d.weight_mag = v;
            if (metric == "head_weight_mag") d.head_weight_mag = v;
        } else if (metric == "aborted") {
            ledger.aborted = v != 0.0;
        } else if (std::find(derived.begin(), derived.end(), metric) != derived.end()) {
            // recomputed from base rows
        } else {
            ledger.extras[metric] = v;
        }
    }
    ledger.n_tasks = static_cast<int>(ledger.acc.size());
    if (ledger.n_tasks == 0) ledger.n_tasks = static_cast<int>(ledger.batch_acc.size());
    return ledger;
}

nlohmann::json read_ledger_meta(const std::filesystem::path& csv_path) {
    auto meta_path = csv_path;
    meta_path.replace_extension(".meta.json");
    const auto bytes = read_file_bytes(meta_path);
    return json::parse(std::string(bytes.begin(), bytes.end()));
}

FinalMetrics final_metrics(const MetricsLedger& ledger) {
    FinalMetrics f;
    const int T = ledger.n_tasks;
    if (!ledger.acc.empty() && static_cast<int>(ledger.acc.back().size()) == T) {
        f.final_avg_acc = average_accuracy(ledger, T);
        f.final_acc_acc = accumulated_accuracy(ledger, T);
        if (T >= 2) {
            f.final_bwt = backward_transfer(ledger, T);
            f.has_bwt = true;
            bool have_scratch = true;
            for (int i = 2; i <= T; ++i) have_scratch = have_scratch && ledger.has_scratch(i);
            if (have_scratch) {
                f.final_fwt = forward_transfer(ledger, T);
                f.has_fwt = true;
            }
        }
    }
    if (!ledger.batch_acc.empty()) {
        double s = 0.0;
        int n = 0;
        for (int t = 1; t <= static_cast<int>(ledger.batch_acc.size()); ++t) {
            if (ledger.batch_acc[t - 1].empty()) continue;
            s += online_accuracy(ledger, t);
            ++n;
        }
        if (n > 0) {
            f.mean_online_acc = s / n;
            f.has_online = true;
        }
    }
    return f;
}

}  // namespace flycl
