#include "flycl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <climits>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>

#include "flycl/analysis.hpp"

namespace flycl {

namespace {

Dataset load_train_dataset(const TaskSpec& spec, std::uint64_t seed) {
    switch (spec.dataset) {
        case DatasetKind::Odor: {
            OdorConfig cfg = spec.odor;
            cfg.seed = derive_seed(seed, {seed_tag::kData, 0x0D0A});
            return gen_odor_dataset(cfg).train;
        }
        case DatasetKind::Flyf: return load_feature_file(spec.feature_file);
        case DatasetKind::Idx: return load_idx(spec.idx_images, spec.idx_labels);
        case DatasetKind::Synth:
            return gen_synthetic_mnist(spec.base_pool, derive_seed(seed, {seed_tag::kData, 0x3117}));
    }
    throw ConfigError("unknown dataset kind");
}

}  // namespace

TaskStream build_task_stream(const TaskSpec& spec, std::uint64_t seed) {
    if (spec.protocol == Protocol::Streaming) {
        const Dataset base = load_train_dataset(spec, seed);
        PermutationSpec pspec;
        pspec.mode = spec.permute_mode;
        pspec.seed = derive_seed(seed, {seed_tag::kPermutation});
        return make_permuted_stream(base, pspec, spec.n_tasks, spec.samples_per_task);
    }

    Dataset train, test;
    if (spec.dataset == DatasetKind::Odor) {
        OdorConfig cfg = spec.odor;
        cfg.seed = derive_seed(seed, {seed_tag::kData, 0x0D0A});
        OdorData d = gen_odor_dataset(cfg);
        train = std::move(d.train);
        test = std::move(d.test);
    } else if (spec.dataset == DatasetKind::Flyf) {
        train = load_feature_file(spec.feature_file);
        test = spec.feature_file_test.empty() ? train : load_feature_file(spec.feature_file_test);
    } else {
        throw ConfigError("class-incremental protocol needs an odor or feature-file dataset");
    }

    TaskStream stream = split_cil(train, test, spec.classes_per_task, seed, spec.class_order);
    if (static_cast<int>(stream.tasks.size()) != spec.n_tasks && spec.n_tasks > 0)
        throw ConfigError("task count " + std::to_string(stream.tasks.size()) + " does not match configured " +
                          std::to_string(spec.n_tasks));

    if (spec.imbalanced) {
        // learning order of classes, flattened across tasks
        std::vector<int> order;
        for (const auto& t : stream.tasks) order.insert(order.end(), t.classes.begin(), t.classes.end());
        ImbalanceSpec ib;
        ib.gamma = spec.gamma;
        ib.order = spec.imbalance_order;
        ib.n_max = spec.n_max;
        ib.seed = derive_seed(seed, {seed_tag::kImbalance});
        const Dataset imb = apply_imbalance(train, ib, order);
        TaskStream rebuilt = split_cil(imb, test, spec.classes_per_task, seed, spec.class_order);
        stream.tasks = std::move(rebuilt.tasks);
    }
    return stream;
}

namespace {

ModelConfig to_model_config(const ModelSpec& spec, int feature_dim, int n_classes, std::uint64_t seed) {
    ModelConfig cfg;
    cfg.n_features = feature_dim;
    cfg.pre = spec.pre;
    cfg.n_kc = spec.kc;
    cfg.degree = spec.degree;
    cfg.coding_level = spec.coding_level;
    cfg.n_classes = n_classes;
    cfg.ablate_kc = spec.ablate;
    cfg.head_bias = spec.head_bias;
    cfg.seed = derive_seed(seed, {seed_tag::kModel});
    if (cfg.expansion_input_dim() != spec.pn)
        throw ConfigError("pn=" + std::to_string(spec.pn) + " does not match the expansion input width " +
                          std::to_string(cfg.expansion_input_dim()));
    return cfg;
}

Mat gather_batch(const Dataset& d, const std::vector<int>& order, int begin, int end) {
    Mat X(d.dim(), end - begin);
    for (int i = begin; i < end; ++i) X.col(i - begin) = d.features.col(order[i]);
    return X;
}

int argmax_allowed(const Vec& logits, const std::vector<std::uint8_t>& allowed) {
    int best = -1;
    for (int c = 0; c < logits.size(); ++c) {
        if (!allowed[c]) continue;
        if (best < 0 || logits[c] > logits[best]) best = c;
    }
    return best;
}

double batch_accuracy(const Mat& logits, const Dataset& d, const std::vector<int>& order, int begin, int end,
                      const std::vector<std::uint8_t>& allowed) {
    int correct = 0;
    for (int i = begin; i < end; ++i)
        if (argmax_allowed(logits.col(i - begin), allowed) == d.labels[order[i]]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(end - begin);
}

// One gradient step on the batch columns [begin, end) in `order`. Returns
// the mean task loss, or NaN when it went non-finite.
double train_step(FlyModel& model, Learner& learner, const Dataset& data, const std::vector<int>& order, int begin,
                  int end, const std::vector<std::uint8_t>& allowed, const ClipConfig& clip, double lr,
                  BatchTrace* trace_out = nullptr) {
    const int B = end - begin;
    const Mat X = gather_batch(data, order, begin, end);
    BatchTrace trace = forward_batch(model, X);

    Mat logit_grads(trace.logits.rows(), B);
    double loss_sum = 0.0;
    for (int s = 0; s < B; ++s) {
        auto [loss, g] = cross_entropy_loss_masked(trace.logits.col(s), data.labels[order[begin + s]], allowed);
        loss_sum += loss;
        logit_grads.col(s) = g / static_cast<double>(B);
    }
    const double mean_loss = loss_sum / B;
    if (!std::isfinite(mean_loss)) return std::numeric_limits<double>::quiet_NaN();

    GradientSet grads = backward_batch(model, trace, logit_grads);
    learner.add_penalty_grad(model, grads);
    auto grefs = grad_refs(grads);
    clip_gradients(grefs, clip);
    learner.apply_step(model, grads, lr);
    learner.after_step(model, trace);
    if (trace_out) *trace_out = std::move(trace);
    return mean_loss;
}

// Trains one task in place: epochs x seeded-shuffled batches.
// Returns false when the loss went non-finite.
bool train_task(FlyModel& model, Learner& learner, const Task& task, const std::vector<std::uint8_t>& allowed,
                const ExperimentConfig& cfg, std::uint64_t seed, int task_idx, int epochs) {
    std::vector<int> order(task.train.size());
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(seed, {seed_tag::kShuffle, static_cast<std::uint64_t>(task_idx),
                                   static_cast<std::uint64_t>(epoch)}));
        rng.shuffle(order);
        for (int begin = 0; begin < static_cast<int>(order.size()); begin += cfg.batch_size) {
            const int end = std::min<int>(begin + cfg.batch_size, static_cast<int>(order.size()));
            const double loss = train_step(model, learner, task.train, order, begin, end, allowed, cfg.clip, cfg.lr);
            if (std::isnan(loss)) return false;
        }
    }
    return true;
}

std::vector<std::uint8_t> class_mask(int n_classes, const std::vector<int>& classes) {
    std::vector<std::uint8_t> mask(n_classes, 0);
    for (int c : classes) mask[c] = 1;
    return mask;
}

Mat draw_probe(const Dataset& first_task_train, int probe_size, std::uint64_t seed) {
    std::vector<int> idx(first_task_train.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, {seed_tag::kProbe}));
    rng.shuffle(idx);
    const int n = std::min<int>(probe_size, first_task_train.size());
    Mat probe(first_task_train.dim(), n);
    for (int i = 0; i < n; ++i) probe.col(i) = first_task_train.features.col(idx[i]);
    return probe;
}

}  // namespace

double evaluate_accuracy(const FlyModel& model, const Dataset& data, const std::vector<std::uint8_t>& allowed,
                         int eval_batch) {
    if (data.size() == 0) throw DataError("evaluate_accuracy: empty dataset");
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    int correct = 0;
    for (int begin = 0; begin < data.size(); begin += eval_batch) {
        const int end = std::min(begin + eval_batch, data.size());
        const Mat X = gather_batch(data, order, begin, end);
        const BatchTrace trace = forward_batch(model, X);
        for (int s = 0; s < end - begin; ++s)
            if (argmax_allowed(trace.logits.col(s), allowed) == data.labels[begin + s]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

Diagnostics compute_diagnostics(const FlyModel& model, const Mat& probe, int eval_batch) {
    Diagnostics d;
    const int n = static_cast<int>(probe.cols());

    std::vector<Vec> pre_abs;
    for (const auto& layer : model.pre) pre_abs.emplace_back(Vec::Zero(layer.W.rows()));
    Vec kc_abs;
    if (!model.ablate_kc) kc_abs = Vec::Zero(model.projection.n_out);

    for (int begin = 0; begin < n; begin += eval_batch) {
        const int end = std::min(begin + eval_batch, n);
        const Mat X = probe.middleCols(begin, end - begin);
        const BatchTrace trace = forward_batch(model, X);
        for (std::size_t l = 0; l < model.pre.size(); ++l) pre_abs[l] += trace.pre_out[l].cwiseAbs().rowwise().sum();
        if (!model.ablate_kc) {
            for (int s = 0; s < end - begin; ++s) {
                const auto& act = trace.active[s];
                for (std::size_t i = 0; i < act.size(); ++i)
                    kc_abs[act[i]] += std::abs(trace.active_vals[s][static_cast<int>(i)]);
            }
        }
    }

    std::vector<double> all;
    if (!model.pre.empty()) {
        d.has_pre = true;
        std::vector<double> pre_means;
        for (auto& v : pre_abs) {
            v /= static_cast<double>(n);
            pre_means.insert(pre_means.end(), v.data(), v.data() + v.size());
        }
        d.dormant_pre = dormant_units(Eigen::Map<Vec>(pre_means.data(), static_cast<Eigen::Index>(pre_means.size())));
        all.insert(all.end(), pre_means.begin(), pre_means.end());
    }
    if (!model.ablate_kc) {
        d.has_kc = true;
        kc_abs /= static_cast<double>(n);
        d.dormant_kc = dormant_units(kc_abs);
        all.insert(all.end(), kc_abs.data(), kc_abs.data() + kc_abs.size());
    }
    if (!all.empty())
        d.dormant_all = dormant_units(Eigen::Map<Vec>(all.data(), static_cast<Eigen::Index>(all.size())));

    if (!model.pre.empty()) d.stable_rank = stable_rank(model.pre.back().W);

    double mag_sum = 0.0;
    std::int64_t mag_n = 0;
    for (const auto& layer : model.pre) {
        mag_sum += layer.W.cwiseAbs().sum() + layer.b.cwiseAbs().sum();
        mag_n += layer.W.size() + layer.b.size();
    }
    mag_sum += model.head.W.cwiseAbs().sum() + model.head.b.cwiseAbs().sum();
    mag_n += model.head.W.size() + model.head.b.size();
    d.weight_mag = mag_sum / static_cast<double>(mag_n);
    d.head_weight_mag = model.head.W.cwiseAbs().sum() / static_cast<double>(model.head.W.size());
    return d;
}

std::vector<double> run_scratch_baselines(const ExperimentConfig& cfg, std::uint64_t seed,
                                          const TaskStream& stream) {
    const int T = static_cast<int>(stream.tasks.size());
    std::vector<double> scratch(T, -1.0);
    std::vector<int> all(stream.n_classes);
    std::iota(all.begin(), all.end(), 0);
    const auto train_mask = class_mask(stream.n_classes, all);
    for (int i = 1; i < T; ++i) {
        const Task& task = stream.tasks[i];
        ModelConfig mc = to_model_config(cfg.model, stream.tasks[0].train.dim(), stream.n_classes, seed);
        FlyModel model = make_model(mc);
        auto learner = make_learner(cfg.learner, model, seed);
        if (!train_task(model, *learner, task, train_mask, cfg, derive_seed(seed, {0x5C, static_cast<std::uint64_t>(i)}),
                        i, cfg.epochs))
            continue;  // leave unmeasured on blow-up
        // accuracy restricted to this task's classes
        scratch[i] = evaluate_accuracy(model, task.test, class_mask(stream.n_classes, task.classes), cfg.eval_batch);
    }
    return scratch;
}

RunResult run_cil(const ExperimentConfig& cfg, std::uint64_t seed) {
    const TaskStream stream = build_task_stream(cfg.task, seed);
    const int T = static_cast<int>(stream.tasks.size());

    RunResult out;
    MetricsLedger& ledger = out.ledger;
    ledger.seed = seed;
    ledger.n_tasks = T;
    ledger.acc.assign(T, {});

    ModelConfig mc = to_model_config(cfg.model, stream.tasks[0].train.dim(), stream.n_classes, seed);
    FlyModel model = make_model(mc);
    auto learner = make_learner(cfg.learner, model, seed);

    const Mat probe = draw_probe(stream.tasks[0].train, cfg.probe_size, seed);

    if (cfg.task.imbalanced) {
        std::vector<int> per_class(stream.n_classes, 0);
        for (const auto& task : stream.tasks)
            for (auto y : task.train.labels) per_class[y] += 1;
        int mn = INT_MAX, mx = 0;
        for (int c : per_class)
            if (c > 0) {
                mn = std::min(mn, c);
                mx = std::max(mx, c);
            }
        ledger.extras["imbalance_ratio"] = static_cast<double>(mx) / static_cast<double>(mn);
    }

    // The output layer is sized for the full label space from the start and
    // the training softmax runs over all classes, mirroring a fixed output
    // population. Evaluation of a[t][i] is restricted to the classes seen
    // so far, so stages never get credit for predicting future classes.
    const auto train_mask = class_mask(stream.n_classes, [&] {
        std::vector<int> all(stream.n_classes);
        std::iota(all.begin(), all.end(), 0);
        return all;
    }());

    std::vector<int> seen;
    for (int t = 0; t < T; ++t) {
        const auto start = std::chrono::steady_clock::now();
        seen.insert(seen.end(), stream.tasks[t].classes.begin(), stream.tasks[t].classes.end());
        const auto mask = class_mask(stream.n_classes, seen);

        if (!train_task(model, *learner, stream.tasks[t], train_mask, cfg, seed, t, cfg.epochs)) {
            ledger.aborted = true;
            ledger.abort_reason = "non-finite loss in task " + std::to_string(t + 1);
            return out;
        }

        ledger.acc[t].resize(t + 1);
        for (int i = 0; i <= t; ++i)
            ledger.acc[t][i] = evaluate_accuracy(model, stream.tasks[i].test, mask, cfg.eval_batch);
        ledger.diags.push_back(compute_diagnostics(model, probe, cfg.eval_batch));
        if (cfg.snapshot_heads) out.head_snapshots.push_back(model.head.W);

        learner->on_task_end(model, stream.tasks[t].train, train_mask);

        ledger.wall_clock_s.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }

    if (cfg.scratch) ledger.scratch_acc = run_scratch_baselines(cfg, seed, stream);

    if (cfg.snapshot_heads && T >= 2) {
        // both task losses evaluated over the full label space: the output
        // layer is sized for every class from the start, so the two
        // gradients share the same coordinate system
        TaskOptimaInputs in;
        in.model_template = &model;
        in.head_a = &out.head_snapshots.front();
        in.head_b = &out.head_snapshots.back();
        in.features_a = &stream.tasks.front().train.features;
        in.labels_a = &stream.tasks.front().train.labels;
        in.features_b = &stream.tasks.back().train.features;
        in.labels_b = &stream.tasks.back().train.labels;
        in.mask_a.assign(stream.n_classes, 1);
        in.mask_b.assign(stream.n_classes, 1);
        out.task_grad_angle = task_optima_gradient_angle(in);
        if (out.task_grad_angle) ledger.extras["task_grad_angle"] = *out.task_grad_angle;
    }

    out.final_model = std::move(model);
    return out;
}

RunResult run_streaming(const ExperimentConfig& cfg, std::uint64_t seed) {
    const TaskStream stream = build_task_stream(cfg.task, seed);
    const int T = static_cast<int>(stream.tasks.size());

    RunResult out;
    MetricsLedger& ledger = out.ledger;
    ledger.seed = seed;
    ledger.n_tasks = T;
    ledger.batch_acc.assign(T, {});

    ModelConfig mc = to_model_config(cfg.model, stream.tasks[0].train.dim(), stream.n_classes, seed);
    FlyModel model = make_model(mc);
    auto learner = make_learner(cfg.learner, model, seed);

    std::vector<int> all_classes(stream.n_classes);
    std::iota(all_classes.begin(), all_classes.end(), 0);
    const auto mask = class_mask(stream.n_classes, all_classes);

    const Mat probe = draw_probe(stream.tasks[0].train, cfg.probe_size, seed);

    for (int t = 0; t < T; ++t) {
        const auto start = std::chrono::steady_clock::now();
        const Dataset& data = stream.tasks[t].train;

        std::vector<int> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(seed, {seed_tag::kShuffle, static_cast<std::uint64_t>(t), 0}));
        rng.shuffle(order);

        for (int begin = 0; begin < data.size(); begin += cfg.batch_size) {
            const int end = std::min(begin + cfg.batch_size, data.size());
            // prequential: score the batch before updating on it
            {
                const Mat X = gather_batch(data, order, begin, end);
                const BatchTrace trace = forward_batch(model, X);
                ledger.batch_acc[t].push_back(batch_accuracy(trace.logits, data, order, begin, end, mask));
            }
            const double loss = train_step(model, *learner, data, order, begin, end, mask, cfg.clip, cfg.lr);
            if (std::isnan(loss)) {
                ledger.aborted = true;
                ledger.abort_reason = "non-finite loss in task " + std::to_string(t + 1);
                return out;
            }
        }

        ledger.diags.push_back(compute_diagnostics(model, probe, cfg.eval_batch));
        learner->on_task_end(model, data, mask);
        ledger.wall_clock_s.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }

    out.final_model = std::move(model);
    return out;
}

RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
    return cfg.task.protocol == Protocol::Streaming ? run_streaming(cfg, seed) : run_cil(cfg, seed);
}

bool is_sweepable_parameter(const std::string& name) {
    static const char* names[] = {"expansion_ratio", "degree",  "coding_level", "kc",    "lr",     "lambda",
                                  "c",               "xi",      "alpha",        "shrink", "perturb", "gamma",
                                  "epochs",          "bs",      "clip"};
    for (const char* n : names)
        if (name == n) return true;
    return false;
}

ExperimentConfig apply_sweep_value(const ExperimentConfig& cfg, const std::string& parameter, double value) {
    ExperimentConfig out = cfg;
    if (parameter == "expansion_ratio") {
        out.model.kc = static_cast<int>(std::lround(value * cfg.model.pn));
    } else if (parameter == "degree") {
        out.model.degree = static_cast<int>(std::lround(value));
    } else if (parameter == "coding_level") {
        out.model.coding_level = value;
    } else if (parameter == "kc") {
        out.model.kc = static_cast<int>(std::lround(value));
    } else if (parameter == "lr") {
        out.lr = value;
    } else if (parameter == "lambda") {
        out.learner.lambda = value;
    } else if (parameter == "c") {
        out.learner.c = value;
    } else if (parameter == "xi") {
        out.learner.xi = value;
    } else if (parameter == "alpha") {
        out.learner.alpha = value;
    } else if (parameter == "shrink") {
        out.learner.shrink = value;
    } else if (parameter == "perturb") {
        out.learner.perturb = value;
    } else if (parameter == "gamma") {
        out.task.gamma = value;
    } else if (parameter == "epochs") {
        out.epochs = static_cast<int>(std::lround(value));
    } else if (parameter == "bs") {
        out.batch_size = static_cast<int>(std::lround(value));
    } else if (parameter == "clip") {
        out.clip.max_norm = value;
    } else {
        throw ConfigError("parameter '" + parameter + "' is not sweepable");
    }
    return out;
}

namespace {

// Minimal fixed-size worker pool over an indexed job list.
void parallel_for_jobs(int n_jobs, int threads, const std::function<void(int)>& job) {
    threads = std::max(1, std::min(threads, n_jobs));
    if (threads == 1) {
        for (int i = 0; i < n_jobs; ++i) job(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int i = next.fetch_add(1); i < n_jobs; i = next.fetch_add(1)) job(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

std::vector<SweepRun> sweep(const ExperimentConfig& cfg, const std::string& parameter,
                            const std::vector<double>& values, int threads) {
    if (!is_sweepable_parameter(parameter)) throw ConfigError("parameter '" + parameter + "' is not sweepable");

    std::vector<SweepRun> runs;
    for (double v : values)
        for (auto s : cfg.seeds) runs.push_back(SweepRun{v, s, {}});

    parallel_for_jobs(static_cast<int>(runs.size()), threads, [&](int i) {
        const ExperimentConfig point = apply_sweep_value(cfg, parameter, runs[i].value);
        runs[i].result = run_experiment(point, runs[i].seed);
    });
    return runs;
}

std::vector<RunResult> run_all_seeds(const ExperimentConfig& cfg, int threads) {
    std::vector<RunResult> results(cfg.seeds.size());
    parallel_for_jobs(static_cast<int>(cfg.seeds.size()), threads,
                      [&](int i) { results[i] = run_experiment(cfg, cfg.seeds[i]); });
    return results;
}

}  // namespace flycl
