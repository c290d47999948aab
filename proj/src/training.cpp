// SPDX-License-Identifier: Apache-2.0
#include "neurograph/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "neurograph/errors.hpp"
#include "neurograph/random.hpp"

namespace neurograph {

void TrainConfig::validate() const {
    if (batch_size == 0) throw ArgumentError("batch size must be positive");
    if (!(lr0 > 0.0)) throw ArgumentError("learning rate must be positive");
    if (!(weight_decay >= 0.0)) throw ArgumentError("weight decay must be non-negative");
    if (plateau_patience == 0 || early_stop_patience == 0) throw ArgumentError("patience must be positive");
    if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw ArgumentError("lr factor must lie in (0, 1)");
    if (max_epochs == 0) throw ArgumentError("max_epochs must be positive");
    if (folds < 2) throw ArgumentError("need at least 2 folds");
    if (seeds == 0) throw ArgumentError("need at least 1 seed");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ArgumentError("val_fraction must lie in (0, 1)");
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    j["batch_size"] = c.batch_size;
    j["lr0"] = c.lr0;
    j["weight_decay"] = c.weight_decay;
    j["plateau_patience"] = c.plateau_patience;
    j["lr_factor"] = c.lr_factor;
    j["early_stop_patience"] = c.early_stop_patience;
    j["max_epochs"] = c.max_epochs;
    j["folds"] = c.folds;
    j["seeds"] = c.seeds;
    j["val_fraction"] = c.val_fraction;
    j["seed"] = c.seed;
    j["decoupled_weight_decay"] = c.decoupled_weight_decay;
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "batch_size") c.batch_size = value.get<std::size_t>();
        else if (key == "lr0") c.lr0 = value.get<double>();
        else if (key == "weight_decay") c.weight_decay = value.get<double>();
        else if (key == "plateau_patience") c.plateau_patience = value.get<std::size_t>();
        else if (key == "lr_factor") c.lr_factor = value.get<double>();
        else if (key == "early_stop_patience") c.early_stop_patience = value.get<std::size_t>();
        else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
        else if (key == "folds") c.folds = value.get<std::size_t>();
        else if (key == "seeds") c.seeds = value.get<std::size_t>();
        else if (key == "val_fraction") c.val_fraction = value.get<double>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "decoupled_weight_decay") c.decoupled_weight_decay = value.get<bool>();
        else if (key == "threads") c.threads = value.get<std::size_t>();
        else throw ConfigError("unknown train key '" + key + "'");
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

void adam_step(std::span<const NamedParameter> params, AdamState& state, double lr,
               double weight_decay, bool decoupled, const AdamHyper& hyper) {
    if (state.m.size() != params.size()) {
        state.m.clear();
        state.v.clear();
        for (const auto& p : params) {
            state.m.emplace_back(p.var.value().shape(), 0.0);
            state.v.emplace_back(p.var.value().shape(), 0.0);
        }
        state.step = 0;
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(hyper.beta1, t);
    const double bc2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        ad::Var var = params[i].var;
        Tensor& w = var.mutable_value();
        const Tensor& g = var.grad();
        const bool has_grad = !g.empty();
        if (has_grad && !g.all_finite()) {
            throw NumericError("non-finite gradient for parameter " + params[i].name);
        }
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            double grad = has_grad ? g[k] : 0.0;
            if (!decoupled) grad += weight_decay * w[k];
            m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * grad;
            v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * grad * grad;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            if (decoupled) w[k] -= lr * weight_decay * w[k];
            w[k] -= lr * mhat / (std::sqrt(vhat) + hyper.eps);
        }
    }
}

PlateauScheduler::PlateauScheduler(double lr0, std::size_t patience, double factor, double threshold)
    : lr_(lr0), patience_(patience), factor_(factor), threshold_(threshold),
      best_(std::numeric_limits<double>::infinity()) {}

double PlateauScheduler::step(double val_loss) {
    if (val_loss < best_ - threshold_) {
        best_ = val_loss;
        bad_epochs_ = 0;
    } else if (++bad_epochs_ >= patience_) {
        lr_ *= factor_;
        bad_epochs_ = 0;
    }
    return lr_;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw ArgumentError("kfold_split: k must be positive");
    if (k > n) {
        throw ArgumentError("kfold_split: k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(perm));
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const auto size = n / k + (f < n % k ? 1 : 0);
        folds[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                        perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
        std::sort(folds[f].begin(), folds[f].end());
        pos += size;
    }
    return folds;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    std::span<const std::size_t> indices, std::span<const SeverityClass> classes, double fraction,
    std::uint64_t seed) {
    if (indices.size() < 2) throw ArgumentError("holdout needs at least 2 samples");
    Rng rng(seed);
    std::array<std::vector<std::size_t>, kSeverityClassCount> by_class;
    for (auto i : indices) by_class[static_cast<std::size_t>(classes[i])].push_back(i);
    std::vector<std::size_t> train, val;
    for (auto& group : by_class) {
        rng.shuffle(std::span<std::size_t>(group));
        const auto take = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(group.size()) + 0.5));
        val.insert(val.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(take));
        train.insert(train.end(), group.begin() + static_cast<std::ptrdiff_t>(take), group.end());
    }
    if (val.empty()) {
        val.push_back(train.back());
        train.pop_back();
    }
    if (train.empty()) {
        train.push_back(val.back());
        val.pop_back();
    }
    std::sort(train.begin(), train.end());
    std::sort(val.begin(), val.end());
    return {std::move(train), std::move(val)};
}

double mae(std::span<const double> preds, std::span<const double> targets) {
    if (preds.empty() || preds.size() != targets.size()) {
        throw ArgumentError("mae: need equal, nonzero lengths");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - targets[i]);
    return s / static_cast<double>(preds.size());
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    out.count = values.size();
    if (values.empty()) return out;
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

std::array<ClassError, kSeverityClassCount> per_class_mae(std::span<const Prediction> preds) {
    std::array<ClassError, kSeverityClassCount> out{};
    std::array<double, kSeverityClassCount> sums{};
    for (const auto& p : preds) {
        const auto c = static_cast<std::size_t>(class_of(p.nihss));
        ++out[c].count;
        sums[c] += std::abs(p.predicted - p.nihss);
    }
    for (std::size_t c = 0; c < kSeverityClassCount; ++c) {
        if (out[c].count) out[c].mae = sums[c] / static_cast<double>(out[c].count);
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> predict_all(const GatModel& model, const GraphBatch& batch) {
    const auto pred = forward(model, batch, false).prediction.value();
    return {pred.values().begin(), pred.values().end()};
}

GraphBatch batch_of(std::span<const Sample> samples, std::span<const std::size_t> idx) {
    std::vector<const MultiLayerGraph*> graphs;
    graphs.reserve(idx.size());
    for (auto i : idx) graphs.push_back(&samples[i].graph);
    return make_batch(graphs);
}

std::vector<double> targets_of(std::span<const Sample> samples, std::span<const std::size_t> idx) {
    std::vector<double> t;
    t.reserve(idx.size());
    for (auto i : idx) t.push_back(samples[i].nihss);
    return t;
}

} // namespace

RunResult train_and_evaluate(std::span<const Sample> samples, std::span<const std::size_t> train,
                             std::span<const std::size_t> val, std::span<const std::size_t> test,
                             const ModelConfig& model_config, const TrainConfig& config,
                             std::uint64_t run_seed) {
    config.validate();
    if (train.empty() || val.empty() || test.empty()) {
        throw ArgumentError("train/validation/test splits must be nonempty");
    }
    GatModel model(model_config, mix_seed(run_seed, 1));
    Rng rng(mix_seed(run_seed, 2));

    const auto train_targets = targets_of(samples, train);
    model.set_output_bias(std::accumulate(train_targets.begin(), train_targets.end(), 0.0) /
                          static_cast<double>(train_targets.size()));

    const auto val_batch = batch_of(samples, val);
    const auto val_targets = targets_of(samples, val);
    AdamState adam;
    PlateauScheduler scheduler(config.lr0, config.plateau_patience, config.lr_factor);

    RunResult result;
    auto& report = result.report;
    report.parameter_count = model.parameter_count();
    report.best_val_mae = std::numeric_limits<double>::infinity();
    double lr = config.lr0;
    std::vector<std::size_t> order(train.begin(), train.end());

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const auto end = std::min(order.size(), start + config.batch_size);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            const auto batch = batch_of(samples, idx);
            const auto targets = targets_of(samples, idx);
            model.zero_grad();
            auto out = forward(model, batch, true, &rng);
            auto loss = ad::mse(out.prediction, Tensor({targets.size(), 1}, targets));
            ad::backward(loss);
            adam_step(model.parameters(), adam, lr, config.weight_decay, config.decoupled_weight_decay);
        }
        const auto val_pred = predict_all(model, val_batch);
        const double val_mae = mae(val_pred, val_targets);
        double val_mse = 0.0;
        for (std::size_t i = 0; i < val_pred.size(); ++i) {
            val_mse += (val_pred[i] - val_targets[i]) * (val_pred[i] - val_targets[i]);
        }
        val_mse /= static_cast<double>(val_pred.size());
        report.val_history.push_back(val_mae);
        lr = scheduler.step(val_mse);
        report.stop_epoch = epoch;
        if (val_mae < report.best_val_mae) {
            report.best_val_mae = val_mae;
            report.best_epoch = epoch;
            result.best_parameters = model.snapshot();
        } else if (epoch - report.best_epoch >= config.early_stop_patience) {
            break;
        }
    }
    report.final_lr = lr;
    model.restore(result.best_parameters);

    const auto test_pred = predict_all(model, batch_of(samples, test));
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& s = samples[test[i]];
        report.predictions.push_back({s.patient_id, s.nihss, test_pred[i]});
    }
    report.test_mae = mae(test_pred, targets_of(samples, test));
    report.class_mae = per_class_mae(report.predictions);
    const auto present = std::count_if(report.class_mae.begin(), report.class_mae.end(),
                                       [](const ClassError& c) { return c.count > 0; });
    report.degenerate = present < 2;
    return result;
}

std::size_t worker_count(std::size_t requested) {
    std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("NEUROGRAPH_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
    }
    return std::max<std::size_t>(1, n);
}

CvReport run_cv(std::span<const Sample> samples, const ModelConfig& model_config,
                const TrainConfig& config, const std::optional<std::filesystem::path>& checkpoint_dir,
                const ProgressFn& progress) {
    config.validate();
    model_config.validate();
    if (samples.size() < config.folds) {
        throw ArgumentError("cohort of " + std::to_string(samples.size()) + " is smaller than " +
                            std::to_string(config.folds) + " folds");
    }
    std::vector<SeverityClass> classes;
    for (const auto& s : samples) classes.push_back(class_of(s.nihss));
    const auto folds = kfold_split(samples.size(), config.folds, config.seed);

    struct Task {
        std::size_t fold, seed_index;
    };
    std::vector<Task> tasks;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        for (std::size_t s = 0; s < config.seeds; ++s) tasks.push_back({f, s});
    }
    std::vector<FoldReport> reports(tasks.size());
    std::vector<double> baselines(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr failure;

    auto worker = [&] {
        for (;;) {
            const auto t = next.fetch_add(1);
            if (t >= tasks.size()) return;
            {
                std::lock_guard lock(mu);
                if (failure) return;
            }
            try {
                const auto [f, s] = tasks[t];
                std::vector<std::size_t> rest;
                for (std::size_t g = 0; g < folds.size(); ++g) {
                    if (g != f) rest.insert(rest.end(), folds[g].begin(), folds[g].end());
                }
                std::sort(rest.begin(), rest.end());
                const auto run_seed = mix_seed(mix_seed(config.seed, f + 1), s + 1);
                auto [train, val] = stratified_holdout(rest, classes, config.val_fraction, mix_seed(run_seed, 3));
                auto result = train_and_evaluate(samples, train, val, folds[f], model_config, config, run_seed);
                result.report.fold = f;
                result.report.seed_index = s;

                double mean_rest = 0.0;
                for (auto i : rest) mean_rest += samples[i].nihss;
                mean_rest /= static_cast<double>(rest.size());
                double base = 0.0;
                for (auto i : folds[f]) base += std::abs(samples[i].nihss - mean_rest);
                baselines[t] = base / static_cast<double>(folds[f].size());

                if (checkpoint_dir) {
                    GatModel best(model_config, 0);
                    best.restore(result.best_parameters);
                    save_checkpoint(best, *checkpoint_dir / ("fold" + std::to_string(f) + "_seed" +
                                                             std::to_string(s) + ".json"));
                }
                std::lock_guard lock(mu);
                if (progress) {
                    nlohmann::ordered_json line;
                    line["event"] = "run_done";
                    line["fold"] = f;
                    line["seed"] = s;
                    line["best_epoch"] = result.report.best_epoch;
                    line["stop_epoch"] = result.report.stop_epoch;
                    line["val_mae"] = result.report.best_val_mae;
                    line["test_mae"] = result.report.test_mae;
                    progress(line);
                }
                reports[t] = std::move(result.report);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const auto workers = std::min(worker_count(config.threads), tasks.size());
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    CvReport out;
    out.runs = std::move(reports);
    std::vector<double> test;
    std::array<std::vector<double>, kSeverityClassCount> per_class;
    for (const auto& r : out.runs) {
        test.push_back(r.test_mae);
        for (std::size_t c = 0; c < kSeverityClassCount; ++c) {
            if (r.class_mae[c].mae) per_class[c].push_back(*r.class_mae[c].mae);
        }
    }
    out.test_mae = mean_std(test);
    for (std::size_t c = 0; c < kSeverityClassCount; ++c) out.class_mae[c] = mean_std(per_class[c]);
    out.baseline_mae = mean_std(baselines).mean;
    return out;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json to_json(const MeanStd& m) {
    nlohmann::ordered_json j;
    j["mean"] = m.mean;
    j["std"] = m.std;
    j["count"] = m.count;
    return j;
}

} // namespace

nlohmann::ordered_json to_json(const FoldReport& r) {
    nlohmann::ordered_json j;
    j["fold"] = r.fold;
    j["seed"] = r.seed_index;
    j["best_val_mae"] = r.best_val_mae;
    j["test_mae"] = r.test_mae;
    nlohmann::ordered_json classes;
    for (std::size_t c = 0; c < kSeverityClassCount; ++c) {
        nlohmann::ordered_json jc;
        jc["count"] = r.class_mae[c].count;
        jc["mae"] = r.class_mae[c].mae ? nlohmann::ordered_json(*r.class_mae[c].mae) : nlohmann::ordered_json();
        classes[std::string(severity_name(static_cast<SeverityClass>(c)))] = std::move(jc);
    }
    j["class_mae"] = std::move(classes);
    j["best_epoch"] = r.best_epoch;
    j["stop_epoch"] = r.stop_epoch;
    j["parameter_count"] = r.parameter_count;
    j["final_lr"] = r.final_lr;
    j["degenerate"] = r.degenerate;
    j["val_history"] = r.val_history;
    nlohmann::ordered_json preds = nlohmann::ordered_json::array();
    for (const auto& p : r.predictions) {
        nlohmann::ordered_json jp;
        jp["patient_id"] = p.patient_id;
        jp["nihss"] = p.nihss;
        jp["predicted"] = p.predicted;
        preds.push_back(std::move(jp));
    }
    j["predictions"] = std::move(preds);
    return j;
}

nlohmann::ordered_json to_json(const CvReport& r) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json agg;
    agg["test_mae"] = to_json(r.test_mae);
    nlohmann::ordered_json classes;
    for (std::size_t c = 0; c < kSeverityClassCount; ++c) {
        classes[std::string(severity_name(static_cast<SeverityClass>(c)))] = to_json(r.class_mae[c]);
    }
    agg["class_mae"] = std::move(classes);
    agg["baseline_mae"] = r.baseline_mae;
    j["aggregate"] = std::move(agg);
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (const auto& run : r.runs) runs.push_back(to_json(run));
    j["runs"] = std::move(runs);
    return j;
}

} // namespace neurograph
