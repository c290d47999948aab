// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurograph/dataset.hpp"
#include "neurograph/gat.hpp"

namespace neurograph {

struct TrainConfig {
    std::size_t batch_size = 8;
    double lr0 = 6.4e-3;
    double weight_decay = 2.25e-4;
    std::size_t plateau_patience = 20;
    double lr_factor = 0.5;
    std::size_t early_stop_patience = 50;
    std::size_t max_epochs = 500;
    std::size_t folds = 5;
    std::size_t seeds = 5;
    double val_fraction = 0.2;
    std::uint64_t seed = 42;
    /// Decoupled (AdamW-style) decay instead of the classic L2-coupled form.
    bool decoupled_weight_decay = false;
    /// Worker cap for independent (fold, seed) runs; 0 = hardware/env default.
    std::size_t threads = 0;

    void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Optimizer and scheduler

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t step = 0;
};

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One Adam update over `params` using their accumulated gradients. With
/// coupled decay the effective gradient is grad + weight_decay * param.
/// Throws NumericError on a non-finite gradient.
void adam_step(std::span<const NamedParameter> params, AdamState& state, double lr,
               double weight_decay, bool decoupled = false, const AdamHyper& hyper = {});

/// Reduce-on-plateau: an epoch improves when loss < best - threshold; after
/// `patience` consecutive non-improving epochs the rate is multiplied by
/// `factor` and the counter resets.
class PlateauScheduler {
public:
    PlateauScheduler(double lr0, std::size_t patience = 20, double factor = 0.5,
                     double threshold = 1e-6);

    /// Feeds one validation loss and returns the learning rate for the next
    /// epoch.
    double step(double val_loss);

    double lr() const noexcept { return lr_; }
    double best() const noexcept { return best_; }
    std::size_t bad_epochs() const noexcept { return bad_epochs_; }

private:
    double lr_;
    std::size_t patience_;
    double factor_;
    double threshold_;
    double best_;
    std::size_t bad_epochs_ = 0;
};

// ---------------------------------------------------------------------------
// Splits and metrics

/// Shuffled partition of 0..n-1 into k folds whose sizes differ by at most
/// one (the first n % k folds are larger).
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

/// Holds out about `fraction` of `indices`, stratified by class, for
/// validation. Returns {train, validation}.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    std::span<const std::size_t> indices, std::span<const SeverityClass> classes, double fraction,
    std::uint64_t seed);

double mae(std::span<const double> preds, std::span<const double> targets);

// ---------------------------------------------------------------------------
// Cross-validation

struct Sample {
    std::string patient_id;
    MultiLayerGraph graph;
    int nihss = 0;
};

struct Prediction {
    std::string patient_id;
    int nihss = 0;
    double predicted = 0.0;
};

struct ClassError {
    std::size_t count = 0;
    std::optional<double> mae;  // empty when the class is absent
};

struct FoldReport {
    std::size_t fold = 0;
    std::size_t seed_index = 0;
    double best_val_mae = 0.0;
    double test_mae = 0.0;
    std::array<ClassError, kSeverityClassCount> class_mae{};
    std::size_t best_epoch = 0;
    std::size_t stop_epoch = 0;
    std::size_t parameter_count = 0;
    double final_lr = 0.0;
    /// Test fold contains a single severity class.
    bool degenerate = false;
    /// Per-epoch validation MAE.
    std::vector<double> val_history;
    std::vector<Prediction> predictions;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation
    std::size_t count = 0;
};

MeanStd mean_std(std::span<const double> values);

struct CvReport {
    std::vector<FoldReport> runs;  // ordered by (fold, seed_index)
    MeanStd test_mae;
    std::array<MeanStd, kSeverityClassCount> class_mae{};
    /// MAE of predicting the training-fold mean NIHSS, averaged over runs.
    double baseline_mae = 0.0;
};

/// Per-class MAE plus counts for a set of predictions.
std::array<ClassError, kSeverityClassCount> per_class_mae(std::span<const Prediction> preds);

struct RunResult {
    FoldReport report;
    std::vector<Tensor> best_parameters;
};

/// Trains one model on `train`, early-stopping on `val`, and evaluates the
/// best checkpoint on `test`.
RunResult train_and_evaluate(std::span<const Sample> samples, std::span<const std::size_t> train,
                             std::span<const std::size_t> val, std::span<const std::size_t> test,
                             const ModelConfig& model_config, const TrainConfig& config,
                             std::uint64_t run_seed);

/// Optional sink for per-epoch progress lines.
using ProgressFn = std::function<void(const nlohmann::ordered_json&)>;

/// k-fold x seed grid. Runs are independent and may execute in parallel;
/// results are merged in (fold, seed) order so reports are deterministic.
/// When `checkpoint_dir` is set, each run's best model is saved there.
CvReport run_cv(std::span<const Sample> samples, const ModelConfig& model_config,
                const TrainConfig& config, const std::optional<std::filesystem::path>& checkpoint_dir = {},
                const ProgressFn& progress = {});

nlohmann::ordered_json to_json(const FoldReport& r);
nlohmann::ordered_json to_json(const CvReport& r);

/// Worker count from NEUROGRAPH_THREADS, the requested value and the
/// hardware, never below 1.
std::size_t worker_count(std::size_t requested);

} // namespace neurograph
