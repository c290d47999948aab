// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "neurograph/errors.hpp"
#include "neurograph/pipeline.hpp"
#include "neurograph/training.hpp"
#include "support.hpp"

using namespace neurograph;

namespace {

ModelConfig tiny_model() {
    ModelConfig c;
    c.input_dim = 3;
    c.hidden = 4;
    c.heads = 2;
    c.groups = 2;
    c.mlp_hidden = 4;
    return c;
}

std::vector<Sample> tiny_samples(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        const int nihss = 2 + static_cast<int>(i * 7 % 21);
        auto g = testing_support::random_featured_graph(5, 3, gen);
        // a feature shift that tracks the target, so there is something to learn
        auto f = g.features();
        for (std::size_t k = 0; k < f.size(); k += 3) f[k] += 0.1 * nihss;
        out.push_back({"T" + std::to_string(i), g.with_features(3, f), nihss});
    }
    return out;
}

TrainConfig quick_train() {
    TrainConfig c;
    c.folds = 3;
    c.seeds = 2;
    c.max_epochs = 4;
    c.batch_size = 4;
    c.threads = 1;
    return c;
}

NamedParameter scalar_param(double w) { return {"w", ad::parameter(Tensor({1, 1}, w))}; }

} // namespace

TEST(Adam, FirstStepClosedForm) {
    // f = w^2 at w = 1: g = 2, m_hat = 2, v_hat = 4, step = lr * 2 / (2 + eps)
    std::vector<NamedParameter> p{scalar_param(1.0)};
    ad::backward(ad::sum(ad::mul(p[0].var, p[0].var)));
    AdamState state;
    adam_step(p, state, 0.1, 0.0);
    EXPECT_NEAR(p[0].var.value()[0], 0.9, 1e-8);
    EXPECT_EQ(state.step, 1u);
}

TEST(Adam, ZeroGradientAndDecay) {
    std::vector<NamedParameter> p{scalar_param(2.0)};
    AdamState state;
    for (int i = 0; i < 5; ++i) adam_step(p, state, 0.1, 0.0);
    EXPECT_EQ(p[0].var.value()[0], 2.0);

    std::vector<NamedParameter> q{scalar_param(2.0)};
    AdamState s2;
    double prev = 2.0;
    for (int i = 0; i < 5; ++i) {
        adam_step(q, s2, 0.1, 0.5);
        EXPECT_LT(std::abs(q[0].var.value()[0]), prev);
        prev = std::abs(q[0].var.value()[0]);
    }
    std::vector<NamedParameter> r{scalar_param(2.0)};
    AdamState s3;
    adam_step(r, s3, 0.1, 0.5, true);
    EXPECT_DOUBLE_EQ(r[0].var.value()[0], 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(Adam, NonFiniteGradientIsNumericError) {
    std::vector<NamedParameter> p{scalar_param(1.0)};
    p[0].var.node()->grad = Tensor({1, 1}, std::nan(""));
    AdamState state;
    EXPECT_THROW(adam_step(p, state, 0.1, 0.0), NumericError);
}

TEST(Scheduler, FlatLossesHalveAtEpoch21) {
    PlateauScheduler s(6.4e-3);
    for (int epoch = 1; epoch <= 20; ++epoch) EXPECT_EQ(s.step(1.0), 6.4e-3) << epoch;
    EXPECT_EQ(s.step(1.0), 3.2e-3);
    EXPECT_EQ(s.bad_epochs(), 0u);
}

TEST(Scheduler, DecreasingLossesNeverChangeRate) {
    PlateauScheduler s(6.4e-3);
    for (int epoch = 1; epoch <= 100; ++epoch) EXPECT_EQ(s.step(10.0 - 0.01 * epoch), 6.4e-3);
}

TEST(Scheduler, ImprovementResetsCounter) {
    PlateauScheduler s(6.4e-3);
    for (int epoch = 1; epoch <= 19; ++epoch) s.step(1.0);
    EXPECT_EQ(s.bad_epochs(), 18u);
    s.step(0.5);  // epoch 20
    EXPECT_EQ(s.bad_epochs(), 0u);
    for (int epoch = 21; epoch <= 39; ++epoch) EXPECT_EQ(s.step(0.5), 6.4e-3) << epoch;
    EXPECT_EQ(s.step(0.5), 3.2e-3);
    // within the threshold is not an improvement
    PlateauScheduler t(1.0, 2);
    t.step(1.0);
    t.step(1.0 - 5e-7);
    EXPECT_EQ(t.step(1.0 - 9e-7), 0.5);
}

TEST(KFold, SeventyOneIntoFive) {
    const auto folds = kfold_split(71, 5, 42);
    std::multiset<std::size_t> sizes;
    for (const auto& f : folds) sizes.insert(f.size());
    EXPECT_EQ(sizes, (std::multiset<std::size_t>{14, 14, 14, 14, 15}));
    EXPECT_EQ(folds, kfold_split(71, 5, 42));
    EXPECT_NE(folds, kfold_split(71, 5, 43));
    for (const auto& f : kfold_split(10, 5, 1)) EXPECT_EQ(f.size(), 2u);
    EXPECT_THROW(kfold_split(3, 5, 1), ArgumentError);
}

TEST(KFold, PartitionProperty) {
    std::mt19937_64 gen(1);
    for (int t = 0; t < 200; ++t) {
        const auto n = testing_support::pick(gen, 1, 500);
        const auto k = testing_support::pick(gen, 1, std::min<std::size_t>(10, n));
        const auto folds = kfold_split(n, k, gen());
        ASSERT_EQ(folds.size(), k);
        std::vector<int> seen(n, 0);
        std::size_t lo = n, hi = 0;
        for (const auto& f : folds) {
            lo = std::min(lo, f.size());
            hi = std::max(hi, f.size());
            for (auto i : f) ++seen[i];
        }
        EXPECT_LE(hi - lo, 1u);
        EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    }
}

TEST(Holdout, StratifiedAndDisjoint) {
    std::vector<SeverityClass> classes;
    for (int i = 0; i < 57; ++i) classes.push_back(static_cast<SeverityClass>(i % 3));
    std::vector<std::size_t> idx(57);
    std::iota(idx.begin(), idx.end(), 0);
    const auto [train, val] = stratified_holdout(idx, classes, 0.2, 7);
    EXPECT_EQ(train.size() + val.size(), 57u);
    std::array<int, 3> per{};
    for (auto i : val) ++per[static_cast<std::size_t>(classes[i])];
    for (int c : per) EXPECT_EQ(c, 4);  // round(0.2 * 19)
    std::vector<std::size_t> both(train);
    both.insert(both.end(), val.begin(), val.end());
    std::sort(both.begin(), both.end());
    EXPECT_EQ(both, idx);

    // tiny input still yields two nonempty parts
    const std::vector<std::size_t> two{0, 1};
    const auto [t2, v2] = stratified_holdout(two, classes, 0.2, 1);
    EXPECT_EQ(t2.size(), 1u);
    EXPECT_EQ(v2.size(), 1u);
}

TEST(Metrics, MaeAndMeanStd) {
    EXPECT_EQ(mae(std::vector<double>{0, 0}, std::vector<double>{1, 3}), 2.0);
    EXPECT_EQ(mae(std::vector<double>{1, 3}, std::vector<double>{1, 3}), 0.0);
    EXPECT_EQ(mae(std::vector<double>{5, 1, 2}, std::vector<double>{4, 4, 0}),
              mae(std::vector<double>{2, 5, 1}, std::vector<double>{0, 4, 4}));
    EXPECT_THROW(mae(std::vector<double>{}, std::vector<double>{}), ArgumentError);
    const auto ms = mean_std(std::vector<double>{2, 4, 4, 4, 5, 5, 7, 9});
    EXPECT_DOUBLE_EQ(ms.mean, 5.0);
    EXPECT_NEAR(ms.std, std::sqrt(32.0 / 7.0), 1e-15);
}

TEST(Metrics, ClassErrorsWeightToOverall) {
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> u(-5, 5);
    std::vector<Prediction> preds;
    std::vector<double> p, t;
    for (int i = 0; i < 40; ++i) {
        const int y = 2 + i % 21;
        preds.push_back({"P", y, y + u(gen)});
        p.push_back(preds.back().predicted);
        t.push_back(y);
    }
    const auto per = per_class_mae(preds);
    double weighted = 0.0;
    std::size_t count = 0;
    for (const auto& c : per) {
        if (c.mae) weighted += *c.mae * static_cast<double>(c.count);
        count += c.count;
    }
    EXPECT_EQ(count, 40u);
    EXPECT_NEAR(weighted / 40.0, mae(p, t), 1e-9);
}

TEST(Training, EarlyStoppingRestoresBestCheckpoint) {
    const auto samples = tiny_samples(24, 3);
    std::vector<std::size_t> train, val, test;
    for (std::size_t i = 0; i < 24; ++i) (i % 4 == 0 ? val : i % 4 == 1 ? test : train).push_back(i);
    auto cfg = quick_train();
    cfg.max_epochs = 60;
    cfg.early_stop_patience = 5;
    const auto result = train_and_evaluate(samples, train, val, test, tiny_model(), cfg, 77);
    const auto& r = result.report;
    EXPECT_EQ(r.best_val_mae, *std::min_element(r.val_history.begin(), r.val_history.end()));
    EXPECT_EQ(r.val_history[r.best_epoch - 1], r.best_val_mae);
    EXPECT_EQ(r.stop_epoch, r.val_history.size());
    if (r.stop_epoch < cfg.max_epochs) EXPECT_EQ(r.stop_epoch - r.best_epoch, cfg.early_stop_patience);

    GatModel model(tiny_model(), 0);
    model.restore(result.best_parameters);
    std::vector<double> pred, target;
    for (std::size_t k = 0; k < test.size(); ++k) {
        pred.push_back(predict(model, samples[test[k]].graph));
        target.push_back(samples[test[k]].nihss);
        EXPECT_NEAR(r.predictions[k].predicted, pred.back(), 1e-12);
    }
    EXPECT_NEAR(r.test_mae, mae(pred, target), 1e-12);
}

// One epoch walks the synthetic cohort in fixed batches of 8; the loss is the
// full-cohort MSE in eval mode after each epoch.
TEST(Training, FixedBatchLossDescends) {
    const auto samples = prepare_samples(synth_cohort(71, 42), {}, {});
    const TrainConfig tc;
    std::vector<GraphBatch> batches;
    std::vector<Tensor> ys;
    for (std::size_t lo = 0; lo < samples.size(); lo += tc.batch_size) {
        std::vector<const MultiLayerGraph*> graphs;
        std::vector<double> targets;
        for (std::size_t i = lo; i < std::min(samples.size(), lo + tc.batch_size); ++i) {
            graphs.push_back(&samples[i].graph);
            targets.push_back(samples[i].nihss);
        }
        batches.push_back(make_batch(graphs));
        ys.emplace_back(std::vector<std::size_t>{targets.size(), 1}, targets);
    }
    double mean = 0.0;
    for (const auto& s : samples) mean += s.nihss;
    GatModel model(ModelConfig{}, 1);
    model.set_output_bias(mean / static_cast<double>(samples.size()));
    Rng rng(2);
    AdamState adam;
    auto eval_loss = [&] {
        double total = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            total += ad::mse(forward(model, batches[b], false).prediction, ys[b]).value()[0] *
                     static_cast<double>(ys[b].rows());
        }
        return total / static_cast<double>(samples.size());
    };
    double prev = eval_loss();
    int failures = 0;
    for (int epoch = 0; epoch < 10; ++epoch) {
        for (std::size_t b = 0; b < batches.size(); ++b) {
            model.zero_grad();
            ad::backward(ad::mse(forward(model, batches[b], true, &rng).prediction, ys[b]));
            adam_step(model.parameters(), adam, tc.lr0, tc.weight_decay);
        }
        const double now = eval_loss();
        if (!(now < prev)) ++failures;
        prev = now;
    }
    EXPECT_LT(failures, 2);
}

TEST(CrossValidation, DeterministicAcrossThreadCounts) {
    const auto samples = tiny_samples(12, 4);
    auto cfg = quick_train();
    const auto a = to_json(run_cv(samples, tiny_model(), cfg)).dump();
    EXPECT_EQ(a, to_json(run_cv(samples, tiny_model(), cfg)).dump());
    cfg.threads = 3;
    EXPECT_EQ(a, to_json(run_cv(samples, tiny_model(), cfg)).dump());
    cfg.seed = 43;
    EXPECT_NE(a, to_json(run_cv(samples, tiny_model(), cfg)).dump());
}

TEST(CrossValidation, ReportShapeAndBaseline) {
    const auto samples = tiny_samples(12, 5);
    const auto cfg = quick_train();
    testing_support::TempDir dir("cv");
    const auto report = run_cv(samples, tiny_model(), cfg, dir.path());
    ASSERT_EQ(report.runs.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(report.runs[i].fold, i / 2);
        EXPECT_EQ(report.runs[i].seed_index, i % 2);
        EXPECT_TRUE(std::filesystem::exists(dir.path() / ("fold" + std::to_string(i / 2) + "_seed" +
                                                          std::to_string(i % 2) + ".json")));
    }
    EXPECT_EQ(report.test_mae.count, 6u);

    // constant predictor: mean of the non-test patients, per fold
    const auto folds = kfold_split(12, 3, cfg.seed);
    double total = 0.0;
    for (std::size_t f = 0; f < 3; ++f) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 12; ++i)
            if (!std::binary_search(folds[f].begin(), folds[f].end(), i)) mean += samples[i].nihss;
        mean /= static_cast<double>(12 - folds[f].size());
        std::vector<double> p, t;
        for (auto i : folds[f]) {
            p.push_back(mean);
            t.push_back(samples[i].nihss);
        }
        total += mae(p, t);
    }
    EXPECT_NEAR(report.baseline_mae, total / 3.0, 1e-12);
    EXPECT_THROW(run_cv(tiny_samples(2, 1), tiny_model(), cfg), ArgumentError);
}

TEST(TrainConfig, JsonRoundTripAndUnknownKey) {
    TrainConfig c;
    c.lr0 = 1e-3;
    c.seeds = 2;
    const auto back = train_config_from_json(to_json(c));
    EXPECT_EQ(back.lr0, 1e-3);
    EXPECT_EQ(back.seeds, 2u);
    EXPECT_THROW(train_config_from_json(nlohmann::json{{"learning_rate", 0.1}}), ConfigError);
    EXPECT_THROW(train_config_from_json(nlohmann::json{{"folds", 1}}), ArgumentError);
}

TEST(Workers, EnvironmentCap) {
    ::setenv("NEUROGRAPH_THREADS", "2", 1);
    EXPECT_EQ(worker_count(8), 2u);
    EXPECT_EQ(worker_count(1), 1u);
    ::unsetenv("NEUROGRAPH_THREADS");
    EXPECT_EQ(worker_count(5), 5u);
}
