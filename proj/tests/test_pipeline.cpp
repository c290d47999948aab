// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include "neurograph/errors.hpp"
#include "neurograph/io.hpp"
#include "neurograph/pipeline.hpp"
#include "support.hpp"

using namespace neurograph;
using nlohmann::json;

namespace {

PipelineConfig quick_config() {
    auto c = pipeline_config_from_json(json::parse(R"({
        "train": {"folds": 2, "seeds": 1, "max_epochs": 2, "threads": 1},
        "model": {"hidden": 16, "heads": 2, "groups": 4, "mlp_hidden": 8}
    })"));
    return c;
}

} // namespace

TEST(Config, DefaultsRoundTrip) {
    const auto c = pipeline_config_from_json(json::object());
    EXPECT_EQ(c.model.input_dim, 21u);
    EXPECT_EQ(c.model.num_bands, 3u);
    const auto j = to_json(c);
    EXPECT_EQ(to_json(pipeline_config_from_json(j)).dump(), j.dump());
}

TEST(Config, DerivedModelShape) {
    const auto c = pipeline_config_from_json(json::parse(R"({
        "encoding": {"lap_dim": 4},
        "rewire": {"bands_kept": ["alpha1", "beta1"]},
        "explain": {"bands": ["beta1"]}
    })"));
    EXPECT_EQ(c.model.input_dim, 17u);
    EXPECT_EQ(c.model.num_bands, 2u);
}

TEST(Config, RejectsUnknownAndInconsistent) {
    EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"trainer": {}})")), ConfigError);
    EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"rewire": {"kk": 3}})")), ConfigError);
    EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"model": {"depth": 3}})")), ConfigError);
    EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"model": {"input_dim": 20}})")), ConfigError);
    EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"rewire": {"quantile": 2}})")), ConfigError);
    EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"train": {"lr0": "fast"}})")), ConfigError);
    EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"explain": {"bands": ["delta"]}})")), ConfigError);
    EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"explain": {"layer": 5}})")), ConfigError);
    EXPECT_THROW(pipeline_config_from_json(json::array()), ConfigError);
    testing_support::TempDir dir("cfg");
    write_file_atomic(dir.path() / "bad.json", "{not json");
    EXPECT_THROW(load_pipeline_config(dir.path() / "bad.json"), ConfigError);
}

TEST(Logger, OneJsonObjectPerLine) {
    std::ostringstream out;
    JsonLogger log(&out);
    log.event("stage", {{"stage", "x"}});
    log.log({{"event", "y"}, {"n", 3}});
    std::istringstream in(out.str());
    std::string line;
    int count = 0;
    while (std::getline(in, line)) {
        EXPECT_TRUE(json::parse(line).is_object());
        ++count;
    }
    EXPECT_EQ(count, 2);
    EXPECT_EQ(json::parse(out.str().substr(0, out.str().find('\n')))["event"], "stage");
}

TEST(RunPipeline, WritesReportCheckpointsAndExplain) {
    auto cfg = quick_config();
    cfg.explain.patients = {"P003"};
    cfg.explain.format = ExportFormat::json;
    const auto cohort = synth_cohort(8, 3);
    testing_support::TempDir dir("run");
    std::ostringstream log_out;
    JsonLogger log(&log_out);
    const auto report = run_pipeline(cfg, cohort, dir.path(), log);
    EXPECT_EQ(report.runs.size(), 2u);

    const auto doc = json::parse(read_file(dir.path() / "report.json"));
    for (const auto* key : {"config", "cohort", "parameter_count", "aggregate", "runs"}) EXPECT_TRUE(doc.contains(key)) << key;
    EXPECT_EQ(doc["cohort"]["patients"], 8);
    EXPECT_EQ(doc["runs"].size(), 2u);
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "checkpoints" / "fold1_seed0.json"));
    for (const auto* f : {"P003_alpha1.json", "P003_combined.json", "P003_centrality.csv"}) {
        EXPECT_TRUE(std::filesystem::exists(dir.path() / "explain" / f)) << f;
    }

    cfg.explain.patients = {"P999"};
    EXPECT_THROW(run_pipeline(cfg, cohort, dir.path(), log), ArgumentError);
}

TEST(Samples, PreparedGraphsAreEncoded) {
    const auto samples = prepare_samples(synth_cohort(3, 2), {}, {});
    ASSERT_EQ(samples.size(), 3u);
    for (const auto& s : samples) {
        EXPECT_EQ(s.graph.node_count(), 252u);
        EXPECT_EQ(s.graph.feature_dim(), 21u);
    }
    const auto hist = class_histogram(synth_cohort(71, 42));
    EXPECT_EQ(hist["A"].get<int>() + hist["B"].get<int>() + hist["C"].get<int>(), 71);
}
