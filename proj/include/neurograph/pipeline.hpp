// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurograph/dataset.hpp"
#include "neurograph/encoding.hpp"
#include "neurograph/explain.hpp"
#include "neurograph/gat.hpp"
#include "neurograph/rewiring.hpp"
#include "neurograph/training.hpp"

namespace neurograph {

struct ExplainConfig {
    std::vector<std::string> patients;  // ids to explain after training
    ExplainOptions options;
    ExportFormat format = ExportFormat::graphml;
};

/// Every stage's settings in one file:
///   {"rewire", "encoding", "model", "train", "explain"}
/// train.seed is the single source of randomness.
/// Unknown keys are rejected. model.input_dim and model.num_bands default to
/// the values implied by the encoding and the kept bands.
struct PipelineConfig {
    RewireConfig rewire;
    EncodingConfig encoding;
    ModelConfig model;
    TrainConfig train;
    ExplainConfig explain;

    /// Throws ConfigError when the sections disagree.
    void validate() const;
};

nlohmann::ordered_json to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Thread-safe line-delimited JSON sink.
class JsonLogger {
public:
    explicit JsonLogger(std::ostream* out) : out_(out) {}
    void log(const nlohmann::ordered_json& line);
    void event(std::string_view name, nlohmann::ordered_json fields = nlohmann::ordered_json::object());

private:
    std::ostream* out_;
    std::mutex mu_;
};

/// Rewires and encodes every patient.
std::vector<Sample> prepare_samples(const Cohort& cohort, const RewireConfig& rewire,
                                    const EncodingConfig& encoding);

/// Counts per severity class, keyed "A", "B", "C".
nlohmann::ordered_json class_histogram(const Cohort& cohort);

/// Full run: prepare, cross-validate, write report.json, checkpoints/ and
/// explain/ under `out_dir`. Patients listed in the explain config are
/// explained with the seed-0 model of the fold that held them out.
CvReport run_pipeline(const PipelineConfig& config, const Cohort& cohort,
                      const std::filesystem::path& out_dir, JsonLogger& logger);

} // namespace neurograph
