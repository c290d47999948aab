// SPDX-License-Identifier: Apache-2.0
#include "neurograph/pipeline.hpp"

#include <algorithm>
#include <ostream>

#include "neurograph/errors.hpp"
#include "neurograph/io.hpp"

namespace neurograph {

namespace {

nlohmann::ordered_json bands_json(const std::vector<Band>& bands) {
    auto j = nlohmann::ordered_json::array();
    for (Band b : bands) j.push_back(band_name(b));
    return j;
}

std::vector<Band> bands_from_json(const nlohmann::json& j) {
    std::vector<Band> out;
    for (const auto& b : j) out.push_back(parse_band(b.get<std::string>()));
    return out;
}

RewireConfig rewire_from_json(const nlohmann::json& j) {
    RewireConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "k") c.k = value.get<std::size_t>();
        else if (key == "quantile") c.quantile = value.get<double>();
        else if (key == "bands_kept") c.bands_kept = bands_from_json(value);
        else throw ConfigError("unknown rewire key '" + key + "'");
    }
    return c;
}

EncodingConfig encoding_from_json(const nlohmann::json& j) {
    EncodingConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "lap_dim") c.lap_dim = value.get<std::size_t>();
        else if (key == "rw_steps") c.rw_steps = value.get<std::size_t>();
        else throw ConfigError("unknown encoding key '" + key + "'");
    }
    return c;
}

ExplainConfig explain_from_json(const nlohmann::json& j) {
    ExplainConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "patients") c.patients = value.get<std::vector<std::string>>();
        else if (key == "bands") c.options.bands = bands_from_json(value);
        else if (key == "layer") {
            if (!value.is_null()) c.options.layer = value.get<std::size_t>();
        } else if (key == "weighted_betweenness") c.options.weighted_betweenness = value.get<bool>();
        else if (key == "format") c.format = parse_export_format(value.get<std::string>());
        else throw ConfigError("unknown explain key '" + key + "'");
    }
    return c;
}

} // namespace

void PipelineConfig::validate() const {
    try {
        rewire.validate();
        encoding.validate();
        model.validate();
        train.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    if (model.input_dim != encoding.feature_dim()) {
        throw ConfigError("model.input_dim " + std::to_string(model.input_dim) + " differs from encoding size " +
                          std::to_string(encoding.feature_dim()));
    }
    if (model.num_bands != rewire.bands_kept.size()) {
        throw ConfigError("model.num_bands does not match rewire.bands_kept");
    }
    for (Band b : explain.options.bands) {
        if (std::find(rewire.bands_kept.begin(), rewire.bands_kept.end(), b) == rewire.bands_kept.end()) {
            throw ConfigError("explain band " + std::string(band_name(b)) + " is not kept by rewiring");
        }
    }
    if (explain.options.layer && *explain.options.layer >= model.num_layers) {
        throw ConfigError("explain.layer out of range");
    }
}

nlohmann::ordered_json to_json(const PipelineConfig& c) {
    nlohmann::ordered_json j;
    j["rewire"]["k"] = c.rewire.k;
    j["rewire"]["quantile"] = c.rewire.quantile;
    j["rewire"]["bands_kept"] = bands_json(c.rewire.bands_kept);
    j["encoding"]["lap_dim"] = c.encoding.lap_dim;
    j["encoding"]["rw_steps"] = c.encoding.rw_steps;
    j["model"] = to_json(c.model);
    j["train"] = to_json(c.train);
    j["explain"]["patients"] = c.explain.patients;
    j["explain"]["bands"] = bands_json(c.explain.options.bands);
    j["explain"]["layer"] = c.explain.options.layer ? nlohmann::ordered_json(*c.explain.options.layer)
                                                    : nlohmann::ordered_json();
    j["explain"]["weighted_betweenness"] = c.explain.options.weighted_betweenness;
    j["explain"]["format"] = export_extension(c.explain.format);
    return j;
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
    PipelineConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "rewire") c.rewire = rewire_from_json(value);
            else if (key == "encoding") c.encoding = encoding_from_json(value);
            else if (key == "train") c.train = train_config_from_json(value);
            else if (key == "explain") c.explain = explain_from_json(value);
            else if (key != "model") throw ConfigError("unknown config section '" + key + "'");
        }
        nlohmann::json model = j.value("model", nlohmann::json::object());
        if (!model.contains("input_dim")) model["input_dim"] = c.encoding.feature_dim();
        if (!model.contains("num_bands")) model["num_bands"] = c.rewire.bands_kept.size();
        c.model = model_config_from_json(model);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    c.validate();
    return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return pipeline_config_from_json(j);
}

void JsonLogger::log(const nlohmann::ordered_json& line) {
    if (!out_) return;
    std::lock_guard lock(mu_);
    *out_ << line.dump() << '\n';
    out_->flush();
}

void JsonLogger::event(std::string_view name, nlohmann::ordered_json fields) {
    nlohmann::ordered_json line;
    line["event"] = name;
    for (auto& [k, v] : fields.items()) line[k] = v;
    log(line);
}

std::vector<Sample> prepare_samples(const Cohort& cohort, const RewireConfig& rewire,
                                    const EncodingConfig& encoding) {
    std::vector<Sample> samples;
    samples.reserve(cohort.patients.size());
    for (const auto& p : cohort.patients) {
        auto graph = assemble_features(rewire_patient(p, cohort.areas, rewire), encoding);
        samples.push_back({p.patient_id, std::move(graph), p.nihss});
    }
    return samples;
}

nlohmann::ordered_json class_histogram(const Cohort& cohort) {
    std::array<std::size_t, kSeverityClassCount> counts{};
    for (const auto& p : cohort.patients) ++counts[static_cast<std::size_t>(class_of(p.nihss))];
    nlohmann::ordered_json j;
    for (std::size_t c = 0; c < kSeverityClassCount; ++c) {
        j[std::string(severity_name(static_cast<SeverityClass>(c)))] = counts[c];
    }
    return j;
}

CvReport run_pipeline(const PipelineConfig& config, const Cohort& cohort,
                      const std::filesystem::path& out_dir, JsonLogger& logger) {
    config.validate();
    cohort.validate();
    for (const auto& id : config.explain.patients) {
        const bool found = std::any_of(cohort.patients.begin(), cohort.patients.end(),
                                       [&](const PatientRecord& p) { return p.patient_id == id; });
        if (!found) throw ArgumentError("explain patient '" + id + "' is not in the cohort");
    }

    logger.event("stage", {{"stage", "prepare"}, {"patients", cohort.patients.size()}});
    const auto samples = prepare_samples(cohort, config.rewire, config.encoding);

    logger.event("stage", {{"stage", "train"},
                           {"folds", config.train.folds},
                           {"seeds", config.train.seeds},
                           {"threads", worker_count(config.train.threads)}});
    const auto checkpoints = out_dir / "checkpoints";
    const auto report = run_cv(samples, config.model, config.train, checkpoints,
                               [&](const nlohmann::ordered_json& line) { logger.log(line); });

    nlohmann::ordered_json doc;
    doc["config"] = to_json(config);
    doc["cohort"]["patients"] = cohort.patients.size();
    doc["cohort"]["classes"] = class_histogram(cohort);
    doc["parameter_count"] = report.runs.empty() ? 0 : report.runs.front().parameter_count;
    const auto body = to_json(report);
    for (const auto& [k, v] : body.items()) doc[k] = v;
    write_file_atomic(out_dir / "report.json", doc.dump(2) + "\n");
    logger.event("report", {{"path", (out_dir / "report.json").string()},
                            {"test_mae", report.test_mae.mean},
                            {"test_mae_std", report.test_mae.std},
                            {"baseline_mae", report.baseline_mae}});

    if (!config.explain.patients.empty()) {
        logger.event("stage", {{"stage", "explain"}, {"patients", config.explain.patients.size()}});
        const auto folds = kfold_split(samples.size(), config.train.folds, config.train.seed);
        for (const auto& id : config.explain.patients) {
            std::size_t idx = 0;
            while (samples[idx].patient_id != id) ++idx;
            std::size_t fold = 0;
            while (std::find(folds[fold].begin(), folds[fold].end(), idx) == folds[fold].end()) ++fold;
            const auto model = load_checkpoint(checkpoints / ("fold" + std::to_string(fold) + "_seed0.json"));
            const auto graphs = explain_patient(model, samples[idx].graph, config.explain.options);
            write_explain(graphs, config.explain.format, out_dir / "explain", id);
        }
    }
    return report;
}

} // namespace neurograph
