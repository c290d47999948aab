// SPDX-License-Identifier: Apache-2.0
// neurograph: EEG connectivity -> multi-layer graph -> GATv2 NIHSS regressor.
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "neurograph/areas.hpp"
#include "neurograph/dataset.hpp"
#include "neurograph/encoding.hpp"
#include "neurograph/errors.hpp"
#include "neurograph/explain.hpp"
#include "neurograph/io.hpp"
#include "neurograph/pipeline.hpp"
#include "neurograph/rewiring.hpp"
#include "neurograph/training.hpp"

namespace fs = std::filesystem;
using namespace neurograph;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

fs::path manifest_of(const fs::path& p) {
    return fs::is_directory(p) ? p / "manifest.json" : p;
}

// Flags that override the config file; unset options leave it untouched.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> folds, seeds, batch, patience, max_epochs, threads, k;
    std::optional<double> lr, wd, quantile;
    std::optional<std::string> bands, variant;

    void add_train(CLI::App* cmd) {
        cmd->add_option("--seed", seed, "Seed for every random choice");
        cmd->add_option("--folds", folds, "Cross-validation folds");
        cmd->add_option("--seeds", seeds, "Seeds per fold");
        cmd->add_option("--batch", batch, "Batch size");
        cmd->add_option("--lr", lr, "Initial learning rate");
        cmd->add_option("--wd", wd, "Weight decay");
        cmd->add_option("--patience", patience, "Early-stopping patience (epochs)");
        cmd->add_option("--max-epochs", max_epochs, "Epoch cap");
        cmd->add_option("--threads", threads, "Worker threads (NEUROGRAPH_THREADS caps this)");
        cmd->add_option("--variant", variant, "Attention variant: gatv2 or gat");
    }
    void add_rewire(CLI::App* cmd) {
        cmd->add_option("--k", k, "Structural nearest neighbors");
        cmd->add_option("--quantile", quantile, "Functional-edge quantile");
        cmd->add_option("--bands", bands, "Kept bands, e.g. a1,a2,b1");
    }

    PipelineConfig apply(const std::optional<std::string>& config_path) const {
        nlohmann::json j = nlohmann::json::object();
        if (config_path) {
            try {
                j = nlohmann::json::parse(read_file(*config_path));
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(*config_path + ": " + e.what());
            }
        }
        auto set = [&](const char* section, const char* key, const auto& opt) {
            if (opt) j[section][key] = *opt;
        };
        set("train", "seed", seed);
        set("train", "folds", folds);
        set("train", "seeds", seeds);
        set("train", "batch_size", batch);
        set("train", "early_stop_patience", patience);
        set("train", "max_epochs", max_epochs);
        set("train", "threads", threads);
        set("train", "lr0", lr);
        set("train", "weight_decay", wd);
        set("rewire", "k", k);
        set("rewire", "quantile", quantile);
        set("model", "variant", variant);
        if (bands) {
            auto list = nlohmann::json::array();
            for (Band b : parse_band_list(*bands)) list.push_back(band_name(b));
            j["rewire"]["bands_kept"] = list;
            if (!j.contains("explain") || !j["explain"].contains("bands")) j["explain"]["bands"] = list;
        }
        return pipeline_config_from_json(j);
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"EEG connectivity to explainable GATv2 stroke-severity regression"};
    app.require_subcommand(1);
    JsonLogger log(&std::cout);
    std::string stage = "cli";

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
    std::size_t synth_n = 71;
    std::uint64_t synth_seed = 42;
    std::string synth_out;
    SynthConfig synth_cfg;
    synth->add_option("--n", synth_n, "Number of patients")->capture_default_str();
    synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
    synth->add_option("--noise", synth_cfg.noise_amplitude, "Uniform noise half-width")->capture_default_str();
    synth->add_option("--out", synth_out, "Output directory")->required();

    // validate
    auto* validate = app.add_subcommand("validate", "Check a cohort on disk");
    std::string val_cohort;
    validate->add_option("--cohort", val_cohort, "Cohort directory or manifest")->required();

    // rewire
    auto* rewire = app.add_subcommand("rewire", "Sparsify every patient into a multi-layer graph");
    std::string rw_cohort, rw_out;
    Overrides rw_over;
    rewire->add_option("--cohort", rw_cohort, "Cohort directory or manifest")->required();
    rewire->add_option("--out", rw_out, "Output directory")->required();
    rw_over.add_rewire(rewire);

    // encode
    auto* encode = app.add_subcommand("encode", "Rewire and attach positional encodings");
    std::string enc_cohort, enc_out;
    std::optional<std::string> enc_config;
    Overrides enc_over;
    encode->add_option("--cohort", enc_cohort, "Cohort directory or manifest")->required();
    encode->add_option("--out", enc_out, "Output directory")->required();
    encode->add_option("--config", enc_config, "Pipeline config JSON");
    enc_over.add_rewire(encode);

    // train and run share their flags
    auto* train = app.add_subcommand("train", "Cross-validated training");
    auto* run = app.add_subcommand("run", "Full pipeline: train, evaluate, explain");
    std::string tr_cohort, tr_out;
    std::optional<std::string> tr_config;
    Overrides tr_over;
    std::vector<std::string> run_explain;
    for (auto* cmd : {train, run}) {
        cmd->add_option("--cohort", tr_cohort, "Cohort directory or manifest")->required();
        cmd->add_option("--out", tr_out, "Output directory")->required();
        cmd->add_option("--config", tr_config, "Pipeline config JSON");
        tr_over.add_train(cmd);
        tr_over.add_rewire(cmd);
    }
    run->add_option("--explain", run_explain, "Patient ids to explain");

    // explain
    auto* explain = app.add_subcommand("explain", "Attention graphs and centralities for one patient");
    std::string ex_checkpoint, ex_cohort, ex_patient, ex_bands = "a1,a2,b1", ex_combine = "max",
                                                     ex_format = "graphml", ex_out;
    std::optional<std::string> ex_config;
    std::optional<std::size_t> ex_layer;
    bool ex_unweighted = false;
    explain->add_option("--checkpoint", ex_checkpoint, "Model checkpoint JSON")->required();
    explain->add_option("--cohort", ex_cohort, "Cohort directory or manifest")->required();
    explain->add_option("--patient", ex_patient, "Patient id")->required();
    explain->add_option("--bands", ex_bands, "Bands to export")->capture_default_str();
    explain->add_option("--combine", ex_combine, "Band combination rule")->check(CLI::IsMember({"max"}))->capture_default_str();
    explain->add_option("--format", ex_format, "graphml, dot or json")->check(CLI::IsMember({"graphml", "dot", "json"}))->capture_default_str();
    explain->add_option("--layer", ex_layer, "GAT layer to read attention from (default: last)");
    explain->add_flag("--unweighted-betweenness", ex_unweighted, "Hop-count betweenness");
    explain->add_option("--config", ex_config, "Pipeline config JSON (rewire/encoding settings)");
    explain->add_option("--out", ex_out, "Output directory")->required();

    // export
    auto* exportc = app.add_subcommand("export", "Convert an annotated JSON graph");
    std::string exp_in, exp_format, exp_out;
    exportc->add_option("--graph", exp_in, "Annotated graph JSON")->required();
    exportc->add_option("--format", exp_format, "graphml, dot or json")->check(CLI::IsMember({"graphml", "dot", "json"}))->required();
    exportc->add_option("--out", exp_out, "Output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*synth) {
            stage = "synth";
            if (synth_n == 0) throw ArgumentError("--n must be positive");
            const auto cohort = synth_cohort(synth_n, synth_seed, synth_cfg);
            save_cohort(cohort, synth_out);
            log.event("synth", {{"patients", cohort.patients.size()},
                                {"matrices", cohort.patients.size() * kBandCount},
                                {"classes", class_histogram(cohort)},
                                {"out", synth_out}});
        } else if (*validate) {
            stage = "validate";
            const auto violations = validate_cohort_files(manifest_of(val_cohort));
            for (const auto& v : violations) {
                ojson line{{"event", "violation"}, {"file", v.file}, {"kind", v.kind}, {"message", v.message}};
                if (v.row) line["row"] = *v.row;
                if (v.col) line["col"] = *v.col;
                log.log(line);
            }
            log.event("validate", {{"violations", violations.size()}, {"clean", violations.empty()}});
            return violations.empty() ? kExitOk : kExitValidation;
        } else if (*rewire) {
            stage = "rewire";
            const auto cfg = rw_over.apply(std::nullopt);
            const auto cohort = load_cohort(manifest_of(rw_cohort));
            std::string csv = "patient_id,band,intra_edges,retention\n";
            for (const auto& p : cohort.patients) {
                const auto g = rewire_patient(p, cohort.areas, cfg.rewire);
                write_file_atomic(fs::path(rw_out) / "graphs" / (p.patient_id + ".json"), graph_to_json(g).dump(1) + "\n");
                for (const auto& l : g.layers()) {
                    char buf[64];
                    std::snprintf(buf, sizeof buf, "%.9g", retention_fraction(l));
                    csv += p.patient_id + "," + std::string(band_name(l.band())) + "," +
                           std::to_string(l.intra_edge_count()) + "," + buf + "\n";
                }
            }
            write_file_atomic(fs::path(rw_out) / "sparsity.csv", csv);
            log.event("rewire", {{"patients", cohort.patients.size()}, {"out", rw_out}});
        } else if (*encode) {
            stage = "encode";
            const auto cfg = enc_over.apply(enc_config);
            const auto cohort = load_cohort(manifest_of(enc_cohort));
            const auto samples = prepare_samples(cohort, cfg.rewire, cfg.encoding);
            for (const auto& s : samples) {
                write_file_atomic(fs::path(enc_out) / (s.patient_id + ".json"), graph_to_json(s.graph).dump(1) + "\n");
            }
            log.event("encode", {{"patients", samples.size()}, {"feature_dim", cfg.encoding.feature_dim()}, {"out", enc_out}});
        } else if (*train || *run) {
            stage = "config";
            auto cfg = tr_over.apply(tr_config);
            if (*train) cfg.explain.patients.clear();
            if (!run_explain.empty()) cfg.explain.patients = run_explain;
            stage = "ingest";
            const auto cohort = load_cohort(manifest_of(tr_cohort));
            stage = *train ? "train" : "run";
            const auto report = run_pipeline(cfg, cohort, tr_out, log);
            ojson done{{"event", "done"}, {"test_mae", report.test_mae.mean}, {"test_mae_std", report.test_mae.std}};
            for (std::size_t c = 0; c < kSeverityClassCount; ++c) {
                done[std::string("class_") + std::string(severity_name(static_cast<SeverityClass>(c)))] = report.class_mae[c].mean;
            }
            done["baseline_mae"] = report.baseline_mae;
            log.log(done);
        } else if (*explain) {
            stage = "explain";
            const auto cfg = Overrides{}.apply(ex_config);
            const auto model = load_checkpoint(ex_checkpoint);
            const auto cohort = load_cohort(manifest_of(ex_cohort));
            const PatientRecord* patient = nullptr;
            for (const auto& p : cohort.patients) {
                if (p.patient_id == ex_patient) patient = &p;
            }
            if (!patient) throw ArgumentError("patient '" + ex_patient + "' not found in cohort");
            auto graph = assemble_features(rewire_patient(*patient, cohort.areas, cfg.rewire), cfg.encoding);
            ExplainOptions options;
            options.bands = parse_band_list(ex_bands);
            options.layer = ex_layer;
            options.weighted_betweenness = !ex_unweighted;
            const auto graphs = explain_patient(model, graph, options);
            const auto paths = write_explain(graphs, parse_export_format(ex_format), ex_out, ex_patient);
            auto files = nlohmann::ordered_json::array();
            for (const auto& p : paths) files.push_back(p.string());
            log.event("explain", {{"patient", ex_patient}, {"files", files}});
        } else if (*exportc) {
            stage = "export";
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(read_file(exp_in));
            } catch (const nlohmann::json::exception& e) {
                throw DataError(exp_in + ": " + e.what());
            }
            export_graph(annotated_from_json(j), parse_export_format(exp_format), exp_out);
            log.event("export", {{"out", exp_out}});
        }
    } catch (const Error& e) {
        std::cerr << ojson{{"event", "error"}, {"stage", stage}, {"kind", e.kind()}, {"message", e.what()}}.dump()
                  << '\n';
        return is_validation_error(e) ? kExitValidation : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << ojson{{"event", "error"}, {"stage", stage}, {"kind", "internal"}, {"message", e.what()}}.dump()
                  << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
