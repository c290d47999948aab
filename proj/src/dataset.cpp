// SPDX-License-Identifier: Apache-2.0
#include "neurograph/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "neurograph/areas.hpp"
#include "neurograph/errors.hpp"
#include "neurograph/random.hpp"

namespace neurograph {

namespace fs = std::filesystem;

std::string_view stroke_side_name(StrokeSide s) {
    switch (s) {
    case StrokeSide::left: return "left";
    case StrokeSide::right: return "right";
    case StrokeSide::unknown: return "";
    }
    return "";
}

std::string_view severity_name(SeverityClass c) {
    switch (c) {
    case SeverityClass::A: return "A";
    case SeverityClass::B: return "B";
    case SeverityClass::C: return "C";
    }
    return "A";
}

SeverityClass class_of(int nihss) {
    if (nihss < 0) throw ArgumentError("NIHSS must be non-negative, got " + std::to_string(nihss));
    if (nihss < 9) return SeverityClass::A;
    if (nihss < 16) return SeverityClass::B;
    return SeverityClass::C;
}

const ConnectivityMatrix& PatientRecord::matrix(Band b) const {
    const auto i = band_index(b);
    if (i >= matrices.size() || matrices[i].band() != b) {
        throw DataError("patient " + patient_id + " has no " + std::string(band_name(b)) +
                        " matrix");
    }
    return matrices[i];
}

bool operator==(const BrodmannArea& a, const BrodmannArea& b) {
    return a.index == b.index && a.label == b.label && a.centroid == b.centroid;
}

bool operator==(const Cohort& a, const Cohort& b) {
    return a.patients == b.patients && a.areas == b.areas;
}

void Cohort::validate() const {
    validate_areas(areas);
    std::set<std::string> ids;
    for (const auto& p : patients) {
        if (!ids.insert(p.patient_id).second) {
            throw DataError("duplicate patient id '" + p.patient_id + "'");
        }
        if (p.nihss < kMinNihss || p.nihss > kMaxNihss) {
            throw DataError("patient " + p.patient_id + ": NIHSS " + std::to_string(p.nihss) +
                            " outside clinical range [2, 42]");
        }
        if (p.matrices.size() != kBandCount) {
            throw DataError("patient " + p.patient_id + ": expected 5 band matrices");
        }
        for (Band b : kAllBands) {
            if (p.matrix(b).size() != areas.size()) {
                throw DataError("patient " + p.patient_id + ": " + std::string(band_name(b)) +
                                " matrix is not " + std::to_string(areas.size()) + "x" +
                                std::to_string(areas.size()));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Matrix CSV

namespace {

std::string format_g9(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

double round_g9(double v) { return std::strtod(format_g9(v).c_str(), nullptr); }

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

struct ParsedMatrix {
    std::size_t rows = 0;
    std::vector<std::vector<double>> cells;
    std::optional<std::string> error;
};

ParsedMatrix parse_matrix_file(const fs::path& path) {
    ParsedMatrix pm;
    std::ifstream in(path);
    if (!in) {
        pm.error = "cannot open";
        return pm;
    }
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            const auto t = trim(field);
            char* end = nullptr;
            const double v = std::strtod(t.c_str(), &end);
            if (t.empty() || end != t.c_str() + t.size()) {
                pm.error = "malformed number '" + t + "' on row " + std::to_string(pm.cells.size());
                return pm;
            }
            row.push_back(v);
        }
        pm.cells.push_back(std::move(row));
    }
    pm.rows = pm.cells.size();
    return pm;
}

/// Collects or throws validation problems depending on mode.
class Issues {
public:
    explicit Issues(std::vector<Violation>* sink) : sink_(sink) {}

    template <typename E>
    void report(Violation v) {
        if (!sink_) throw E(v.file.empty() ? v.message : v.file + ": " + v.message);
        sink_->push_back(std::move(v));
    }

private:
    std::vector<Violation>* sink_;
};

/// Validates and symmetrizes a parsed matrix. Returns nullopt when a
/// violation was recorded.
std::optional<std::vector<double>> check_matrix(const ParsedMatrix& pm, const std::string& file,
                                                std::size_t expected_n, Issues& issues) {
    if (pm.error) {
        issues.report<DataError>({file, "parse", *pm.error, {}, {}});
        return std::nullopt;
    }
    const auto n = pm.rows;
    if (n != expected_n) {
        issues.report<DataError>({file, "dimension",
                                  "matrix has " + std::to_string(n) + " rows, expected " +
                                      std::to_string(expected_n),
                                  {}, {}});
        return std::nullopt;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (pm.cells[i].size() != n) {
            issues.report<DataError>({file, "dimension",
                                      "row " + std::to_string(i) + " has " +
                                          std::to_string(pm.cells[i].size()) + " columns, expected " +
                                          std::to_string(n),
                                      i, {}});
            return std::nullopt;
        }
    }
    bool ok = true;
    std::vector<double> w(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double v = pm.cells[i][j];
            w[i * n + j] = v;
            if (i == j) continue;
            auto cell = [&] { return "(" + std::to_string(i) + "," + std::to_string(j) + ")"; };
            if (!std::isfinite(v)) {
                issues.report<DataError>({file, "nan", "non-finite weight at " + cell(), i, j});
                ok = false;
            } else if (v < 0.0) {
                issues.report<DataError>(
                    {file, "negative", "negative weight " + format_g9(v) + " at " + cell(), i, j});
                ok = false;
            } else if (j > i && std::isfinite(pm.cells[j][i]) &&
                       std::abs(v - pm.cells[j][i]) > kIngestSymmetryTolerance) {
                issues.report<DataError>({file, "asymmetry", "asymmetric weight at " + cell(), i, j});
                ok = false;
            }
        }
    }
    if (!ok) return std::nullopt;
    for (std::size_t i = 0; i < n; ++i) {
        w[i * n + i] = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = (w[i * n + j] + w[j * n + i]) / 2.0;
            w[i * n + j] = s;
            w[j * n + i] = s;
        }
    }
    return w;
}

struct LabelRow {
    int nihss = 0;
    StrokeSide side = StrokeSide::unknown;
};

std::map<std::string, LabelRow> read_labels(const fs::path& path, Issues& issues) {
    std::map<std::string, LabelRow> out;
    std::ifstream in(path);
    const auto file = path.string();
    if (!in) {
        issues.report<IngestError>({file, "missing", "cannot open label file", {}, {}});
        return out;
    }
    std::string line;
    std::getline(in, line);
    if (trim(line) != "patient_id,nihss,stroke_side") {
        issues.report<DataError>({file, "label", "expected header patient_id,nihss,stroke_side", {}, {}});
        return out;
    }
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) f.push_back(trim(field));
        if (!line.empty() && line.back() == ',') f.emplace_back();
        if (f.size() != 3) {
            issues.report<DataError>({file, "label", "expected 3 fields", row, {}});
            continue;
        }
        LabelRow lr;
        char* end = nullptr;
        const long v = std::strtol(f[1].c_str(), &end, 10);
        if (f[1].empty() || end != f[1].c_str() + f[1].size()) {
            issues.report<DataError>({file, "label", "malformed NIHSS '" + f[1] + "'", row, {}});
            continue;
        }
        lr.nihss = static_cast<int>(v);
        if (lr.nihss < kMinNihss || lr.nihss > kMaxNihss) {
            issues.report<DataError>({file, "label",
                                      "patient " + f[0] + ": NIHSS " + f[1] +
                                          " outside clinical range [2, 42]",
                                      row, {}});
        }
        if (f[2] == "left") {
            lr.side = StrokeSide::left;
        } else if (f[2] == "right") {
            lr.side = StrokeSide::right;
        } else if (!f[2].empty() && f[2] != "unknown") {
            issues.report<DataError>({file, "label", "unknown stroke side '" + f[2] + "'", row, {}});
        }
        if (!out.emplace(f[0], lr).second) {
            issues.report<DataError>({file, "label", "duplicate patient id '" + f[0] + "'", row, {}});
        }
    }
    return out;
}

Cohort scan_cohort(const fs::path& manifest_path, Issues& issues) {
    Cohort cohort;
    nlohmann::json manifest;
    {
        std::ifstream in(manifest_path);
        if (!in) throw IngestError("cannot open manifest " + manifest_path.string());
        try {
            in >> manifest;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
        }
    }
    const auto base = manifest_path.parent_path();
    try {
        if (manifest.contains("areas")) {
            cohort.areas = load_areas_csv(base / manifest.at("areas").get<std::string>());
        } else {
            cohort.areas = default_brodmann_areas();
        }
        const auto labels = read_labels(base / manifest.at("labels").get<std::string>(), issues);
        const auto n = cohort.areas.size();

        for (const auto& [id, bands] : manifest.at("patients").items()) {
            PatientRecord rec;
            rec.patient_id = id;
            bool complete = true;
            for (Band b : kAllBands) {
                const std::string bname(band_name(b));
                if (!bands.contains(bname)) {
                    issues.report<IngestError>({manifest_path.string(), "missing",
                                                "patient " + id + ": no " + bname + " matrix listed",
                                                {}, {}});
                    complete = false;
                    continue;
                }
                const auto path = base / bands.at(bname).get<std::string>();
                if (!fs::exists(path)) {
                    issues.report<IngestError>({path.string(), "missing",
                                                "patient " + id + ": " + bname +
                                                    " matrix file not found",
                                                {}, {}});
                    complete = false;
                    continue;
                }
                auto w = check_matrix(parse_matrix_file(path), path.string(), n, issues);
                if (!w) {
                    complete = false;
                    continue;
                }
                rec.matrices.emplace_back(b, n, std::move(*w));
            }
            auto it = labels.find(id);
            if (it == labels.end()) {
                issues.report<DataError>(
                    {manifest_path.string(), "label", "patient " + id + " has no label row", {}, {}});
                complete = false;
            } else {
                rec.nihss = it->second.nihss;
                rec.stroke_side = it->second.side;
            }
            if (complete) cohort.patients.push_back(std::move(rec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    return cohort;
}

} // namespace

std::vector<double> read_matrix_csv(const fs::path& path, std::size_t& n_out) {
    Issues issues(nullptr);
    const auto pm = parse_matrix_file(path);
    if (pm.error && *pm.error == "cannot open") throw IngestError("cannot open " + path.string());
    auto w = check_matrix(pm, path.string(), pm.rows, issues);
    n_out = pm.rows;
    return std::move(*w);
}

std::string format_matrix_csv(const ConnectivityMatrix& m) {
    std::string out;
    const auto n = m.size();
    out.reserve(n * n * 12);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j) out += ',';
            out += format_g9(m(i, j));
        }
        out += '\n';
    }
    return out;
}

Cohort load_cohort(const fs::path& manifest_path) {
    Issues issues(nullptr);
    Cohort c = scan_cohort(manifest_path, issues);
    c.validate();
    return c;
}

std::vector<Violation> validate_cohort_files(const fs::path& manifest_path) {
    std::vector<Violation> out;
    Issues issues(&out);
    try {
        scan_cohort(manifest_path, issues);
    } catch (const Error& e) {
        out.push_back({manifest_path.string(), e.kind(), e.what(), {}, {}});
    }
    return out;
}

void save_cohort(const Cohort& cohort, const fs::path& dir) {
    cohort.validate();
    std::error_code ec;
    fs::create_directories(dir / "matrices", ec);
    if (ec) throw IoError("cannot create " + (dir / "matrices").string() + ": " + ec.message());

    auto write = [](const fs::path& p, const std::string& content) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw IoError("cannot write " + p.string());
        out << content;
        if (!out) throw IoError("failed writing " + p.string());
    };

    save_areas_csv(cohort.areas, dir / "areas.csv");
    nlohmann::ordered_json manifest;
    manifest["version"] = 1;
    manifest["areas"] = "areas.csv";
    manifest["labels"] = "labels.csv";
    nlohmann::ordered_json patients = nlohmann::ordered_json::object();
    std::string labels = "patient_id,nihss,stroke_side\n";
    auto sorted = cohort.patients;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });
    for (const auto& p : sorted) {
        nlohmann::ordered_json bands;
        for (Band b : kAllBands) {
            const auto rel = "matrices/" + p.patient_id + "_" + std::string(band_name(b)) + ".csv";
            write(dir / rel, format_matrix_csv(p.matrix(b)));
            bands[std::string(band_name(b))] = rel;
        }
        patients[p.patient_id] = std::move(bands);
        labels += p.patient_id + "," + std::to_string(p.nihss) + "," +
                  std::string(stroke_side_name(p.stroke_side)) + "\n";
    }
    manifest["patients"] = std::move(patients);
    write(dir / "labels.csv", labels);
    write(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Synthetic cohort

std::vector<std::size_t> lesion_areas(const std::vector<BrodmannArea>& areas, StrokeSide side,
                                      std::size_t lesion_size) {
    const std::string center_label = side == StrokeSide::left ? "BA4-L" : "BA4-R";
    auto center = std::find_if(areas.begin(), areas.end(),
                               [&](const BrodmannArea& a) { return a.label == center_label; });
    const BrodmannArea& c = center != areas.end() ? *center : areas.front();
    std::vector<std::size_t> order(areas.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return centroid_distance(c, areas[a]) < centroid_distance(c, areas[b]);
    });
    order.resize(std::min(lesion_size, order.size()));
    std::sort(order.begin(), order.end());
    return order;
}

double lesion_scale(const SynthConfig& config, int nihss) {
    const double span = static_cast<double>(config.nihss_max - config.nihss_min);
    const double severity = span > 0 ? (nihss - config.nihss_min) / span : 0.0;
    return 1.0 - config.attenuation * std::clamp(severity, 0.0, 1.0);
}

Cohort synth_cohort(std::size_t n_patients, std::uint64_t seed, const SynthConfig& config,
                    const std::vector<BrodmannArea>& areas_in) {
    if (n_patients < 1) throw ArgumentError("synth_cohort: n_patients must be >= 1");
    if (config.nihss_min < kMinNihss || config.nihss_max > kMaxNihss ||
        config.nihss_min > config.nihss_max) {
        throw ArgumentError("synth_cohort: NIHSS range must lie within [2, 42]");
    }
    if (config.attenuation < 0.0 || config.attenuation > 1.0 || config.noise_amplitude < 0.0 ||
        config.length_scale_mm <= 0.0) {
        throw ArgumentError("synth_cohort: invalid generator parameters");
    }
    Cohort cohort;
    cohort.areas = areas_in.empty() ? default_brodmann_areas() : areas_in;
    validate_areas(cohort.areas);
    const auto n = cohort.areas.size();
    Rng rng(seed);

    std::vector<double> base(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double d = centroid_distance(cohort.areas[i], cohort.areas[j]);
            base[i * n + j] = config.floor + config.amplitude * std::exp(-d / config.length_scale_mm);
        }
    }

    // Stratified class assignment, then NIHSS uniform within the class range.
    struct Range {
        int lo, hi;
    };
    const Range class_ranges[] = {{std::max(config.nihss_min, 0), std::min(config.nihss_max, 8)},
                                  {std::max(config.nihss_min, 9), std::min(config.nihss_max, 15)},
                                  {std::max(config.nihss_min, 16), config.nihss_max}};
    std::vector<int> usable;
    for (int c = 0; c < 3; ++c) {
        if (class_ranges[c].lo <= class_ranges[c].hi) usable.push_back(c);
    }
    std::vector<int> classes(n_patients);
    for (std::size_t i = 0; i < n_patients; ++i) classes[i] = usable[i % usable.size()];
    rng.shuffle(std::span<int>(classes));

    const int width = n_patients >= 1000 ? static_cast<int>(std::to_string(n_patients - 1).size()) : 3;
    std::map<StrokeSide, std::vector<std::size_t>> lesions{
        {StrokeSide::left, lesion_areas(cohort.areas, StrokeSide::left, config.lesion_size)},
        {StrokeSide::right, lesion_areas(cohort.areas, StrokeSide::right, config.lesion_size)}};

    for (std::size_t p = 0; p < n_patients; ++p) {
        PatientRecord rec;
        char id[32];
        std::snprintf(id, sizeof id, "P%0*zu", width, p + 1);
        rec.patient_id = id;
        const auto& r = class_ranges[classes[p]];
        rec.nihss = r.lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(r.hi - r.lo + 1)));
        rec.stroke_side = rng.below(2) == 0 ? StrokeSide::left : StrokeSide::right;

        std::vector<char> in_lesion(n, 0);
        for (auto a : lesions[rec.stroke_side]) in_lesion[a] = 1;
        const double scale = lesion_scale(config, rec.nihss);

        for (Band b : kAllBands) {
            const bool affected = b == Band::alpha1 || b == Band::alpha2 || b == Band::beta1;
            std::vector<double> w(n * n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j) {
                    double v = base[i * n + j];
                    if (affected && in_lesion[i] && in_lesion[j]) v *= scale;
                    v += config.noise_amplitude * (2.0 * rng.uniform() - 1.0);
                    v = round_g9(std::clamp(v, 0.0, 1.0));
                    w[i * n + j] = v;
                    w[j * n + i] = v;
                }
            }
            rec.matrices.emplace_back(b, n, std::move(w));
        }
        cohort.patients.push_back(std::move(rec));
    }
    cohort.validate();
    return cohort;
}

} // namespace neurograph
