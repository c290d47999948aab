// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "neurograph/graph.hpp"

namespace neurograph {

enum class StrokeSide : std::uint8_t { unknown = 0, left, right };

std::string_view stroke_side_name(StrokeSide s);  // "" for unknown

enum class SeverityClass : std::uint8_t { A = 0, B = 1, C = 2 };
inline constexpr std::size_t kSeverityClassCount = 3;

std::string_view severity_name(SeverityClass c);

/// A: nihss < 9, B: 9 <= nihss < 16, C: nihss >= 16.
SeverityClass class_of(int nihss);

inline constexpr int kMinNihss = 2;
inline constexpr int kMaxNihss = 42;

struct PatientRecord {
    std::string patient_id;
    std::vector<ConnectivityMatrix> matrices;  // indexed by band_index()
    int nihss = 0;
    StrokeSide stroke_side = StrokeSide::unknown;

    const ConnectivityMatrix& matrix(Band b) const;

    friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

struct Cohort {
    std::vector<PatientRecord> patients;
    std::vector<BrodmannArea> areas;

    /// Throws on duplicate ids, missing bands, wrong matrix size or NIHSS out
    /// of the clinical range.
    void validate() const;
};

bool operator==(const BrodmannArea& a, const BrodmannArea& b);
bool operator==(const Cohort& a, const Cohort& b);

/// Asymmetry tolerated (and averaged away) on ingest.
inline constexpr double kIngestSymmetryTolerance = 1e-6;

/// Reads manifest.json:
///   {"version": 1, "areas": "areas.csv"?, "labels": "labels.csv",
///    "patients": {"<id>": {"delta": "path.csv", ...}}}
/// Paths are relative to the manifest. Patients are ordered by id.
Cohort load_cohort(const std::filesystem::path& manifest_path);

/// Writes manifest.json, labels.csv, areas.csv and one CSV per (patient,
/// band) under `dir`. Weights are written with 9 significant digits.
void save_cohort(const Cohort& cohort, const std::filesystem::path& dir);

/// Parses a matrix CSV (n rows of n comma-separated decimals, no header).
std::vector<double> read_matrix_csv(const std::filesystem::path& path, std::size_t& n_out);
std::string format_matrix_csv(const ConnectivityMatrix& m);

/// One problem found by `validate_cohort_files`.
struct Violation {
    std::string file;
    std::string kind;  // "missing", "dimension", "nan", "negative", "asymmetry", "label", ...
    std::string message;
    std::optional<std::size_t> row;
    std::optional<std::size_t> col;
};

/// Non-throwing scan of a cohort on disk; reports every violation found.
std::vector<Violation> validate_cohort_files(const std::filesystem::path& manifest_path);

// ---------------------------------------------------------------------------
// Synthetic cohort

struct SynthConfig {
    /// Coherence scale: w = floor + amplitude * exp(-distance / length_scale).
    double floor = 0.05;
    double amplitude = 0.85;
    double length_scale_mm = 30.0;
    /// Half-width of i.i.d. uniform noise added per entry.
    double noise_amplitude = 0.04;
    /// Number of areas (nearest to the motor cortex of the stroke side) whose
    /// mutual alpha/beta coherence is attenuated.
    std::size_t lesion_size = 12;
    /// Fractional attenuation at the top of the NIHSS range.
    double attenuation = 0.9;
    int nihss_min = 2;
    int nihss_max = 22;
};

/// Deterministic synthetic cohort. NIHSS is drawn stratified over the three
/// severity classes; every weight is rounded to 9 significant digits so the
/// cohort survives a save/load round trip unchanged.
Cohort synth_cohort(std::size_t n_patients, std::uint64_t seed, const SynthConfig& config = {},
                    const std::vector<BrodmannArea>& areas = {});

/// Indices of the lesion areas used by the generator for the given side.
std::vector<std::size_t> lesion_areas(const std::vector<BrodmannArea>& areas, StrokeSide side,
                                      std::size_t lesion_size);

/// Attenuation factor applied inside the lesion for a given NIHSS.
double lesion_scale(const SynthConfig& config, int nihss);

} // namespace neurograph
