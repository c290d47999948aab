// SPDX-License-Identifier: Apache-2.0
#include "neurograph/areas.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "neurograph/errors.hpp"

namespace neurograph {

namespace {

struct AreaSeed {
    int ba;
    double x, y, z;  // right hemisphere; left mirrors x
};

// Approximate centroids of the 42 Brodmann areas per hemisphere used by
// common cortical source-space atlases.
constexpr AreaSeed kRightHemisphere[] = {
    {1, 50, -22, 52},  {2, 45, -32, 50},  {3, 40, -25, 50},  {4, 35, -20, 58},
    {5, 20, -45, 65},  {6, 30, 0, 55},    {7, 20, -62, 52},  {8, 28, 25, 45},
    {9, 30, 40, 32},   {10, 25, 58, 5},   {11, 20, 40, -18}, {13, 38, -5, 10},
    {17, 10, -88, 4},  {18, 18, -85, 0},  {19, 35, -78, 12}, {20, 50, -25, -25},
    {21, 58, -25, -8}, {22, 58, -30, 10}, {23, 5, -40, 28},  {24, 6, 5, 35},
    {25, 6, 15, -12},  {27, 18, -35, 2},  {28, 22, -8, -28}, {29, 6, -48, 12},
    {30, 14, -45, 5},  {31, 8, -50, 35},  {32, 8, 35, 20},   {33, 5, 15, 22},
    {34, 18, 2, -20},  {35, 24, -25, -22}, {36, 32, -30, -22}, {37, 48, -55, -10},
    {38, 40, 15, -30}, {39, 45, -65, 30}, {40, 50, -45, 40}, {41, 45, -25, 10},
    {42, 60, -25, 12}, {43, 58, -8, 15},  {44, 52, 12, 15},  {45, 50, 28, 8},
    {46, 45, 38, 22},  {47, 40, 28, -10},
};

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

} // namespace

std::vector<BrodmannArea> default_brodmann_areas() {
    std::vector<BrodmannArea> areas;
    areas.reserve(kAreaCount);
    for (const char side : {'L', 'R'}) {
        const double sign = side == 'L' ? -1.0 : 1.0;
        for (const auto& s : kRightHemisphere) {
            BrodmannArea a;
            a.index = areas.size();
            a.label = "BA" + std::to_string(s.ba) + "-" + side;
            a.centroid = {sign * s.x, s.y, s.z};
            areas.push_back(std::move(a));
        }
    }
    return areas;
}

void validate_areas(std::span<const BrodmannArea> areas) {
    std::set<std::string> labels;
    for (std::size_t i = 0; i < areas.size(); ++i) {
        if (areas[i].index != i) {
            throw StructuralError("area indices must be contiguous from 0 (row " + std::to_string(i) +
                                  ")");
        }
        if (!labels.insert(areas[i].label).second) {
            throw StructuralError("duplicate area label '" + areas[i].label + "'");
        }
        for (double c : areas[i].centroid) {
            if (!std::isfinite(c)) throw StructuralError("non-finite centroid for " + areas[i].label);
        }
    }
}

std::vector<BrodmannArea> load_areas_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open area table " + path.string());
    std::string line;
    std::getline(in, line);
    if (trim(line) != "index,label,x_mm,y_mm,z_mm") {
        throw DataError(path.string() + ": expected header index,label,x_mm,y_mm,z_mm");
    }
    std::vector<BrodmannArea> areas;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(trim(field));
        if (fields.size() != 5) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
        }
        BrodmannArea a;
        try {
            a.index = std::stoul(fields[0]);
            a.label = fields[1];
            for (int k = 0; k < 3; ++k) a.centroid[k] = std::stod(fields[2 + k]);
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
        areas.push_back(std::move(a));
    }
    validate_areas(areas);
    return areas;
}

void save_areas_csv(std::span<const BrodmannArea> areas, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "index,label,x_mm,y_mm,z_mm\n";
    char buf[64];
    for (const auto& a : areas) {
        out << a.index << ',' << a.label;
        for (double c : a.centroid) {
            std::snprintf(buf, sizeof buf, "%.9g", c);
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::string> area_labels(std::span<const BrodmannArea> areas) {
    std::vector<std::string> labels;
    labels.reserve(areas.size());
    for (const auto& a : areas) labels.push_back(a.label);
    return labels;
}

double centroid_distance(const BrodmannArea& a, const BrodmannArea& b) {
    const double dx = a.centroid[0] - b.centroid[0];
    const double dy = a.centroid[1] - b.centroid[1];
    const double dz = a.centroid[2] - b.centroid[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

} // namespace neurograph
