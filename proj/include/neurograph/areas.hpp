// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "neurograph/graph.hpp"

namespace neurograph {

/// Built-in centroid table (version 1): 42 areas per hemisphere, left
/// hemisphere first, MNI-like millimeter coordinates. Also shipped as
/// data/brodmann_centroids_v1.csv.
std::vector<BrodmannArea> default_brodmann_areas();

/// CSV with header `index,label,x_mm,y_mm,z_mm`. Indices must be contiguous
/// from 0.
std::vector<BrodmannArea> load_areas_csv(const std::filesystem::path& path);
void save_areas_csv(std::span<const BrodmannArea> areas, const std::filesystem::path& path);

/// Throws StructuralError unless indices are 0..n-1 in order, labels are
/// unique and centroids are finite.
void validate_areas(std::span<const BrodmannArea> areas);

std::vector<std::string> area_labels(std::span<const BrodmannArea> areas);

double centroid_distance(const BrodmannArea& a, const BrodmannArea& b);

} // namespace neurograph
