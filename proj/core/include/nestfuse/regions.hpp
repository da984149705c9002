#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "nestfuse/dataset.hpp"
#include "nestfuse/metrics.hpp"
#include "nestfuse/model.hpp"

namespace nestfuse {

struct Disc {
    double cx = 0.0, cy = 0.0, radius = 0.0;
};

struct Polygon {
    std::vector<std::pair<double, double>> vertices;
};

/// A set of base records, given directly or as a shape in micron coords.
/// JSON forms:
///   {"label": "a", "indices": [0, 5, 9]}
///   {"label": "a", "disc": {"center": [x, y], "radius": r}}
///   {"label": "a", "polygon": [[x, y], [x, y], [x, y], ...]}
struct Region {
    std::string label;
    std::variant<std::vector<Index>, Disc, Polygon> shape;
};

Region parse_region(const std::string &json_text);
std::string region_to_json(const Region &r);

/// A regions file: {"regions": [...], "pairs": [["a", "b"], ...]}. Without
/// "pairs" every unordered pair is compared in file order.
struct RegionSet {
    std::vector<Region> regions;
    std::vector<std::pair<std::string, std::string>> pairs;
};
RegionSet parse_region_set(const std::string &json_text);

/// Sorted member indices. Disc membership is inclusive; polygon membership
/// uses even-odd crossing. Throws kInvalidReference on out-of-range
/// indices, kFormat when a shape needs coordinates that are absent, and
/// kValidation when nothing is selected.
std::vector<Index> resolve_region(const Region &r, std::size_t count, const std::optional<ad::Mat> &coords);

/// Sliced W1 between the latents of two index sets. Uncovered (NaN) rows
/// are dropped; an empty side is a kValidation error.
SeparationResult region_separation(const LatentField &field, const std::vector<Index> &a,
                                   const std::vector<Index> &b, std::size_t n_proj, std::uint64_t seed);

SeparationResult region_separation(const LatentField &field, const std::optional<ad::Mat> &coords, const Region &a,
                                   const Region &b, std::size_t n_proj, std::uint64_t seed);

/// Base coordinates as doubles, if the base scale has them.
std::optional<ad::Mat> base_coords(const MultiScaleDataset &ds);

}  // namespace nestfuse
