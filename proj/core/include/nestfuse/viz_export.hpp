#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nestfuse/dataset.hpp"
#include "nestfuse/model.hpp"
#include "nestfuse/regions.hpp"

namespace nestfuse {

inline constexpr int kVizExportVersion = 1;
inline constexpr std::size_t kDefaultHeatmapBins = 300;
inline constexpr std::size_t kDefaultPointCap = 100000;

/// Equal-width 2-D histogram over the bounding box of the points. A
/// degenerate axis is widened to [v - 0.5, v + 0.5]. counts[i * bins + j]
/// holds x bin i, y bin j.
struct Heatmap {
    std::size_t bins = 0;
    double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
    std::vector<std::uint64_t> counts;

    std::uint64_t at(std::size_t i, std::size_t j) const { return counts[i * bins + j]; }
    std::uint64_t total() const;
};

/// Throws kUnsupported unless the latents have exactly two columns.
Heatmap latent_heatmap(const ad::Mat &latents, std::size_t bins = kDefaultHeatmapBins);

/// How latents become colors, with everything a legend needs.
///  ramp      (d = 1): t = (z - min) / (max - min) through `stops`
///  bilinear  (d = 2): per-axis min-max, blended between `corners`
///                     (order: (0,0), (1,0), (0,1), (1,1))
///  rgb       (d = 3): per-channel min-max
/// A zero range maps to 0.
struct ColorMapping {
    std::string mode;
    std::vector<double> mins, maxs;
    std::vector<std::array<double, 3>> stops;
    std::vector<std::array<double, 3>> corners;

    std::array<double, 3> color(const Eigen::VectorXd &z) const;
};

ColorMapping make_color_mapping(const ad::Mat &latents);

struct SpatialRecord {
    Index index = 0;
    double x = 0, y = 0;
    Eigen::VectorXd latent;
    std::array<double, 3> color{};
};

struct SpatialExport {
    std::vector<SpatialRecord> records;  // covered base records, index order
    ColorMapping mapping;
};

/// Colors every covered base record from its (overlap-averaged) latent.
/// Throws kFormat when the base scale has no coordinates.
SpatialExport spatial_color_export(const MultiScaleDataset &ds, const LatentField &field);

struct VizExportOptions {
    std::string model_id;
    std::string model_kind;
    std::size_t bins = kDefaultHeatmapBins;
    std::size_t point_cap = kDefaultPointCap;
    std::uint64_t seed = 0;
    std::vector<Region> regions;
};

/// The single-document export consumed by the viewer and the service.
std::string make_viz_export(const MultiScaleDataset &ds, const LatentField &field, const VizExportOptions &opt);

/// Indices of covered base records kept under the point cap, ascending.
std::vector<Index> subsample_points(const LatentField &field, std::size_t cap, std::uint64_t seed);

/// Structural problems with an export document; empty when valid.
std::vector<std::string> validate_viz_export(const std::string &json_text);

/// What the separation service needs from an export.
struct LoadedExport {
    std::string model_id;
    std::size_t latent_dim = 0;
    LatentField field;
    std::optional<ad::Mat> coords;  // NaN rows for records absent from the export
};

/// Throws kFormat on anything validate_viz_export rejects.
LoadedExport load_viz_export(const std::string &json_text);

}  // namespace nestfuse
