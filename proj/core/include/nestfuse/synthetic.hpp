#pragma once

#include <cstdint>
#include <vector>

#include "nestfuse/dataset.hpp"

namespace nestfuse {

/// Two-level "mineral grain" generator: a pixel grid partitioned into K
/// classes by nearest seeded site, coarse scan points on a regular lattice
/// nested by beam radius.
struct SynthConfig {
    std::size_t width = 64;         // pixels
    std::size_t height = 64;        // pixels
    double pitch = 15.0;            // microns between pixel centres
    std::size_t classes = 5;
    std::size_t base_dim = 16;
    std::size_t parent_dim = 8;
    double parent_spacing = 120.0;  // microns between scan points
    double radius = 75.0;           // microns
    double base_noise = 0.1;
    double parent_noise = 0.05;
    std::uint64_t seed = 42;
};

struct SynthTruth {
    std::vector<std::uint32_t> labels;  // per base record
    Eigen::MatrixXf base_prototypes;    // K x base_dim
    Eigen::MatrixXf parent_prototypes;  // K x parent_dim
    Eigen::MatrixXf sites;              // K x 2, microns
};

struct SyntheticDataset {
    MultiScaleDataset dataset;
    SynthTruth truth;
};

inline constexpr const char *kSynthParentScale = "quant";
inline constexpr const char *kSynthBaseScale = "pixel";

/// Pure function of the config: identical configs give identical bytes.
SyntheticDataset generate_synthetic(const SynthConfig &cfg);

/// Scan-point centres used by the generator, row-major over the lattice.
std::vector<Eigen::Vector2f> synth_parent_centres(const SynthConfig &cfg);

struct MixtureGroup {
    ScanGroup group;
    std::vector<std::uint32_t> child_labels;
};

/// A free-standing scan group drawn from the generator's class model:
/// `class_counts[c]` pixels of class c, parent record the count-weighted mean
/// of parent prototypes, both with the configured noise.
MixtureGroup synth_mixture_group(const SynthTruth &truth, const SynthConfig &cfg,
                                 const std::vector<std::size_t> &class_counts, std::uint64_t seed);

}  // namespace nestfuse
