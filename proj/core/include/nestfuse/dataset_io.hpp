#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "nestfuse/dataset.hpp"

namespace nestfuse {

inline constexpr const char *kDatasetFormatVersion = "1";

/// Directory layout:
///   manifest.json            format version, scales, nestings
///   <scale>.f32              little-endian float32, column-major N x dim
///   <scale>.coords.f32       little-endian float32, column-major N x 2
///   <parent>__<child>.nest   per parent: u32 count, then count u32 indices
///   labels.u32               optional per-base-record class labels
void write_dataset(const MultiScaleDataset &ds, const std::filesystem::path &dir,
                   const std::vector<std::uint32_t> *labels = nullptr);

MultiScaleDataset read_dataset(const std::filesystem::path &dir);

std::optional<std::vector<std::uint32_t>> read_labels(const std::filesystem::path &dir);

}  // namespace nestfuse
