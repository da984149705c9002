#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nestfuse/model.hpp"

namespace nestfuse {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct NamedTensor {
    std::string name;
    Mat value;  // stored as float32
};

/// Versioned single-file container shared by every model kind:
///
///   bytes 0..7    magic "NFCKPT\0\0"
///   u32 LE        format version
///   u32 LE        manifest length in bytes
///   manifest      UTF-8 JSON: {"format_version", "kind", "config", "tensors":
///                 [{"name", "rows", "cols", "offset"}]}; offset counts bytes
///                 from the start of the blob section
///   blobs         float32 LE, column-major, manifest order
struct CheckpointContainer {
    std::string kind;
    std::string config_json;  // JSON object text
    std::vector<NamedTensor> tensors;

    const NamedTensor &tensor(const std::string &name) const;
};

std::string encode_checkpoint(const CheckpointContainer &c);
CheckpointContainer decode_checkpoint(const std::string &bytes);

void write_checkpoint(const CheckpointContainer &c, const std::filesystem::path &path);
CheckpointContainer read_checkpoint(const std::filesystem::path &path);

inline constexpr const char *kNestedFusionKind = "nested-fusion";

CheckpointContainer to_checkpoint(const NestedFusionModel &model);
NestedFusionModel nested_fusion_from_checkpoint(const CheckpointContainer &c);

std::string model_config_to_json(const ModelConfig &cfg);
ModelConfig model_config_from_json(const std::string &text);

}  // namespace nestfuse
