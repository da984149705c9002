#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "nestfuse/baselines.hpp"
#include "nestfuse/checkpoint.hpp"
#include "nestfuse/metrics.hpp"
#include "nestfuse/model.hpp"
#include "nestfuse/regions.hpp"

namespace nestfuse {

/// Either model family behind one interface.
struct AnyModel {
    std::string kind;
    std::optional<NestedFusionModel> fusion;
    std::optional<BaselineModel> baseline;

    std::size_t latent_dim() const;
    LatentField latents(const MultiScaleDataset &ds) const;
    CheckpointContainer checkpoint() const;
};

AnyModel model_from_checkpoint(const CheckpointContainer &c);
AnyModel load_model(const std::filesystem::path &path);

/// R² for every layer. Concatenative baselines score the parent layer per
/// edge row; the per-parent mean pooling goes to `supplementary`.
EvalReport evaluate(const MultiScaleDataset &ds, const AnyModel &model, const std::string &model_id);

/// Adds one separation per region pair of the set.
void add_separations(EvalReport &report, const MultiScaleDataset &ds, const LatentField &field, const RegionSet &set,
                     std::size_t n_proj, std::uint64_t seed);

}  // namespace nestfuse
