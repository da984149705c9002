#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nestfuse/checkpoint.hpp"
#include "nestfuse/dataset.hpp"
#include "nestfuse/layers.hpp"
#include "nestfuse/model.hpp"
#include "nestfuse/optim.hpp"
#include "nestfuse/train.hpp"

namespace nestfuse {

enum class FlattenMode { kJoint, kConcatenative };

const char *to_string(FlattenMode mode);

/// A two-scale dataset flattened into one row matrix (original units).
///  joint:          one row per parent: parent record, then `budget` child
///                  slots nearest-first; missing slots hold the child mean.
///  concatenative:  one row per (parent, child) edge: parent record, child record.
struct FlattenedView {
    FlattenMode mode = FlattenMode::kJoint;
    Mat matrix;
    std::size_t parent_dim = 0;
    std::size_t child_dim = 0;
    std::size_t budget = 0;                       // joint only
    std::vector<Index> row_parent;                // parent of each row
    std::vector<Index> row_child;                 // concatenative only
    std::vector<std::vector<Index>> slot_children;  // joint only: real children per row, slot order
};

/// `budget` defaults to the largest nesting set. Rejects datasets with more
/// than two scales.
FlattenedView flatten(const MultiScaleDataset &ds, FlattenMode mode, std::optional<std::size_t> budget = {});

/// Concatenative rows for a free-standing two-level group (parent record
/// repeated on every child), in base-member order.
Mat concat_rows_for_group(const ScanGroup &group);

struct PcaModel {
    Eigen::RowVectorXd mean;
    Mat components;               // D x k, orthonormal columns
    Eigen::VectorXd variances;    // k sample variances (divisor M - 1)

    std::size_t latent_dim() const { return std::size_t(components.cols()); }
    Mat encode(const Mat &x) const;
    Mat decode(const Mat &codes) const;
};

/// Centred truncated PCA. Directions with negligible variance are dropped,
/// so the fitted rank can be below `latent_dim`.
PcaModel pca_fit(const Mat &x, std::size_t latent_dim);

struct FlatVaeConfig {
    std::size_t latent_dim = 2;
    std::size_t width = 64;
    int depth = 2;
    double kl_weight = 1.0;
    std::uint64_t seed = 0;
};

/// Diagonal-Gaussian VAE over the rows of a (normalized) matrix.
class FlatVae {
   public:
    FlatVae(FlatVaeConfig cfg, std::size_t input_dim);

    const FlatVaeConfig &config() const { return cfg_; }
    std::size_t input_dim() const { return input_dim_; }
    ad::ParamStore &params() { return params_; }
    const ad::ParamStore &params() const { return params_; }

    struct Encoded {
        ad::Var mu, sigma;
    };
    Encoded encode_graph(ad::Tape &t, ad::Var x);
    ad::Var decode_graph(ad::Tape &t, ad::Var z);
    struct ElboGraph {
        ad::Var total, nll, kl;
    };
    ElboGraph elbo_graph(ad::Tape &t, const Mat &x, const Mat &eps);

    Mat encode_mu(const Mat &x) const;
    Mat encode_sigma(const Mat &x) const;
    Mat decode(const Mat &z) const;

   private:
    FlatVaeConfig cfg_;
    std::size_t input_dim_;
    ad::ParamStore params_;
    ad::Mlp encoder_;
    ad::Linear mu_head_, sigma_head_;
    ad::Mlp decoder_;
    std::size_t logvar_ = 0;
};

struct FlatVaeFit {
    FlatVae vae;
    LossHistory history;
};

/// Rows are the i.i.d. unit; opt.batch_size rows per step.
FlatVaeFit vae_fit(const Mat &x, const FlatVaeConfig &cfg, const OptimizerConfig &opt);

enum class BaselineKind { kJointPca, kJointVae, kConcatPca, kConcatVae };

const char *to_string(BaselineKind kind);
std::optional<BaselineKind> parse_baseline_kind(std::string_view name);
FlattenMode mode_of(BaselineKind kind);
bool is_vae(BaselineKind kind);

/// A fitted baseline: flattening convention, per-scale normalization, and
/// either a PCA or a VAE over normalized rows.
struct BaselineModel {
    BaselineKind kind = BaselineKind::kJointPca;
    std::size_t budget = 0;
    std::vector<ScaleNorm> norms;  // parent, base
    std::optional<PcaModel> pca;
    std::optional<FlatVae> vae;

    std::size_t latent_dim() const;
    Eigen::RowVectorXd column_mean() const;
    Eigen::RowVectorXd column_std() const;
    /// Latent codes for raw (original-unit) rows; eps = 0 for the VAE.
    Mat encode_raw(const Mat &rows) const;
    /// Raw rows reconstructed from latent codes.
    Mat decode_raw(const Mat &codes) const;
};

struct BaselineFit {
    BaselineModel model;
    LossHistory history;  // empty for PCA
};

BaselineFit fit_baseline(const MultiScaleDataset &ds, BaselineKind kind, std::size_t latent_dim,
                         const FlatVaeConfig &vae_cfg, const OptimizerConfig &opt,
                         std::optional<std::size_t> budget = {});

/// Baseline predictions mapped back onto the two scales, original units.
struct BaselineReconstruction {
    Mat parent;                      // per parent: mean over that parent's rows
    Mat base;                        // per base record: mean over rows reaching it, NaN if none
    std::vector<std::uint32_t> base_coverage;
    Mat parent_rows;                 // per flattened row (concatenative: one per edge)
    std::vector<Index> row_parent;
};

BaselineReconstruction baseline_reconstructions(const MultiScaleDataset &ds, const BaselineModel &model);

/// Per-base-record latents (concatenative: mean over the rows holding the
/// record; joint: the parent latent, averaged over covering parents).
LatentField baseline_latents(const MultiScaleDataset &ds, const BaselineModel &model);

CheckpointContainer to_checkpoint(const BaselineModel &model);
BaselineModel baseline_from_checkpoint(const CheckpointContainer &c);

}  // namespace nestfuse
