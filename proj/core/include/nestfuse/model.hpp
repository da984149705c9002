#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nestfuse/dataset.hpp"
#include "nestfuse/layers.hpp"
#include "nestfuse/tape.hpp"

namespace nestfuse {

using ad::Mat;

/// Per-dimension z-scoring statistics for one scale. Zero-variance
/// dimensions get std 1 so they pass through centred.
struct ScaleNorm {
    std::string scale;
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd std;

    Mat normalize(const Mat &x) const;
    Mat denormalize(const Mat &x) const;
};

/// Stats are rounded through float32 so a checkpoint reproduces them exactly.
ScaleNorm compute_scale_norm(const DataScale &scale);

struct ModelConfig {
    std::size_t latent_dim = 2;
    std::size_t token_dim = 0;  // 0: sum of scale dims, rounded up to a multiple of heads
    int encoder_depth = 2;
    std::size_t encoder_hidden = 64;
    int decoder_depth = 2;  // hidden layers in the MLP heads
    std::size_t decoder_width = 64;
    int aggregate_depth = 2;
    std::size_t aggregate_width = 32;
    int heads = 4;
    double kl_weight = 1.0;
    bool positional = false;           // sinusoidal positions on encoder tokens
    std::vector<double> scale_weights;  // reconstruction weight per scale; empty = 1
    std::uint64_t seed = 0;
};

struct LatentEncoding {
    Eigen::VectorXd mu;
    Eigen::VectorXd sigma;
    Eigen::VectorXd sample;
    Index base_index = 0;
};

struct ElboTerms {
    double total = 0.0;
    double nll_aggregate = 0.0;  // all non-base scales
    double nll_base = 0.0;
    double kl = 0.0;
};

/// Everything about a scan group the model needs, normalized once.
struct PreparedGroup {
    Index root_index = 0;
    std::size_t levels = 0;
    std::vector<std::size_t> node_level;
    std::vector<Mat> level_inputs;                  // normalized rows per level, in sequence order
    std::vector<std::vector<std::size_t>> level_positions;  // sequence positions of those rows
    std::vector<std::size_t> base_positions;        // unique base records, first occurrence
    std::vector<Index> base_indices;
    Mat base_targets;                               // normalized, one row per unique base record
    struct Aggregate {
        std::size_t level;
        Index index;
        std::vector<std::size_t> slots;             // rows of the base latent matrix
        Mat target;                                 // 1 x dim, normalized
    };
    std::vector<Aggregate> aggregates;
    std::size_t sequence_length() const { return node_level.size(); }
};

/// Variational model over a nested dataset: one latent per base record,
/// encoded from the whole scan group, decoded per scale.
class NestedFusionModel {
   public:
    NestedFusionModel(ModelConfig cfg, std::vector<ScaleNorm> norms);

    static NestedFusionModel for_dataset(const MultiScaleDataset &ds, ModelConfig cfg);

    const ModelConfig &config() const { return cfg_; }
    const std::vector<ScaleNorm> &norms() const { return norms_; }
    std::size_t levels() const { return norms_.size(); }
    std::size_t scale_dim(std::size_t level) const { return std::size_t(norms_[level].mean.size()); }
    std::size_t level_of(std::string_view scale_id) const;
    ad::ParamStore &params() { return params_; }
    const ad::ParamStore &params() const { return params_; }

    /// Throws kValidation when scale ids or dims differ from the dataset.
    void check_compatible(const MultiScaleDataset &ds) const;

    PreparedGroup prepare(const ScanGroup &group) const;

    // Graph builders (record onto the given tape).
    ad::Var tokenize_graph(ad::Tape &t, const PreparedGroup &g);
    struct Encoded {
        ad::Var mu, sigma;
    };
    Encoded encode_graph(ad::Tape &t, const PreparedGroup &g);
    ad::Var decode_base_graph(ad::Tape &t, ad::Var z);                       // normalized rows
    ad::Var decode_aggregate_graph(ad::Tape &t, ad::Var zs, std::size_t level);  // 1 x dim, normalized
    struct ElboGraph {
        ad::Var total, nll_aggregate, nll_base, kl;
    };
    ElboGraph elbo_graph(ad::Tape &t, const PreparedGroup &g, const Mat &eps);

    // Inference on frozen parameters.
    Mat tokenize(const ScanGroup &group) const;
    std::vector<LatentEncoding> encode(const ScanGroup &group, const Mat *eps = nullptr) const;
    Eigen::VectorXd decode_base(const Eigen::VectorXd &z) const;
    Mat decode_base_rows(const Mat &zs) const;
    Eigen::VectorXd decode_aggregate(const Mat &zs, std::string_view scale_id) const;
    Eigen::VectorXd decode_aggregate_level(const Mat &zs, std::size_t level) const;
    ElboTerms elbo(const ScanGroup &group, const Mat &eps) const;

   private:
    void build();
    ad::ParamStore &mutable_params() const { return const_cast<ad::ParamStore &>(params_); }

    ModelConfig cfg_;
    std::vector<ScaleNorm> norms_;
    ad::ParamStore params_;

    std::vector<ad::Linear> tokenizers_;
    std::vector<std::size_t> type_embeddings_;
    std::vector<ad::AttentionBlock> encoder_;
    ad::LayerNorm encoder_norm_;
    ad::Linear mu_head_, sigma_head_;
    ad::Mlp base_decoder_;
    struct AggregateDecoder {
        ad::Linear in;
        std::vector<ad::AttentionBlock> blocks;
        ad::LayerNorm norm;
        ad::Mlp head;
    };
    std::vector<AggregateDecoder> aggregate_;  // one per non-base level
    std::vector<std::size_t> obs_logvar_;      // one per level
};

inline constexpr double kSigmaFloor = 1e-4;

/// Resolved token width for a config over the given scale dims.
std::size_t resolved_token_dim(const ModelConfig &cfg, const std::vector<std::size_t> &dims);

/// Fixed sinusoidal position table, rows = positions.
Mat sinusoidal_positions(std::size_t length, std::size_t width);

/// Decoded predictions for every record of every scale, in original units.
/// Records reached by several scan groups get the mean of their per-group
/// predictions; records reached by none are NaN with coverage 0.
struct Reconstruction {
    std::vector<Mat> predictions;                 // per level, N_l x dim_l
    std::vector<std::vector<std::uint32_t>> coverage;  // per level, groups reaching each record
};

Reconstruction reconstruct_dataset(const MultiScaleDataset &ds, const NestedFusionModel &model);

/// Per-base-record latent means (eps = 0), averaged over the groups that
/// contain each record. Uncovered rows are NaN with coverage 0.
struct LatentField {
    Mat mu;
    std::vector<std::uint32_t> coverage;
};

LatentField encode_dataset(const MultiScaleDataset &ds, const NestedFusionModel &model);

}  // namespace nestfuse
