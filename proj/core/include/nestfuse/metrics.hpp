#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nestfuse/tape.hpp"

namespace nestfuse {

struct RSquared {
    double r2 = 0.0;
    double sse = 0.0;
    double sst = 0.0;
};

/// Pooled coefficient of determination: one global mean per column, sums
/// over every entry. Throws kValidation on shape mismatch and
/// kUndefinedMetric when truth is constant (SST = 0).
RSquared r_squared_terms(const ad::Mat &truth, const ad::Mat &pred);
double r_squared(const ad::Mat &truth, const ad::Mat &pred);

/// Same, restricted to rows whose prediction is entirely finite.
struct CoveredRSquared {
    RSquared fit;
    std::size_t rows = 0;
    std::size_t skipped = 0;
};
CoveredRSquared r_squared_covered(const ad::Mat &truth, const ad::Mat &pred);

struct LayerFit {
    std::string scale;
    std::string rows_kind;  // "records", "edges", "parents"
    RSquared fit;
    std::size_t rows = 0;
    std::size_t skipped = 0;
};

struct SeparationResult {
    std::string region_a;
    std::string region_b;
    double distance = 0.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    std::size_t n_proj = 0;
    std::uint64_t seed = 0;
    std::string method;  // "wasserstein-1d" or "sliced-wasserstein"
};

struct EvalReport {
    std::string model_id;
    std::string kind;
    std::size_t latent_dim = 0;
    std::vector<LayerFit> layers;        // coarsest to finest
    std::vector<LayerFit> supplementary;  // alternative poolings
    std::vector<SeparationResult> separations;

    /// R² of the base layer (R²_p) and the layer directly above it (R²_q).
    const LayerFit &base_fit() const;
    const LayerFit &parent_fit() const;

    std::string to_json() const;
};

/// Side-by-side table, rows sorted by descending R²_q.
std::string comparison_table(std::vector<EvalReport> reports);

}  // namespace nestfuse
