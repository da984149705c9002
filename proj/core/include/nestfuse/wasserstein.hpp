#pragma once

#include <cstdint>
#include <span>

#include "nestfuse/tape.hpp"

namespace nestfuse {

/// Exact W1 between two equal-weight empirical distributions on the line,
/// integrating |F_a^-1 - F_b^-1| over the merged quantile breakpoints.
/// Throws kValidation on an empty sample.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

/// n x d matrix of seeded directions drawn uniformly on the unit sphere.
/// For d = 1 every direction is +1.
ad::Mat projection_directions(std::size_t dim, std::size_t n_proj, std::uint64_t seed);

/// Mean of wasserstein_1d over projections of the rows of a and b.
double sliced_wasserstein(const ad::Mat &a, const ad::Mat &b, std::size_t n_proj, std::uint64_t seed);

inline constexpr std::size_t kDefaultProjections = 256;

}  // namespace nestfuse
