#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "nestfuse/tape.hpp"

namespace nestfuse::ad {

struct GradCheckResult {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::size_t coordinates = 0;
    std::string worst;  // "param[row,col]"
};

struct GradCheckOptions {
    double epsilon = 1e-4;
    std::size_t coords_per_param = 8;  // random subset; 0 = every coordinate
    std::uint64_t seed = 0;
    /// Denominator floor: rel = |ad - fd| / max(|ad|, |fd|, floor).
    double floor = 1e-6;
};

/// The loss builder must record onto the tape it is given and return a
/// scalar. Reverse-mode gradients are compared against central differences
/// (L(x + eps) - L(x - eps)) / (2 eps).
GradCheckResult grad_check(ParamStore &store, const std::function<Var(Tape &)> &loss,
                           const GradCheckOptions &opts = {});

}  // namespace nestfuse::ad
