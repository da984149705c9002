#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nestfuse/tape.hpp"

namespace nestfuse {

struct OptimizerConfig {
    double learning_rate = 1e-3;
    std::optional<double> clip_norm = 5.0;
    std::size_t steps = 2000;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
};

void check_optimizer_config(const OptimizerConfig &cfg);

namespace ad {

/// Global L2 norm of all gradients.
double gradient_norm(const ParamStore &store);

/// Rescale gradients so their global norm is at most max_norm. Returns the
/// norm before clipping.
double clip_gradients(ParamStore &store, double max_norm);

/// Throws kTraining naming the step and parameter on NaN/Inf gradients.
void check_finite_gradients(const ParamStore &store, std::size_t step);

void sgd_step(ParamStore &store, double learning_rate);

class Adam {
   public:
    explicit Adam(const ParamStore &store, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(ParamStore &store, double learning_rate);
    std::size_t steps_taken() const { return t_; }

   private:
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Mat> m_, v_;
};

}  // namespace ad
}  // namespace nestfuse
