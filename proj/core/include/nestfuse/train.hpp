#pragma once

#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nestfuse/error.hpp"
#include "nestfuse/model.hpp"
#include "nestfuse/optim.hpp"

namespace nestfuse {

struct LossRecord {
    std::size_t step = 0;
    double total = 0.0;
    std::vector<double> terms;
};

struct LossHistory {
    std::vector<std::string> term_names;
    std::vector<LossRecord> records;

    /// "step,total,<terms...>" with every value at round-trip precision.
    std::string to_csv() const;
    /// Mean total over records [end - window, end).
    double moving_average(std::size_t end, std::size_t window) const;
};

/// Thrown when a loss or gradient goes non-finite; carries the history
/// recorded up to the failing step.
class TrainingDiverged : public Error {
   public:
    TrainingDiverged(const std::string &what, LossHistory history)
        : Error(ErrorKind::kTraining, what), history_(std::move(history)) {}
    const LossHistory &history() const { return history_; }

   private:
    LossHistory history_;
};

/// One minibatch: returns {total, term...} scalars recorded on the tape.
using BatchLoss = std::function<std::vector<ad::Var>(ad::Tape &, std::span<const std::size_t>, std::mt19937_64 &)>;

/// Adam with global-norm clipping over shuffled minibatches of item
/// indices. Single-threaded and deterministic given the optimizer seed.
LossHistory train_loop(ad::ParamStore &store, const OptimizerConfig &opt, std::size_t items,
                       std::vector<std::string> term_names, const BatchLoss &batch_loss);

struct TrainResult {
    NestedFusionModel model;
    LossHistory history;
};

/// Minibatches are sets of scan groups; one eps draw per base member per
/// step. Parameters are rounded through float32 on return so the result
/// is exactly what a checkpoint stores.
TrainResult train_nested_fusion(const MultiScaleDataset &ds, const ModelConfig &cfg, const OptimizerConfig &opt);

/// Standard normal draws, rows x cols, column-major fill order.
Mat draw_standard_normal(std::mt19937_64 &rng, Eigen::Index rows, Eigen::Index cols);

}  // namespace nestfuse
