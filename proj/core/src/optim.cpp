#include "nestfuse/optim.hpp"

#include <cmath>

#include "nestfuse/error.hpp"

namespace nestfuse {

void check_optimizer_config(const OptimizerConfig &cfg) {
    if (!(cfg.learning_rate > 0.0)) fail(ErrorKind::kConfig, "learning rate must be positive");
    if (cfg.clip_norm && !(*cfg.clip_norm > 0.0)) fail(ErrorKind::kConfig, "clip norm must be positive");
    if (cfg.batch_size == 0) fail(ErrorKind::kConfig, "batch size must be positive");
}

namespace ad {

double gradient_norm(const ParamStore &store) {
    double s = 0.0;
    for (const auto &p : store) s += p.grad.squaredNorm();
    return std::sqrt(s);
}

double clip_gradients(ParamStore &store, double max_norm) {
    const double norm = gradient_norm(store);
    if (norm > max_norm && norm > 0.0) {
        const double f = max_norm / norm;
        for (auto &p : store) p.grad *= f;
    }
    return norm;
}

void check_finite_gradients(const ParamStore &store, std::size_t step) {
    for (const auto &p : store) {
        if (!p.grad.allFinite()) {
            fail(ErrorKind::kTraining, "non-finite gradient for '" + p.name + "' at step " + std::to_string(step));
        }
    }
}

void sgd_step(ParamStore &store, double learning_rate) {
    for (auto &p : store) p.value -= learning_rate * p.grad;
}

Adam::Adam(const ParamStore &store, double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto &p : store) {
        m_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
    }
}

void Adam::step(ParamStore &store, double learning_rate) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, double(t_));
    const double c2 = 1.0 - std::pow(beta2_, double(t_));
    std::size_t i = 0;
    for (auto &p : store) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
        p.value.array() -= learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
        ++i;
    }
}

}  // namespace ad
}  // namespace nestfuse
