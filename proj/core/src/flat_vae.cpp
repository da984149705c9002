#include <cmath>

#include "nestfuse/baselines.hpp"
#include "nestfuse/error.hpp"

namespace nestfuse {

using ad::Tape;
using ad::Var;

FlatVae::FlatVae(FlatVaeConfig cfg, std::size_t input_dim) : cfg_(cfg), input_dim_(input_dim), params_(cfg.seed) {
    if (cfg_.latent_dim == 0) fail(ErrorKind::kConfig, "VAE latent dim must be positive");
    if (cfg_.width == 0 || cfg_.depth < 1) fail(ErrorKind::kConfig, "VAE needs width > 0 and depth >= 1");
    if (input_dim_ == 0) fail(ErrorKind::kConfig, "VAE input dim must be positive");
    const auto d = Eigen::Index(input_dim_), w = Eigen::Index(cfg_.width), z = Eigen::Index(cfg_.latent_dim);
    encoder_ = ad::Mlp(params_, "encoder", d, w, cfg_.depth - 1, w);
    mu_head_ = ad::Linear(params_, "encoder.mu", w, z);
    sigma_head_ = ad::Linear(params_, "encoder.sigma", w, z);
    decoder_ = ad::Mlp(params_, "decoder", z, w, cfg_.depth, d);
    logvar_ = params_.add("observation.logvar", 1, d, ad::Init::kZeros);
    params_.round_to_float();
}

FlatVae::Encoded FlatVae::encode_graph(Tape &t, Var x) {
    const Var h = ad::gelu(encoder_.forward(t, params_, x));
    const Var mu = mu_head_.forward(t, params_, h);
    const Var sigma = ad::add_scalar(ad::softplus(sigma_head_.forward(t, params_, h)), kSigmaFloor);
    return {mu, sigma};
}

Var FlatVae::decode_graph(Tape &t, Var z) { return decoder_.forward(t, params_, z); }

FlatVae::ElboGraph FlatVae::elbo_graph(Tape &t, const Mat &x, const Mat &eps) {
    if (eps.rows() != x.rows() || eps.cols() != Eigen::Index(cfg_.latent_dim)) {
        fail(ErrorKind::kTraining, "VAE eps has the wrong shape");
    }
    const Encoded enc = encode_graph(t, t.constant(x));
    const Var z = enc.mu + ad::mul(enc.sigma, t.constant(eps));
    const Var nll = ad::gaussian_nll(decode_graph(t, z), x, t.param(params_, logvar_));
    const Var kl = ad::scale(ad::kl_standard_normal(enc.mu, enc.sigma), cfg_.kl_weight);
    return {nll + kl, nll, kl};
}

Mat FlatVae::encode_mu(const Mat &x) const {
    Tape t(false);
    return const_cast<FlatVae &>(*this).encode_graph(t, t.constant(x)).mu.value();
}

Mat FlatVae::encode_sigma(const Mat &x) const {
    Tape t(false);
    return const_cast<FlatVae &>(*this).encode_graph(t, t.constant(x)).sigma.value();
}

Mat FlatVae::decode(const Mat &z) const {
    Tape t(false);
    return const_cast<FlatVae &>(*this).decode_graph(t, t.constant(z)).value();
}

FlatVaeFit vae_fit(const Mat &x, const FlatVaeConfig &cfg, const OptimizerConfig &opt) {
    if (x.rows() == 0) fail(ErrorKind::kTraining, "VAE training matrix is empty");
    if (!x.allFinite()) fail(ErrorKind::kValidation, "VAE training matrix has non-finite values");
    FlatVae vae(cfg, std::size_t(x.cols()));
    const auto dz = Eigen::Index(cfg.latent_dim);
    auto loss = [&](Tape &t, std::span<const std::size_t> batch, std::mt19937_64 &rng) {
        Mat xb(Eigen::Index(batch.size()), x.cols());
        for (std::size_t i = 0; i < batch.size(); ++i) xb.row(Eigen::Index(i)) = x.row(Eigen::Index(batch[i]));
        const Mat eps = draw_standard_normal(rng, xb.rows(), dz);
        const auto e = vae.elbo_graph(t, xb, eps);
        const double inv = 1.0 / double(batch.size());
        return std::vector<Var>{ad::scale(e.total, inv), ad::scale(e.nll, inv), ad::scale(e.kl, inv)};
    };
    LossHistory hist = train_loop(vae.params(), opt, std::size_t(x.rows()), {"nll", "kl"}, loss);
    vae.params().round_to_float();
    return {std::move(vae), std::move(hist)};
}

}  // namespace nestfuse
