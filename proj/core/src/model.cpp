#include "nestfuse/model.hpp"

#include <cmath>
#include <limits>

#include "nestfuse/error.hpp"

namespace nestfuse {

using ad::Tape;
using ad::Var;

Mat ScaleNorm::normalize(const Mat &x) const {
    return ((x.rowwise() - mean).array().rowwise() / std.array()).matrix();
}

Mat ScaleNorm::denormalize(const Mat &x) const {
    return ((x.array().rowwise() * std.array()).rowwise() + mean.array()).matrix();
}

ScaleNorm compute_scale_norm(const DataScale &scale) {
    const Mat x = scale.records.cast<double>();
    ScaleNorm n;
    n.scale = scale.id;
    n.mean = x.colwise().mean();
    const double denom = x.rows() > 1 ? double(x.rows() - 1) : 1.0;
    n.std = ((x.rowwise() - n.mean).array().square().colwise().sum() / denom).sqrt();
    for (Eigen::Index j = 0; j < n.std.size(); ++j) {
        if (!(n.std[j] > 1e-8)) n.std[j] = 1.0;
    }
    n.mean = n.mean.cast<float>().cast<double>();
    n.std = n.std.cast<float>().cast<double>();
    return n;
}

std::size_t resolved_token_dim(const ModelConfig &cfg, const std::vector<std::size_t> &dims) {
    std::size_t maxdim = 0, total = 0;
    for (auto d : dims) {
        maxdim = std::max(maxdim, d);
        total += d;
    }
    if (cfg.heads < 1) fail(ErrorKind::kConfig, "heads must be >= 1");
    const auto h = std::size_t(cfg.heads);
    if (cfg.token_dim == 0) return (total + h - 1) / h * h;
    if (cfg.token_dim < maxdim) {
        fail(ErrorKind::kConfig, "token dim " + std::to_string(cfg.token_dim) + " below largest scale dim " +
                                     std::to_string(maxdim));
    }
    return cfg.token_dim;
}

Mat sinusoidal_positions(std::size_t length, std::size_t width) {
    Mat pe(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(width));
    for (std::size_t p = 0; p < length; ++p) {
        for (std::size_t i = 0; i < width; ++i) {
            const double freq = std::pow(10000.0, -double(i - i % 2) / double(width));
            pe(Eigen::Index(p), Eigen::Index(i)) = i % 2 == 0 ? std::sin(double(p) * freq) : std::cos(double(p) * freq);
        }
    }
    return pe;
}

NestedFusionModel::NestedFusionModel(ModelConfig cfg, std::vector<ScaleNorm> norms)
    : cfg_(std::move(cfg)), norms_(std::move(norms)), params_(cfg_.seed) {
    build();
}

NestedFusionModel NestedFusionModel::for_dataset(const MultiScaleDataset &ds, ModelConfig cfg) {
    std::vector<ScaleNorm> norms;
    for (const auto &s : ds.scales) norms.push_back(compute_scale_norm(s));
    return NestedFusionModel(std::move(cfg), std::move(norms));
}

void NestedFusionModel::build() {
    if (norms_.empty()) fail(ErrorKind::kConfig, "model needs at least one scale");
    if (cfg_.latent_dim < 1) fail(ErrorKind::kConfig, "latent dim must be >= 1");
    if (cfg_.encoder_depth < 0 || cfg_.decoder_depth < 0 || cfg_.aggregate_depth < 0) {
        fail(ErrorKind::kConfig, "depths must be >= 0");
    }
    if (!cfg_.scale_weights.empty() && cfg_.scale_weights.size() != norms_.size()) {
        fail(ErrorKind::kConfig, "scale_weights needs one entry per scale");
    }
    if (cfg_.aggregate_width % std::size_t(std::max(cfg_.heads, 1)) != 0) {
        fail(ErrorKind::kConfig, "aggregate width must be divisible by heads");
    }
    std::vector<std::size_t> dims;
    for (const auto &n : norms_) dims.push_back(std::size_t(n.mean.size()));
    const auto token = Eigen::Index(resolved_token_dim(cfg_, dims));
    cfg_.token_dim = std::size_t(token);
    const auto dz = Eigen::Index(cfg_.latent_dim);
    const auto base = norms_.size() - 1;

    for (std::size_t l = 0; l < norms_.size(); ++l) {
        tokenizers_.emplace_back(params_, "tokenizer." + norms_[l].scale, Eigen::Index(dims[l]), token);
        type_embeddings_.push_back(params_.add("type_embedding." + norms_[l].scale, 1, token, ad::Init::kZeros));
    }
    for (int i = 0; i < cfg_.encoder_depth; ++i) {
        encoder_.emplace_back(params_, "encoder.block" + std::to_string(i), token, cfg_.heads,
                              Eigen::Index(cfg_.encoder_hidden));
    }
    encoder_norm_ = ad::LayerNorm(params_, "encoder.norm", token);
    mu_head_ = ad::Linear(params_, "encoder.mu", token, dz);
    sigma_head_ = ad::Linear(params_, "encoder.sigma", token, dz);

    const auto width = Eigen::Index(cfg_.decoder_width);
    base_decoder_ = ad::Mlp(params_, "decoder." + norms_[base].scale, dz, width, cfg_.decoder_depth,
                            Eigen::Index(dims[base]));
    const auto agg = Eigen::Index(cfg_.aggregate_width);
    for (std::size_t l = 0; l < base; ++l) {
        const std::string name = "decoder." + norms_[l].scale;
        AggregateDecoder d;
        d.in = ad::Linear(params_, name + ".in", dz, agg);
        for (int i = 0; i < cfg_.aggregate_depth; ++i) {
            d.blocks.emplace_back(params_, name + ".block" + std::to_string(i), agg, cfg_.heads, 2 * agg);
        }
        d.norm = ad::LayerNorm(params_, name + ".norm", agg);
        d.head = ad::Mlp(params_, name + ".head", agg, width, cfg_.decoder_depth, Eigen::Index(dims[l]));
        aggregate_.push_back(std::move(d));
    }
    for (std::size_t l = 0; l < norms_.size(); ++l) {
        obs_logvar_.push_back(
            params_.add("observation." + norms_[l].scale + ".logvar", 1, Eigen::Index(dims[l]), ad::Init::kZeros));
    }
    params_.round_to_float();
}

std::size_t NestedFusionModel::level_of(std::string_view scale_id) const {
    for (std::size_t l = 0; l < norms_.size(); ++l)
        if (norms_[l].scale == scale_id) return l;
    fail(ErrorKind::kInvalidReference, "model has no scale '" + std::string(scale_id) + "'");
}

void NestedFusionModel::check_compatible(const MultiScaleDataset &ds) const {
    if (ds.depth() != norms_.size()) {
        fail(ErrorKind::kValidation, "checkpoint has " + std::to_string(norms_.size()) + " scales, dataset has " +
                                         std::to_string(ds.depth()));
    }
    for (std::size_t l = 0; l < norms_.size(); ++l) {
        if (ds.scales[l].id != norms_[l].scale || ds.scales[l].dim() != scale_dim(l)) {
            fail(ErrorKind::kValidation, "checkpoint scale '" + norms_[l].scale + "' (dim " +
                                             std::to_string(scale_dim(l)) + ") does not match dataset scale '" +
                                             ds.scales[l].id + "' (dim " + std::to_string(ds.scales[l].dim()) + ")");
        }
    }
}

PreparedGroup NestedFusionModel::prepare(const ScanGroup &group) const {
    if (group.nodes.empty()) fail(ErrorKind::kInference, "empty scan group");
    if (group.levels != norms_.size()) {
        fail(ErrorKind::kInference, "scan group spans " + std::to_string(group.levels) + " scales, model has " +
                                        std::to_string(norms_.size()));
    }
    PreparedGroup g;
    g.root_index = group.root_index;
    g.levels = group.levels;
    g.level_inputs.resize(g.levels);
    g.level_positions.resize(g.levels);
    std::vector<std::vector<const Eigen::VectorXf *>> rows(g.levels);
    for (std::size_t p = 0; p < group.nodes.size(); ++p) {
        const auto &n = group.nodes[p];
        if (std::size_t(n.values.size()) != scale_dim(n.level)) {
            fail(ErrorKind::kInference, "record of scale '" + norms_[n.level].scale + "' has dim " +
                                            std::to_string(n.values.size()) + ", expected " +
                                            std::to_string(scale_dim(n.level)));
        }
        g.node_level.push_back(n.level);
        g.level_positions[n.level].push_back(p);
        rows[n.level].push_back(&n.values);
    }
    for (std::size_t l = 0; l < g.levels; ++l) {
        Mat x(Eigen::Index(rows[l].size()), Eigen::Index(scale_dim(l)));
        for (std::size_t r = 0; r < rows[l].size(); ++r) x.row(Eigen::Index(r)) = rows[l][r]->cast<double>().transpose();
        g.level_inputs[l] = rows[l].empty() ? x : norms_[l].normalize(x);
    }
    const auto base = g.levels - 1;
    g.base_positions = group.base_positions();
    if (g.base_positions.empty()) fail(ErrorKind::kInference, "scan group has no base-scale members");
    for (auto p : g.base_positions) g.base_indices.push_back(group.nodes[p].index);
    Mat bt(Eigen::Index(g.base_positions.size()), Eigen::Index(scale_dim(base)));
    for (std::size_t s = 0; s < g.base_positions.size(); ++s) {
        bt.row(Eigen::Index(s)) = group.nodes[g.base_positions[s]].values.cast<double>().transpose();
    }
    g.base_targets = norms_[base].normalize(bt);
    for (std::size_t l = 0; l < base; ++l) {
        for (const auto &[index, pos] : group.members(l)) {
            PreparedGroup::Aggregate a;
            a.level = l;
            a.index = index;
            a.slots = group.base_slots_under(pos);
            a.target = norms_[l].normalize(group.nodes[pos].values.cast<double>().transpose());
            g.aggregates.push_back(std::move(a));
        }
    }
    return g;
}

Var NestedFusionModel::tokenize_graph(Tape &t, const PreparedGroup &g) {
    std::vector<Var> parts;
    std::vector<std::size_t> order(g.sequence_length());
    std::size_t row = 0;
    for (std::size_t l = 0; l < g.levels; ++l) {
        if (g.level_positions[l].empty()) continue;
        Var x = tokenizers_[l].forward(t, params_, t.constant(g.level_inputs[l]));
        parts.push_back(ad::add_rowvec(x, t.param(params_, type_embeddings_[l])));
        for (auto p : g.level_positions[l]) order[p] = row++;
    }
    Var stacked = parts.size() == 1 ? parts.front() : ad::concat_rows(parts);
    Var seq = ad::gather_rows(stacked, order);
    if (cfg_.positional) seq = seq + t.constant(sinusoidal_positions(g.sequence_length(), cfg_.token_dim));
    return seq;
}

NestedFusionModel::Encoded NestedFusionModel::encode_graph(Tape &t, const PreparedGroup &g) {
    Var h = ad::run_blocks(encoder_, t, params_, tokenize_graph(t, g));
    h = encoder_norm_.forward(t, params_, ad::gather_rows(h, g.base_positions));
    Var mu = mu_head_.forward(t, params_, h);
    Var sigma = ad::add_scalar(ad::softplus(sigma_head_.forward(t, params_, h)), kSigmaFloor);
    return {mu, sigma};
}

Var NestedFusionModel::decode_base_graph(Tape &t, Var z) { return base_decoder_.forward(t, params_, z); }

Var NestedFusionModel::decode_aggregate_graph(Tape &t, Var zs, std::size_t level) {
    if (level + 1 >= norms_.size()) fail(ErrorKind::kInvalidReference, "aggregate decoding needs a non-base scale");
    if (zs.rows() < 1) fail(ErrorKind::kInference, "aggregate decoding of an empty latent set");
    const auto &d = aggregate_[level];
    Var h = d.in.forward(t, params_, zs);
    h = ad::run_blocks(d.blocks, t, params_, h);
    h = ad::mean_rows(d.norm.forward(t, params_, h));
    return d.head.forward(t, params_, h);
}

NestedFusionModel::ElboGraph NestedFusionModel::elbo_graph(Tape &t, const PreparedGroup &g, const Mat &eps) {
    const auto m = Eigen::Index(g.base_positions.size());
    if (eps.rows() != m || eps.cols() != Eigen::Index(cfg_.latent_dim)) {
        fail(ErrorKind::kTraining, "eps must be " + std::to_string(m) + " x " + std::to_string(cfg_.latent_dim));
    }
    auto weight = [&](std::size_t l) { return cfg_.scale_weights.empty() ? 1.0 : cfg_.scale_weights[l]; };
    const auto base = g.levels - 1;

    const Encoded enc = encode_graph(t, g);
    const Var z = enc.mu + ad::mul(enc.sigma, t.constant(eps));

    Var nll_base = ad::scale(
        ad::gaussian_nll(decode_base_graph(t, z), g.base_targets, t.param(params_, obs_logvar_[base])), weight(base));

    Var nll_agg = t.constant(Mat::Zero(1, 1));
    for (const auto &a : g.aggregates) {
        Var pred = decode_aggregate_graph(t, ad::gather_rows(z, a.slots), a.level);
        Var nll = ad::gaussian_nll(pred, a.target, t.param(params_, obs_logvar_[a.level]));
        nll_agg = nll_agg + ad::scale(nll, weight(a.level));
    }
    Var kl = ad::scale(ad::kl_standard_normal(enc.mu, enc.sigma), cfg_.kl_weight);
    return {nll_agg + nll_base + kl, nll_agg, nll_base, kl};
}

Mat NestedFusionModel::tokenize(const ScanGroup &group) const {
    Tape t(false);
    auto &self = const_cast<NestedFusionModel &>(*this);
    return self.tokenize_graph(t, prepare(group)).value();
}

std::vector<LatentEncoding> NestedFusionModel::encode(const ScanGroup &group, const Mat *eps) const {
    const auto g = prepare(group);
    Tape t(false);
    auto &self = const_cast<NestedFusionModel &>(*this);
    const auto enc = self.encode_graph(t, g);
    const Mat &mu = enc.mu.value();
    const Mat &sigma = enc.sigma.value();
    if (!mu.allFinite() || !sigma.allFinite()) {
        fail(ErrorKind::kInference, "non-finite activations encoding group " + std::to_string(group.root_index));
    }
    if (eps && (eps->rows() != mu.rows() || eps->cols() != mu.cols())) {
        fail(ErrorKind::kInference, "eps shape does not match the group's base members");
    }
    std::vector<LatentEncoding> out(std::size_t(mu.rows()));
    for (Eigen::Index i = 0; i < mu.rows(); ++i) {
        auto &e = out[std::size_t(i)];
        e.mu = mu.row(i).transpose();
        e.sigma = sigma.row(i).transpose();
        e.sample = eps ? Eigen::VectorXd(e.mu.array() + e.sigma.array() * eps->row(i).transpose().array()) : e.mu;
        e.base_index = g.base_indices[std::size_t(i)];
    }
    return out;
}

Mat NestedFusionModel::decode_base_rows(const Mat &zs) const {
    if (zs.cols() != Eigen::Index(cfg_.latent_dim)) fail(ErrorKind::kInference, "latent width mismatch");
    if (!zs.allFinite()) fail(ErrorKind::kInference, "non-finite latent input");
    Tape t(false);
    auto &self = const_cast<NestedFusionModel &>(*this);
    return norms_.back().denormalize(self.decode_base_graph(t, t.constant(zs)).value());
}

Eigen::VectorXd NestedFusionModel::decode_base(const Eigen::VectorXd &z) const {
    return decode_base_rows(z.transpose()).row(0).transpose();
}

Eigen::VectorXd NestedFusionModel::decode_aggregate_level(const Mat &zs, std::size_t level) const {
    if (zs.rows() < 1) fail(ErrorKind::kInference, "aggregate decoding of an empty latent set");
    if (zs.cols() != Eigen::Index(cfg_.latent_dim)) fail(ErrorKind::kInference, "latent width mismatch");
    if (!zs.allFinite()) fail(ErrorKind::kInference, "non-finite latent input");
    Tape t(false);
    auto &self = const_cast<NestedFusionModel &>(*this);
    const Mat out = self.decode_aggregate_graph(t, t.constant(zs), level).value();
    return norms_[level].denormalize(out).row(0).transpose();
}

Eigen::VectorXd NestedFusionModel::decode_aggregate(const Mat &zs, std::string_view scale_id) const {
    return decode_aggregate_level(zs, level_of(scale_id));
}

ElboTerms NestedFusionModel::elbo(const ScanGroup &group, const Mat &eps) const {
    Tape t(false);
    auto &self = const_cast<NestedFusionModel &>(*this);
    const auto e = self.elbo_graph(t, prepare(group), eps);
    return {e.total.scalar(), e.nll_aggregate.scalar(), e.nll_base.scalar(), e.kl.scalar()};
}

Reconstruction reconstruct_dataset(const MultiScaleDataset &ds, const NestedFusionModel &model) {
    model.check_compatible(ds);
    Reconstruction rec;
    for (std::size_t l = 0; l < ds.depth(); ++l) {
        rec.predictions.push_back(Mat::Zero(Eigen::Index(ds.scales[l].size()), Eigen::Index(ds.scales[l].dim())));
        rec.coverage.emplace_back(ds.scales[l].size(), 0);
    }
    const auto base = ds.base_level();
    for (std::size_t r = 0; r < ds.scales[0].size(); ++r) {
        const auto group = make_group(ds, Index(r));
        const auto g = model.prepare(group);
        const auto enc = model.encode(group);
        Mat mu(Eigen::Index(enc.size()), Eigen::Index(model.config().latent_dim));
        for (std::size_t i = 0; i < enc.size(); ++i) mu.row(Eigen::Index(i)) = enc[i].mu.transpose();
        const Mat pred = model.decode_base_rows(mu);
        for (std::size_t i = 0; i < enc.size(); ++i) {
            rec.predictions[base].row(enc[i].base_index) += pred.row(Eigen::Index(i));
            rec.coverage[base][enc[i].base_index] += 1;
        }
        for (const auto &a : g.aggregates) {
            Mat zs(Eigen::Index(a.slots.size()), mu.cols());
            for (std::size_t k = 0; k < a.slots.size(); ++k) zs.row(Eigen::Index(k)) = mu.row(Eigen::Index(a.slots[k]));
            rec.predictions[a.level].row(a.index) += model.decode_aggregate_level(zs, a.level).transpose();
            rec.coverage[a.level][a.index] += 1;
        }
    }
    for (std::size_t l = 0; l < ds.depth(); ++l) {
        for (Eigen::Index i = 0; i < rec.predictions[l].rows(); ++i) {
            const auto c = rec.coverage[l][std::size_t(i)];
            if (c == 0) {
                rec.predictions[l].row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
            } else if (c > 1) {
                rec.predictions[l].row(i) /= double(c);
            }
        }
    }
    return rec;
}

LatentField encode_dataset(const MultiScaleDataset &ds, const NestedFusionModel &model) {
    model.check_compatible(ds);
    LatentField f;
    f.mu = Mat::Zero(Eigen::Index(ds.base().size()), Eigen::Index(model.config().latent_dim));
    f.coverage.assign(ds.base().size(), 0);
    for (std::size_t r = 0; r < ds.scales[0].size(); ++r) {
        for (const auto &e : model.encode(make_group(ds, Index(r)))) {
            f.mu.row(e.base_index) += e.mu.transpose();
            f.coverage[e.base_index] += 1;
        }
    }
    for (Eigen::Index i = 0; i < f.mu.rows(); ++i) {
        const auto c = f.coverage[std::size_t(i)];
        if (c == 0) {
            f.mu.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
        } else if (c > 1) {
            f.mu.row(i) /= double(c);
        }
    }
    return f;
}

}  // namespace nestfuse
