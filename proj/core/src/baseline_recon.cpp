#include <json.hpp>
#include <limits>

#include "nestfuse/baselines.hpp"
#include "nestfuse/error.hpp"

namespace nestfuse {

using nlohmann::json;

namespace {

struct KindName {
    BaselineKind kind;
    const char *name;
};

constexpr KindName kKinds[] = {
    {BaselineKind::kJointPca, "joint-pca"},
    {BaselineKind::kJointVae, "joint-vae"},
    {BaselineKind::kConcatPca, "concat-pca"},
    {BaselineKind::kConcatVae, "concat-vae"},
};

Eigen::RowVectorXd tile(const Eigen::RowVectorXd &head, const Eigen::RowVectorXd &slot, std::size_t copies) {
    Eigen::RowVectorXd out(head.size() + slot.size() * Eigen::Index(copies));
    out.head(head.size()) = head;
    for (std::size_t k = 0; k < copies; ++k) out.segment(head.size() + Eigen::Index(k) * slot.size(), slot.size()) = slot;
    return out;
}

void check_dataset(const MultiScaleDataset &ds, const BaselineModel &m) {
    if (ds.depth() != 2 || m.norms.size() != 2) {
        fail(ErrorKind::kValidation, "baseline models cover exactly two scales");
    }
    for (std::size_t l = 0; l < 2; ++l) {
        if (ds.scales[l].id != m.norms[l].scale || Eigen::Index(ds.scales[l].dim()) != m.norms[l].mean.size()) {
            fail(ErrorKind::kValidation, "dataset scale '" + ds.scales[l].id + "' (dim " +
                                             std::to_string(ds.scales[l].dim()) + ") does not match model scale '" +
                                             m.norms[l].scale + "'");
        }
    }
}

FlattenedView view_for(const MultiScaleDataset &ds, const BaselineModel &m) {
    check_dataset(ds, m);
    const auto mode = mode_of(m.kind);
    return flatten(ds, mode, mode == FlattenMode::kJoint ? std::optional<std::size_t>(m.budget) : std::nullopt);
}

void average_or_nan(Mat &sums, const std::vector<std::uint32_t> &coverage) {
    for (Eigen::Index i = 0; i < sums.rows(); ++i) {
        const auto c = coverage[std::size_t(i)];
        if (c == 0) {
            sums.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
        } else if (c > 1) {
            sums.row(i) /= double(c);
        }
    }
}

Mat round_float(const Mat &m) { return m.cast<float>().cast<double>(); }

}  // namespace

const char *to_string(BaselineKind kind) {
    for (const auto &k : kKinds)
        if (k.kind == kind) return k.name;
    return "?";
}

std::optional<BaselineKind> parse_baseline_kind(std::string_view name) {
    for (const auto &k : kKinds)
        if (name == k.name) return k.kind;
    return std::nullopt;
}

FlattenMode mode_of(BaselineKind kind) {
    return kind == BaselineKind::kJointPca || kind == BaselineKind::kJointVae ? FlattenMode::kJoint
                                                                              : FlattenMode::kConcatenative;
}

bool is_vae(BaselineKind kind) { return kind == BaselineKind::kJointVae || kind == BaselineKind::kConcatVae; }

std::size_t BaselineModel::latent_dim() const {
    if (pca) return pca->latent_dim();
    if (vae) return vae->config().latent_dim;
    return 0;
}

Eigen::RowVectorXd BaselineModel::column_mean() const {
    const std::size_t copies = mode_of(kind) == FlattenMode::kJoint ? budget : 1;
    return tile(norms.at(0).mean, norms.at(1).mean, copies);
}

Eigen::RowVectorXd BaselineModel::column_std() const {
    const std::size_t copies = mode_of(kind) == FlattenMode::kJoint ? budget : 1;
    return tile(norms.at(0).std, norms.at(1).std, copies);
}

Mat BaselineModel::encode_raw(const Mat &rows) const {
    const Eigen::RowVectorXd mu = column_mean(), sd = column_std();
    if (rows.cols() != mu.size()) {
        fail(ErrorKind::kInference, "baseline rows have width " + std::to_string(rows.cols()) + ", expected " +
                                        std::to_string(mu.size()));
    }
    const Mat x = ((rows.rowwise() - mu).array().rowwise() / sd.array()).matrix();
    if (pca) return pca->encode(x);
    if (vae) return vae->encode_mu(x);
    fail(ErrorKind::kInference, "baseline model has no fitted parameters");
}

Mat BaselineModel::decode_raw(const Mat &codes) const {
    Mat x;
    if (pca) {
        x = pca->decode(codes);
    } else if (vae) {
        x = vae->decode(codes);
    } else {
        fail(ErrorKind::kInference, "baseline model has no fitted parameters");
    }
    return ((x.array().rowwise() * column_std().array()).rowwise() + column_mean().array()).matrix();
}

BaselineFit fit_baseline(const MultiScaleDataset &ds, BaselineKind kind, std::size_t latent_dim,
                         const FlatVaeConfig &vae_cfg, const OptimizerConfig &opt, std::optional<std::size_t> budget) {
    const FlattenedView view = flatten(ds, mode_of(kind), budget);
    BaselineFit fit;
    BaselineModel &m = fit.model;
    m.kind = kind;
    m.budget = view.budget;
    m.norms = {compute_scale_norm(ds.scales[0]), compute_scale_norm(ds.scales[1])};
    const Eigen::RowVectorXd mu = m.column_mean(), sd = m.column_std();
    const Mat x = ((view.matrix.rowwise() - mu).array().rowwise() / sd.array()).matrix();
    if (is_vae(kind)) {
        FlatVaeConfig cfg = vae_cfg;
        cfg.latent_dim = latent_dim;
        auto res = vae_fit(x, cfg, opt);
        m.vae.emplace(std::move(res.vae));
        fit.history = std::move(res.history);
    } else {
        PcaModel p = pca_fit(x, latent_dim);
        p.mean = round_float(p.mean);
        p.components = round_float(p.components);
        p.variances = round_float(p.variances);
        m.pca = std::move(p);
    }
    return fit;
}

BaselineReconstruction baseline_reconstructions(const MultiScaleDataset &ds, const BaselineModel &model) {
    const FlattenedView view = view_for(ds, model);
    const Mat recon = model.decode_raw(model.encode_raw(view.matrix));
    const auto dp = Eigen::Index(view.parent_dim), dc = Eigen::Index(view.child_dim);

    BaselineReconstruction out;
    out.parent_rows = recon.leftCols(dp);
    out.row_parent = view.row_parent;

    const auto np = ds.scales[0].size(), nb = ds.scales[1].size();
    out.parent = Mat::Zero(Eigen::Index(np), dp);
    std::vector<std::uint32_t> parent_cov(np, 0);
    out.base = Mat::Zero(Eigen::Index(nb), dc);
    out.base_coverage.assign(nb, 0);

    for (Eigen::Index r = 0; r < recon.rows(); ++r) {
        const Index p = view.row_parent[std::size_t(r)];
        out.parent.row(p) += recon.row(r).head(dp);
        parent_cov[p] += 1;
        if (view.mode == FlattenMode::kConcatenative) {
            const Index c = view.row_child[std::size_t(r)];
            out.base.row(c) += recon.row(r).tail(dc);
            out.base_coverage[c] += 1;
        } else {
            const auto &kids = view.slot_children[std::size_t(r)];
            for (std::size_t s = 0; s < kids.size(); ++s) {
                out.base.row(kids[s]) += recon.row(r).segment(dp + Eigen::Index(s) * dc, dc);
                out.base_coverage[kids[s]] += 1;
            }
        }
    }
    average_or_nan(out.parent, parent_cov);
    average_or_nan(out.base, out.base_coverage);
    return out;
}

LatentField baseline_latents(const MultiScaleDataset &ds, const BaselineModel &model) {
    const FlattenedView view = view_for(ds, model);
    const Mat codes = model.encode_raw(view.matrix);
    LatentField f;
    f.mu = Mat::Zero(Eigen::Index(ds.scales[1].size()), codes.cols());
    f.coverage.assign(ds.scales[1].size(), 0);
    for (Eigen::Index r = 0; r < codes.rows(); ++r) {
        if (view.mode == FlattenMode::kConcatenative) {
            const Index c = view.row_child[std::size_t(r)];
            f.mu.row(c) += codes.row(r);
            f.coverage[c] += 1;
        } else {
            for (Index c : view.slot_children[std::size_t(r)]) {
                f.mu.row(c) += codes.row(r);
                f.coverage[c] += 1;
            }
        }
    }
    average_or_nan(f.mu, f.coverage);
    return f;
}

CheckpointContainer to_checkpoint(const BaselineModel &model) {
    CheckpointContainer c;
    c.kind = to_string(model.kind);
    json cfg{{"latent_dim", model.latent_dim()}, {"budget", model.budget}, {"scales", json::array()}};
    for (const auto &n : model.norms) cfg["scales"].push_back({{"id", n.scale}, {"dim", n.mean.size()}});
    for (const auto &n : model.norms) {
        c.tensors.push_back({"norm." + n.scale + ".mean", n.mean});
        c.tensors.push_back({"norm." + n.scale + ".std", n.std});
    }
    if (model.pca) {
        c.tensors.push_back({"pca.mean", model.pca->mean});
        c.tensors.push_back({"pca.components", model.pca->components});
        c.tensors.push_back({"pca.variances", model.pca->variances});
    } else if (model.vae) {
        const auto &v = model.vae->config();
        cfg["vae"] = {{"width", v.width}, {"depth", v.depth}, {"kl_weight", v.kl_weight}, {"seed", v.seed}};
        for (const auto &p : model.vae->params()) c.tensors.push_back({p.name, p.value});
    }
    c.config_json = cfg.dump();
    return c;
}

BaselineModel baseline_from_checkpoint(const CheckpointContainer &c) {
    const auto kind = parse_baseline_kind(c.kind);
    if (!kind) fail(ErrorKind::kFormat, "checkpoint kind '" + c.kind + "' is not a baseline");
    BaselineModel m;
    m.kind = *kind;
    try {
        const json j = json::parse(c.config_json);
        m.budget = j.at("budget").get<std::size_t>();
        for (const auto &s : j.at("scales")) {
            ScaleNorm n;
            n.scale = s.at("id").get<std::string>();
            const auto dim = s.at("dim").get<Eigen::Index>();
            const Mat &mean = c.tensor("norm." + n.scale + ".mean").value;
            const Mat &sd = c.tensor("norm." + n.scale + ".std").value;
            if (mean.rows() != 1 || sd.rows() != 1 || mean.cols() != dim || sd.cols() != dim) {
                fail(ErrorKind::kFormat, "checkpoint normalization for '" + n.scale + "' has the wrong width");
            }
            n.mean = mean;
            n.std = sd;
            m.norms.push_back(std::move(n));
        }
        if (m.norms.size() != 2) fail(ErrorKind::kFormat, "baseline checkpoint must describe two scales");
        const auto width = m.column_mean().size();
        if (is_vae(m.kind)) {
            const json &v = j.at("vae");
            FlatVaeConfig cfg;
            cfg.latent_dim = j.at("latent_dim").get<std::size_t>();
            cfg.width = v.at("width").get<std::size_t>();
            cfg.depth = v.at("depth").get<int>();
            cfg.kl_weight = v.at("kl_weight").get<double>();
            cfg.seed = v.at("seed").get<std::uint64_t>();
            FlatVae vae(cfg, std::size_t(width));
            for (auto &p : vae.params()) {
                const auto &t = c.tensor(p.name);
                if (t.value.rows() != p.value.rows() || t.value.cols() != p.value.cols()) {
                    fail(ErrorKind::kFormat, "checkpoint tensor '" + p.name + "' has the wrong shape");
                }
                p.value = t.value;
            }
            m.vae.emplace(std::move(vae));
        } else {
            PcaModel p;
            const Mat &mean = c.tensor("pca.mean").value;
            p.components = c.tensor("pca.components").value;
            const Mat &var = c.tensor("pca.variances").value;
            if (mean.rows() != 1 || mean.cols() != width || p.components.rows() != width ||
                var.rows() != p.components.cols() || var.cols() != 1) {
                fail(ErrorKind::kFormat, "checkpoint PCA tensors have inconsistent shapes");
            }
            p.mean = mean;
            p.variances = var;
            m.pca = std::move(p);
        }
    } catch (const json::exception &e) {
        fail(ErrorKind::kFormat, std::string("malformed baseline checkpoint config: ") + e.what());
    }
    return m;
}

}  // namespace nestfuse
