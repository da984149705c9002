#include "nestfuse/evaluate.hpp"

#include <algorithm>

#include "nestfuse/error.hpp"

namespace nestfuse {

std::size_t AnyModel::latent_dim() const {
    if (fusion) return fusion->config().latent_dim;
    if (baseline) return baseline->latent_dim();
    return 0;
}

LatentField AnyModel::latents(const MultiScaleDataset &ds) const {
    if (fusion) return encode_dataset(ds, *fusion);
    if (baseline) return baseline_latents(ds, *baseline);
    fail(ErrorKind::kInference, "empty model");
}

CheckpointContainer AnyModel::checkpoint() const {
    if (fusion) return to_checkpoint(*fusion);
    if (baseline) return to_checkpoint(*baseline);
    fail(ErrorKind::kInference, "empty model");
}

AnyModel model_from_checkpoint(const CheckpointContainer &c) {
    AnyModel m;
    m.kind = c.kind;
    if (c.kind == kNestedFusionKind) {
        m.fusion.emplace(nested_fusion_from_checkpoint(c));
    } else {
        m.baseline.emplace(baseline_from_checkpoint(c));
    }
    return m;
}

AnyModel load_model(const std::filesystem::path &path) { return model_from_checkpoint(read_checkpoint(path)); }

namespace {

LayerFit layer(const DataScale &s, const std::string &rows_kind, const Mat &truth, const Mat &pred) {
    const auto c = r_squared_covered(truth, pred);
    return {s.id, rows_kind, c.fit, c.rows, c.skipped};
}

}  // namespace

EvalReport evaluate(const MultiScaleDataset &ds, const AnyModel &model, const std::string &model_id) {
    EvalReport rep;
    rep.model_id = model_id;
    rep.kind = model.kind;
    rep.latent_dim = model.latent_dim();
    if (model.fusion) {
        const auto rec = reconstruct_dataset(ds, *model.fusion);
        for (std::size_t l = 0; l < ds.depth(); ++l) {
            rep.layers.push_back(layer(ds.scales[l], "records", ds.scales[l].records.cast<double>(), rec.predictions[l]));
        }
        return rep;
    }
    if (!model.baseline) fail(ErrorKind::kInference, "empty model");
    const auto &b = *model.baseline;
    const auto rec = baseline_reconstructions(ds, b);
    const Mat parent_truth = ds.scales[0].records.cast<double>();
    if (mode_of(b.kind) == FlattenMode::kConcatenative) {
        Mat row_truth(rec.parent_rows.rows(), parent_truth.cols());
        for (Eigen::Index r = 0; r < row_truth.rows(); ++r) row_truth.row(r) = parent_truth.row(rec.row_parent[r]);
        rep.layers.push_back(layer(ds.scales[0], "edges", row_truth, rec.parent_rows));
        rep.supplementary.push_back(layer(ds.scales[0], "parents", parent_truth, rec.parent));
    } else {
        rep.layers.push_back(layer(ds.scales[0], "records", parent_truth, rec.parent));
    }
    rep.layers.push_back(layer(ds.scales[1], "records", ds.scales[1].records.cast<double>(), rec.base));
    return rep;
}

void add_separations(EvalReport &report, const MultiScaleDataset &ds, const LatentField &field, const RegionSet &set,
                     std::size_t n_proj, std::uint64_t seed) {
    const auto coords = base_coords(ds);
    auto find = [&](const std::string &label) -> const Region & {
        const auto it = std::find_if(set.regions.begin(), set.regions.end(),
                                     [&](const Region &r) { return r.label == label; });
        if (it == set.regions.end()) fail(ErrorKind::kInvalidReference, "unknown region '" + label + "'");
        return *it;
    };
    for (const auto &[a, b] : set.pairs) {
        report.separations.push_back(region_separation(field, coords, find(a), find(b), n_proj, seed));
    }
}

}  // namespace nestfuse
