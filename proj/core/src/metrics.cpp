#include "nestfuse/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>

#include "nestfuse/error.hpp"

namespace nestfuse {

using nlohmann::json;

RSquared r_squared_terms(const ad::Mat &truth, const ad::Mat &pred) {
    if (truth.rows() != pred.rows() || truth.cols() != pred.cols()) {
        fail(ErrorKind::kValidation, "r_squared: truth is " + std::to_string(truth.rows()) + "x" +
                                         std::to_string(truth.cols()) + ", prediction is " +
                                         std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()));
    }
    if (truth.size() == 0) fail(ErrorKind::kUndefinedMetric, "r_squared of an empty matrix");
    const Eigen::RowVectorXd mean = truth.colwise().mean();
    RSquared r;
    r.sst = (truth.rowwise() - mean).squaredNorm();
    r.sse = (truth - pred).squaredNorm();
    if (!(r.sst > 0.0)) fail(ErrorKind::kUndefinedMetric, "r_squared: truth is constant (SST = 0)");
    r.r2 = 1.0 - r.sse / r.sst;
    return r;
}

double r_squared(const ad::Mat &truth, const ad::Mat &pred) { return r_squared_terms(truth, pred).r2; }

CoveredRSquared r_squared_covered(const ad::Mat &truth, const ad::Mat &pred) {
    if (truth.rows() != pred.rows() || truth.cols() != pred.cols()) {
        fail(ErrorKind::kValidation, "r_squared: truth and prediction shapes differ");
    }
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < pred.rows(); ++i)
        if (pred.row(i).allFinite()) keep.push_back(i);
    ad::Mat t(Eigen::Index(keep.size()), truth.cols()), p(Eigen::Index(keep.size()), truth.cols());
    for (std::size_t k = 0; k < keep.size(); ++k) {
        t.row(Eigen::Index(k)) = truth.row(keep[k]);
        p.row(Eigen::Index(k)) = pred.row(keep[k]);
    }
    CoveredRSquared c;
    c.fit = r_squared_terms(t, p);
    c.rows = keep.size();
    c.skipped = std::size_t(pred.rows()) - keep.size();
    return c;
}

const LayerFit &EvalReport::base_fit() const {
    if (layers.empty()) fail(ErrorKind::kUndefinedMetric, "report has no layers");
    return layers.back();
}

const LayerFit &EvalReport::parent_fit() const {
    if (layers.size() < 2) fail(ErrorKind::kUndefinedMetric, "report has no parent layer");
    return layers[layers.size() - 2];
}

namespace {

json layer_json(const LayerFit &l) {
    return {{"scale", l.scale}, {"rows_kind", l.rows_kind}, {"r2", l.fit.r2}, {"sse", l.fit.sse},
            {"sst", l.fit.sst}, {"rows", l.rows},           {"skipped", l.skipped}};
}

}  // namespace

std::string EvalReport::to_json() const {
    json j{{"model_id", model_id}, {"kind", kind}, {"latent_dim", latent_dim}, {"latent_units", "raw"}};
    j["r2_p"] = layers.empty() ? json() : json(base_fit().fit.r2);
    j["r2_q"] = layers.size() < 2 ? json() : json(parent_fit().fit.r2);
    j["layers"] = json::array();
    for (const auto &l : layers) j["layers"].push_back(layer_json(l));
    j["supplementary"] = json::array();
    for (const auto &l : supplementary) j["supplementary"].push_back(layer_json(l));
    j["separations"] = json::array();
    for (const auto &s : separations) {
        j["separations"].push_back({{"region_a", s.region_a},
                                    {"region_b", s.region_b},
                                    {"distance", s.distance},
                                    {"n_a", s.n_a},
                                    {"n_b", s.n_b},
                                    {"n_proj", s.n_proj},
                                    {"seed", s.seed},
                                    {"method", s.method}});
    }
    return j.dump(2) + "\n";
}

std::string comparison_table(std::vector<EvalReport> reports) {
    auto q = [](const EvalReport &r) { return r.layers.size() < 2 ? -1e300 : r.parent_fit().fit.r2; };
    std::stable_sort(reports.begin(), reports.end(),
                     [&](const EvalReport &a, const EvalReport &b) { return q(a) > q(b); });
    std::string out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-28s %-14s %4s %10s %10s\n", "model", "kind", "d_z", "R2_q", "R2_p");
    out += line;
    for (const auto &r : reports) {
        std::snprintf(line, sizeof(line), "%-28s %-14s %4zu %10.4f %10.4f\n", r.model_id.c_str(), r.kind.c_str(),
                      r.latent_dim, r.layers.size() < 2 ? std::nan("") : r.parent_fit().fit.r2,
                      r.layers.empty() ? std::nan("") : r.base_fit().fit.r2);
        out += line;
    }
    return out;
}

}  // namespace nestfuse
