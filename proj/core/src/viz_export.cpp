#include "nestfuse/viz_export.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <random>

#include "nestfuse/error.hpp"

namespace nestfuse {

using nlohmann::json;

namespace {

constexpr std::array<double, 3> kRamp[] = {
    {0.267, 0.005, 0.329}, {0.229, 0.322, 0.545}, {0.128, 0.567, 0.551}, {0.369, 0.789, 0.383}, {0.993, 0.906, 0.144},
};

constexpr std::array<double, 3> kCorners[] = {
    {0.15, 0.30, 0.90},  // (0, 0)
    {0.90, 0.20, 0.20},  // (1, 0)
    {0.20, 0.80, 0.30},  // (0, 1)
    {0.95, 0.85, 0.20},  // (1, 1)
};

std::array<double, 3> lerp(const std::array<double, 3> &a, const std::array<double, 3> &b, double t) {
    return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

std::size_t bin_of(double v, double lo, double hi, std::size_t bins) {
    const double t = (v - lo) / (hi - lo) * double(bins);
    if (!(t > 0.0)) return 0;
    return std::min(bins - 1, std::size_t(t));
}

ad::Mat covered_rows(const LatentField &field) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < field.mu.rows(); ++i)
        if (field.mu.row(i).allFinite()) keep.push_back(i);
    ad::Mat m(Eigen::Index(keep.size()), field.mu.cols());
    for (std::size_t k = 0; k < keep.size(); ++k) m.row(Eigen::Index(k)) = field.mu.row(keep[k]);
    return m;
}

json vec_json(const Eigen::VectorXd &v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

std::uint64_t Heatmap::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

Heatmap latent_heatmap(const ad::Mat &latents, std::size_t bins) {
    if (latents.cols() != 2) {
        fail(ErrorKind::kUnsupported, "latent heatmaps need d_z = 2, got " + std::to_string(latents.cols()));
    }
    if (bins == 0) fail(ErrorKind::kConfig, "heatmap bins must be positive");
    Heatmap h;
    h.bins = bins;
    h.counts.assign(bins * bins, 0);
    if (latents.rows() == 0) {
        h.x_min = h.y_min = -0.5;
        h.x_max = h.y_max = 0.5;
        return h;
    }
    if (!latents.allFinite()) fail(ErrorKind::kValidation, "heatmap input has non-finite latents");
    h.x_min = latents.col(0).minCoeff();
    h.x_max = latents.col(0).maxCoeff();
    h.y_min = latents.col(1).minCoeff();
    h.y_max = latents.col(1).maxCoeff();
    if (h.x_max == h.x_min) {
        h.x_min -= 0.5;
        h.x_max += 0.5;
    }
    if (h.y_max == h.y_min) {
        h.y_min -= 0.5;
        h.y_max += 0.5;
    }
    for (Eigen::Index r = 0; r < latents.rows(); ++r) {
        const auto i = bin_of(latents(r, 0), h.x_min, h.x_max, bins);
        const auto j = bin_of(latents(r, 1), h.y_min, h.y_max, bins);
        h.counts[i * bins + j] += 1;
    }
    return h;
}

std::array<double, 3> ColorMapping::color(const Eigen::VectorXd &z) const {
    if (std::size_t(z.size()) != mins.size()) fail(ErrorKind::kInference, "color mapping: latent width mismatch");
    std::vector<double> t(mins.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
        const double range = maxs[k] - mins[k];
        t[k] = range > 0.0 ? std::clamp((z[Eigen::Index(k)] - mins[k]) / range, 0.0, 1.0) : 0.0;
    }
    if (mode == "ramp") {
        const double pos = t[0] * double(stops.size() - 1);
        const auto lo = std::min(stops.size() - 2, std::size_t(pos));
        return lerp(stops[lo], stops[lo + 1], pos - double(lo));
    }
    if (mode == "bilinear") {
        return lerp(lerp(corners[0], corners[1], t[0]), lerp(corners[2], corners[3], t[0]), t[1]);
    }
    return {t[0], t[1], t[2]};
}

ColorMapping make_color_mapping(const ad::Mat &latents) {
    const auto d = latents.cols();
    if (d < 1 || d > 3) fail(ErrorKind::kUnsupported, "color export supports d_z 1 to 3, got " + std::to_string(d));
    ColorMapping m;
    m.mode = d == 1 ? "ramp" : d == 2 ? "bilinear" : "rgb";
    for (Eigen::Index k = 0; k < d; ++k) {
        m.mins.push_back(latents.rows() ? latents.col(k).minCoeff() : 0.0);
        m.maxs.push_back(latents.rows() ? latents.col(k).maxCoeff() : 0.0);
    }
    if (d == 1) m.stops.assign(std::begin(kRamp), std::end(kRamp));
    if (d == 2) m.corners.assign(std::begin(kCorners), std::end(kCorners));
    return m;
}

SpatialExport spatial_color_export(const MultiScaleDataset &ds, const LatentField &field) {
    const auto &base = ds.base();
    if (!base.coords) fail(ErrorKind::kFormat, "scale '" + base.id + "' has no coordinates to map");
    if (field.mu.rows() != Eigen::Index(base.size())) {
        fail(ErrorKind::kValidation, "latent field does not match the base scale size");
    }
    SpatialExport out;
    out.mapping = make_color_mapping(covered_rows(field));
    for (Eigen::Index i = 0; i < field.mu.rows(); ++i) {
        if (!field.mu.row(i).allFinite()) continue;
        SpatialRecord r;
        r.index = Index(i);
        r.x = (*base.coords)(i, 0);
        r.y = (*base.coords)(i, 1);
        r.latent = field.mu.row(i).transpose();
        r.color = out.mapping.color(r.latent);
        out.records.push_back(std::move(r));
    }
    return out;
}

std::vector<Index> subsample_points(const LatentField &field, std::size_t cap, std::uint64_t seed) {
    std::vector<Index> covered;
    for (Eigen::Index i = 0; i < field.mu.rows(); ++i)
        if (field.mu.row(i).allFinite()) covered.push_back(Index(i));
    if (covered.size() <= cap) return covered;
    std::vector<Index> kept;
    kept.reserve(cap);
    std::mt19937_64 rng(seed);
    std::sample(covered.begin(), covered.end(), std::back_inserter(kept), cap, rng);
    return kept;
}

std::string make_viz_export(const MultiScaleDataset &ds, const LatentField &field, const VizExportOptions &opt) {
    const auto d = field.mu.cols();
    if (d < 1 || d > 3) fail(ErrorKind::kUnsupported, "export supports d_z 1 to 3, got " + std::to_string(d));
    const SpatialExport spatial = spatial_color_export(ds, field);

    json j;
    j["format"] = "nestfuse-viz";
    j["version"] = kVizExportVersion;
    j["model"] = {{"id", opt.model_id}, {"kind", opt.model_kind}, {"latent_dim", d}};
    j["dataset"] = {{"name", ds.name}, {"base_scale", ds.base().id}, {"base_count", ds.base().size()}};

    const auto kept = subsample_points(field, opt.point_cap, opt.seed);
    json lat = json::array();
    for (Index i : kept) lat.push_back(vec_json(field.mu.row(i).transpose()));
    j["points"] = {{"total", spatial.records.size()},
                   {"cap", opt.point_cap},
                   {"seed", opt.seed},
                   {"indices", kept},
                   {"latents", std::move(lat)}};

    if (d == 2) {
        const Heatmap h = latent_heatmap(covered_rows(field), opt.bins);
        json grid = json::array();
        for (std::size_t i = 0; i < h.bins; ++i)
            grid.push_back(std::vector<std::uint64_t>(h.counts.begin() + std::ptrdiff_t(i * h.bins),
                                                      h.counts.begin() + std::ptrdiff_t((i + 1) * h.bins)));
        j["heatmap"] = {{"bins", h.bins},
                        {"x_range", {h.x_min, h.x_max}},
                        {"y_range", {h.y_min, h.y_max}},
                        {"counts", std::move(grid)}};
    } else {
        j["heatmap"] = nullptr;
    }

    json recs = json::array();
    for (const auto &r : spatial.records) {
        recs.push_back({{"index", r.index}, {"x", r.x}, {"y", r.y}, {"latent", vec_json(r.latent)}, {"color", r.color}});
    }
    j["spatial"] = {{"records", std::move(recs)}};

    const auto &m = spatial.mapping;
    j["color_mapping"] = {{"mode", m.mode}, {"mins", m.mins}, {"maxs", m.maxs}};
    if (!m.stops.empty()) j["color_mapping"]["stops"] = m.stops;
    if (!m.corners.empty()) j["color_mapping"]["corners"] = m.corners;

    j["regions"] = json::array();
    for (const auto &r : opt.regions) j["regions"].push_back(json::parse(region_to_json(r)));
    return j.dump() + "\n";
}

namespace {

void check_vector(std::vector<std::string> &errs, const json &v, std::size_t dim, const std::string &where) {
    if (!v.is_array() || v.size() != dim) {
        errs.push_back(where + ": expected an array of " + std::to_string(dim) + " numbers");
        return;
    }
    for (const auto &x : v)
        if (!x.is_number()) {
            errs.push_back(where + ": non-numeric entry");
            return;
        }
}

}  // namespace

std::vector<std::string> validate_viz_export(const std::string &json_text) {
    std::vector<std::string> errs;
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception &e) {
        return {std::string("not JSON: ") + e.what()};
    }
    if (!j.is_object()) return {"document must be an object"};
    for (const char *key : {"format", "version", "model", "dataset", "points", "heatmap", "spatial", "color_mapping",
                            "regions"}) {
        if (!j.contains(key)) errs.push_back(std::string("missing '") + key + "'");
    }
    if (!errs.empty()) return errs;
    if (j["format"] != "nestfuse-viz") errs.push_back("format must be 'nestfuse-viz'");
    if (j["version"] != kVizExportVersion) errs.push_back("unsupported version");

    const json &model = j["model"];
    std::size_t d = 0;
    if (!model.is_object() || !model.contains("latent_dim") || !model["latent_dim"].is_number_unsigned()) {
        errs.push_back("model.latent_dim must be a positive integer");
    } else {
        d = model["latent_dim"].get<std::size_t>();
        if (d < 1 || d > 3) errs.push_back("model.latent_dim must be 1, 2 or 3");
    }
    const json &dataset = j["dataset"];
    std::size_t count = 0;
    if (!dataset.is_object() || !dataset.contains("base_count") || !dataset["base_count"].is_number_unsigned()) {
        errs.push_back("dataset.base_count must be a nonnegative integer");
    } else {
        count = dataset["base_count"].get<std::size_t>();
    }
    if (!errs.empty()) return errs;

    const json &pts = j["points"];
    if (!pts.is_object() || !pts.contains("indices") || !pts.contains("latents") || !pts["indices"].is_array() ||
        !pts["latents"].is_array() || pts["indices"].size() != pts["latents"].size()) {
        errs.push_back("points needs equal-length 'indices' and 'latents' arrays");
    } else {
        for (std::size_t k = 0; k < pts["indices"].size(); ++k) {
            const json &idx = pts["indices"][k];
            if (!idx.is_number_unsigned() || idx.get<std::size_t>() >= count) {
                errs.push_back("points.indices[" + std::to_string(k) + "] out of range");
                break;
            }
            check_vector(errs, pts["latents"][k], d, "points.latents[" + std::to_string(k) + "]");
        }
    }

    const json &hm = j["heatmap"];
    if (d == 2) {
        if (!hm.is_object() || !hm.contains("bins") || !hm["bins"].is_number_unsigned() || !hm.contains("counts")) {
            errs.push_back("heatmap needs 'bins' and 'counts' when latent_dim is 2");
        } else {
            const auto bins = hm["bins"].get<std::size_t>();
            const json &c = hm["counts"];
            if (!c.is_array() || c.size() != bins) {
                errs.push_back("heatmap.counts must have 'bins' rows");
            } else {
                for (const auto &row : c)
                    if (!row.is_array() || row.size() != bins) {
                        errs.push_back("heatmap.counts rows must have 'bins' entries");
                        break;
                    }
            }
            check_vector(errs, hm.value("x_range", json()), 2, "heatmap.x_range");
            check_vector(errs, hm.value("y_range", json()), 2, "heatmap.y_range");
        }
    } else if (!hm.is_null()) {
        errs.push_back("heatmap must be null unless latent_dim is 2");
    }

    const json &sp = j["spatial"];
    if (!sp.is_object() || !sp.contains("records") || !sp["records"].is_array()) {
        errs.push_back("spatial.records must be an array");
    } else {
        for (std::size_t k = 0; k < sp["records"].size(); ++k) {
            const json &r = sp["records"][k];
            const std::string where = "spatial.records[" + std::to_string(k) + "]";
            if (!r.is_object() || !r.contains("index") || !r["index"].is_number_unsigned() ||
                r["index"].get<std::size_t>() >= count || !r.contains("x") || !r["x"].is_number() ||
                !r.contains("y") || !r["y"].is_number()) {
                errs.push_back(where + ": needs an in-range index and numeric x, y");
                break;
            }
            check_vector(errs, r.value("latent", json()), d, where + ".latent");
            check_vector(errs, r.value("color", json()), 3, where + ".color");
            if (errs.size() > 20) break;
        }
    }

    const json &cm = j["color_mapping"];
    if (!cm.is_object() || !cm.contains("mode") || !cm["mode"].is_string()) {
        errs.push_back("color_mapping.mode must be a string");
    } else {
        check_vector(errs, cm.value("mins", json()), d, "color_mapping.mins");
        check_vector(errs, cm.value("maxs", json()), d, "color_mapping.maxs");
    }
    if (!j["regions"].is_array()) {
        errs.push_back("regions must be an array");
    } else {
        for (const auto &r : j["regions"]) {
            try {
                parse_region(r.dump());
            } catch (const Error &e) {
                errs.push_back(std::string("regions: ") + e.what());
            }
        }
    }
    return errs;
}

LoadedExport load_viz_export(const std::string &json_text) {
    const auto errs = validate_viz_export(json_text);
    if (!errs.empty()) fail(ErrorKind::kFormat, "invalid export: " + errs.front());
    const json j = json::parse(json_text);
    LoadedExport out;
    out.model_id = j["model"].value("id", std::string());
    out.latent_dim = j["model"]["latent_dim"].get<std::size_t>();
    const auto n = j["dataset"]["base_count"].get<Eigen::Index>();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.field.mu = ad::Mat::Constant(n, Eigen::Index(out.latent_dim), nan);
    out.field.coverage.assign(std::size_t(n), 0);
    ad::Mat coords = ad::Mat::Constant(n, 2, nan);
    for (const auto &r : j["spatial"]["records"]) {
        const auto i = r["index"].get<Eigen::Index>();
        for (std::size_t k = 0; k < out.latent_dim; ++k) out.field.mu(i, Eigen::Index(k)) = r["latent"][k].get<double>();
        out.field.coverage[std::size_t(i)] = 1;
        coords(i, 0) = r["x"].get<double>();
        coords(i, 1) = r["y"].get<double>();
    }
    out.coords = std::move(coords);
    return out;
}

}  // namespace nestfuse
