#include "nestfuse/regions.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "nestfuse/error.hpp"
#include "nestfuse/wasserstein.hpp"

namespace nestfuse {

using nlohmann::json;

namespace {

Region region_from(const json &j) {
    if (!j.is_object()) fail(ErrorKind::kFormat, "region must be a JSON object");
    Region r;
    r.label = j.value("label", std::string());
    const int forms = int(j.contains("indices")) + int(j.contains("disc")) + int(j.contains("polygon"));
    if (forms != 1) fail(ErrorKind::kFormat, "region needs exactly one of indices, disc, polygon");
    if (j.contains("indices")) {
        std::vector<Index> idx;
        for (const auto &v : j.at("indices")) {
            if (!v.is_number_integer() || v.get<long long>() < 0) {
                fail(ErrorKind::kFormat, "region indices must be nonnegative integers");
            }
            idx.push_back(v.get<Index>());
        }
        r.shape = std::move(idx);
    } else if (j.contains("disc")) {
        const json &d = j.at("disc");
        const json &c = d.at("center");
        if (!c.is_array() || c.size() != 2) fail(ErrorKind::kFormat, "disc center must be [x, y]");
        Disc disc{c[0].get<double>(), c[1].get<double>(), d.at("radius").get<double>()};
        if (!(disc.radius >= 0.0) || !std::isfinite(disc.cx) || !std::isfinite(disc.cy)) {
            fail(ErrorKind::kFormat, "disc needs a finite center and a nonnegative radius");
        }
        r.shape = disc;
    } else {
        Polygon poly;
        for (const auto &v : j.at("polygon")) {
            if (!v.is_array() || v.size() != 2) fail(ErrorKind::kFormat, "polygon vertices must be [x, y]");
            poly.vertices.emplace_back(v[0].get<double>(), v[1].get<double>());
        }
        if (poly.vertices.size() < 3) fail(ErrorKind::kFormat, "polygon needs at least three vertices");
        r.shape = std::move(poly);
    }
    return r;
}

json region_json(const Region &r) {
    json j{{"label", r.label}};
    if (const auto *idx = std::get_if<std::vector<Index>>(&r.shape)) {
        j["indices"] = *idx;
    } else if (const auto *d = std::get_if<Disc>(&r.shape)) {
        j["disc"] = {{"center", {d->cx, d->cy}}, {"radius", d->radius}};
    } else {
        json verts = json::array();
        for (const auto &[x, y] : std::get<Polygon>(r.shape).vertices) verts.push_back({x, y});
        j["polygon"] = verts;
    }
    return j;
}

bool inside(const Polygon &poly, double x, double y) {
    bool in = false;
    const auto &v = poly.vertices;
    for (std::size_t i = 0, k = v.size() - 1; i < v.size(); k = i++) {
        const auto [xi, yi] = v[i];
        const auto [xk, yk] = v[k];
        if ((yi > y) != (yk > y) && x < (xk - xi) * (y - yi) / (yk - yi) + xi) in = !in;
    }
    return in;
}

}  // namespace

Region parse_region(const std::string &json_text) {
    try {
        return region_from(json::parse(json_text));
    } catch (const json::exception &e) {
        fail(ErrorKind::kFormat, std::string("malformed region: ") + e.what());
    }
}

std::string region_to_json(const Region &r) { return region_json(r).dump(); }

RegionSet parse_region_set(const std::string &json_text) {
    RegionSet set;
    try {
        const json j = json::parse(json_text);
        const json &list = j.is_array() ? j : j.at("regions");
        for (const auto &r : list) set.regions.push_back(region_from(r));
        if (j.is_object() && j.contains("pairs")) {
            for (const auto &p : j.at("pairs")) {
                if (!p.is_array() || p.size() != 2) fail(ErrorKind::kFormat, "region pairs must be [a, b]");
                set.pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
            }
        } else {
            for (std::size_t a = 0; a < set.regions.size(); ++a)
                for (std::size_t b = a + 1; b < set.regions.size(); ++b)
                    set.pairs.emplace_back(set.regions[a].label, set.regions[b].label);
        }
    } catch (const json::exception &e) {
        fail(ErrorKind::kFormat, std::string("malformed regions file: ") + e.what());
    }
    for (const auto &[a, b] : set.pairs) {
        for (const auto *name : {&a, &b}) {
            const bool known = std::any_of(set.regions.begin(), set.regions.end(),
                                           [&](const Region &r) { return r.label == *name; });
            if (!known) fail(ErrorKind::kInvalidReference, "region pair names unknown region '" + *name + "'");
        }
    }
    return set;
}

std::vector<Index> resolve_region(const Region &r, std::size_t count, const std::optional<ad::Mat> &coords) {
    std::vector<Index> out;
    if (const auto *idx = std::get_if<std::vector<Index>>(&r.shape)) {
        for (Index i : *idx) {
            if (i >= count) {
                fail(ErrorKind::kInvalidReference, "region '" + r.label + "' index " + std::to_string(i) +
                                                       " out of range (" + std::to_string(count) + " records)");
            }
        }
        out = *idx;
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
    } else {
        if (!coords) fail(ErrorKind::kFormat, "region '" + r.label + "' is a shape but the records have no coords");
        for (Eigen::Index i = 0; i < coords->rows(); ++i) {
            const double x = (*coords)(i, 0), y = (*coords)(i, 1);
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            bool hit = false;
            if (const auto *d = std::get_if<Disc>(&r.shape)) {
                const double dx = x - d->cx, dy = y - d->cy;
                hit = dx * dx + dy * dy <= d->radius * d->radius;
            } else {
                hit = inside(std::get<Polygon>(r.shape), x, y);
            }
            if (hit) out.push_back(Index(i));
        }
    }
    if (out.empty()) fail(ErrorKind::kValidation, "region '" + r.label + "' selects no records");
    return out;
}

SeparationResult region_separation(const LatentField &field, const std::vector<Index> &a,
                                   const std::vector<Index> &b, std::size_t n_proj, std::uint64_t seed) {
    auto gather = [&](const std::vector<Index> &idx, const char *side) {
        std::vector<Eigen::Index> rows;
        for (Index i : idx) {
            if (i >= field.mu.rows()) fail(ErrorKind::kInvalidReference, "region index out of range");
            if (field.mu.row(i).allFinite()) rows.push_back(i);
        }
        if (rows.empty()) fail(ErrorKind::kValidation, std::string("region ") + side + " has no encoded records");
        ad::Mat m(Eigen::Index(rows.size()), field.mu.cols());
        for (std::size_t k = 0; k < rows.size(); ++k) m.row(Eigen::Index(k)) = field.mu.row(rows[k]);
        return m;
    };
    const ad::Mat la = gather(a, "a"), lb = gather(b, "b");
    SeparationResult s;
    s.n_a = std::size_t(la.rows());
    s.n_b = std::size_t(lb.rows());
    s.n_proj = field.mu.cols() == 1 ? 1 : n_proj;
    s.seed = seed;
    s.method = field.mu.cols() == 1 ? "wasserstein-1d" : "sliced-wasserstein";
    s.distance = sliced_wasserstein(la, lb, s.n_proj, seed);
    return s;
}

SeparationResult region_separation(const LatentField &field, const std::optional<ad::Mat> &coords, const Region &a,
                                   const Region &b, std::size_t n_proj, std::uint64_t seed) {
    const auto n = std::size_t(field.mu.rows());
    auto s = region_separation(field, resolve_region(a, n, coords), resolve_region(b, n, coords), n_proj, seed);
    s.region_a = a.label;
    s.region_b = b.label;
    return s;
}

std::optional<ad::Mat> base_coords(const MultiScaleDataset &ds) {
    if (!ds.base().coords) return std::nullopt;
    return ds.base().coords->cast<double>();
}

}  // namespace nestfuse
