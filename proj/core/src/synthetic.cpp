#include "nestfuse/synthetic.hpp"

#include <cmath>
#include <random>

#include "nestfuse/error.hpp"

namespace nestfuse {

namespace {

void check_config(const SynthConfig &cfg) {
    if (cfg.width == 0 || cfg.height == 0) fail(ErrorKind::kConfig, "synthetic grid is empty");
    if (cfg.classes < 1) fail(ErrorKind::kConfig, "synthetic class count must be >= 1");
    if (cfg.base_dim == 0 || cfg.parent_dim == 0) fail(ErrorKind::kConfig, "synthetic dims must be >= 1");
    if (!(cfg.pitch > 0.0)) fail(ErrorKind::kConfig, "pixel pitch must be positive");
    if (!(cfg.parent_spacing > 0.0)) fail(ErrorKind::kConfig, "parent spacing must be positive");
    if (!(cfg.radius > 0.0)) fail(ErrorKind::kConfig, "beam radius must be positive");
    if (cfg.base_noise < 0.0 || cfg.parent_noise < 0.0) fail(ErrorKind::kConfig, "noise must be >= 0");
}

std::vector<double> lattice_axis(std::size_t pixels, const SynthConfig &cfg) {
    const double extent = double(pixels - 1) * cfg.pitch;
    std::vector<double> out;
    for (double c = cfg.radius; c <= extent - cfg.radius + 1e-9; c += cfg.parent_spacing) out.push_back(c);
    return out;
}

}  // namespace

std::vector<Eigen::Vector2f> synth_parent_centres(const SynthConfig &cfg) {
    check_config(cfg);
    const auto xs = lattice_axis(cfg.width, cfg);
    const auto ys = lattice_axis(cfg.height, cfg);
    std::vector<Eigen::Vector2f> out;
    for (double y : ys)
        for (double x : xs) out.emplace_back(float(x), float(y));
    return out;
}

SyntheticDataset generate_synthetic(const SynthConfig &cfg) {
    check_config(cfg);
    const auto centres = synth_parent_centres(cfg);
    if (centres.empty()) {
        fail(ErrorKind::kConfig, "beam radius leaves no room for a scan point inside the pixel grid");
    }

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    const std::size_t K = cfg.classes;
    SynthTruth truth;
    truth.base_prototypes.resize(Eigen::Index(K), Eigen::Index(cfg.base_dim));
    truth.parent_prototypes.resize(Eigen::Index(K), Eigen::Index(cfg.parent_dim));
    truth.sites.resize(Eigen::Index(K), 2);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t d = 0; d < cfg.base_dim; ++d) truth.base_prototypes(k, d) = float(unit(rng));
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t d = 0; d < cfg.parent_dim; ++d) truth.parent_prototypes(k, d) = float(unit(rng));
    const double ext_x = double(cfg.width - 1) * cfg.pitch;
    const double ext_y = double(cfg.height - 1) * cfg.pitch;
    for (std::size_t k = 0; k < K; ++k) {
        truth.sites(k, 0) = float(uni(rng) * ext_x);
        truth.sites(k, 1) = float(uni(rng) * ext_y);
    }

    const std::size_t n_base = cfg.width * cfg.height;
    DataScale base;
    base.id = kSynthBaseScale;
    base.records.resize(Eigen::Index(n_base), Eigen::Index(cfg.base_dim));
    base.coords = CoordMatrix(Eigen::Index(n_base), 2);
    base.meta["units"] = "microns";
    truth.labels.resize(n_base);

    for (std::size_t r = 0; r < cfg.height; ++r) {
        for (std::size_t c = 0; c < cfg.width; ++c) {
            const std::size_t i = r * cfg.width + c;
            const double x = double(c) * cfg.pitch;
            const double y = double(r) * cfg.pitch;
            (*base.coords)(i, 0) = float(x);
            (*base.coords)(i, 1) = float(y);
            std::uint32_t best = 0;
            double best_d = INFINITY;
            for (std::size_t k = 0; k < K; ++k) {
                const double dx = x - truth.sites(k, 0), dy = y - truth.sites(k, 1);
                const double d = dx * dx + dy * dy;
                if (d < best_d) {
                    best_d = d;
                    best = std::uint32_t(k);
                }
            }
            truth.labels[i] = best;
        }
    }
    for (std::size_t i = 0; i < n_base; ++i) {
        for (std::size_t d = 0; d < cfg.base_dim; ++d) {
            const double v = truth.base_prototypes(truth.labels[i], d) + cfg.base_noise * unit(rng);
            base.records(i, d) = float(v);
        }
    }

    DataScale parent;
    parent.id = kSynthParentScale;
    parent.records.resize(Eigen::Index(centres.size()), Eigen::Index(cfg.parent_dim));
    parent.coords = CoordMatrix(Eigen::Index(centres.size()), 2);
    parent.meta["units"] = "microns";
    for (std::size_t p = 0; p < centres.size(); ++p) parent.coords->row(p) = centres[p].transpose();

    NestingMap nest;
    try {
        nest = build_nesting_from_coords(parent, base, cfg.radius);
    } catch (const Error &e) {
        fail(ErrorKind::kConfig, std::string("synthetic nesting: ") + e.what());
    }

    for (std::size_t p = 0; p < centres.size(); ++p) {
        std::vector<double> counts(K, 0.0);
        for (Index j : nest.edges[p]) counts[truth.labels[j]] += 1.0;
        const double n = double(nest.edges[p].size());
        for (std::size_t d = 0; d < cfg.parent_dim; ++d) {
            double mean = 0.0;
            for (std::size_t k = 0; k < K; ++k) mean += counts[k] * truth.parent_prototypes(k, d);
            parent.records(p, d) = float(mean / n + cfg.parent_noise * unit(rng));
        }
    }

    SyntheticDataset out;
    out.dataset.name = "synthetic-" + std::to_string(cfg.seed);
    out.dataset.scales.push_back(std::move(parent));
    out.dataset.scales.push_back(std::move(base));
    out.dataset.nestings.push_back(std::move(nest));
    out.truth = std::move(truth);
    return out;
}

MixtureGroup synth_mixture_group(const SynthTruth &truth, const SynthConfig &cfg,
                                 const std::vector<std::size_t> &class_counts, std::uint64_t seed) {
    const auto K = std::size_t(truth.base_prototypes.rows());
    if (class_counts.size() != K) fail(ErrorKind::kConfig, "class_counts must have one entry per class");
    std::size_t n = 0;
    for (auto c : class_counts) n += c;
    if (n == 0) fail(ErrorKind::kConfig, "mixture group needs at least one pixel");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);

    MixtureGroup out;
    out.group.levels = 2;
    GroupNode root;
    root.level = 0;
    root.values.resize(truth.parent_prototypes.cols());
    out.group.nodes.push_back(root);

    Index next = 0;
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < class_counts[k]; ++i) {
            GroupNode child;
            child.level = 1;
            child.index = next++;
            child.parent = 0;
            child.values.resize(truth.base_prototypes.cols());
            for (Eigen::Index d = 0; d < child.values.size(); ++d) {
                child.values[d] = float(truth.base_prototypes(Eigen::Index(k), d) + cfg.base_noise * unit(rng));
            }
            out.group.nodes.push_back(std::move(child));
            out.child_labels.push_back(std::uint32_t(k));
        }
    }
    auto &rv = out.group.nodes.front().values;
    for (Eigen::Index d = 0; d < rv.size(); ++d) {
        double mean = 0.0;
        for (std::size_t k = 0; k < K; ++k) mean += double(class_counts[k]) * truth.parent_prototypes(Eigen::Index(k), d);
        rv[d] = float(mean / double(n) + cfg.parent_noise * unit(rng));
    }
    return out;
}

}  // namespace nestfuse
