#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "nestfuse/dataset.hpp"

namespace nestfuse::testing {

/// Scale with `n` records whose values are row * 10 + column.
inline DataScale ramp_scale(const std::string &id, std::size_t n, std::size_t dim) {
    DataScale s;
    s.id = id;
    s.records.resize(Eigen::Index(n), Eigen::Index(dim));
    for (Eigen::Index r = 0; r < s.records.rows(); ++r)
        for (Eigen::Index c = 0; c < s.records.cols(); ++c) s.records(r, c) = float(r * 10 + c);
    return s;
}

inline DataScale random_scale(const std::string &id, std::size_t n, std::size_t dim, std::mt19937_64 &rng) {
    std::normal_distribution<float> unit(0.0f, 1.0f);
    DataScale s;
    s.id = id;
    s.records.resize(Eigen::Index(n), Eigen::Index(dim));
    for (Eigen::Index c = 0; c < s.records.cols(); ++c)
        for (Eigen::Index r = 0; r < s.records.rows(); ++r) s.records(r, c) = unit(rng);
    return s;
}

/// A two-scale dataset: parent p has the children listed in edges[p].
inline MultiScaleDataset two_level(std::vector<std::vector<Index>> edges, std::size_t n_child, std::size_t dp = 3,
                                   std::size_t dc = 2, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    MultiScaleDataset ds;
    ds.name = "fixture";
    ds.scales.push_back(random_scale("coarse", edges.size(), dp, rng));
    ds.scales.push_back(random_scale("fine", n_child, dc, rng));
    ds.nestings.push_back({"coarse", "fine", std::move(edges)});
    return ds;
}

/// Random dataset with `levels` scales; every record at every non-base
/// level gets 1-3 random children, so overlaps and orphans both occur.
inline MultiScaleDataset random_nested(std::size_t levels, std::mt19937_64 &rng) {
    std::uniform_int_distribution<std::size_t> count(2, 6), kids(1, 3);
    MultiScaleDataset ds;
    ds.name = "random";
    std::vector<std::size_t> sizes;
    for (std::size_t l = 0; l < levels; ++l) sizes.push_back(count(rng) + l * 2);
    for (std::size_t l = 0; l < levels; ++l) ds.scales.push_back(random_scale("s" + std::to_string(l), sizes[l], 2, rng));
    for (std::size_t l = 0; l + 1 < levels; ++l) {
        NestingMap m{ds.scales[l].id, ds.scales[l + 1].id, {}};
        std::uniform_int_distribution<Index> pick(0, Index(sizes[l + 1] - 1));
        for (std::size_t p = 0; p < sizes[l]; ++p) {
            std::vector<Index> e;
            const auto k = kids(rng);
            for (std::size_t i = 0; i < k; ++i) e.push_back(pick(rng));
            std::sort(e.begin(), e.end());
            e.erase(std::unique(e.begin(), e.end()), e.end());
            m.edges.push_back(std::move(e));
        }
        ds.nestings.push_back(std::move(m));
    }
    return ds;
}

/// Scratch directory under the system temp dir, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string &name) {
    auto p = std::filesystem::temp_directory_path() / ("nestfuse_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace nestfuse::testing
