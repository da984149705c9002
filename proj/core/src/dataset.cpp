#include "nestfuse/dataset.hpp"

#include <algorithm>
#include <sstream>

#include "nestfuse/error.hpp"

namespace nestfuse {

const char *to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::kInvalidReference:
            return "invalid-reference";
        case ErrorKind::kFormat:
            return "format";
        case ErrorKind::kValidation:
            return "validation";
        case ErrorKind::kConfig:
            return "config";
        case ErrorKind::kTraining:
            return "training";
        case ErrorKind::kInference:
            return "inference";
        case ErrorKind::kUndefinedMetric:
            return "undefined-metric";
        case ErrorKind::kUnsupported:
            return "unsupported";
    }
    return "unknown";
}

std::size_t MultiScaleDataset::level_of(std::string_view scale_id) const {
    for (std::size_t i = 0; i < scales.size(); ++i) {
        if (scales[i].id == scale_id) return i;
    }
    fail(ErrorKind::kInvalidReference, "unknown scale id '" + std::string(scale_id) + "'");
}

std::vector<Index> beta_at_level(const MultiScaleDataset &ds, std::size_t level, Index index) {
    if (level >= ds.depth()) {
        fail(ErrorKind::kInvalidReference, "scale level " + std::to_string(level) + " out of range");
    }
    if (index >= ds.scales[level].size()) {
        fail(ErrorKind::kInvalidReference, "index " + std::to_string(index) + " out of range for scale '" +
                                                ds.scales[level].id + "'");
    }
    std::vector<Index> frontier{index};
    for (std::size_t l = level; l < ds.base_level(); ++l) {
        const auto &edges = ds.nestings[l].edges;
        std::vector<char> hit(ds.scales[l + 1].size(), 0);
        for (Index p : frontier) {
            for (Index c : edges.at(p)) hit[c] = 1;
        }
        frontier.clear();
        for (std::size_t c = 0; c < hit.size(); ++c) {
            if (hit[c]) frontier.push_back(static_cast<Index>(c));
        }
    }
    return frontier;
}

std::vector<Index> beta(const MultiScaleDataset &ds, std::string_view scale_id, Index index) {
    return beta_at_level(ds, ds.level_of(scale_id), index);
}

NestingMap build_nesting_from_coords(const DataScale &parent, const DataScale &child, double radius) {
    if (!parent.coords || !child.coords) {
        fail(ErrorKind::kFormat, "nesting by distance needs coords on both '" + parent.id + "' and '" +
                                     child.id + "'");
    }
    if (!(radius > 0.0)) fail(ErrorKind::kConfig, "nesting radius must be positive");

    const auto &pc = *parent.coords;
    const auto &cc = *child.coords;
    const double r2 = radius * radius;

    NestingMap map{parent.id, child.id, {}};
    map.edges.resize(parent.size());
    for (Eigen::Index i = 0; i < pc.rows(); ++i) {
        const double px = pc(i, 0), py = pc(i, 1);
        auto &out = map.edges[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < cc.rows(); ++j) {
            const double dx = double(cc(j, 0)) - px;
            const double dy = double(cc(j, 1)) - py;
            if (dx * dx + dy * dy <= r2) out.push_back(static_cast<Index>(j));
        }
        if (out.empty()) {
            fail(ErrorKind::kValidation, "parent " + std::to_string(i) + " of '" + parent.id +
                                             "' has no children within radius");
        }
    }
    return map;
}

ValidationReport validate(const MultiScaleDataset &ds) {
    ValidationReport rep;
    auto err = [&](const std::string &s) { rep.errors.push_back(s); };

    if (ds.scales.empty()) {
        err("dataset has no scales");
        return rep;
    }
    for (const auto &s : ds.scales) {
        if (s.records.rows() < 1) err("scale '" + s.id + "': no records");
        if (s.records.cols() < 1) err("scale '" + s.id + "': dim must be >= 1");
        if (s.coords && (s.coords->rows() != s.records.rows() || s.coords->cols() != 2)) {
            err("scale '" + s.id + "': coords must be one (x, y) pair per record");
        }
        if (!s.records.allFinite()) err("scale '" + s.id + "': non-finite record values");
    }
    if (ds.nestings.size() + 1 != ds.scales.size()) {
        err("expected " + std::to_string(ds.scales.size() - 1) + " nestings, found " +
            std::to_string(ds.nestings.size()));
        return rep;
    }
    for (std::size_t k = 0; k < ds.nestings.size(); ++k) {
        const auto &n = ds.nestings[k];
        const auto &p = ds.scales[k];
        const auto &c = ds.scales[k + 1];
        const std::string tag = "nesting '" + n.parent + "__" + n.child + "'";
        if (n.parent != p.id || n.child != c.id) {
            err(tag + ": must connect '" + p.id + "' to '" + c.id + "'");
            continue;
        }
        if (n.edges.size() != p.size()) {
            err(tag + ": has " + std::to_string(n.edges.size()) + " parents, scale has " +
                std::to_string(p.size()));
        }
        for (std::size_t i = 0; i < n.edges.size(); ++i) {
            const auto &e = n.edges[i];
            if (e.empty()) err(tag + ": parent " + std::to_string(i) + " has an empty nesting set");
            for (std::size_t j = 0; j < e.size(); ++j) {
                if (e[j] >= c.size()) {
                    err(tag + ": edge " + std::to_string(i) + " -> " + std::to_string(e[j]) +
                        " references child index >= " + std::to_string(c.size()));
                }
                if (j > 0 && e[j] <= e[j - 1]) {
                    err(tag + ": parent " + std::to_string(i) + " child list not sorted/unique");
                }
            }
        }
    }
    if (!rep.ok()) return rep;

    // Orphans per nested scale: legal, but worth surfacing.
    for (std::size_t k = 0; k < ds.nestings.size(); ++k) {
        const auto &c = ds.scales[k + 1];
        std::vector<char> seen(c.size(), 0);
        for (const auto &e : ds.nestings[k].edges)
            for (Index j : e) seen[j] = 1;
        const auto orphans = std::count(seen.begin(), seen.end(), 0);
        if (orphans > 0) {
            std::ostringstream os;
            os << "scale '" << c.id << "': " << orphans << " record(s) not nested under any '"
               << ds.scales[k].id << "' record";
            rep.warnings.push_back(os.str());
        }
    }
    return rep;
}

void require_valid(const MultiScaleDataset &ds) {
    const auto rep = validate(ds);
    if (rep.ok()) return;
    std::string msg = "dataset '" + ds.name + "' failed validation:";
    for (const auto &e : rep.errors) msg += "\n  " + e;
    fail(ErrorKind::kValidation, msg);
}

std::vector<std::size_t> ScanGroup::base_positions() const {
    std::vector<std::size_t> out;
    std::vector<Index> seen;
    for (std::size_t p = 0; p < nodes.size(); ++p) {
        if (nodes[p].level + 1 != levels) continue;
        if (std::find(seen.begin(), seen.end(), nodes[p].index) != seen.end()) continue;
        seen.push_back(nodes[p].index);
        out.push_back(p);
    }
    return out;
}

std::vector<Index> ScanGroup::base_indices() const {
    std::vector<Index> out;
    for (auto p : base_positions()) out.push_back(nodes[p].index);
    return out;
}

std::vector<std::pair<Index, std::size_t>> ScanGroup::members(std::size_t level) const {
    std::vector<std::pair<Index, std::size_t>> out;
    for (std::size_t p = 0; p < nodes.size(); ++p) {
        if (nodes[p].level != level) continue;
        const bool dup = std::any_of(out.begin(), out.end(),
                                     [&](const auto &m) { return m.first == nodes[p].index; });
        if (!dup) out.emplace_back(nodes[p].index, p);
    }
    return out;
}

std::vector<std::size_t> ScanGroup::base_slots_under(std::size_t position) const {
    const auto slots = base_indices();
    std::vector<char> under(nodes.size(), 0);
    under[position] = 1;
    // Pre-order: every descendant appears after its parent.
    for (std::size_t p = position + 1; p < nodes.size(); ++p) {
        if (nodes[p].parent >= 0 && under[static_cast<std::size_t>(nodes[p].parent)]) under[p] = 1;
    }
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < slots.size(); ++s) {
        for (std::size_t p = position; p < nodes.size(); ++p) {
            if (under[p] && nodes[p].level + 1 == levels && nodes[p].index == slots[s]) {
                out.push_back(s);
                break;
            }
        }
    }
    return out;
}

namespace {

void append_subtree(const MultiScaleDataset &ds, std::size_t level, Index index, int parent, ScanGroup &g) {
    const auto &scale = ds.scales[level];
    GroupNode node;
    node.level = level;
    node.index = index;
    node.parent = parent;
    node.values = scale.records.row(index).transpose();
    if (scale.coords) node.coord = scale.coords->row(index).transpose();
    const int self = static_cast<int>(g.nodes.size());
    g.nodes.push_back(std::move(node));
    if (level == ds.base_level()) return;
    for (Index child : ds.nestings[level].edges.at(index)) append_subtree(ds, level + 1, child, self, g);
}

}  // namespace

ScanGroup make_group(const MultiScaleDataset &ds, Index root_index) {
    if (ds.scales.empty()) fail(ErrorKind::kInvalidReference, "empty dataset");
    if (root_index >= ds.scales[0].size()) {
        fail(ErrorKind::kInvalidReference, "group root " + std::to_string(root_index) + " out of range");
    }
    ScanGroup g;
    g.root_index = root_index;
    g.levels = ds.depth();
    append_subtree(ds, 0, root_index, -1, g);
    return g;
}

std::vector<ScanGroup> make_groups(const MultiScaleDataset &ds) {
    std::vector<ScanGroup> out;
    out.reserve(ds.scales.at(0).size());
    for (std::size_t i = 0; i < ds.scales[0].size(); ++i) out.push_back(make_group(ds, static_cast<Index>(i)));
    return out;
}

}  // namespace nestfuse
