#include <algorithm>
#include <numeric>

#include "nestfuse/baselines.hpp"
#include "nestfuse/error.hpp"

namespace nestfuse {

const char *to_string(FlattenMode mode) {
    return mode == FlattenMode::kJoint ? "joint" : "concatenative";
}

namespace {

void require_two_scales(const MultiScaleDataset &ds) {
    if (ds.depth() != 2) {
        fail(ErrorKind::kUnsupported, "flattened baselines need exactly two scales, dataset has " +
                                          std::to_string(ds.depth()));
    }
}

// Children of `p`, nearest first when both scales carry coordinates,
// otherwise by index. Truncation without coordinates is an error.
std::vector<Index> ordered_children(const DataScale &parent, const DataScale &child, const std::vector<Index> &kids,
                                    Index p, std::size_t budget) {
    std::vector<Index> out = kids;
    const bool have_coords = parent.coords && child.coords;
    if (out.size() > budget && !have_coords) {
        fail(ErrorKind::kFormat, "parent " + std::to_string(p) + " of '" + parent.id + "' has " +
                                     std::to_string(out.size()) + " children, more than the budget of " +
                                     std::to_string(budget) + ", and truncation needs coordinates");
    }
    if (have_coords) {
        const Eigen::RowVector2f at = parent.coords->row(p);
        std::vector<float> d2(out.size());
        for (std::size_t k = 0; k < out.size(); ++k) d2[k] = (child.coords->row(out[k]) - at).squaredNorm();
        std::vector<std::size_t> order(out.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return d2[a] < d2[b] || (d2[a] == d2[b] && out[a] < out[b]);
        });
        std::vector<Index> sorted;
        sorted.reserve(out.size());
        for (auto k : order) sorted.push_back(out[k]);
        out = std::move(sorted);
    }
    if (out.size() > budget) out.resize(budget);
    return out;
}

}  // namespace

FlattenedView flatten(const MultiScaleDataset &ds, FlattenMode mode, std::optional<std::size_t> budget) {
    require_two_scales(ds);
    require_valid(ds);
    const DataScale &parent = ds.scales[0];
    const DataScale &child = ds.scales[1];
    const auto &edges = ds.nestings[0].edges;

    FlattenedView v;
    v.mode = mode;
    v.parent_dim = parent.dim();
    v.child_dim = child.dim();
    const auto dp = Eigen::Index(v.parent_dim), dc = Eigen::Index(v.child_dim);

    if (mode == FlattenMode::kConcatenative) {
        std::size_t rows = 0;
        for (const auto &kids : edges) rows += kids.size();
        v.matrix.resize(Eigen::Index(rows), dp + dc);
        Eigen::Index r = 0;
        for (Index p = 0; p < edges.size(); ++p) {
            for (Index c : edges[p]) {
                v.matrix.row(r).head(dp) = parent.records.row(p).cast<double>();
                v.matrix.row(r).tail(dc) = child.records.row(c).cast<double>();
                v.row_parent.push_back(p);
                v.row_child.push_back(c);
                ++r;
            }
        }
        return v;
    }

    std::size_t widest = 0;
    for (const auto &kids : edges) widest = std::max(widest, kids.size());
    v.budget = budget.value_or(widest);
    if (v.budget == 0) fail(ErrorKind::kConfig, "joint flattening budget must be positive");

    const Eigen::RowVectorXd fill = child.records.cast<double>().colwise().mean();
    v.matrix.resize(Eigen::Index(edges.size()), dp + Eigen::Index(v.budget) * dc);
    for (Index p = 0; p < edges.size(); ++p) {
        auto kids = ordered_children(parent, child, edges[p], p, v.budget);
        auto row = v.matrix.row(p);
        row.head(dp) = parent.records.row(p).cast<double>();
        for (std::size_t s = 0; s < v.budget; ++s) {
            auto slot = row.segment(dp + Eigen::Index(s) * dc, dc);
            if (s < kids.size()) {
                slot = child.records.row(kids[s]).cast<double>();
            } else {
                slot = fill;
            }
        }
        v.row_parent.push_back(p);
        v.slot_children.push_back(std::move(kids));
    }
    return v;
}

Mat concat_rows_for_group(const ScanGroup &group) {
    if (group.levels != 2) {
        fail(ErrorKind::kUnsupported, "concatenative rows need a two-level group");
    }
    const auto members = group.members(1);
    const auto &root = group.root().values;
    if (members.empty()) return Mat(0, root.size());
    const auto dp = root.size();
    const auto dc = group.nodes[members.front().second].values.size();
    Mat rows(Eigen::Index(members.size()), dp + dc);
    for (std::size_t k = 0; k < members.size(); ++k) {
        rows.row(Eigen::Index(k)).head(dp) = root.cast<double>().transpose();
        rows.row(Eigen::Index(k)).tail(dc) = group.nodes[members[k].second].values.cast<double>().transpose();
    }
    return rows;
}

}  // namespace nestfuse
