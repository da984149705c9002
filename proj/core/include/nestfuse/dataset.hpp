#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nestfuse {

using Index = std::uint32_t;
using RecordMatrix = Eigen::MatrixXf;  // N x dim, column-major
using CoordMatrix = Eigen::MatrixXf;   // N x 2, microns

/// One measurement layer: N records of a fixed dimensionality, optionally
/// positioned in a flat micron coordinate frame.
struct DataScale {
    std::string id;
    RecordMatrix records;
    std::optional<CoordMatrix> coords;
    std::map<std::string, std::string> meta;

    std::size_t size() const { return static_cast<std::size_t>(records.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(records.cols()); }
};

/// Parent record -> sorted, duplicate-free list of child records. The same
/// child may sit under several parents.
struct NestingMap {
    std::string parent;
    std::string child;
    std::vector<std::vector<Index>> edges;
};

/// Scales ordered coarsest to finest; nestings[k] links scales[k] to
/// scales[k + 1]. The last scale is the latent (base) scale.
struct MultiScaleDataset {
    std::string name;
    std::vector<DataScale> scales;
    std::vector<NestingMap> nestings;

    std::size_t depth() const { return scales.size(); }
    std::size_t base_level() const { return scales.size() - 1; }
    const DataScale &base() const { return scales.back(); }
    /// Level of a scale id; throws kInvalidReference when unknown.
    std::size_t level_of(std::string_view scale_id) const;
};

/// Base-scale records underlying `index` at `scale_id`, following nestings
/// down to the latent scale. Sorted ascending, duplicate-free.
std::vector<Index> beta(const MultiScaleDataset &ds, std::string_view scale_id, Index index);
std::vector<Index> beta_at_level(const MultiScaleDataset &ds, std::size_t level, Index index);

/// Child j is nested under parent i iff |coord_i - coord_j| <= radius.
NestingMap build_nesting_from_coords(const DataScale &parent, const DataScale &child, double radius);

struct ValidationReport {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;

    bool ok() const { return errors.empty(); }
};

ValidationReport validate(const MultiScaleDataset &ds);

/// Throws kValidation carrying every error line when the report is not ok.
void require_valid(const MultiScaleDataset &ds);

/// A node of a scan group in sequence order: the root first, then each
/// child immediately followed by its own subtree.
struct GroupNode {
    std::size_t level = 0;
    Index index = 0;
    int parent = -1;  // position of the parent node, -1 for the root
    Eigen::VectorXf values;
    std::optional<Eigen::Vector2f> coord;
};

/// One coarsest-scale record with its nested subtree. The training and
/// inference unit of the fusion model.
struct ScanGroup {
    Index root_index = 0;
    std::size_t levels = 0;  // number of scales spanned, root level included
    std::vector<GroupNode> nodes;

    const GroupNode &root() const { return nodes.front(); }
    /// Sequence positions of unique base records, first occurrence order.
    std::vector<std::size_t> base_positions() const;
    std::vector<Index> base_indices() const;
    /// Unique (index, first position) pairs per level.
    std::vector<std::pair<Index, std::size_t>> members(std::size_t level) const;
    /// Positions of the unique base records under the node at `position`,
    /// as offsets into base_positions().
    std::vector<std::size_t> base_slots_under(std::size_t position) const;
};

ScanGroup make_group(const MultiScaleDataset &ds, Index root_index);
std::vector<ScanGroup> make_groups(const MultiScaleDataset &ds);

}  // namespace nestfuse
