#include "nestfuse/dataset_io.hpp"

#include <json.hpp>

#include "binary_io.hpp"

namespace nestfuse {

namespace fs = std::filesystem;
using nlohmann::json;
using detail::append_le;
using detail::read_le;

namespace {

std::string encode_matrix(const Eigen::MatrixXf &m) {
    std::string out;
    out.reserve(std::size_t(m.size()) * 4);
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) append_le<float>(out, m(r, c));
    return out;
}

Eigen::MatrixXf decode_matrix(const std::string &bytes, Eigen::Index rows, Eigen::Index cols,
                              const std::string &what) {
    const auto expect = std::size_t(rows) * std::size_t(cols) * 4;
    if (bytes.size() != expect) {
        fail(ErrorKind::kFormat, what + ": expected " + std::to_string(expect) + " bytes (" +
                                     std::to_string(rows) + " x " + std::to_string(cols) +
                                     " float32), found " + std::to_string(bytes.size()));
    }
    Eigen::MatrixXf m(rows, cols);
    std::size_t pos = 0;
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = read_le<float>(bytes, pos);
    return m;
}

void check_scale_id(const std::string &id) {
    if (id.empty() || id.find_first_of("/\\") != std::string::npos || id.find("__") != std::string::npos) {
        fail(ErrorKind::kFormat, "scale id '" + id + "' is not usable as a file stem");
    }
}

}  // namespace

void write_dataset(const MultiScaleDataset &ds, const fs::path &dir, const std::vector<std::uint32_t> *labels) {
    require_valid(ds);
    fs::create_directories(dir);

    json manifest;
    manifest["format_version"] = kDatasetFormatVersion;
    manifest["name"] = ds.name;
    manifest["scales"] = json::array();
    for (const auto &s : ds.scales) {
        check_scale_id(s.id);
        json js;
        js["id"] = s.id;
        js["dim"] = s.dim();
        js["count"] = s.size();
        js["coords"] = s.coords.has_value();
        js["meta"] = s.meta;
        manifest["scales"].push_back(js);
        detail::spit(dir / (s.id + ".f32"), encode_matrix(s.records));
        if (s.coords) detail::spit(dir / (s.id + ".coords.f32"), encode_matrix(*s.coords));
    }
    manifest["nestings"] = json::array();
    for (const auto &n : ds.nestings) {
        const std::string file = n.parent + "__" + n.child + ".nest";
        manifest["nestings"].push_back({{"parent", n.parent}, {"child", n.child}, {"file", file}});
        std::string bytes;
        for (const auto &e : n.edges) {
            append_le<std::uint32_t>(bytes, std::uint32_t(e.size()));
            for (Index j : e) append_le<std::uint32_t>(bytes, j);
        }
        detail::spit(dir / file, bytes);
    }
    if (labels) {
        if (labels->size() != ds.base().size()) {
            fail(ErrorKind::kFormat, "labels must have one entry per base record");
        }
        std::string bytes;
        for (auto l : *labels) append_le<std::uint32_t>(bytes, l);
        detail::spit(dir / "labels.u32", bytes);
        manifest["labels"] = "labels.u32";
    }
    detail::spit(dir / "manifest.json", manifest.dump(2) + "\n");
}

MultiScaleDataset read_dataset(const fs::path &dir) {
    json manifest;
    try {
        manifest = json::parse(detail::slurp(dir / "manifest.json"));
    } catch (const json::exception &e) {
        fail(ErrorKind::kFormat, "malformed manifest in '" + dir.string() + "': " + e.what());
    }

    MultiScaleDataset ds;
    try {
        const auto version = manifest.at("format_version").get<std::string>();
        if (version != kDatasetFormatVersion) {
            fail(ErrorKind::kFormat, "dataset format version '" + version + "' is not supported (expected '" +
                                         kDatasetFormatVersion + "')");
        }
        ds.name = manifest.value("name", std::string{});
        for (const auto &js : manifest.at("scales")) {
            DataScale s;
            s.id = js.at("id").get<std::string>();
            check_scale_id(s.id);
            const auto dim = js.at("dim").get<std::int64_t>();
            const auto count = js.at("count").get<std::int64_t>();
            if (dim < 1 || count < 1) fail(ErrorKind::kFormat, "scale '" + s.id + "': dim and count must be >= 1");
            s.records = decode_matrix(detail::slurp(dir / (s.id + ".f32")), count, dim, "scale '" + s.id + "'");
            if (js.value("coords", false)) {
                s.coords = decode_matrix(detail::slurp(dir / (s.id + ".coords.f32")), count, 2,
                                         "coords of scale '" + s.id + "'");
            }
            if (js.contains("meta")) s.meta = js.at("meta").get<std::map<std::string, std::string>>();
            ds.scales.push_back(std::move(s));
        }
        for (const auto &jn : manifest.at("nestings")) {
            NestingMap n;
            n.parent = jn.at("parent").get<std::string>();
            n.child = jn.at("child").get<std::string>();
            const auto file = jn.value("file", n.parent + "__" + n.child + ".nest");
            const auto parent_count = ds.scales.at(ds.level_of(n.parent)).size();
            const auto bytes = detail::slurp(dir / file);
            std::size_t pos = 0;
            n.edges.resize(parent_count);
            for (auto &e : n.edges) {
                const auto k = read_le<std::uint32_t>(bytes, pos);
                if (std::size_t(k) * 4 > bytes.size() - pos) {
                    fail(ErrorKind::kFormat, "nesting '" + file + "': truncated child list");
                }
                e.resize(k);
                for (auto &j : e) j = read_le<std::uint32_t>(bytes, pos);
            }
            if (pos != bytes.size()) fail(ErrorKind::kFormat, "nesting '" + file + "': trailing bytes");
            ds.nestings.push_back(std::move(n));
        }
    } catch (const json::exception &e) {
        fail(ErrorKind::kFormat, "malformed manifest in '" + dir.string() + "': " + e.what());
    }
    return ds;
}

std::optional<std::vector<std::uint32_t>> read_labels(const fs::path &dir) {
    if (!fs::exists(dir / "labels.u32")) return std::nullopt;
    const auto bytes = detail::slurp(dir / "labels.u32");
    if (bytes.size() % 4 != 0) fail(ErrorKind::kFormat, "labels.u32 size is not a multiple of 4");
    std::vector<std::uint32_t> out(bytes.size() / 4);
    std::size_t pos = 0;
    for (auto &l : out) l = read_le<std::uint32_t>(bytes, pos);
    return out;
}

}  // namespace nestfuse
