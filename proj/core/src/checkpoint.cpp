#include "nestfuse/checkpoint.hpp"

#include <cstring>
#include <json.hpp>

#include "binary_io.hpp"
#include "nestfuse/error.hpp"

namespace nestfuse {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'N', 'F', 'C', 'K', 'P', 'T', '\0', '\0'};

json config_json(const ModelConfig &cfg) {
    return json{{"latent_dim", cfg.latent_dim},
                {"token_dim", cfg.token_dim},
                {"encoder_depth", cfg.encoder_depth},
                {"encoder_hidden", cfg.encoder_hidden},
                {"decoder_depth", cfg.decoder_depth},
                {"decoder_width", cfg.decoder_width},
                {"aggregate_depth", cfg.aggregate_depth},
                {"aggregate_width", cfg.aggregate_width},
                {"heads", cfg.heads},
                {"kl_weight", cfg.kl_weight},
                {"positional", cfg.positional},
                {"scale_weights", cfg.scale_weights},
                {"seed", cfg.seed}};
}

ModelConfig config_from(const json &j) {
    ModelConfig cfg;
    cfg.latent_dim = j.at("latent_dim").get<std::size_t>();
    cfg.token_dim = j.at("token_dim").get<std::size_t>();
    cfg.encoder_depth = j.at("encoder_depth").get<int>();
    cfg.encoder_hidden = j.at("encoder_hidden").get<std::size_t>();
    cfg.decoder_depth = j.at("decoder_depth").get<int>();
    cfg.decoder_width = j.at("decoder_width").get<std::size_t>();
    cfg.aggregate_depth = j.at("aggregate_depth").get<int>();
    cfg.aggregate_width = j.at("aggregate_width").get<std::size_t>();
    cfg.heads = j.at("heads").get<int>();
    cfg.kl_weight = j.at("kl_weight").get<double>();
    cfg.positional = j.value("positional", false);
    cfg.scale_weights = j.value("scale_weights", std::vector<double>{});
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

}  // namespace

const NamedTensor &CheckpointContainer::tensor(const std::string &name) const {
    for (const auto &t : tensors)
        if (t.name == name) return t;
    fail(ErrorKind::kFormat, "checkpoint has no tensor '" + name + "'");
}

std::string encode_checkpoint(const CheckpointContainer &c) {
    json manifest;
    manifest["format_version"] = kCheckpointFormatVersion;
    manifest["kind"] = c.kind;
    manifest["config"] = json::parse(c.config_json.empty() ? "{}" : c.config_json);
    manifest["tensors"] = json::array();
    std::string blobs;
    for (const auto &t : c.tensors) {
        manifest["tensors"].push_back(
            {{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}, {"offset", blobs.size()}});
        for (Eigen::Index col = 0; col < t.value.cols(); ++col)
            for (Eigen::Index r = 0; r < t.value.rows(); ++r) detail::append_le<float>(blobs, float(t.value(r, col)));
    }
    const std::string text = manifest.dump(2);
    std::string out(kMagic, sizeof(kMagic));
    detail::append_le<std::uint32_t>(out, kCheckpointFormatVersion);
    detail::append_le<std::uint32_t>(out, std::uint32_t(text.size()));
    out += text;
    out += blobs;
    return out;
}

CheckpointContainer decode_checkpoint(const std::string &bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        fail(ErrorKind::kFormat, "not a nestfuse checkpoint (bad magic)");
    }
    std::size_t pos = sizeof(kMagic);
    const auto version = detail::read_le<std::uint32_t>(bytes, pos);
    if (version != kCheckpointFormatVersion) {
        fail(ErrorKind::kFormat, "checkpoint format version " + std::to_string(version) + " is not supported");
    }
    const auto len = detail::read_le<std::uint32_t>(bytes, pos);
    if (pos + len > bytes.size()) fail(ErrorKind::kFormat, "checkpoint manifest truncated");
    CheckpointContainer c;
    try {
        const json manifest = json::parse(bytes.substr(pos, len));
        pos += len;
        c.kind = manifest.at("kind").get<std::string>();
        c.config_json = manifest.at("config").dump();
        const std::size_t blob_start = pos;
        for (const auto &jt : manifest.at("tensors")) {
            NamedTensor t;
            t.name = jt.at("name").get<std::string>();
            const auto rows = jt.at("rows").get<Eigen::Index>();
            const auto cols = jt.at("cols").get<Eigen::Index>();
            std::size_t at = blob_start + jt.at("offset").get<std::size_t>();
            if (rows < 0 || cols < 0 || at + std::size_t(rows * cols) * 4 > bytes.size()) {
                fail(ErrorKind::kFormat, "checkpoint tensor '" + t.name + "' out of bounds");
            }
            t.value.resize(rows, cols);
            for (Eigen::Index col = 0; col < cols; ++col)
                for (Eigen::Index r = 0; r < rows; ++r) t.value(r, col) = detail::read_le<float>(bytes, at);
            c.tensors.push_back(std::move(t));
        }
    } catch (const json::exception &e) {
        fail(ErrorKind::kFormat, std::string("malformed checkpoint manifest: ") + e.what());
    }
    return c;
}

void write_checkpoint(const CheckpointContainer &c, const std::filesystem::path &path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    detail::spit(path, encode_checkpoint(c));
}

CheckpointContainer read_checkpoint(const std::filesystem::path &path) { return decode_checkpoint(detail::slurp(path)); }

std::string model_config_to_json(const ModelConfig &cfg) { return config_json(cfg).dump(); }

ModelConfig model_config_from_json(const std::string &text) {
    try {
        return config_from(json::parse(text));
    } catch (const json::exception &e) {
        fail(ErrorKind::kFormat, std::string("malformed model config: ") + e.what());
    }
}

CheckpointContainer to_checkpoint(const NestedFusionModel &model) {
    CheckpointContainer c;
    c.kind = kNestedFusionKind;
    json cfg = config_json(model.config());
    cfg["scales"] = json::array();
    for (const auto &n : model.norms()) cfg["scales"].push_back({{"id", n.scale}, {"dim", n.mean.size()}});
    c.config_json = cfg.dump();
    for (const auto &n : model.norms()) {
        c.tensors.push_back({"norm." + n.scale + ".mean", n.mean});
        c.tensors.push_back({"norm." + n.scale + ".std", n.std});
    }
    for (const auto &p : model.params()) c.tensors.push_back({p.name, p.value});
    return c;
}

NestedFusionModel nested_fusion_from_checkpoint(const CheckpointContainer &c) {
    if (c.kind != kNestedFusionKind) {
        fail(ErrorKind::kFormat, "checkpoint kind '" + c.kind + "' is not '" + kNestedFusionKind + "'");
    }
    ModelConfig cfg;
    std::vector<ScaleNorm> norms;
    try {
        const json j = json::parse(c.config_json);
        cfg = config_from(j);
        for (const auto &s : j.at("scales")) {
            ScaleNorm n;
            n.scale = s.at("id").get<std::string>();
            n.mean = c.tensor("norm." + n.scale + ".mean").value;
            n.std = c.tensor("norm." + n.scale + ".std").value;
            if (n.mean.size() != s.at("dim").get<Eigen::Index>() || n.std.size() != n.mean.size()) {
                fail(ErrorKind::kFormat, "checkpoint normalization for '" + n.scale + "' has the wrong width");
            }
            norms.push_back(std::move(n));
        }
    } catch (const json::exception &e) {
        fail(ErrorKind::kFormat, std::string("malformed checkpoint config: ") + e.what());
    }
    NestedFusionModel model(cfg, std::move(norms));
    for (auto &p : model.params()) {
        const auto &t = c.tensor(p.name);
        if (t.value.rows() != p.value.rows() || t.value.cols() != p.value.cols()) {
            fail(ErrorKind::kFormat, "checkpoint tensor '" + p.name + "' has the wrong shape");
        }
        p.value = t.value;
    }
    return model;
}

}  // namespace nestfuse
