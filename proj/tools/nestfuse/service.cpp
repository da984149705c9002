#include "nestfuse/service.hpp"

#include <httplib.h>

#include <json.hpp>

#include "nestfuse/commands.hpp"
#include "nestfuse/error.hpp"
#include "nestfuse/regions.hpp"
#include "nestfuse/wasserstein.hpp"

namespace nestfuse::cli {

using nlohmann::json;

namespace {

Response error_response(int status, const std::string &message) {
    return {status, json{{"error", message}}.dump() + "\n"};
}

int status_for(const Error &e) {
    switch (e.kind()) {
        case ErrorKind::kValidation:
            return 422;
        default:
            return 400;
    }
}

}  // namespace

void ExportStore::load(const std::filesystem::path &path) {
    if (std::filesystem::is_directory(path)) {
        std::vector<std::filesystem::path> files;
        for (const auto &e : std::filesystem::directory_iterator(path)) {
            const auto &p = e.path();
            if (p.extension() == ".json" && p.string().find(".config.json") == std::string::npos) files.push_back(p);
        }
        std::sort(files.begin(), files.end());
        for (const auto &f : files) load(f);
        return;
    }
    add(path.stem().string(), read_text(path));
}

void ExportStore::add(const std::string &id, std::string json_text) {
    auto loaded = load_viz_export(json_text);
    entries_[id] = std::make_shared<const Entry>(Entry{std::move(json_text), std::move(loaded)});
}

std::vector<std::string> ExportStore::ids() const {
    std::vector<std::string> out;
    for (const auto &[id, _] : entries_) out.push_back(id);
    return out;
}

const std::string &ExportStore::text(const std::string &id) const {
    const auto it = entries_.find(id);
    if (it == entries_.end()) fail(ErrorKind::kInvalidReference, "no export '" + id + "'");
    return it->second->text;
}

const LoadedExport &ExportStore::loaded(const std::string &id) const {
    const auto it = entries_.find(id);
    if (it == entries_.end()) fail(ErrorKind::kInvalidReference, "no export '" + id + "'");
    return it->second->loaded;
}

Response handle_list(const ExportStore &store) {
    json arr = json::array();
    for (const auto &id : store.ids()) {
        const auto &e = store.loaded(id);
        arr.push_back({{"id", id}, {"model_id", e.model_id}, {"latent_dim", e.latent_dim},
                       {"base_count", e.field.mu.rows()}});
    }
    return {200, json{{"exports", arr}}.dump() + "\n"};
}

Response handle_get(const ExportStore &store, const std::string &id) {
    if (!store.contains(id)) return error_response(404, "no export '" + id + "'");
    return {200, store.text(id)};
}

Response handle_separation(const ExportStore &store, const std::string &body) {
    json req;
    try {
        req = json::parse(body);
    } catch (const json::exception &e) {
        return error_response(400, std::string("request is not JSON: ") + e.what());
    }
    if (!req.is_object() || !req.contains("export_id") || !req["export_id"].is_string()) {
        return error_response(400, "request needs a string 'export_id'");
    }
    if (!req.contains("region_a") || !req.contains("region_b")) {
        return error_response(400, "request needs 'region_a' and 'region_b'");
    }
    const auto id = req["export_id"].get<std::string>();
    if (!store.contains(id)) return error_response(404, "no export '" + id + "'");
    try {
        const auto n_proj = req.value("n_proj", kDefaultProjections);
        const auto seed = req.value("seed", std::uint64_t{0});
        if (n_proj == 0) return error_response(400, "n_proj must be positive");
        const Region a = parse_region(req["region_a"].dump());
        const Region b = parse_region(req["region_b"].dump());
        const auto &e = store.loaded(id);
        const auto s = region_separation(e.field, e.coords, a, b, n_proj, seed);
        return {200, json{{"export_id", id},
                          {"region_a", s.region_a},
                          {"region_b", s.region_b},
                          {"distance", s.distance},
                          {"n_a", s.n_a},
                          {"n_b", s.n_b},
                          {"n_proj", s.n_proj},
                          {"seed", s.seed},
                          {"method", s.method}}
                         .dump() +
                         "\n"};
    } catch (const json::exception &e) {
        return error_response(400, std::string("malformed request: ") + e.what());
    } catch (const Error &e) {
        return error_response(status_for(e), e.what());
    }
}

struct HttpService::Impl {
    httplib::Server server;
};

HttpService::HttpService(const ExportStore &store, const std::optional<std::filesystem::path> &static_dir)
    : impl_(std::make_unique<Impl>()) {
    auto &srv = impl_->server;
    auto reply = [](httplib::Response &res, const Response &r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    srv.Get("/api/exports", [&store, reply](const httplib::Request &, httplib::Response &res) {
        reply(res, handle_list(store));
    });
    srv.Get(R"(/api/export/([^/]+))", [&store, reply](const httplib::Request &req, httplib::Response &res) {
        reply(res, handle_get(store, req.matches[1]));
    });
    srv.Post("/api/separation", [&store, reply](const httplib::Request &req, httplib::Response &res) {
        reply(res, handle_separation(store, req.body));
    });
    if (static_dir && !srv.set_mount_point("/", static_dir->string())) {
        fail(ErrorKind::kFormat, "static directory '" + static_dir->string() + "' does not exist");
    }
}

HttpService::~HttpService() = default;

int HttpService::bind(const std::string &host, int port) {
    auto &srv = impl_->server;
    const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
    if (bound < 0) fail(ErrorKind::kConfig, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpService::listen() { impl_->server.listen_after_bind(); }

void HttpService::stop() { impl_->server.stop(); }

}  // namespace nestfuse::cli
