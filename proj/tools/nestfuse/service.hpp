#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nestfuse/viz_export.hpp"

namespace nestfuse::cli {

/// Exports loaded once at startup and never mutated, so request handlers
/// can share them across threads.
class ExportStore {
   public:
    /// Adds one export file, or every *.json export in a directory. The id
    /// is the file stem.
    void load(const std::filesystem::path &path);
    void add(const std::string &id, std::string json_text);

    std::vector<std::string> ids() const;
    bool contains(const std::string &id) const { return entries_.count(id) != 0; }
    const std::string &text(const std::string &id) const;
    const LoadedExport &loaded(const std::string &id) const;

   private:
    struct Entry {
        std::string text;
        LoadedExport loaded;
    };
    std::map<std::string, std::shared_ptr<const Entry>> entries_;
};

struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

Response handle_list(const ExportStore &store);
Response handle_get(const ExportStore &store, const std::string &id);
/// Body: {"export_id", "region_a", "region_b", "n_proj"?, "seed"?}.
Response handle_separation(const ExportStore &store, const std::string &body);

/// HTTP front for the three endpoints, plus static files when given.
class HttpService {
   public:
    HttpService(const ExportStore &store, const std::optional<std::filesystem::path> &static_dir = {});
    ~HttpService();
    HttpService(const HttpService &) = delete;
    HttpService &operator=(const HttpService &) = delete;

    /// Returns the bound port; port 0 picks a free one.
    int bind(const std::string &host, int port);
    /// Blocks until stop().
    void listen();
    void stop();

   private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace nestfuse::cli
