#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nestfuse/model.hpp"
#include "nestfuse/optim.hpp"
#include "nestfuse/synthetic.hpp"

namespace nestfuse::cli {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kUsage = 1, kValidationFailure = 2, kRuntimeFailure = 3 };

/// Maps an exception escaping a command onto the documented exit codes.
int exit_code_for(const std::exception &e);

struct GenSynthOptions {
    SynthConfig synth;
    std::string name = "synthetic";
    fs::path out;
};
int gen_synth(const GenSynthOptions &o, std::ostream &log);

inline constexpr const char *kModelNames[] = {"nested-fusion", "joint-pca", "joint-vae", "concat-pca", "concat-vae"};
bool is_model_name(const std::string &name);

struct TrainOptions {
    fs::path data;
    fs::path out;
    std::optional<fs::path> loss_log;  // default: <out>.loss.csv
    std::string model = "nested-fusion";
    ModelConfig fusion;
    OptimizerConfig opt;
    bool batch_given = false;
    std::size_t vae_width = 64;
    int vae_depth = 2;
    std::optional<std::size_t> budget;
};
int train(TrainOptions o, std::ostream &log);

struct EncodeOptions {
    fs::path data, checkpoint, out;
};
int encode(const EncodeOptions &o, std::ostream &log);

struct ReconstructOptions {
    fs::path data, checkpoint, out;
};
int reconstruct(const ReconstructOptions &o, std::ostream &log);

struct EvalOptions {
    fs::path data;
    std::vector<fs::path> checkpoints;  // more than one: comparison table
    std::optional<fs::path> out;
    std::optional<fs::path> regions;
    std::size_t n_proj = 256;
    std::uint64_t seed = 0;
};
int eval(const EvalOptions &o, std::ostream &log);

struct ExportOptions {
    fs::path data, checkpoint, out;
    std::optional<fs::path> regions;
    std::size_t bins = 300;
    std::size_t point_cap = 100000;
    std::uint64_t seed = 0;
};
int export_viz(const ExportOptions &o, std::ostream &log);

struct RegionsFromLabelsOptions {
    fs::path data, out;
};
int regions_from_labels(const RegionsFromLabelsOptions &o, std::ostream &log);

struct ServeOptions {
    std::vector<fs::path> exports;  // files or directories of *.json
    std::optional<fs::path> static_dir;
    std::string host = "127.0.0.1";
    int port = 8080;
};
int serve(const ServeOptions &o, std::ostream &log);

/// Default config-echo path for an artifact: "<artifact>.config.json".
fs::path echo_path(const fs::path &artifact);

std::string read_text(const fs::path &p);
void write_text(const fs::path &p, const std::string &text);

}  // namespace nestfuse::cli
