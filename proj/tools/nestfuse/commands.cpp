#include "nestfuse/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "nestfuse/baselines.hpp"
#include "nestfuse/checkpoint.hpp"
#include "nestfuse/dataset_io.hpp"
#include "nestfuse/error.hpp"
#include "nestfuse/evaluate.hpp"
#include "nestfuse/service.hpp"
#include "nestfuse/train.hpp"
#include "nestfuse/viz_export.hpp"

namespace nestfuse::cli {

using nlohmann::json;

namespace {

constexpr std::size_t kConcatVaeBatch = 64;

std::string fmt(const char *spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::string num(double v) { return std::isfinite(v) ? fmt("%.17g", v) : "nan"; }

void write_echo(const fs::path &artifact, const json &cfg) { write_text(echo_path(artifact), cfg.dump(2) + "\n"); }

json synth_json(const SynthConfig &s) {
    return {{"width", s.width},
            {"height", s.height},
            {"pitch", s.pitch},
            {"classes", s.classes},
            {"base_dim", s.base_dim},
            {"parent_dim", s.parent_dim},
            {"parent_spacing", s.parent_spacing},
            {"radius", s.radius},
            {"base_noise", s.base_noise},
            {"parent_noise", s.parent_noise},
            {"seed", s.seed}};
}

json opt_json(const OptimizerConfig &o) {
    return {{"learning_rate", o.learning_rate},
            {"clip_norm", o.clip_norm ? json(*o.clip_norm) : json()},
            {"steps", o.steps},
            {"batch_size", o.batch_size},
            {"seed", o.seed}};
}

std::size_t zero_variance_dims(const DataScale &s) {
    std::size_t n = 0;
    for (Eigen::Index d = 0; d < s.records.cols(); ++d) {
        const auto col = s.records.col(d);
        if (col.size() == 0 || col.maxCoeff() == col.minCoeff()) ++n;
    }
    return n;
}

void print_summary(const MultiScaleDataset &ds, std::ostream &log) {
    log << "dataset '" << ds.name << "': " << ds.depth() << " scale(s)\n";
    for (const auto &s : ds.scales) {
        log << "  " << s.id << ": " << s.size() << " records, dim " << s.dim()
            << (s.coords ? ", coords" : ", no coords") << "\n";
        if (const auto z = zero_variance_dims(s); z > 0) {
            log << "  warning: scale '" << s.id << "' has " << z << " zero-variance dimension(s) of " << s.dim()
                << "\n";
        }
    }
    for (const auto &n : ds.nestings) {
        std::size_t lo = n.edges.empty() ? 0 : n.edges.front().size(), hi = 0, total = 0;
        for (const auto &e : n.edges) {
            lo = std::min(lo, e.size());
            hi = std::max(hi, e.size());
            total += e.size();
        }
        const double mean = n.edges.empty() ? 0.0 : double(total) / double(n.edges.size());
        log << "  " << n.parent << " -> " << n.child << ": mean " << fmt("%.2f", mean) << " children per parent (min "
            << lo << ", max " << hi << ")\n";
    }
    const auto rep = validate(ds);
    if (!rep.warnings.empty()) log << "  " << rep.warnings.size() << " validation warning(s):\n";
    for (const auto &w : rep.warnings) log << "    " << w << "\n";
}

AnyModel load_for(const fs::path &ckpt, const MultiScaleDataset &ds) {
    AnyModel m = load_model(ckpt);
    if (m.fusion) m.fusion->check_compatible(ds);
    return m;
}

std::string model_id_of(const fs::path &ckpt) { return ckpt.stem().string(); }

}  // namespace

int exit_code_for(const std::exception &e) {
    const auto *err = dynamic_cast<const Error *>(&e);
    if (!err) return kRuntimeFailure;
    switch (err->kind()) {
        case ErrorKind::kConfig:
            return kUsage;
        case ErrorKind::kInvalidReference:
        case ErrorKind::kFormat:
        case ErrorKind::kValidation:
        case ErrorKind::kUnsupported:
            return kValidationFailure;
        default:
            return kRuntimeFailure;
    }
}

fs::path echo_path(const fs::path &artifact) {
    fs::path p = artifact;
    if (p.filename().empty()) p = p.parent_path();
    return p.string() + ".config.json";
}

std::string read_text(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(ErrorKind::kFormat, "cannot read '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path &p, const std::string &text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(ErrorKind::kFormat, "cannot write '" + p.string() + "'");
    out << text;
}

bool is_model_name(const std::string &name) {
    return std::find(std::begin(kModelNames), std::end(kModelNames), name) != std::end(kModelNames);
}

int gen_synth(const GenSynthOptions &o, std::ostream &log) {
    auto s = generate_synthetic(o.synth);
    s.dataset.name = o.name;
    write_dataset(s.dataset, o.out, &s.truth.labels);
    write_echo(o.out, {{"command", "gen-synth"}, {"name", o.name}, {"out", o.out.string()}, {"synth", synth_json(o.synth)}});
    print_summary(s.dataset, log);
    log << "wrote " << o.out.string() << "\n";
    return kOk;
}

int train(TrainOptions o, std::ostream &log) {
    if (!is_model_name(o.model)) {
        std::string names;
        for (const char *n : kModelNames) names += std::string(names.empty() ? "" : ", ") + n;
        fail(ErrorKind::kConfig, "unknown model '" + o.model + "'; valid models: " + names);
    }
    const auto ds = read_dataset(o.data);
    const auto report = validate(ds);
    if (!report.ok()) {
        for (const auto &e : report.errors) log << "validation error: " << e << "\n";
        require_valid(ds);
    }
    const auto kind = parse_baseline_kind(o.model);
    if (!o.batch_given && kind == BaselineKind::kConcatVae) o.opt.batch_size = kConcatVaeBatch;
    const fs::path loss_log = o.loss_log.value_or(fs::path(o.out.string() + ".loss.csv"));

    json echo{{"command", "train"},     {"data", o.data.string()},          {"out", o.out.string()},
              {"loss_log", loss_log.string()}, {"model", o.model},        {"optimizer", opt_json(o.opt)}};
    if (kind) {
        echo["latent_dim"] = o.fusion.latent_dim;
        echo["budget"] = o.budget ? json(*o.budget) : json();
        if (is_vae(*kind)) echo["vae"] = {{"width", o.vae_width}, {"depth", o.vae_depth}, {"kl_weight", o.fusion.kl_weight}, {"seed", o.fusion.seed}};
    } else {
        echo["model_config"] = json::parse(model_config_to_json(o.fusion));
    }
    write_echo(o.out, echo);

    LossHistory history;
    CheckpointContainer ckpt;
    try {
        if (kind) {
            FlatVaeConfig vc;
            vc.width = o.vae_width;
            vc.depth = o.vae_depth;
            vc.kl_weight = o.fusion.kl_weight;
            vc.seed = o.fusion.seed;
            auto fit = fit_baseline(ds, *kind, o.fusion.latent_dim, vc, o.opt, o.budget);
            history = std::move(fit.history);
            ckpt = to_checkpoint(fit.model);
        } else {
            auto res = train_nested_fusion(ds, o.fusion, o.opt);
            history = std::move(res.history);
            ckpt = to_checkpoint(res.model);
        }
    } catch (const TrainingDiverged &e) {
        write_text(loss_log, e.history().to_csv());
        log << "training diverged: " << e.what() << "\n" << "partial loss log: " << loss_log.string() << "\n";
        throw;
    }
    write_checkpoint(ckpt, o.out);
    write_text(loss_log, history.to_csv());
    log << "model " << o.model << ", d_z " << o.fusion.latent_dim << ", " << history.records.size() << " step(s)\n";
    if (!history.records.empty()) {
        const auto n = history.records.size();
        log << "loss (moving average of last " << std::min<std::size_t>(100, n) << "): "
            << fmt("%.4f", history.moving_average(n, 100)) << "\n";
    }
    log << "wrote " << o.out.string() << " and " << loss_log.string() << "\n";
    return kOk;
}

int encode(const EncodeOptions &o, std::ostream &log) {
    const auto ds = read_dataset(o.data);
    const auto model = load_for(o.checkpoint, ds);
    const auto field = model.latents(ds);
    write_echo(o.out, {{"command", "encode"}, {"data", o.data.string()}, {"checkpoint", o.checkpoint.string()},
                       {"out", o.out.string()}});
    std::string csv = "index,x,y,coverage";
    for (Eigen::Index k = 0; k < field.mu.cols(); ++k) csv += ",z" + std::to_string(k);
    csv += "\n";
    const auto &coords = ds.base().coords;
    for (Eigen::Index i = 0; i < field.mu.rows(); ++i) {
        csv += std::to_string(i);
        csv += "," + (coords ? num((*coords)(i, 0)) : std::string("nan"));
        csv += "," + (coords ? num((*coords)(i, 1)) : std::string("nan"));
        csv += "," + std::to_string(field.coverage[std::size_t(i)]);
        for (Eigen::Index k = 0; k < field.mu.cols(); ++k) csv += "," + num(field.mu(i, k));
        csv += "\n";
    }
    write_text(o.out, csv);
    const auto covered = std::count_if(field.coverage.begin(), field.coverage.end(), [](auto c) { return c > 0; });
    log << "encoded " << covered << " of " << field.mu.rows() << " base records (d_z " << field.mu.cols() << ") to "
        << o.out.string() << "\n";
    return kOk;
}

int reconstruct(const ReconstructOptions &o, std::ostream &log) {
    const auto ds = read_dataset(o.data);
    const auto model = load_for(o.checkpoint, ds);
    std::vector<Mat> preds;
    if (model.fusion) {
        preds = reconstruct_dataset(ds, *model.fusion).predictions;
    } else {
        const auto rec = baseline_reconstructions(ds, *model.baseline);
        preds = {rec.parent, rec.base};
    }
    fs::create_directories(o.out);
    write_echo(o.out, {{"command", "reconstruct"}, {"data", o.data.string()}, {"checkpoint", o.checkpoint.string()},
                       {"out", o.out.string()}});
    for (std::size_t l = 0; l < ds.depth(); ++l) {
        std::string csv = "index";
        for (Eigen::Index k = 0; k < preds[l].cols(); ++k) csv += ",d" + std::to_string(k);
        csv += "\n";
        for (Eigen::Index i = 0; i < preds[l].rows(); ++i) {
            csv += std::to_string(i);
            for (Eigen::Index k = 0; k < preds[l].cols(); ++k) csv += "," + num(preds[l](i, k));
            csv += "\n";
        }
        const fs::path file = o.out / (ds.scales[l].id + ".pred.csv");
        write_text(file, csv);
        log << "wrote " << file.string() << "\n";
    }
    return kOk;
}

int eval(const EvalOptions &o, std::ostream &log) {
    if (o.checkpoints.empty()) fail(ErrorKind::kConfig, "eval needs at least one checkpoint");
    const auto ds = read_dataset(o.data);
    std::optional<RegionSet> regions;
    if (o.regions) regions = parse_region_set(read_text(*o.regions));

    std::vector<EvalReport> reports;
    for (const auto &ck : o.checkpoints) {
        const auto model = load_for(ck, ds);
        auto rep = evaluate(ds, model, model_id_of(ck));
        if (regions) add_separations(rep, ds, model.latents(ds), *regions, o.n_proj, o.seed);
        reports.push_back(std::move(rep));
    }

    std::string text;
    if (reports.size() == 1) {
        text = reports.front().to_json();
    } else {
        json arr = json::array();
        for (const auto &r : reports) arr.push_back(json::parse(r.to_json()));
        text = json{{"reports", arr}}.dump(2) + "\n";
    }
    if (o.out) {
        write_text(*o.out, text);
        json echo{{"command", "eval"}, {"data", o.data.string()}, {"checkpoints", json::array()},
                  {"out", o.out->string()}, {"regions", o.regions ? json(o.regions->string()) : json()},
                  {"n_proj", o.n_proj}, {"seed", o.seed}};
        for (const auto &ck : o.checkpoints) echo["checkpoints"].push_back(ck.string());
        write_echo(*o.out, echo);
    }

    log << comparison_table(reports);
    for (const auto &r : reports) {
        for (const auto &s : r.separations) {
            log << r.model_id << ": " << s.region_a << " vs " << s.region_b << " = " << fmt("%.6f", s.distance)
                << " (" << s.method << ", n_a " << s.n_a << ", n_b " << s.n_b << ")\n";
        }
    }
    if (o.out) log << "wrote " << o.out->string() << "\n";
    return kOk;
}

int export_viz(const ExportOptions &o, std::ostream &log) {
    const auto ds = read_dataset(o.data);
    const auto model = load_for(o.checkpoint, ds);
    if (model.latent_dim() > 3) {
        fail(ErrorKind::kUnsupported, "export supports d_z up to 3, model has " + std::to_string(model.latent_dim()));
    }
    VizExportOptions vo;
    vo.model_id = model_id_of(o.checkpoint);
    vo.model_kind = model.kind;
    vo.bins = o.bins;
    vo.point_cap = o.point_cap;
    vo.seed = o.seed;
    if (o.regions) vo.regions = parse_region_set(read_text(*o.regions)).regions;
    const std::string doc = make_viz_export(ds, model.latents(ds), vo);
    write_text(o.out, doc);
    write_echo(o.out, {{"command", "export-viz"}, {"data", o.data.string()}, {"checkpoint", o.checkpoint.string()},
                       {"out", o.out.string()}, {"regions", o.regions ? json(o.regions->string()) : json()},
                       {"bins", o.bins}, {"point_cap", o.point_cap}, {"seed", o.seed}});
    log << "wrote " << o.out.string() << " (" << doc.size() << " bytes)\n";
    return kOk;
}

int regions_from_labels(const RegionsFromLabelsOptions &o, std::ostream &log) {
    const auto labels = read_labels(o.data);
    if (!labels) fail(ErrorKind::kFormat, "dataset '" + o.data.string() + "' has no labels");
    std::uint32_t classes = 0;
    for (auto l : *labels) classes = std::max(classes, l + 1);
    json regions = json::array();
    for (std::uint32_t c = 0; c < classes; ++c) {
        std::vector<Index> idx;
        for (std::size_t i = 0; i < labels->size(); ++i)
            if ((*labels)[i] == c) idx.push_back(Index(i));
        if (!idx.empty()) regions.push_back({{"label", "class" + std::to_string(c)}, {"indices", idx}});
    }
    write_text(o.out, json{{"regions", regions}}.dump() + "\n");
    write_echo(o.out, {{"command", "regions-from-labels"}, {"data", o.data.string()}, {"out", o.out.string()}});
    log << "wrote " << regions.size() << " class region(s) to " << o.out.string() << "\n";
    return kOk;
}

int serve(const ServeOptions &o, std::ostream &log) {
    if (o.exports.empty()) fail(ErrorKind::kConfig, "serve needs at least one --export");
    ExportStore store;
    for (const auto &p : o.exports) store.load(p);
    HttpService service(store, o.static_dir);
    const int port = service.bind(o.host, o.port);
    log << "serving " << store.ids().size() << " export(s) on http://" << o.host << ":" << port << "\n";
    log.flush();
    service.listen();
    return kOk;
}

}  // namespace nestfuse::cli
