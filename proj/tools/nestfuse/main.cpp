#include <CLI11.hpp>
#include <iostream>

#include "nestfuse/commands.hpp"
#include "nestfuse/error.hpp"
#include "nestfuse/train.hpp"

using namespace nestfuse;
using namespace nestfuse::cli;

namespace {

void add_model_flags(CLI::App *cmd, TrainOptions &o) {
    auto &f = o.fusion;
    cmd->add_option("--latent-dim", f.latent_dim, "Latent dimensionality d_z")->check(CLI::PositiveNumber);
    cmd->add_option("--token-dim", f.token_dim, "Token width (0: sum of scale dims)");
    cmd->add_option("--encoder-depth", f.encoder_depth, "Encoder attention blocks");
    cmd->add_option("--encoder-hidden", f.encoder_hidden, "Encoder feed-forward width");
    cmd->add_option("--decoder-depth", f.decoder_depth, "Hidden layers in decoder heads");
    cmd->add_option("--decoder-width", f.decoder_width, "Decoder hidden width");
    cmd->add_option("--aggregate-depth", f.aggregate_depth, "Attention blocks in the set decoder");
    cmd->add_option("--aggregate-width", f.aggregate_width, "Set decoder width");
    cmd->add_option("--heads", f.heads, "Attention heads");
    cmd->add_option("--kl-weight", f.kl_weight, "KL weight");
    cmd->add_flag("--positional", f.positional, "Sinusoidal positions on encoder tokens");
    cmd->add_option("--scale-weights", f.scale_weights, "Reconstruction weight per scale, coarsest first");
    cmd->add_option("--seed", f.seed, "Parameter initialization seed");
    cmd->add_option("--vae-width", o.vae_width, "Flat VAE hidden width");
    cmd->add_option("--vae-depth", o.vae_depth, "Flat VAE hidden layers");
    cmd->add_option("--budget", o.budget, "Joint flattening child budget (default: largest nesting set)");
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"nestfuse: variational fusion of nested multi-scale measurements"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "nestfuse 0.1.0");

    GenSynthOptions gen;
    auto *g = app.add_subcommand("gen-synth", "Generate the synthetic two-scale dataset");
    g->add_option("--out", gen.out, "Output dataset directory")->required();
    g->add_option("--seed", gen.synth.seed, "Generator seed");
    g->add_option("--name", gen.name, "Dataset name");
    g->add_option("--width", gen.synth.width, "Pixels per row")->check(CLI::PositiveNumber);
    g->add_option("--height", gen.synth.height, "Pixel rows")->check(CLI::PositiveNumber);
    g->add_option("--pitch", gen.synth.pitch, "Microns between pixels");
    g->add_option("--classes", gen.synth.classes, "Number of classes")->check(CLI::PositiveNumber);
    g->add_option("--base-dim", gen.synth.base_dim, "Pixel record dim")->check(CLI::PositiveNumber);
    g->add_option("--parent-dim", gen.synth.parent_dim, "Scan-point record dim")->check(CLI::PositiveNumber);
    g->add_option("--spacing", gen.synth.parent_spacing, "Microns between scan points");
    g->add_option("--radius", gen.synth.radius, "Beam radius in microns");
    double noise = -1.0;
    g->add_option("--noise", noise, "Noise level for both scales");
    g->add_option("--base-noise", gen.synth.base_noise, "Pixel noise level");
    g->add_option("--parent-noise", gen.synth.parent_noise, "Scan-point noise level");

    TrainOptions tr;
    auto *t = app.add_subcommand("train", "Train a model and write a checkpoint plus loss log");
    t->add_option("--data", tr.data, "Dataset directory")->required();
    t->add_option("--out", tr.out, "Checkpoint path")->required();
    t->add_option("--loss-log", tr.loss_log, "Loss CSV (default: <out>.loss.csv)");
    t->add_option("--model", tr.model, "nested-fusion | joint-pca | joint-vae | concat-pca | concat-vae");
    t->add_option("--steps", tr.opt.steps, "Optimizer steps");
    t->add_option("--lr", tr.opt.learning_rate, "Adam learning rate");
    auto *batch = t->add_option("--batch", tr.opt.batch_size, "Minibatch size (default 8; 64 rows for concat-vae)");
    std::optional<double> clip;
    t->add_option("--clip", clip, "Gradient norm clip (<= 0 disables)");
    t->add_option("--train-seed", tr.opt.seed, "Minibatch and noise seed");
    add_model_flags(t, tr);

    EncodeOptions en;
    auto *e = app.add_subcommand("encode", "Write per-base-record latent means as CSV");
    e->add_option("--data", en.data)->required();
    e->add_option("--checkpoint", en.checkpoint)->required();
    e->add_option("--out", en.out, "CSV path")->required();

    ReconstructOptions rc;
    auto *r = app.add_subcommand("reconstruct", "Write reconstructed records for every scale as CSV");
    r->add_option("--data", rc.data)->required();
    r->add_option("--checkpoint", rc.checkpoint)->required();
    r->add_option("--out", rc.out, "Output directory")->required();

    EvalOptions ev;
    std::vector<std::string> compare;
    std::string single;
    auto *v = app.add_subcommand("eval", "Report per-layer R^2 and optional region separations");
    v->add_option("--data", ev.data)->required();
    auto *ck = v->add_option("--checkpoint", single, "Checkpoint to evaluate");
    auto *cmp = v->add_option("--compare", compare, "Several checkpoints, tabulated by R2_q")->expected(2, -1);
    ck->excludes(cmp);
    v->add_option("--out", ev.out, "Report JSON path");
    v->add_option("--regions", ev.regions, "Regions JSON file");
    v->add_option("--n-proj", ev.n_proj, "Sliced Wasserstein projections")->check(CLI::PositiveNumber);
    v->add_option("--sep-seed", ev.seed, "Projection seed");

    ExportOptions ex;
    auto *x = app.add_subcommand("export-viz", "Write the viewer export JSON");
    x->add_option("--data", ex.data)->required();
    x->add_option("--checkpoint", ex.checkpoint)->required();
    x->add_option("--out", ex.out)->required();
    x->add_option("--regions", ex.regions, "Regions JSON file to embed");
    x->add_option("--bins", ex.bins, "Heatmap bins per axis")->check(CLI::PositiveNumber);
    x->add_option("--point-cap", ex.point_cap, "Maximum latent points embedded");
    x->add_option("--seed", ex.seed, "Subsampling seed");

    RegionsFromLabelsOptions rl;
    auto *l = app.add_subcommand("regions-from-labels", "Write one index region per class label");
    l->add_option("--data", rl.data)->required();
    l->add_option("--out", rl.out)->required();

    ServeOptions sv;
    auto *s = app.add_subcommand("serve", "Serve exports and the separation endpoint");
    s->add_option("--export", sv.exports, "Export file or directory (repeatable)")->required();
    s->add_option("--static", sv.static_dir, "Static viewer assets");
    s->add_option("--host", sv.host, "Bind address");
    s->add_option("--port", sv.port, "Port");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &err) {
        const int code = app.exit(err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*g) {
            if (noise >= 0.0) {
                if (g->count("--base-noise") == 0) gen.synth.base_noise = noise;
                if (g->count("--parent-noise") == 0) gen.synth.parent_noise = noise;
            }
            return gen_synth(gen, std::cout);
        }
        if (*t) {
            tr.batch_given = batch->count() > 0;
            if (clip) tr.opt.clip_norm = *clip > 0 ? std::optional<double>(*clip) : std::nullopt;
            return train(tr, std::cout);
        }
        if (*e) return encode(en, std::cout);
        if (*r) return reconstruct(rc, std::cout);
        if (*v) {
            if (!single.empty()) ev.checkpoints.push_back(single);
            for (const auto &c : compare) ev.checkpoints.push_back(c);
            if (ev.checkpoints.empty()) {
                std::cerr << "eval: give --checkpoint or --compare\n";
                return kUsage;
            }
            return eval(ev, std::cout);
        }
        if (*x) return export_viz(ex, std::cout);
        if (*l) return regions_from_labels(rl, std::cout);
        if (*s) return serve(sv, std::cout);
    } catch (const std::exception &ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return exit_code_for(ex);
    }
    return kUsage;
}
