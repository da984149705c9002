#include <doctest.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "fixtures.hpp"
#include "nestfuse/service.hpp"

using namespace nestfuse;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string output;
};

RunResult run(const std::string &args) {
    const std::string cmd = std::string("\"") + NESTFUSE_CLI + "\" " + args + " 2>&1";
    RunResult r;
    FILE *pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string q(const fs::path &p) { return "\"" + p.string() + "\""; }

const char *kSmallModel = " --encoder-depth 1 --encoder-hidden 16 --decoder-width 16 --aggregate-width 8 --heads 2";

/// A small synthetic dataset shared by the pipeline cases.
const fs::path &small_data() {
    static const fs::path dir = [] {
        const auto root = testing::scratch_dir("cli_data");
        const auto d = root / "data";
        const auto r = run("gen-synth --width 24 --height 24 --out " + q(d));
        REQUIRE_MESSAGE(r.code == 0, r.output);
        return d;
    }();
    return dir;
}

/// A briefly trained nested-fusion checkpoint on the small dataset.
const fs::path &small_ckpt() {
    static const fs::path ckpt = [] {
        const auto p = small_data().parent_path() / "nf.ckpt";
        const auto r = run("train --data " + q(small_data()) + " --out " + q(p) + " --steps 20" + kSmallModel);
        REQUIRE_MESSAGE(r.code == 0, r.output);
        return p;
    }();
    return ckpt;
}

}  // namespace

TEST_CASE("gen-synth is deterministic and reports the default dims") {
    const auto root = testing::scratch_dir("cli_gen");
    const auto a = run("gen-synth --out " + q(root / "a"));
    const auto b = run("gen-synth --out " + q(root / "b"));
    REQUIRE_MESSAGE(a.code == 0, a.output);
    REQUIRE(b.code == 0);
    for (const char *f : {"manifest.json", "quant.f32", "pixel.f32", "pixel.coords.f32", "labels.u32"}) {
        CHECK_MESSAGE(slurp(root / "a" / f) == slurp(root / "b" / f), f);
    }
    CHECK(a.output.find("quant: 49 records, dim 8") != std::string::npos);
    CHECK(a.output.find("pixel: 4096 records, dim 16") != std::string::npos);
    CHECK(fs::exists(root / "a.config.json"));
    const auto echo = json::parse(slurp(root / "a.config.json"));
    CHECK(echo["synth"]["seed"] == 42);
}

TEST_CASE("one class without noise warns about zero-variance dimensions") {
    const auto root = testing::scratch_dir("cli_flat");
    const auto r = run("gen-synth --width 16 --height 16 --classes 1 --noise 0 --out " + q(root / "d"));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(r.output.find("zero-variance") != std::string::npos);
}

TEST_CASE("unknown model names are a usage error listing the valid ones") {
    const auto r = run("train --data " + q(small_data()) + " --out x.ckpt --model bogus");
    CHECK(r.code == 1);
    for (const char *m : {"nested-fusion", "joint-pca", "joint-vae", "concat-pca", "concat-vae"}) {
        CHECK(r.output.find(m) != std::string::npos);
    }
}

TEST_CASE("missing required options and missing inputs map to distinct exit codes") {
    CHECK(run("train --out x.ckpt").code == 1);
    CHECK(run("eval --data " + q(small_data())).code == 1);
    const auto root = testing::scratch_dir("cli_missing");
    CHECK(run("encode --data " + q(root / "nope") + " --checkpoint x --out y.csv").code == 2);
}

TEST_CASE("zero training steps writes a header-only loss log") {
    const auto out = small_data().parent_path() / "zero.ckpt";
    const auto r = run("train --data " + q(small_data()) + " --out " + q(out) + " --steps 0" + kSmallModel);
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(slurp(out.string() + ".loss.csv") == "step,total,nll_aggregate,nll_base,kl\n");
    CHECK(fs::exists(out.string() + ".config.json"));
}

TEST_CASE("train, encode, reconstruct, eval and export-viz run end to end") {
    const auto &data = small_data();
    const auto &ckpt = small_ckpt();
    const auto work = data.parent_path();
    CHECK(fs::exists(ckpt.string() + ".config.json"));

    const auto loss = slurp(ckpt.string() + ".loss.csv");
    CHECK(std::count(loss.begin(), loss.end(), '\n') == 21);

    const auto enc = run("encode --data " + q(data) + " --checkpoint " + q(ckpt) + " --out " + q(work / "z.csv"));
    REQUIRE_MESSAGE(enc.code == 0, enc.output);
    const auto zcsv = slurp(work / "z.csv");
    CHECK(zcsv.rfind("index,x,y,coverage,z0,z1\n", 0) == 0);
    CHECK(std::count(zcsv.begin(), zcsv.end(), '\n') == 24 * 24 + 1);

    const auto rec = run("reconstruct --data " + q(data) + " --checkpoint " + q(ckpt) + " --out " + q(work / "rec"));
    REQUIRE_MESSAGE(rec.code == 0, rec.output);
    const auto pix = slurp(work / "rec" / "pixel.pred.csv");
    CHECK(std::count(pix.begin(), pix.end(), '\n') == 24 * 24 + 1);
    CHECK(fs::exists(work / "rec" / "quant.pred.csv"));

    const auto ev = run("eval --data " + q(data) + " --checkpoint " + q(ckpt) + " --out " + q(work / "eval.json"));
    REQUIRE_MESSAGE(ev.code == 0, ev.output);
    const auto rep = json::parse(slurp(work / "eval.json"));
    CHECK(rep["r2_p"].is_number());
    CHECK(rep["r2_q"].is_number());
    CHECK(rep["model_id"] == "nf");
    CHECK(fs::exists(work / "eval.json.config.json"));

    const auto ex = run("export-viz --data " + q(data) + " --checkpoint " + q(ckpt) + " --bins 200 --out " +
                        q(work / "viz.json"));
    REQUIRE_MESSAGE(ex.code == 0, ex.output);
    const auto doc = json::parse(slurp(work / "viz.json"));
    CHECK(doc["heatmap"]["bins"] == 200);
    REQUIRE(doc["heatmap"]["counts"].size() == 200);
    CHECK(doc["heatmap"]["counts"][0].size() == 200);
    CHECK(doc["model"]["latent_dim"] == 2);
    CHECK(fs::exists(work / "viz.json.config.json"));
}

TEST_CASE("full-rank joint PCA reconstructs both scales") {
    const auto &data = small_data();
    const auto work = data.parent_path();
    const auto ck = work / "pca_full.ckpt";
    const auto tr = run("train --data " + q(data) + " --out " + q(ck) + " --model joint-pca --latent-dim 5000");
    REQUIRE_MESSAGE(tr.code == 0, tr.output);
    const auto ev = run("eval --data " + q(data) + " --checkpoint " + q(ck) + " --out " + q(work / "pca.json"));
    REQUIRE_MESSAGE(ev.code == 0, ev.output);
    const auto rep = json::parse(slurp(work / "pca.json"));
    CHECK(rep["r2_q"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(rep["r2_p"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("compare tabulates models by descending parent-scale R2") {
    const auto &data = small_data();
    const auto work = data.parent_path();
    const auto low = work / "pca_low.ckpt";
    const auto high = work / "pca_high.ckpt";
    REQUIRE(run("train --data " + q(data) + " --out " + q(low) + " --model joint-pca --latent-dim 1").code == 0);
    REQUIRE(run("train --data " + q(data) + " --out " + q(high) + " --model joint-pca --latent-dim 4").code == 0);
    const auto r = run("eval --data " + q(data) + " --compare " + q(low) + " " + q(high) + " --out " +
                       q(work / "cmp.json"));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    const auto hi_at = r.output.find("pca_high");
    const auto lo_at = r.output.find("pca_low");
    REQUIRE(hi_at != std::string::npos);
    REQUIRE(lo_at != std::string::npos);
    CHECK(hi_at < lo_at);
    const auto cmp = json::parse(slurp(work / "cmp.json"));
    REQUIRE(cmp["reports"].size() == 2);
    CHECK(cmp["reports"][0]["model_id"] == "pca_low");
}

TEST_CASE("eval region separations match the service on the exported file") {
    const auto &data = small_data();
    const auto &ckpt = small_ckpt();
    const auto work = data.parent_path();
    const auto regions = work / "classes.json";
    const auto rl = run("regions-from-labels --data " + q(data) + " --out " + q(regions));
    REQUIRE_MESSAGE(rl.code == 0, rl.output);

    const auto ev = run("eval --data " + q(data) + " --checkpoint " + q(ckpt) + " --regions " + q(regions) +
                        " --n-proj 64 --sep-seed 7 --out " + q(work / "sep.json"));
    REQUIRE_MESSAGE(ev.code == 0, ev.output);
    const auto rep = json::parse(slurp(work / "sep.json"));
    REQUIRE(!rep["separations"].empty());

    const auto ex = run("export-viz --data " + q(data) + " --checkpoint " + q(ckpt) + " --regions " + q(regions) +
                        " --out " + q(work / "exports" / "nf.json"));
    REQUIRE_MESSAGE(ex.code == 0, ex.output);
    cli::ExportStore store;
    store.load(work / "exports");
    REQUIRE(store.contains("nf"));

    const auto &s = rep["separations"][0];
    const auto defs = json::parse(slurp(regions))["regions"];
    auto find = [&](const json &label) {
        for (const auto &r : defs)
            if (r["label"] == label) return r;
        FAIL("no region " << label);
        return json();
    };
    const json req{{"export_id", "nf"},
                   {"region_a", find(s["region_a"])},
                   {"region_b", find(s["region_b"])},
                   {"n_proj", 64},
                   {"seed", 7}};
    const auto resp = cli::handle_separation(store, req.dump());
    REQUIRE_MESSAGE(resp.status == 200, resp.body);
    const auto got = json::parse(resp.body);
    CHECK(got["distance"].get<double>() == s["distance"].get<double>());
    CHECK(got["n_a"] == s["n_a"]);
    CHECK(got["n_b"] == s["n_b"]);
}
