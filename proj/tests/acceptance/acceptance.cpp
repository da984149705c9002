#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "nestfuse/baselines.hpp"
#include "nestfuse/checkpoint.hpp"
#include "nestfuse/dataset.hpp"
#include "nestfuse/dataset_io.hpp"
#include "nestfuse/evaluate.hpp"
#include "nestfuse/gradcheck.hpp"
#include "nestfuse/model.hpp"
#include "nestfuse/regions.hpp"
#include "nestfuse/synthetic.hpp"
#include "nestfuse/train.hpp"
#include "nestfuse/wasserstein.hpp"

using namespace nestfuse;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Mat random_mat(std::mt19937_64 &rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> unit(0.0, 1.0);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = unit(rng);
    return m;
}

Mat gather(const Mat &rows, const std::vector<Index> &idx) {
    Mat out(Eigen::Index(idx.size()), rows.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(Eigen::Index(k)) = rows.row(Eigen::Index(idx[k]));
    return out;
}

// ---------------------------------------------------------------------------

Outcome gradient() {
    std::mt19937_64 rng(3);
    std::vector<std::vector<Index>> edges;
    for (Index p = 0; p < 4; ++p) edges.push_back({5 * p, 5 * p + 1, 5 * p + 2, 5 * p + 3, 5 * p + 4});
    MultiScaleDataset ds;
    ds.name = "gradient";
    ds.scales.push_back(testing::random_scale("coarse", 4, 3, rng));
    ds.scales.push_back(testing::random_scale("fine", 20, 4, rng));
    ds.nestings.push_back({"coarse", "fine", edges});

    ModelConfig cfg;
    cfg.latent_dim = 2;
    cfg.token_dim = 32;
    cfg.encoder_hidden = 32;
    cfg.decoder_width = 32;
    cfg.aggregate_width = 32;
    cfg.seed = 5;
    auto model = NestedFusionModel::for_dataset(ds, cfg);
    std::vector<PreparedGroup> groups;
    std::vector<Mat> eps;
    for (const auto &g : make_groups(ds)) {
        groups.push_back(model.prepare(g));
        eps.push_back(random_mat(rng, 5, 2));
    }
    const auto start = std::chrono::steady_clock::now();
    ad::GradCheckOptions opts;
    opts.coords_per_param = 32;
    const auto r = ad::grad_check(
        model.params(),
        [&](ad::Tape &t) {
            ad::Var total = model.elbo_graph(t, groups[0], eps[0]).total;
            for (std::size_t k = 1; k < groups.size(); ++k) total = total + model.elbo_graph(t, groups[k], eps[k]).total;
            return total;
        },
        opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {r.max_relative_error <= 1e-4 && secs < 60.0,
            "worst relative error " + fmt("%.3g", r.max_relative_error) + " at " + r.worst + " over " +
                std::to_string(r.coordinates) + " coordinates in " + fmt("%.1f", secs) + " s"};
}

Outcome permutation() {
    const auto ds = generate_synthetic(SynthConfig{}).dataset;
    const auto model = NestedFusionModel::for_dataset(ds, ModelConfig{});
    std::mt19937_64 rng(11);
    const Mat zs = random_mat(rng, 100, 2);
    const Eigen::VectorXd ref = model.decode_aggregate(zs, kSynthParentScale);
    std::vector<Eigen::Index> order(100);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        for (Eigen::Index i = 0; i < 100; ++i) order[std::size_t(i)] = i;
        std::shuffle(order.begin(), order.end(), rng);
        Mat perm(100, 2);
        for (Eigen::Index i = 0; i < 100; ++i) perm.row(i) = zs.row(order[std::size_t(i)]);
        worst = std::max(worst, (model.decode_aggregate(perm, kSynthParentScale) - ref).cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-5, "max abs deviation " + fmt("%.3g", worst) + " over 20 permutations of 100 latents"};
}

Outcome kl() {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> mu_d(-2.0, 2.0), sigma_d(0.2, 2.5);
    std::normal_distribution<double> unit(0.0, 1.0);
    const int draws = 100000;
    double worst = 0.0;
    int failures = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const double mu = mu_d(rng), sigma = sigma_d(rng);
        ad::Tape t(false);
        const double closed = ad::kl_standard_normal(t.constant(Mat::Constant(1, 1, mu)),
                                                     t.constant(Mat::Constant(1, 1, sigma)))
                                  .scalar();
        // log q(z) - log p(z) for z ~ q
        double s = 0.0, s2 = 0.0;
        for (int k = 0; k < draws; ++k) {
            const double e = unit(rng);
            const double z = mu + sigma * e;
            const double v = -std::log(sigma) - 0.5 * e * e + 0.5 * z * z;
            s += v;
            s2 += v * v;
        }
        const double mean = s / draws;
        const double se = std::sqrt((s2 / draws - mean * mean) / draws);
        const double z_score = std::abs(closed - mean) / se;
        worst = std::max(worst, z_score);
        if (z_score > 3.0) ++failures;
    }
    return {failures == 0, "worst |closed - MC| = " + fmt("%.2f", worst) + " SE over 50 (mu, sigma) pairs"};
}

Outcome beta_algebra() {
    std::mt19937_64 rng(17);
    std::size_t checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto ds = testing::random_nested(2 + std::size_t(trial % 3), rng);
        // reachability by composing boolean adjacency matrices, finest first
        const auto base_n = Eigen::Index(ds.base().size());
        Eigen::MatrixXi reach = Eigen::MatrixXi::Identity(base_n, base_n);
        for (std::size_t l = ds.base_level() + 1; l-- > 0;) {
            if (l < ds.base_level()) {
                const auto &edges = ds.nestings[l].edges;
                Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(Eigen::Index(edges.size()), reach.rows());
                for (std::size_t p = 0; p < edges.size(); ++p)
                    for (Index c : edges[p]) adj(Eigen::Index(p), Eigen::Index(c)) = 1;
                reach = ((adj * reach).array() > 0).cast<int>();
            }
            for (Index i = 0; i < ds.scales[l].size(); ++i) {
                std::vector<Index> want;
                for (Eigen::Index b = 0; b < base_n; ++b)
                    if (reach(Eigen::Index(i), b)) want.push_back(Index(b));
                if (beta(ds, ds.scales[l].id, i) != want) {
                    return {false, "mismatch at trial " + std::to_string(trial) + ", scale " + ds.scales[l].id +
                                       ", record " + std::to_string(i)};
                }
                ++checked;
            }
        }
    }
    return {true, std::to_string(checked) + " records across 100 random datasets match exactly"};
}

Outcome wasserstein() {
    std::mt19937_64 rng(19);
    std::uniform_int_distribution<int> size(1, 40);
    std::uniform_real_distribution<double> shift(-5.0, 5.0), factor(-4.0, 4.0);
    auto sample = [&](int n) {
        std::vector<double> v(static_cast<std::size_t>(n));
        std::normal_distribution<double> d(shift(rng), std::abs(factor(rng)) + 0.1);
        for (auto &x : v) x = d(rng);
        return v;
    };
    double sym = 0.0, tri = 0.0, trans = 0.0, hom = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto a = sample(size(rng)), b = sample(size(rng)), c = sample(size(rng));
        const double ab = wasserstein_1d(a, b), ba = wasserstein_1d(b, a);
        const double ac = wasserstein_1d(a, c), cb = wasserstein_1d(c, b);
        sym = std::max(sym, std::abs(ab - ba));
        tri = std::max(tri, ab - (ac + cb));
        const double s = shift(rng), k = factor(rng);
        auto map = [](std::vector<double> v, auto f) {
            for (auto &x : v) x = f(x);
            return v;
        };
        trans = std::max(trans, std::abs(wasserstein_1d(map(a, [&](double x) { return x + s; }),
                                                        map(b, [&](double x) { return x + s; })) -
                                         ab));
        hom = std::max(hom, std::abs(wasserstein_1d(map(a, [&](double x) { return k * x; }),
                                                    map(b, [&](double x) { return k * x; })) -
                                     std::abs(k) * ab));
    }
    const double tol = 1e-9;
    const bool metric_ok = sym <= tol && tri <= tol && trans <= tol && hom <= tol;

    std::normal_distribution<double> unit(0.0, 1.0);
    const Eigen::Index n = 20000;
    Mat x(n, 2), y(n, 2);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = unit(rng);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = unit(rng);
    y.col(0).array() += 1.0;
    const double sw = sliced_wasserstein(x, y, kDefaultProjections, 0);
    const double rel = std::abs(sw - 2.0 / M_PI) / (2.0 / M_PI);
    return {metric_ok && rel <= 0.05, "symmetry " + fmt("%.2g", sym) + ", triangle excess " + fmt("%.2g", tri) +
                                          ", translation " + fmt("%.2g", trans) + ", homogeneity " +
                                          fmt("%.2g", hom) + "; unit shift " + fmt("%.4f", sw) + " vs 2/pi (" +
                                          fmt("%.1f", 100 * rel) + "% off)"};
}

// ---------------------------------------------------------------------------

double r2q(const EvalReport &r) { return r.parent_fit().fit.r2; }

EvalReport eval_fusion(const MultiScaleDataset &ds, NestedFusionModel model) {
    AnyModel m;
    m.kind = kNestedFusionKind;
    m.fusion.emplace(std::move(model));
    return evaluate(ds, m, "nested-fusion");
}

EvalReport eval_baseline(const MultiScaleDataset &ds, BaselineKind kind, std::size_t dz) {
    OptimizerConfig opt;
    if (kind == BaselineKind::kConcatVae) opt.batch_size = 64;
    auto fit = fit_baseline(ds, kind, dz, FlatVaeConfig{}, opt);
    AnyModel m;
    m.kind = to_string(kind);
    m.baseline.emplace(std::move(fit.model));
    return evaluate(ds, m, m.kind);
}

Outcome trend() {
    const auto ds = generate_synthetic(SynthConfig{}).dataset;
    bool ok = true;
    std::string detail;
    for (std::size_t dz = 1; dz <= 3; ++dz) {
        ModelConfig cfg;
        cfg.latent_dim = dz;
        const auto nf = eval_fusion(ds, train_nested_fusion(ds, cfg, OptimizerConfig{}).model);
        const auto jp = eval_baseline(ds, BaselineKind::kJointPca, dz);
        const auto jv = eval_baseline(ds, BaselineKind::kJointVae, dz);
        const auto cv = eval_baseline(ds, BaselineKind::kConcatVae, dz);
        std::cout << comparison_table({nf, jp, jv, cv});
        bool row = r2q(nf) >= r2q(jp) && r2q(nf) >= r2q(jv) && r2q(nf) >= r2q(cv) - 0.02;
        if (dz == 2) row = row && nf.base_fit().fit.r2 >= 0.75 && r2q(nf) >= 0.75;
        ok = ok && row;
        detail += (detail.empty() ? "" : "; ") + std::string("d_z ") + std::to_string(dz) + ": NF " +
                  fmt("%.4f", r2q(nf)) + " vs joint-pca " + fmt("%.4f", r2q(jp)) + ", joint-vae " +
                  fmt("%.4f", r2q(jv)) + ", concat-vae " + fmt("%.4f", r2q(cv));
        if (dz == 2) detail += " (NF R2_p " + fmt("%.4f", nf.base_fit().fit.r2) + ")";
    }
    return {ok, detail};
}

Mat class_rows(const Mat &latents, const std::vector<std::uint32_t> &labels, std::uint32_t cls) {
    std::vector<Index> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == cls) idx.push_back(Index(i));
    return gather(latents, idx);
}

Outcome confound() {
    SynthConfig sc;
    const auto synth = generate_synthetic(sc);
    const auto &ds = synth.dataset;
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        ModelConfig mc;
        mc.seed = seed;
        OptimizerConfig oc;
        oc.seed = seed;
        const auto nf = train_nested_fusion(ds, mc, oc).model;
        OptimizerConfig bo;
        bo.seed = seed;
        bo.batch_size = 64;
        FlatVaeConfig vc;
        vc.seed = seed;
        const auto cv = fit_baseline(ds, BaselineKind::kConcatVae, 2, vc, bo).model;

        // class 0 shared; class 1 mixed in at different proportions
        const auto g1 = synth_mixture_group(synth.truth, sc, {60, 21, 0, 0, 0}, 100 + seed);
        const auto g2 = synth_mixture_group(synth.truth, sc, {20, 61, 0, 0, 0}, 200 + seed);
        auto nf_latents = [&](const MixtureGroup &g) {
            const auto enc = nf.encode(g.group);
            Mat m(Eigen::Index(enc.size()), 2);
            for (std::size_t i = 0; i < enc.size(); ++i) m.row(Eigen::Index(i)) = enc[i].mu.transpose();
            return class_rows(m, g.child_labels, 0);
        };
        auto cv_latents = [&](const MixtureGroup &g) {
            return class_rows(cv.encode_raw(concat_rows_for_group(g.group)), g.child_labels, 0);
        };
        const double d_nf = sliced_wasserstein(nf_latents(g1), nf_latents(g2), kDefaultProjections, seed);
        const double d_cv = sliced_wasserstein(cv_latents(g1), cv_latents(g2), kDefaultProjections, seed);
        if (d_nf < d_cv) ++wins;
        detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + ": NF " +
                  fmt("%.4f", d_nf) + " vs concat-vae " + fmt("%.4f", d_cv);
    }
    return {wins == 3, std::to_string(wins) + "/3 seeds; " + detail};
}

Outcome separation() {
    const auto synth = generate_synthetic(SynthConfig{});
    const auto &ds = synth.dataset;
    const auto &labels = synth.truth.labels;
    ModelConfig mc;
    mc.latent_dim = 2;
    const auto model = train_nested_fusion(ds, mc, OptimizerConfig{}).model;
    const auto field = encode_dataset(ds, model);
    const auto coords = *base_coords(ds);

    std::map<std::uint32_t, std::vector<Index>> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (field.coverage[i] > 0) members[labels[i]].push_back(Index(i));
    std::vector<std::pair<std::size_t, std::uint32_t>> by_size;
    for (const auto &[c, idx] : members) by_size.push_back({idx.size(), c});
    std::sort(by_size.rbegin(), by_size.rend());
    const auto a = by_size.at(0).second, b = by_size.at(1).second;

    // same-class pair: one class split at its median x coordinate
    auto split = [&](const std::vector<Index> &idx) {
        std::vector<Index> sorted = idx;
        std::stable_sort(sorted.begin(), sorted.end(),
                         [&](Index u, Index v) { return coords(Eigen::Index(u), 0) < coords(Eigen::Index(v), 0); });
        const auto mid = sorted.begin() + std::ptrdiff_t(sorted.size() / 2);
        std::vector<Index> lo(sorted.begin(), mid), hi(mid, sorted.end());
        std::sort(lo.begin(), lo.end());
        std::sort(hi.begin(), hi.end());
        return std::pair{lo, hi};
    };
    const auto [a_lo, a_hi] = split(members[a]);
    const auto [b_lo, b_hi] = split(members[b]);
    const double same = region_separation(field, a_lo, a_hi, kDefaultProjections, 0).distance;
    const double diff = region_separation(field, a_lo, b_lo, kDefaultProjections, 0).distance;
    const double ratio = diff / same;
    return {ratio >= 2.0, "class " + std::to_string(a) + " vs class " + std::to_string(b) + ": different " +
                              fmt("%.4f", diff) + ", same " + fmt("%.4f", same) + ", ratio " + fmt("%.1f", ratio)};
}

// ---------------------------------------------------------------------------

int run_cli(const std::string &args) {
#ifdef NESTFUSE_CLI
    const std::string cmd = std::string("\"") + NESTFUSE_CLI + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
#else
    (void)args;
    return -1;
#endif
}

std::string q(const fs::path &p) { return "\"" + p.string() + "\""; }

bool same_tree(const fs::path &x, const fs::path &y) {
    std::set<std::string> names;
    for (const auto &e : fs::directory_iterator(x)) names.insert(e.path().filename().string());
    for (const auto &e : fs::directory_iterator(y)) names.insert(e.path().filename().string());
    for (const auto &n : names)
        if (!fs::exists(x / n) || !fs::exists(y / n) || slurp(x / n) != slurp(y / n)) return false;
    return !names.empty();
}

Outcome determinism() {
    const auto work = fs::temp_directory_path() / "nestfuse_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);
    std::vector<std::string> problems;
    auto expect = [&](bool cond, const std::string &what) {
        if (!cond) problems.push_back(what);
    };

    const auto data = work / "data";
    expect(run_cli("gen-synth --out " + q(data)) == 0, "gen-synth failed");
    const std::string twin = " --data " + q(data) + " --steps 100 --seed 4 --train-seed 9";
    expect(run_cli("train --out " + q(work / "a.ckpt") + twin) == 0, "first train failed");
    expect(run_cli("train --out " + q(work / "b.ckpt") + twin) == 0, "second train failed");
    const auto log_a = slurp(work / "a.ckpt.loss.csv"), log_b = slurp(work / "b.ckpt.loss.csv");
    expect(!log_a.empty() && log_a == log_b, "loss logs differ");
    expect(slurp(work / "a.ckpt") == slurp(work / "b.ckpt"), "checkpoints differ");

    const auto bytes = slurp(work / "a.ckpt");
    expect(encode_checkpoint(decode_checkpoint(bytes)) == bytes, "checkpoint container re-encode differs");
    const auto model = nested_fusion_from_checkpoint(read_checkpoint(work / "a.ckpt"));
    expect(encode_checkpoint(to_checkpoint(model)) == bytes, "checkpoint model round-trip differs");

    const auto ds = read_dataset(data);
    const auto labels = read_labels(data);
    write_dataset(ds, work / "data_copy", labels ? &*labels : nullptr);
    expect(same_tree(data, work / "data_copy"), "dataset re-write differs");
    const auto again = read_dataset(work / "data_copy");
    bool equal = again.scales.size() == ds.scales.size();
    for (std::size_t l = 0; equal && l < ds.scales.size(); ++l) {
        equal = again.scales[l].records.cwiseEqual(ds.scales[l].records).all() &&
                again.scales[l].coords.has_value() == ds.scales[l].coords.has_value() &&
                (!ds.scales[l].coords || again.scales[l].coords->cwiseEqual(*ds.scales[l].coords).all());
    }
    for (std::size_t n = 0; equal && n < ds.nestings.size(); ++n) equal = again.nestings[n].edges == ds.nestings[n].edges;
    expect(equal, "dataset load after save differs");

    const auto ckpt = work / "nf.ckpt";
    expect(run_cli("train --data " + q(data) + " --out " + q(ckpt)) == 0, "default train failed");
    expect(run_cli("eval --data " + q(data) + " --checkpoint " + q(ckpt) + " --out " + q(work / "eval.json")) == 0,
           "eval failed");
    expect(run_cli("export-viz --data " + q(data) + " --checkpoint " + q(ckpt) + " --out " + q(work / "viz.json")) ==
               0,
           "export-viz failed");

    std::string detail = problems.empty() ? "identical loss logs and checkpoints, bit-exact round-trips, default "
                                            "pipeline exits 0"
                                          : "";
    for (const auto &p : problems) detail += (detail.empty() ? "" : "; ") + p;
    return {problems.empty(), detail};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>> kCriteria = {
    {"gradient", gradient},     {"permutation", permutation}, {"kl", kl},
    {"beta", beta_algebra},     {"wasserstein", wasserstein}, {"trend", trend},
    {"confound", confound},     {"separation", separation},   {"determinism", determinism},
};

}  // namespace

int main(int argc, char **argv) {
    std::vector<std::string> wanted(argv + 1, argv + argc);
    for (const auto &w : wanted) {
        if (std::none_of(kCriteria.begin(), kCriteria.end(), [&](const auto &c) { return c.first == w; })) {
            std::cerr << "unknown criterion '" << w << "'; known:";
            for (const auto &c : kCriteria) std::cerr << " " << c.first;
            std::cerr << "\n";
            return 2;
        }
    }
    int failed = 0;
    for (const auto &[name, fn] : kCriteria) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception &e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
        if (!o.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
