#include "nestfuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace nestfuse {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string LossHistory::to_csv() const {
    std::string out = "step,total";
    for (const auto &n : term_names) out += "," + n;
    out += "\n";
    for (const auto &r : records) {
        out += std::to_string(r.step) + "," + fmt_double(r.total);
        for (double t : r.terms) out += "," + fmt_double(t);
        out += "\n";
    }
    return out;
}

double LossHistory::moving_average(std::size_t end, std::size_t window) const {
    end = std::min(end, records.size());
    const std::size_t begin = end > window ? end - window : 0;
    if (end == begin) return std::nan("");
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += records[i].total;
    return s / double(end - begin);
}

Mat draw_standard_normal(std::mt19937_64 &rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> unit(0.0, 1.0);
    Mat m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = unit(rng);
    return m;
}

LossHistory train_loop(ad::ParamStore &store, const OptimizerConfig &opt, std::size_t items,
                       std::vector<std::string> term_names, const BatchLoss &batch_loss) {
    check_optimizer_config(opt);
    if (items == 0) fail(ErrorKind::kTraining, "nothing to train on");
    LossHistory hist;
    hist.term_names = std::move(term_names);

    std::mt19937_64 rng(opt.seed);
    ad::Adam adam(store);
    std::vector<std::size_t> order(items);
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = items;  // forces a shuffle on the first step
    const std::size_t batch = std::min(opt.batch_size, items);
    std::vector<std::size_t> idx(batch);

    for (std::size_t step = 0; step < opt.steps; ++step) {
        for (std::size_t b = 0; b < batch; ++b) {
            if (cursor == items) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            idx[b] = order[cursor++];
        }
        store.zero_grad();
        ad::Tape tape;
        std::vector<ad::Var> vars;
        try {
            vars = batch_loss(tape, idx, rng);
        } catch (const TrainingDiverged &) {
            throw;
        } catch (const Error &e) {
            if (e.kind() != ErrorKind::kTraining) throw;
            throw TrainingDiverged(std::string(e.what()) + " at step " + std::to_string(step), std::move(hist));
        }
        LossRecord rec;
        rec.step = step;
        rec.total = vars.at(0).scalar();
        for (std::size_t k = 1; k < vars.size(); ++k) rec.terms.push_back(vars[k].scalar());
        if (!std::isfinite(rec.total)) {
            throw TrainingDiverged("non-finite loss at step " + std::to_string(step), std::move(hist));
        }
        hist.records.push_back(std::move(rec));
        tape.backward(vars[0]);
        try {
            ad::check_finite_gradients(store, step);
        } catch (const Error &e) {
            throw TrainingDiverged(e.what(), std::move(hist));
        }
        if (opt.clip_norm) ad::clip_gradients(store, *opt.clip_norm);
        adam.step(store, opt.learning_rate);
    }
    return hist;
}

TrainResult train_nested_fusion(const MultiScaleDataset &ds, const ModelConfig &cfg, const OptimizerConfig &opt) {
    require_valid(ds);
    auto model = NestedFusionModel::for_dataset(ds, cfg);
    std::vector<PreparedGroup> groups;
    for (const auto &g : make_groups(ds)) groups.push_back(model.prepare(g));

    const auto dz = Eigen::Index(model.config().latent_dim);
    auto loss = [&](ad::Tape &t, std::span<const std::size_t> batch, std::mt19937_64 &rng) {
        const double inv = 1.0 / double(batch.size());
        ad::Var total = t.constant(Mat::Zero(1, 1));
        ad::Var agg = total, base = total, kl = total;
        for (auto i : batch) {
            const auto &g = groups[i];
            const Mat eps = draw_standard_normal(rng, Eigen::Index(g.base_positions.size()), dz);
            const auto e = model.elbo_graph(t, g, eps);
            if (!std::isfinite(e.total.scalar())) {
                fail(ErrorKind::kTraining, "non-finite loss for group " + std::to_string(g.root_index));
            }
            total = total + ad::scale(e.total, inv);
            agg = agg + ad::scale(e.nll_aggregate, inv);
            base = base + ad::scale(e.nll_base, inv);
            kl = kl + ad::scale(e.kl, inv);
        }
        return std::vector<ad::Var>{total, agg, base, kl};
    };

    LossHistory hist = train_loop(model.params(), opt, groups.size(), {"nll_aggregate", "nll_base", "kl"}, loss);
    model.params().round_to_float();
    return {std::move(model), std::move(hist)};
}

}  // namespace nestfuse
