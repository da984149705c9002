#include "nestfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nestfuse/error.hpp"

namespace nestfuse::ad {

namespace {

double eval_loss(ParamStore &store, const std::function<Var(Tape &)> &loss) {
    Tape t(false);
    const double v = loss(t).scalar();
    if (!std::isfinite(v)) fail(ErrorKind::kInference, "grad_check: non-finite loss");
    return v;
}

}  // namespace

GradCheckResult grad_check(ParamStore &store, const std::function<Var(Tape &)> &loss, const GradCheckOptions &opts) {
    store.zero_grad();
    {
        Tape t;
        const Var l = loss(t);
        if (!std::isfinite(l.scalar())) fail(ErrorKind::kInference, "grad_check: non-finite loss");
        t.backward(l);
    }

    std::mt19937_64 rng(opts.seed);
    GradCheckResult res;
    for (auto &p : store) {
        const auto n = std::size_t(p.value.size());
        std::vector<std::size_t> coords(n);
        std::iota(coords.begin(), coords.end(), 0);
        if (opts.coords_per_param && n > opts.coords_per_param) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(opts.coords_per_param);
        }
        for (auto c : coords) {
            double &x = p.value.data()[c];
            const double saved = x;
            x = saved + opts.epsilon;
            const double up = eval_loss(store, loss);
            x = saved - opts.epsilon;
            const double down = eval_loss(store, loss);
            x = saved;
            const double fd = (up - down) / (2.0 * opts.epsilon);
            const double an = p.grad.data()[c];
            const double abs_err = std::abs(an - fd);
            const double rel = abs_err / std::max({std::abs(an), std::abs(fd), opts.floor});
            ++res.coordinates;
            res.max_absolute_error = std::max(res.max_absolute_error, abs_err);
            if (rel > res.max_relative_error) {
                res.max_relative_error = rel;
                const auto r = Eigen::Index(c) % p.value.rows(), col = Eigen::Index(c) / p.value.rows();
                res.worst = p.name + "[" + std::to_string(r) + "," + std::to_string(col) + "]";
            }
        }
    }
    return res;
}

}  // namespace nestfuse::ad
