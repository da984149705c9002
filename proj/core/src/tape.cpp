#include "nestfuse/tape.hpp"

#include <cmath>
#include <numbers>

#include "nestfuse/error.hpp"

namespace nestfuse::ad {

std::size_t ParamStore::add(const std::string &name, Eigen::Index rows, Eigen::Index cols, Init init) {
    if (by_name_.count(name)) fail(ErrorKind::kConfig, "duplicate parameter '" + name + "'");
    Param p;
    p.name = name;
    p.value.resize(rows, cols);
    p.grad = Mat::Zero(rows, cols);
    switch (init) {
        case Init::kZeros:
            p.value.setZero();
            break;
        case Init::kOnes:
            p.value.setOnes();
            break;
        case Init::kFanInUniform: {
            const double bound = 1.0 / std::sqrt(double(std::max<Eigen::Index>(rows, 1)));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (Eigen::Index c = 0; c < cols; ++c)
                for (Eigen::Index r = 0; r < rows; ++r) p.value(r, c) = u(rng_);
            break;
        }
    }
    params_.push_back(std::move(p));
    by_name_[name] = params_.size() - 1;
    return params_.size() - 1;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto &p : params_) n += std::size_t(p.value.size());
    return n;
}

std::size_t ParamStore::index_of(const std::string &name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) fail(ErrorKind::kInvalidReference, "unknown parameter '" + name + "'");
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto &p : params_) p.grad.setZero();
}

void ParamStore::round_to_float() {
    for (auto &p : params_) p.value = p.value.cast<float>().cast<double>();
}

Var Tape::constant(Mat value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Tape::param(ParamStore &store, std::size_t index) {
    Node n;
    n.value = store[index].value;
    n.needs_grad = record_;
    n.param = record_ ? &store[index] : nullptr;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Tape::push(Mat value, std::span<const Var> inputs, Backward backward) {
    Node n;
    n.value = std::move(value);
    if (record_) {
        for (const Var &v : inputs) {
            if (nodes_[v.id].needs_grad) {
                n.needs_grad = true;
                break;
            }
        }
        if (n.needs_grad) n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Mat &Tape::grad(std::size_t id) {
    auto &n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::backward(Var loss) {
    if (!record_) fail(ErrorKind::kTraining, "backward() on a non-recording tape");
    if (loss.rows() != 1 || loss.cols() != 1) fail(ErrorKind::kTraining, "backward() needs a scalar loss");
    if (!nodes_[loss.id].needs_grad) return;
    grad(loss.id)(0, 0) = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        auto &n = nodes_[i];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.param) {
            n.param->grad += n.grad;
        } else if (n.backward) {
            n.backward(*this, i);
        }
    }
}

namespace {

void check_same_shape(const Mat &a, const Mat &b, const char *op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        fail(ErrorKind::kInference, std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                        std::to_string(b.cols()));
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    const Mat &A = a.value(), &B = b.value();
    if (A.cols() != B.rows()) {
        fail(ErrorKind::kInference, "matmul: inner dimensions " + std::to_string(A.cols()) + " and " +
                                        std::to_string(B.rows()) + " differ");
    }
    const auto ia = a.id, ib = b.id;
    return a.tape->push(A * B, {a, b}, [ia, ib](Tape &t, std::size_t self) {
        const Mat &g = t.grad(self);
        if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
        if (t.needs_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
    });
}

Var matmul_nt(Var a, Var b) {
    const Mat &A = a.value(), &B = b.value();
    if (A.cols() != B.cols()) fail(ErrorKind::kInference, "matmul_nt: column counts differ");
    const auto ia = a.id, ib = b.id;
    return a.tape->push(A * B.transpose(), {a, b}, [ia, ib](Tape &t, std::size_t self) {
        const Mat &g = t.grad(self);
        if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib);
        if (t.needs_grad(ib)) t.grad(ib).noalias() += g.transpose() * t.value(ia);
    });
}

Var add(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "add");
    const auto ia = a.id, ib = b.id;
    return a.tape->push(a.value() + b.value(), {a, b}, [ia, ib](Tape &t, std::size_t self) {
        const Mat &g = t.grad(self);
        if (t.needs_grad(ia)) t.grad(ia) += g;
        if (t.needs_grad(ib)) t.grad(ib) += g;
    });
}

Var sub(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "sub");
    const auto ia = a.id, ib = b.id;
    return a.tape->push(a.value() - b.value(), {a, b}, [ia, ib](Tape &t, std::size_t self) {
        const Mat &g = t.grad(self);
        if (t.needs_grad(ia)) t.grad(ia) += g;
        if (t.needs_grad(ib)) t.grad(ib) -= g;
    });
}

Var mul(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "mul");
    const auto ia = a.id, ib = b.id;
    return a.tape->push(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape &t, std::size_t self) {
        const Mat &g = t.grad(self);
        if (t.needs_grad(ia)) t.grad(ia) += g.cwiseProduct(t.value(ib));
        if (t.needs_grad(ib)) t.grad(ib) += g.cwiseProduct(t.value(ia));
    });
}

Var add_rowvec(Var a, Var row) {
    const Mat &A = a.value(), &R = row.value();
    if (R.rows() != 1 || R.cols() != A.cols()) fail(ErrorKind::kInference, "add_rowvec: row width mismatch");
    const auto ia = a.id, ir = row.id;
    Mat out = A.rowwise() + R.row(0);
    return a.tape->push(std::move(out), {a, row}, [ia, ir](Tape &t, std::size_t self) {
        const Mat &g = t.grad(self);
        if (t.needs_grad(ia)) t.grad(ia) += g;
        if (t.needs_grad(ir)) t.grad(ir) += g.colwise().sum();
    });
}

Var scale(Var a, double s) {
    const auto ia = a.id;
    return a.tape->push(a.value() * s, {a}, [ia, s](Tape &t, std::size_t self) { t.grad(ia) += s * t.grad(self); });
}

Var add_scalar(Var a, double s) {
    const auto ia = a.id;
    return a.tape->push(a.value().array() + s, {a}, [ia](Tape &t, std::size_t self) { t.grad(ia) += t.grad(self); });
}

Var gelu(Var a) {
    constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
    constexpr double c = 0.044715;
    const auto ia = a.id;
    Mat out = a.value().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x))); });
    return a.tape->push(std::move(out), {a}, [ia](Tape &t, std::size_t self) {
        const Mat &x = t.value(ia);
        Mat d = x.unaryExpr([](double v) {
            const double th = std::tanh(k * (v + c * v * v * v));
            return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * k * (1.0 + 3.0 * c * v * v);
        });
        t.grad(ia) += t.grad(self).cwiseProduct(d);
    });
}

Var softplus(Var a) {
    const auto ia = a.id;
    Mat out = a.value().unaryExpr([](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
    return a.tape->push(std::move(out), {a}, [ia](Tape &t, std::size_t self) {
        Mat sig = t.value(ia).unaryExpr([](double x) {
            return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        });
        t.grad(ia) += t.grad(self).cwiseProduct(sig);
    });
}

Var exp(Var a) {
    const auto ia = a.id;
    Mat out = a.value().array().exp();
    return a.tape->push(std::move(out), {a}, [ia](Tape &t, std::size_t self) {
        t.grad(ia) += t.grad(self).cwiseProduct(t.value(self));
    });
}

Var square(Var a) {
    const auto ia = a.id;
    return a.tape->push(a.value().array().square(), {a}, [ia](Tape &t, std::size_t self) {
        t.grad(ia) += 2.0 * t.grad(self).cwiseProduct(t.value(ia));
    });
}

Var softmax_rows(Var a) {
    const Mat &A = a.value();
    Mat out(A.rows(), A.cols());
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
        const double m = A.row(r).maxCoeff();
        out.row(r) = (A.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
    }
    const auto ia = a.id;
    return a.tape->push(std::move(out), {a}, [ia](Tape &t, std::size_t self) {
        const Mat &y = t.value(self);
        const Mat &g = t.grad(self);
        Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
        t.grad(ia) += y.cwiseProduct(g.colwise() - dot);
    });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Mat &X = x.value();
    const Eigen::Index n = X.cols();
    if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
        fail(ErrorKind::kInference, "layer_norm: gain/bias width mismatch");
    }
    Eigen::VectorXd mean = X.rowwise().mean();
    Mat centred = X.colwise() - mean;
    Eigen::VectorXd inv = (centred.array().square().rowwise().sum() / double(n) + eps).rsqrt();
    Mat xhat = centred.array().colwise() * inv.array();
    Mat out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();

    const auto ix = x.id, ig = gamma.id, ib = beta.id;
    return x.tape->push(std::move(out), {x, gamma, beta},
                        [ix, ig, ib, xhat = std::move(xhat), inv = std::move(inv)](Tape &t, std::size_t self) {
                            const Mat &g = t.grad(self);
                            if (t.needs_grad(ig)) t.grad(ig) += g.cwiseProduct(xhat).colwise().sum();
                            if (t.needs_grad(ib)) t.grad(ib) += g.colwise().sum();
                            if (!t.needs_grad(ix)) return;
                            const double n = double(xhat.cols());
                            Mat dxhat = g.array().rowwise() * t.value(ig).row(0).array();
                            Eigen::VectorXd s1 = dxhat.rowwise().sum();
                            Eigen::VectorXd s2 = dxhat.cwiseProduct(xhat).rowwise().sum();
                            Mat dx = (n * dxhat.array() - (xhat.array().colwise() * s2.array())).colwise() - s1.array();
                            t.grad(ix) += (dx.array().colwise() * (inv.array() / n)).matrix();
                        });
}

Var mean_rows(Var a) {
    const auto ia = a.id;
    const double rows = double(a.rows());
    return a.tape->push(a.value().colwise().mean(), {a}, [ia, rows](Tape &t, std::size_t self) {
        t.grad(ia).rowwise() += t.grad(self).row(0) / rows;
    });
}

Var sum(Var a) {
    const auto ia = a.id;
    Mat out(1, 1);
    out(0, 0) = a.value().sum();
    return a.tape->push(std::move(out), {a}, [ia](Tape &t, std::size_t self) {
        t.grad(ia).array() += t.grad(self)(0, 0);
    });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) fail(ErrorKind::kInference, "slice_cols out of range");
    const auto ia = a.id;
    return a.tape->push(a.value().middleCols(start, count), {a}, [ia, start, count](Tape &t, std::size_t self) {
        t.grad(ia).middleCols(start, count) += t.grad(self);
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) fail(ErrorKind::kInference, "concat_cols of nothing");
    Tape *tape = parts.front().tape;
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const auto &p : parts) {
        if (p.rows() != rows) fail(ErrorKind::kInference, "concat_cols: row counts differ");
        cols += p.cols();
    }
    Mat out(rows, cols);
    std::vector<std::size_t> ids;
    std::vector<Eigen::Index> widths;
    Eigen::Index at = 0;
    for (const auto &p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
        ids.push_back(p.id);
        widths.push_back(p.cols());
    }
    return tape->push(std::move(out), parts, [ids, widths](Tape &t, std::size_t self) {
        const Mat &g = t.grad(self);
        Eigen::Index off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (t.needs_grad(ids[k])) t.grad(ids[k]) += g.middleCols(off, widths[k]);
            off += widths[k];
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) fail(ErrorKind::kInference, "concat_rows of nothing");
    Tape *tape = parts.front().tape;
    const Eigen::Index cols = parts.front().cols();
    Eigen::Index rows = 0;
    for (const auto &p : parts) {
        if (p.cols() != cols) fail(ErrorKind::kInference, "concat_rows: column counts differ");
        rows += p.rows();
    }
    Mat out(rows, cols);
    std::vector<std::size_t> ids;
    std::vector<Eigen::Index> heights;
    Eigen::Index at = 0;
    for (const auto &p : parts) {
        out.middleRows(at, p.rows()) = p.value();
        at += p.rows();
        ids.push_back(p.id);
        heights.push_back(p.rows());
    }
    return tape->push(std::move(out), parts, [ids, heights](Tape &t, std::size_t self) {
        const Mat &g = t.grad(self);
        Eigen::Index off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (t.needs_grad(ids[k])) t.grad(ids[k]) += g.middleRows(off, heights[k]);
            off += heights[k];
        }
    });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
    Mat out(Eigen::Index(rows.size()), a.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (Eigen::Index(rows[k]) >= a.rows()) fail(ErrorKind::kInference, "gather_rows index out of range");
        out.row(Eigen::Index(k)) = a.value().row(Eigen::Index(rows[k]));
    }
    const auto ia = a.id;
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return a.tape->push(std::move(out), {a}, [ia, idx = std::move(idx)](Tape &t, std::size_t self) {
        const Mat &g = t.grad(self);
        Mat &ga = t.grad(ia);
        for (std::size_t k = 0; k < idx.size(); ++k) ga.row(Eigen::Index(idx[k])) += g.row(Eigen::Index(k));
    });
}

Var gaussian_nll(Var pred, const Mat &target, Var logvar) {
    const Mat &P = pred.value();
    check_same_shape(P, target, "gaussian_nll");
    if (logvar.rows() != 1 || logvar.cols() != P.cols()) fail(ErrorKind::kInference, "gaussian_nll: logvar width");
    const Eigen::RowVectorXd lv = logvar.value().row(0);
    const Eigen::RowVectorXd prec = (-lv.array()).exp();
    Mat resid = target - P;
    const double n = double(P.rows());
    const double log2pi = std::log(2.0 * std::numbers::pi);
    double total = 0.5 * n * (double(P.cols()) * log2pi + lv.sum());
    total += 0.5 * (resid.array().square().rowwise() * prec.array()).sum();
    Mat out(1, 1);
    out(0, 0) = total;
    const auto ip = pred.id, il = logvar.id;
    return pred.tape->push(std::move(out), {pred, logvar},
                           [ip, il, n, prec, resid = std::move(resid)](Tape &t, std::size_t self) {
                               const double g = t.grad(self)(0, 0);
                               if (t.needs_grad(ip)) {
                                   t.grad(ip) -= g * (resid.array().rowwise() * prec.array()).matrix();
                               }
                               if (t.needs_grad(il)) {
                                   Eigen::RowVectorXd sq = resid.array().square().colwise().sum();
                                   t.grad(il).row(0) += g * 0.5 * (n - (sq.array() * prec.array())).matrix();
                               }
                           });
}

Var kl_standard_normal(Var mu, Var sigma) {
    check_same_shape(mu.value(), sigma.value(), "kl_standard_normal");
    const Mat &M = mu.value(), &S = sigma.value();
    Mat out(1, 1);
    out(0, 0) = 0.5 * (M.array().square() + S.array().square() - 1.0 - 2.0 * S.array().log()).sum();
    const auto im = mu.id, is = sigma.id;
    return mu.tape->push(std::move(out), {mu, sigma}, [im, is](Tape &t, std::size_t self) {
        const double g = t.grad(self)(0, 0);
        if (t.needs_grad(im)) t.grad(im) += g * t.value(im);
        if (t.needs_grad(is)) {
            const Mat &s = t.value(is);
            t.grad(is) += g * (s.array() - s.array().inverse()).matrix();
        }
    });
}

}  // namespace nestfuse::ad
