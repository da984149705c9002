#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace nestfuse::ad {

using Mat = Eigen::MatrixXd;

struct Param {
    std::string name;
    Mat value;
    Mat grad;
};

enum class Init {
    kFanInUniform,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)), fan_in = rows
    kZeros,
    kOnes,
};

/// Named parameters in registration order. Indices returned by add() stay
/// valid across copies, so layers refer to parameters by index.
class ParamStore {
   public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}

    std::size_t add(const std::string &name, Eigen::Index rows, Eigen::Index cols, Init init);

    Param &operator[](std::size_t i) { return params_[i]; }
    const Param &operator[](std::size_t i) const { return params_[i]; }
    std::size_t count() const { return params_.size(); }
    std::size_t scalar_count() const;
    std::uint64_t seed() const { return seed_; }

    std::size_t index_of(const std::string &name) const;
    bool contains(const std::string &name) const { return by_name_.count(name) != 0; }

    void zero_grad();
    /// Round every value through float32 so a checkpoint round-trip is exact.
    void round_to_float();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

   private:
    std::uint64_t seed_;
    std::mt19937_64 rng_;
    std::deque<Param> params_;
    std::unordered_map<std::string, std::size_t> by_name_;
};

class Tape;

/// Handle to a node on a tape.
struct Var {
    Tape *tape = nullptr;
    std::size_t id = 0;

    const Mat &value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    double scalar() const { return value()(0, 0); }
};

/// Reverse-mode recorder. Nodes are appended in evaluation order; backward()
/// walks them in reverse and accumulates into parameter gradients. A tape
/// built with record=false keeps values only (inference).
class Tape {
   public:
    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape &) = delete;
    Tape &operator=(const Tape &) = delete;

    Var constant(Mat value);
    Var param(ParamStore &store, std::size_t index);

    void backward(Var loss);

    bool recording() const { return record_; }
    std::size_t size() const { return nodes_.size(); }

    // Op plumbing used by the free functions below.
    using Backward = std::function<void(Tape &, std::size_t)>;
    Var push(Mat value, std::span<const Var> inputs, Backward backward);
    Var push(Mat value, std::initializer_list<Var> inputs, Backward backward) {
        return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
    }
    const Mat &value(std::size_t id) const { return nodes_[id].value; }
    Mat &grad(std::size_t id);
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

   private:
    struct Node {
        Mat value;
        Mat grad;
        Backward backward;
        bool needs_grad = false;
        Param *param = nullptr;
    };
    bool record_;
    std::vector<Node> nodes_;
};

inline const Mat &Var::value() const { return tape->value(id); }

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                    // elementwise
Var add_rowvec(Var a, Var row);           // row is 1 x cols, broadcast over rows
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var gelu(Var a);                          // tanh approximation
Var softplus(Var a);
Var exp(Var a);
Var square(Var a);
Var softmax_rows(Var a);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var mean_rows(Var a);                     // 1 x cols
Var sum(Var a);                           // 1 x 1
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(Var a, std::span<const std::size_t> rows);

/// 0.5 * sum_ij [log(2 pi) + logvar_j + (target_ij - pred_ij)^2 exp(-logvar_j)]
Var gaussian_nll(Var pred, const Mat &target, Var logvar);

/// KL(N(mu, sigma^2) || N(0, I)) summed over all entries, closed form.
Var kl_standard_normal(Var mu, Var sigma);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace nestfuse::ad
