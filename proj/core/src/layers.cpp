#include "nestfuse/layers.hpp"

#include <cmath>

#include "nestfuse/error.hpp"

namespace nestfuse::ad {

Linear::Linear(ParamStore &store, const std::string &name, Eigen::Index in, Eigen::Index out)
    : weight_(store.add(name + ".weight", in, out, Init::kFanInUniform)),
      bias_(store.add(name + ".bias", 1, out, Init::kZeros)),
      in_(in),
      out_(out) {}

Var Linear::forward(Tape &t, ParamStore &store, Var x) const {
    if (x.cols() != in_) {
        fail(ErrorKind::kInference, "linear: input width " + std::to_string(x.cols()) + ", expected " +
                                        std::to_string(in_));
    }
    return add_rowvec(matmul(x, t.param(store, weight_)), t.param(store, bias_));
}

LayerNorm::LayerNorm(ParamStore &store, const std::string &name, Eigen::Index width)
    : gain_(store.add(name + ".gain", 1, width, Init::kOnes)), bias_(store.add(name + ".bias", 1, width, Init::kZeros)) {}

Var LayerNorm::forward(Tape &t, ParamStore &store, Var x) const {
    return layer_norm(x, t.param(store, gain_), t.param(store, bias_));
}

SelfAttention::SelfAttention(ParamStore &store, const std::string &name, Eigen::Index width, int heads)
    : q_(store, name + ".query", width, width),
      k_(store, name + ".key", width, width),
      v_(store, name + ".value", width, width),
      o_(store, name + ".out", width, width),
      width_(width),
      heads_(heads) {
    if (heads < 1 || width % heads != 0) {
        fail(ErrorKind::kConfig, "attention width " + std::to_string(width) + " not divisible by " +
                                     std::to_string(heads) + " heads");
    }
}

Var SelfAttention::forward(Tape &t, ParamStore &store, Var x) const {
    if (x.rows() < 1) fail(ErrorKind::kInference, "attention over zero tokens");
    const Var q = q_.forward(t, store, x);
    const Var k = k_.forward(t, store, x);
    const Var v = v_.forward(t, store, x);
    const Eigen::Index dh = width_ / heads_;
    const double scale_by = 1.0 / std::sqrt(double(dh));
    std::vector<Var> heads;
    heads.reserve(std::size_t(heads_));
    for (int h = 0; h < heads_; ++h) {
        const Var qh = slice_cols(q, h * dh, dh);
        const Var kh = slice_cols(k, h * dh, dh);
        const Var vh = slice_cols(v, h * dh, dh);
        const Var weights = softmax_rows(scale(matmul_nt(qh, kh), scale_by));
        heads.push_back(matmul(weights, vh));
    }
    const Var merged = heads.size() == 1 ? heads.front() : concat_cols(heads);
    return o_.forward(t, store, merged);
}

AttentionBlock::AttentionBlock(ParamStore &store, const std::string &name, Eigen::Index width, int heads,
                               Eigen::Index hidden)
    : ln_attn_(store, name + ".ln_attn", width),
      ln_ffn_(store, name + ".ln_ffn", width),
      attn_(store, name + ".attn", width, heads),
      ffn_in_(store, name + ".ffn_in", width, hidden),
      ffn_out_(store, name + ".ffn_out", hidden, width) {}

Var AttentionBlock::forward(Tape &t, ParamStore &store, Var x) const {
    x = x + attn_.forward(t, store, ln_attn_.forward(t, store, x));
    const Var h = gelu(ffn_in_.forward(t, store, ln_ffn_.forward(t, store, x)));
    return x + ffn_out_.forward(t, store, h);
}

Mlp::Mlp(ParamStore &store, const std::string &name, Eigen::Index in, Eigen::Index hidden, int hidden_layers,
         Eigen::Index out) {
    Eigen::Index width = in;
    for (int i = 0; i < hidden_layers; ++i) {
        layers_.emplace_back(store, name + ".hidden" + std::to_string(i), width, hidden);
        width = hidden;
    }
    layers_.emplace_back(store, name + ".out", width, out);
}

Var Mlp::forward(Tape &t, ParamStore &store, Var x) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        x = layers_[i].forward(t, store, x);
        if (i + 1 < layers_.size()) x = gelu(x);
    }
    return x;
}

Var run_blocks(const std::vector<AttentionBlock> &blocks, Tape &t, ParamStore &store, Var x) {
    for (const auto &b : blocks) x = b.forward(t, store, x);
    return x;
}

}  // namespace nestfuse::ad
