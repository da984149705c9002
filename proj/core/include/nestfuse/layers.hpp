#pragma once

#include <string>
#include <vector>

#include "nestfuse/tape.hpp"

namespace nestfuse::ad {

/// Row-major convention throughout: a batch of n vectors is an n x width
/// matrix, and a linear map is x * W + b with W stored in x out.
class Linear {
   public:
    Linear() = default;
    Linear(ParamStore &store, const std::string &name, Eigen::Index in, Eigen::Index out);

    Var forward(Tape &t, ParamStore &store, Var x) const;
    Eigen::Index in() const { return in_; }
    Eigen::Index out() const { return out_; }

   private:
    std::size_t weight_ = 0, bias_ = 0;
    Eigen::Index in_ = 0, out_ = 0;
};

class LayerNorm {
   public:
    LayerNorm() = default;
    LayerNorm(ParamStore &store, const std::string &name, Eigen::Index width);

    Var forward(Tape &t, ParamStore &store, Var x) const;

   private:
    std::size_t gain_ = 0, bias_ = 0;
};

/// Multi-head scaled dot-product self-attention. Carries no positional
/// information, so it is permutation-equivariant over rows.
class SelfAttention {
   public:
    SelfAttention() = default;
    SelfAttention(ParamStore &store, const std::string &name, Eigen::Index width, int heads);

    Var forward(Tape &t, ParamStore &store, Var x) const;

   private:
    Linear q_, k_, v_, o_;
    Eigen::Index width_ = 0;
    int heads_ = 1;
};

/// Pre-norm residual block: x + attn(ln(x)), then x + ffn(ln(x)).
class AttentionBlock {
   public:
    AttentionBlock() = default;
    AttentionBlock(ParamStore &store, const std::string &name, Eigen::Index width, int heads, Eigen::Index hidden);

    Var forward(Tape &t, ParamStore &store, Var x) const;

   private:
    LayerNorm ln_attn_, ln_ffn_;
    SelfAttention attn_;
    Linear ffn_in_, ffn_out_;
};

/// Linear layers with GELU between them; no activation after the last.
class Mlp {
   public:
    Mlp() = default;
    Mlp(ParamStore &store, const std::string &name, Eigen::Index in, Eigen::Index hidden, int hidden_layers,
        Eigen::Index out);

    Var forward(Tape &t, ParamStore &store, Var x) const;

   private:
    std::vector<Linear> layers_;
};

/// Convenience: run a stack of attention blocks in order.
Var run_blocks(const std::vector<AttentionBlock> &blocks, Tape &t, ParamStore &store, Var x);

}  // namespace nestfuse::ad
