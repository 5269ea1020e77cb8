#pragma once

#include <optional>

#include "garamost/encoder.hpp"

namespace garamost {

// Position map: even channels ramp -1 (top) .. +1 (bottom), odd channels
// ramp -1 (left) .. +1 (right). A single row or column maps to 0.
template <typename T>
Tensor<T> position_map(std::int64_t h, std::int64_t w, std::int64_t k);

template <typename T>
struct LambdaParams {
  Tensor<T> w_q;  // (|k|, D, 1, 1)
  Tensor<T> w_k;  // (|k|, D, 1, 1)
  Tensor<T> w_v;  // (|v|, D, 1, 1)
  Tensor<T> e;    // (r*r, |k|, 1, 1): one |k|-vector per window offset, row-major
};

template <typename T>
struct AttentionOut {
  Tensor<T> s_att;
  Tensor<T> m;
};

// Queries come from src, keys and values from tgt. Keys are normalized by a
// softmax over all positions; the content lambda K^T V is shared by every
// position, the position lambda aggregates V over an r x r window through E.
// No buffer of n x n entries is created.
template <typename T>
AttentionOut<T> lambda_cross_attention(const Tensor<T>& src, const Tensor<T>& tgt, const LambdaParams<T>& params,
                                       int r);

template <typename T>
struct MotionStructSet {
  Tensor<T> S0, S1, M0, M1;      // 1/8
  Tensor<T> S0p, S1p, M0p, M1p;  // 1/16
};

template <typename T>
class MgMsfe {
 public:
  MgMsfe(ParamStore<T>& store, const ModelConfig& config);

  // x = src (+ 1x1 projection when D != |v|) + s_att; returns x + MLP(LN(x)).
  Tensor<T> structure_head(const Tensor<T>& src, const Tensor<T>& s_att, FusionPath path) const;

  MotionStructSet<T> forward(const FusedPair<T>& fused) const;

 private:
  struct Path {
    LambdaParams<T> dir0;
    std::optional<LambdaParams<T>> dir1;  // set when directions are not shared
    int r = 7;
    std::optional<Conv2d<T>> src_proj;
    ChannelNorm<T> norm;
    Conv2d<T> fc1;
    PReLU<T> act;
    Conv2d<T> fc2;
  };

  // Returns (S, M) for the batched pair [a; b] attending to [b; a].
  std::pair<Tensor<T>, Tensor<T>> run_path(const Path& p, const Tensor<T>& a, const Tensor<T>& b, FusionPath which) const;

  Path path_a_, path_b_;
};

}  // namespace garamost
