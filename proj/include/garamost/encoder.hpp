#pragma once

#include <array>
#include <vector>

#include "garamost/model_config.hpp"
#include "garamost/nn.hpp"

namespace garamost {

// Per-frame feature pyramid at scales 1, 1/2, 1/4, 1/8 with widths C, 2C, 4C, 8C.
template <typename T>
struct PyramidFeatures {
  std::array<Tensor<T>, 4> L;
};

// Cross-scale fused features: path A at 1/8, path B at 1/16, both D wide.
template <typename T>
struct FusedPair {
  Tensor<T> I00, I10;  // path A, frames 0 and 1
  Tensor<T> I01, I11;  // path B, frames 0 and 1
};

enum class FusionPath { A, B };

template <typename T>
struct EncodedPair {
  PyramidFeatures<T> pyr0, pyr1;
  FusedPair<T> fused;
};

template <typename T>
class Encoder {
 public:
  Encoder(ParamStore<T>& store, const ModelConfig& config);

  PyramidFeatures<T> extract_pyramid(const Tensor<T>& frames) const;

  // Fuses three consecutive pyramid levels (finest first) onto the scale of
  // the deepest one halved. Output is the projection before normalization.
  Tensor<T> fuse_path(const Tensor<T>& fine, const Tensor<T>& mid, const Tensor<T>& deep, FusionPath path) const;

  // Both frames go through the same weights in one batched pass.
  EncodedPair<T> encode_pair(const Tensor<T>& i0, const Tensor<T>& i1) const;

 private:
  struct Path {
    // members[m] holds the dilated convs applied to member m
    std::array<std::vector<Conv2d<T>>, 3> members;
    Conv2d<T> project;
    ChannelNorm<T> norm;
  };

  std::array<ConvAct<T>, 4> levels_;
  Path path_a_, path_b_;
};

// Splits a tensor batched as [frame0; frame1] along N.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_batch(const Tensor<T>& x);

}  // namespace garamost
