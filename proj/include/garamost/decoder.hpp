#pragma once

#include <array>
#include <vector>

#include "garamost/mg_msfe.hpp"

namespace garamost {

// Full-resolution flow and occlusion logits. phi channels 0-1 displace toward
// frame 0, channels 2-3 toward frame 1, in pixels.
template <typename T>
struct FlowMask {
  Tensor<T> phi;
  Tensor<T> mu_logits;
};

template <typename T>
struct WarpedSet {
  Tensor<T> i0, i1;
  PyramidFeatures<T> pyr0, pyr1;
  Tensor<T> s0p, s1p;
};

// (t * M0, (1 - t) * M1)
template <typename T>
std::pair<Tensor<T>, Tensor<T>> time_map(const Tensor<T>& m0, const Tensor<T>& m1, double t);

template <typename T>
FlowMask<T> combine_levels(const FlowMask<T>& a, const FlowMask<T>& b);

// sigmoid(mu) * warp(I0, phi[0:2]) + (1 - sigmoid(mu)) * warp(I1, phi[2:4])
template <typename T>
Tensor<T> blend(const Tensor<T>& i0, const Tensor<T>& i1, const FlowMask<T>& fm);

// Warps a feature map at 1/s scale with the full-resolution flow resized to
// its size and scaled by 1/s.
template <typename T>
Tensor<T> warp_scaled(const Tensor<T>& feat, const Tensor<T>& flow);

template <typename T>
WarpedSet<T> warp_all(const Tensor<T>& i0, const Tensor<T>& i1, const PyramidFeatures<T>& pyr0,
                      const PyramidFeatures<T>& pyr1, const Tensor<T>& s0p, const Tensor<T>& s1p,
                      const FlowMask<T>& fm, bool include_l3 = true);

// One level of flow/mask estimation. alpha is upsampled x2 by pixel shuffle,
// beta is downsampled by strided convs to the same scale, the merge runs
// through residual blocks and a head that emits 5*u*u channels shuffled up to
// full resolution.
template <typename T>
class FlowMaskLevel {
 public:
  FlowMaskLevel(ParamStore<T>& store, const ModelConfig& config, int level);

  FlowMask<T> operator()(const Tensor<T>& alpha, const Tensor<T>& beta) const;

  int level() const { return level_; }
  int upsample() const { return upsample_; }
  std::int64_t beta_channels() const { return beta_channels_; }

 private:
  int level_;
  int upsample_;
  std::int64_t alpha_channels_;
  std::int64_t beta_channels_;
  std::vector<ConvAct<T>> beta_down_;
  ConvAct<T> merge_;
  std::vector<ConvAct<T>> blocks_;
  Conv2d<T> head_;
};

// UNet refiner producing I_t = clamp(base + residual, 0, 1).
template <typename T>
class Refiner {
 public:
  Refiner(ParamStore<T>& store, const ModelConfig& config);

  static constexpr std::int64_t kContextChannels = 9;  // I0, I1, warped I0, warped I1, phi, mu

  Tensor<T> operator()(const Tensor<T>& context, const WarpedSet<T>& warped, const Tensor<T>& base) const;

 private:
  bool deep_structs_;
  std::array<ConvAct<T>, 4> down_;
  ConvAct<T> bottleneck_;
  std::array<ConvAct<T>, 4> up_;
  Conv2d<T> head_;
};

template <typename T>
struct DecodeInputs {
  const Tensor<T>* i0;
  const Tensor<T>* i1;
  const PyramidFeatures<T>* pyr0;
  const PyramidFeatures<T>* pyr1;
  const MotionStructSet<T>* ms;
};

template <typename T>
struct DecodeOutput {
  FlowMask<T> level0, level1, combined;
  Tensor<T> coarse;  // mask-blended first-level estimate
  Tensor<T> blended;
  Tensor<T> frame;
};

template <typename T>
class Decoder {
 public:
  Decoder(ParamStore<T>& store, const ModelConfig& config);

  DecodeOutput<T> decode(const DecodeInputs<T>& in, double t) const;

  const FlowMaskLevel<T>& level0() const { return level0_; }
  const FlowMaskLevel<T>& level1() const { return level1_; }
  const Refiner<T>& refiner() const { return refiner_; }

 private:
  bool deep_structs_;
  FlowMaskLevel<T> level0_, level1_;
  Refiner<T> refiner_;
};

}  // namespace garamost
