#include "garamost/decoder.hpp"

namespace garamost {

template <typename T>
std::pair<Tensor<T>, Tensor<T>> time_map(const Tensor<T>& m0, const Tensor<T>& m1, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("time_map: t must lie in [0, 1], got " + std::to_string(t));
  return {scale(m0, static_cast<T>(t)), scale(m1, static_cast<T>(1.0 - t))};
}

template <typename T>
FlowMask<T> combine_levels(const FlowMask<T>& a, const FlowMask<T>& b) {
  return {a.phi + b.phi, a.mu_logits + b.mu_logits};
}

template <typename T>
Tensor<T> blend(const Tensor<T>& i0, const Tensor<T>& i1, const FlowMask<T>& fm) {
  const auto w0 = bilinear_warp(i0, slice(fm.phi, 1, 0, 2));
  const auto w1 = bilinear_warp(i1, slice(fm.phi, 1, 2, 4));
  const auto m = sigmoid(fm.mu_logits);
  // w1 + m * (w0 - w1) would not reproduce the exact midpoint at m = 0.5
  return m * w0 + add_scalar(scale(m, T(-1)), T(1)) * w1;
}

template <typename T>
Tensor<T> warp_scaled(const Tensor<T>& feat, const Tensor<T>& flow) {
  const auto fh = flow.dim(2), h = feat.dim(2);
  if (fh == h && flow.dim(3) == feat.dim(3)) return bilinear_warp(feat, flow);
  const auto resized = resize_bilinear(flow, h, feat.dim(3));
  return bilinear_warp(feat, scale(resized, static_cast<T>(static_cast<double>(h) / static_cast<double>(fh))));
}

template <typename T>
WarpedSet<T> warp_all(const Tensor<T>& i0, const Tensor<T>& i1, const PyramidFeatures<T>& pyr0,
                      const PyramidFeatures<T>& pyr1, const Tensor<T>& s0p, const Tensor<T>& s1p,
                      const FlowMask<T>& fm, bool include_l3) {
  const auto f0 = slice(fm.phi, 1, 0, 2);
  const auto f1 = slice(fm.phi, 1, 2, 4);
  WarpedSet<T> w;
  w.i0 = bilinear_warp(i0, f0);
  w.i1 = bilinear_warp(i1, f1);
  for (int l = 0; l < 4; ++l) {
    if (l == 3 && !include_l3) continue;
    w.pyr0.L[l] = warp_scaled(pyr0.L[l], f0);
    w.pyr1.L[l] = warp_scaled(pyr1.L[l], f1);
  }
  w.s0p = warp_scaled(s0p, f0);
  w.s1p = warp_scaled(s1p, f1);
  return w;
}

template <typename T>
FlowMaskLevel<T>::FlowMaskLevel(ParamStore<T>& store, const ModelConfig& config, int level) : level_(level) {
  if (level != 0 && level != 1) throw std::invalid_argument("FlowMaskLevel: level must be 0 or 1");
  const std::string name = "fme.level" + std::to_string(level);
  const std::int64_t v = config.value_dim, W = config.fme_width;
  alpha_channels_ = 4 * v;
  // alpha sits at 1/8 (level 0) or 1/16 (level 1) and is shuffled up x2
  upsample_ = level == 0 ? 4 : 8;
  beta_channels_ = level == 0 ? 2 : 4;
  const std::vector<std::int64_t> widths = level == 0 ? std::vector<std::int64_t>{16, 32}
                                                      : std::vector<std::int64_t>{16, 32, 32};
  std::int64_t in = beta_channels_;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    beta_down_.push_back(
        make_conv_act(store, name + ".beta" + std::to_string(i), in, widths[i], 3, ConvOptions{.stride = 2}));
    in = widths[i];
  }
  merge_ = make_conv_act(store, name + ".merge", v + in, W, 3);
  for (int b = 0; b < config.fme_blocks; ++b) {
    blocks_.push_back(make_conv_act(store, name + ".block" + std::to_string(b), W, W, 3));
  }
  head_ = make_conv(store, name + ".head", W, 5LL * upsample_ * upsample_, 3,
                    ConvOptions{.zero_init = config.zero_init_heads});
}

template <typename T>
FlowMask<T> FlowMaskLevel<T>::operator()(const Tensor<T>& alpha, const Tensor<T>& beta) const {
  if (alpha.rank() != 4 || alpha.dim(1) != alpha_channels_) {
    throw ShapeError("fme.level" + std::to_string(level_) + ": alpha must have " + std::to_string(alpha_channels_) +
                     " channels, got " + shape_str(alpha.shape()));
  }
  if (beta.rank() != 4 || beta.dim(1) != beta_channels_) {
    throw ShapeError("fme.level" + std::to_string(level_) + ": beta must have " + std::to_string(beta_channels_) +
                     (level_ == 0 ? " channels (I0, I1)" : " channels (I0, I1, coarse estimate, coarse mask)") +
                     ", got " + shape_str(beta.shape()));
  }
  const auto a = pixel_shuffle(alpha, 2);
  auto b = beta;
  for (const auto& d : beta_down_) b = d(b);
  if (a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("fme.level" + std::to_string(level_) + ": alpha " + shape_str(alpha.shape()) +
                     " and beta " + shape_str(beta.shape()) + " do not meet at a common scale");
  }
  auto x = merge_(concat<T>({a, b}, 1));
  for (const auto& blk : blocks_) x = x + blk(x);
  const auto out = pixel_shuffle(head_(x), upsample_);
  return {scale(slice(out, 1, 0, 4), static_cast<T>(upsample_)), slice(out, 1, 4, 5)};
}

template <typename T>
Refiner<T>::Refiner(ParamStore<T>& store, const ModelConfig& config) : deep_structs_(config.deep_structs) {
  const std::int64_t C = config.base_channels, v = config.value_dim;
  const auto& wd = config.refiner_widths;
  std::int64_t in = kContextChannels;
  for (int s = 0; s < 4; ++s) {
    const std::int64_t side = (s == 3 && deep_structs_) ? v : (C << s);
    down_[s] = make_conv_act(store, "refiner.down" + std::to_string(s), in + 2 * side, wd[s], 3,
                             ConvOptions{.stride = 2});
    in = wd[s];
  }
  bottleneck_ = make_conv_act(store, "refiner.bottleneck", wd[3] + 2 * v, wd[3], 3);
  // decoder: pixel shuffle x2 (channels / 4), concat the skip, conv
  std::int64_t cur = wd[3];
  for (int s = 3; s >= 0; --s) {
    const std::int64_t skip = s > 0 ? wd[s - 1] : kContextChannels;
    const std::int64_t out = s > 0 ? wd[s - 1] : wd[0] / 2;
    up_[3 - s] = make_conv_act(store, "refiner.up" + std::to_string(3 - s), cur / 4 + skip, out, 3);
    cur = out;
  }
  head_ = make_conv(store, "refiner.head", cur, 1, 3, ConvOptions{.zero_init = config.zero_init_heads});
  if (wd[3] % 4 != 0 || wd[2] % 4 != 0 || wd[1] % 4 != 0 || wd[0] % 4 != 0) {
    throw ConfigError("refiner widths must be multiples of 4 (pixel-shuffle upsampling)");
  }
}

template <typename T>
Tensor<T> Refiner<T>::operator()(const Tensor<T>& context, const WarpedSet<T>& warped, const Tensor<T>& base) const {
  if (context.dim(1) != kContextChannels) {
    throw ShapeError("refiner: context must have " + std::to_string(kContextChannels) + " channels, got " +
                     shape_str(context.shape()));
  }
  std::array<Tensor<T>, 4> skips;
  Tensor<T> x = context;
  for (int s = 0; s < 4; ++s) {
    Tensor<T> a, b;
    if (s == 3 && deep_structs_) {
      a = resize_bilinear(warped.s0p, x.dim(2), x.dim(3));
      b = resize_bilinear(warped.s1p, x.dim(2), x.dim(3));
    } else {
      a = warped.pyr0.L[s];
      b = warped.pyr1.L[s];
    }
    x = down_[s](concat<T>({x, a, b}, 1));
    skips[s] = x;
  }
  x = bottleneck_(concat<T>({x, warped.s0p, warped.s1p}, 1));
  for (int s = 3; s >= 0; --s) {
    const auto& skip = s > 0 ? skips[s - 1] : context;
    x = up_[3 - s](concat<T>({pixel_shuffle(x, 2), skip}, 1));
  }
  return clamp(base + head_(x), T(0), T(1));
}

template <typename T>
Decoder<T>::Decoder(ParamStore<T>& store, const ModelConfig& config)
    : deep_structs_(config.deep_structs),
      level0_(store, config, 0),
      level1_(store, config, 1),
      refiner_(store, config) {}

template <typename T>
DecodeOutput<T> Decoder<T>::decode(const DecodeInputs<T>& in, double t) const {
  const auto& ms = *in.ms;
  const auto& i0 = *in.i0;
  const auto& i1 = *in.i1;
  DecodeOutput<T> out;

  const auto [m0t, m1t] = time_map(ms.M0, ms.M1, t);
  out.level0 = level0_(concat<T>({m0t, m1t, ms.S0, ms.S1}, 1), concat<T>({i0, i1}, 1));
  out.coarse = blend(i0, i1, out.level0);

  const auto [m0tp, m1tp] = time_map(ms.M0p, ms.M1p, t);
  out.level1 = level1_(concat<T>({m0tp, m1tp, ms.S0p, ms.S1p}, 1),
                       concat<T>({i0, i1, out.coarse, out.level0.mu_logits}, 1));

  out.combined = combine_levels(out.level0, out.level1);
  out.blended = blend(i0, i1, out.combined);
  const auto warped = warp_all(i0, i1, *in.pyr0, *in.pyr1, ms.S0p, ms.S1p, out.combined, !deep_structs_);
  const auto context = concat<T>({i0, i1, warped.i0, warped.i1, out.combined.phi, out.combined.mu_logits}, 1);
  out.frame = refiner_(context, warped, out.blended);
  return out;
}

#define GARAMOST_INSTANTIATE(T)                                                                                   \
  template std::pair<Tensor<T>, Tensor<T>> time_map(const Tensor<T>&, const Tensor<T>&, double);                 \
  template FlowMask<T> combine_levels(const FlowMask<T>&, const FlowMask<T>&);                                    \
  template Tensor<T> blend(const Tensor<T>&, const Tensor<T>&, const FlowMask<T>&);                               \
  template Tensor<T> warp_scaled(const Tensor<T>&, const Tensor<T>&);                                             \
  template WarpedSet<T> warp_all(const Tensor<T>&, const Tensor<T>&, const PyramidFeatures<T>&,                   \
                                 const PyramidFeatures<T>&, const Tensor<T>&, const Tensor<T>&, const FlowMask<T>&, \
                                 bool);                                                                           \
  template class FlowMaskLevel<T>;                                                                                \
  template class Refiner<T>;                                                                                      \
  template class Decoder<T>;

GARAMOST_INSTANTIATE(float)
GARAMOST_INSTANTIATE(double)

}  // namespace garamost
