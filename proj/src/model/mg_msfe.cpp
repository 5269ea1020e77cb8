#include "garamost/mg_msfe.hpp"

#include <algorithm>

namespace garamost {

template <typename T>
Tensor<T> position_map(std::int64_t h, std::int64_t w, std::int64_t k) {
  if (h < 1 || w < 1) throw ShapeError("position_map: map must be non-empty");
  if (k < 1 || k % 2 != 0) throw std::invalid_argument("position_map: depth must be even, got " + std::to_string(k));
  auto ramp = [](std::int64_t i, std::int64_t n) {
    return n == 1 ? T(0) : static_cast<T>(-1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1));
  };
  std::vector<T> v(static_cast<std::size_t>(k * h * w));
  for (std::int64_t c = 0; c < k; ++c)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) v[(c * h + y) * w + x] = c % 2 == 0 ? ramp(y, h) : ramp(x, w);
  return Tensor<T>::from({1, k, h, w}, std::move(v));
}

namespace {

template <typename T>
Tensor<T> pointwise(const Tensor<T>& x, const Tensor<T>& w) {
  return conv2d(x, ConvSpec<T>{w, {}});
}

}  // namespace

template <typename T>
AttentionOut<T> lambda_cross_attention(const Tensor<T>& src, const Tensor<T>& tgt, const LambdaParams<T>& params,
                                       int r) {
  if (src.rank() != 4 || src.shape() != tgt.shape()) {
    throw ShapeError("lambda_cross_attention: src " + shape_str(src.shape()) + " and tgt " + shape_str(tgt.shape()) +
                     " must be equal NCHW shapes");
  }
  const std::int64_t N = src.dim(0), h = src.dim(2), w = src.dim(3), n = h * w;
  if (r < 1 || r % 2 == 0) throw std::invalid_argument("lambda_cross_attention: r must be odd, got " + std::to_string(r));
  if (r > 2 * std::max(h, w) - 1) {
    throw std::invalid_argument("lambda_cross_attention: scope r=" + std::to_string(r) + " exceeds a " +
                                std::to_string(h) + "x" + std::to_string(w) + " map (max " +
                                std::to_string(2 * std::max(h, w) - 1) + ")");
  }
  const std::int64_t k = params.w_q.dim(0), v = params.w_v.dim(0);
  if (params.e.dim(0) != static_cast<std::int64_t>(r) * r || params.e.dim(1) != k) {
    throw ShapeError("lambda_cross_attention: position embedding " + shape_str(params.e.shape()) +
                     " does not cover r*r=" + std::to_string(r * r) + " offsets of depth " + std::to_string(k));
  }

  const auto q = pointwise(src, params.w_q);
  const auto keys = softmax(reshape(pointwise(tgt, params.w_k), {N, k, n}), 2);
  const auto values = pointwise(tgt, params.w_v);
  const auto lambda_c = matmul(keys, reshape(values, {N, v, n}), false, true);  // (N, k, v)

  auto apply = [&](const Tensor<T>& queries) {
    const auto content = reshape(matmul(lambda_c, reshape(queries, {N, k, n}), true, false), {N, v, h, w});
    const auto position = local_aggregate(pointwise(queries, params.e), values, r);
    return content + position;
  };

  auto pmap = position_map<T>(h, w, k);
  if (N > 1) pmap = concat(std::vector<Tensor<T>>(static_cast<std::size_t>(N), pmap), 0);
  return {apply(q), apply(pmap)};
}

template <typename T>
MgMsfe<T>::MgMsfe(ParamStore<T>& store, const ModelConfig& config) {
  const std::int64_t D = config.model_dim, k = config.key_dim, v = config.value_dim;
  auto make_lambda = [&](const std::string& name, int r) {
    LambdaParams<T> p;
    p.w_q = store.create(name + ".w_q", {k, D, 1, 1}, Init::kaiming, D);
    p.w_k = store.create(name + ".w_k", {k, D, 1, 1}, Init::kaiming, D);
    p.w_v = store.create(name + ".w_v", {v, D, 1, 1}, Init::kaiming, D);
    p.e = store.create(name + ".e", {static_cast<std::int64_t>(r) * r, k, 1, 1}, Init::kaiming, k * r * r);
    return p;
  };
  auto build = [&](Path& p, const std::string& name, int r) {
    p.r = r;
    if (config.share_directions) {
      p.dir0 = make_lambda(name, r);
    } else {
      p.dir0 = make_lambda(name + ".dir0", r);
      p.dir1 = make_lambda(name + ".dir1", r);
    }
    if (D != v) p.src_proj = make_conv(store, name + ".src_proj", D, v, 1, ConvOptions{.bias = false});
    p.norm = make_norm(store, name + ".head.norm", v);
    p.fc1 = make_conv(store, name + ".head.fc1", v, 2 * v, 1);
    p.act = make_prelu(store, name + ".head.act", 2 * v);
    p.fc2 = make_conv(store, name + ".head.fc2", 2 * v, v, 1);
  };
  build(path_a_, "mgmsfe.pathA", config.r_path_a);
  build(path_b_, "mgmsfe.pathB", config.r_path_b);
}

template <typename T>
Tensor<T> MgMsfe<T>::structure_head(const Tensor<T>& src, const Tensor<T>& s_att, FusionPath path) const {
  const Path& p = path == FusionPath::A ? path_a_ : path_b_;
  const auto x = (p.src_proj ? (*p.src_proj)(src) : src) + s_att;
  return x + p.fc2(p.act(p.fc1(p.norm(x))));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> MgMsfe<T>::run_path(const Path& p, const Tensor<T>& a, const Tensor<T>& b,
                                                     FusionPath which) const {
  AttentionOut<T> att;
  if (!p.dir1) {
    // both directions in one batched pass
    att = lambda_cross_attention(concat<T>({a, b}, 0), concat<T>({b, a}, 0), p.dir0, p.r);
  } else {
    const auto fwd = lambda_cross_attention(a, b, p.dir0, p.r);
    const auto bwd = lambda_cross_attention(b, a, *p.dir1, p.r);
    att.s_att = concat<T>({fwd.s_att, bwd.s_att}, 0);
    att.m = concat<T>({fwd.m, bwd.m}, 0);
  }
  return {structure_head(concat<T>({a, b}, 0), att.s_att, which), att.m};
}

template <typename T>
MotionStructSet<T> MgMsfe<T>::forward(const FusedPair<T>& fused) const {
  MotionStructSet<T> out;
  {
    const auto [s, m] = run_path(path_a_, fused.I00, fused.I10, FusionPath::A);
    std::tie(out.S0, out.S1) = split_batch(s);
    std::tie(out.M0, out.M1) = split_batch(m);
  }
  {
    const auto [s, m] = run_path(path_b_, fused.I01, fused.I11, FusionPath::B);
    std::tie(out.S0p, out.S1p) = split_batch(s);
    std::tie(out.M0p, out.M1p) = split_batch(m);
  }
  return out;
}

#define GARAMOST_INSTANTIATE(T)                                                                             \
  template Tensor<T> position_map<T>(std::int64_t, std::int64_t, std::int64_t);                             \
  template AttentionOut<T> lambda_cross_attention(const Tensor<T>&, const Tensor<T>&, const LambdaParams<T>&, \
                                                  int);                                                     \
  template class MgMsfe<T>;

GARAMOST_INSTANTIATE(float)
GARAMOST_INSTANTIATE(double)

}  // namespace garamost
