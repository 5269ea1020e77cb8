#include <algorithm>
#include <cmath>

#include "garamost/ops.hpp"
#include "garamost/parallel.hpp"

namespace garamost {

namespace {

template <typename T>
std::span<T> grad_of(const std::shared_ptr<detail::TensorImpl<T>>& impl) {
  return impl->requires_grad ? impl->grad_buffer() : std::span<T>{};
}

template <typename T>
void require_nchw(const char* op, const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError(std::string(op) + ": expected NCHW, got " + shape_str(x.shape()));
}

// Bilinear tap set for one clamped sample position.
template <typename T>
struct Taps {
  std::int64_t x0, x1, y0, y1;
  T ax, ay;
  bool inside_x, inside_y;
};

template <typename T>
Taps<T> taps(T fx, T fy, std::int64_t w, std::int64_t h) {
  Taps<T> t{};
  const T max_x = T(w - 1), max_y = T(h - 1);
  t.inside_x = fx > T(0) && fx < max_x;
  t.inside_y = fy > T(0) && fy < max_y;
  const T sx = std::clamp(fx, T(0), max_x);
  const T sy = std::clamp(fy, T(0), max_y);
  t.x0 = static_cast<std::int64_t>(std::floor(sx));
  t.y0 = static_cast<std::int64_t>(std::floor(sy));
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.ax = sx - T(t.x0);
  t.ay = sy - T(t.y0);
  return t;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_warp(const Tensor<T>& img, const Tensor<T>& flow) {
  require_nchw("bilinear_warp", img);
  require_nchw("bilinear_warp", flow);
  const auto& is = img.shape();
  const auto& fs = flow.shape();
  if (fs[1] != 2) {
    throw ShapeError("bilinear_warp: flow must have 2 channels (u, v), got " + std::to_string(fs[1]));
  }
  if (is[0] != fs[0] || is[2] != fs[2] || is[3] != fs[3]) {
    throw ShapeError("bilinear_warp: image " + shape_str(is) + " and flow " + shape_str(fs) + " disagree in N/H/W");
  }
  const std::int64_t N = is[0], C = is[1], H = is[2], W = is[3], HW = H * W;
  std::vector<T> out(static_cast<std::size_t>(img.numel()));
  const T* iv = img.data().data();
  const T* fv = flow.data().data();
  parallel_for(N, [&](std::int64_t n) {
    for (std::int64_t y = 0; y < H; ++y) {
      for (std::int64_t x = 0; x < W; ++x) {
        const std::int64_t p = y * W + x;
        const auto t = taps(T(x) + fv[(n * 2) * HW + p], T(y) + fv[(n * 2 + 1) * HW + p], W, H);
        for (std::int64_t c = 0; c < C; ++c) {
          const T* plane = iv + (n * C + c) * HW;
          const T top = (T(1) - t.ax) * plane[t.y0 * W + t.x0] + t.ax * plane[t.y0 * W + t.x1];
          const T bot = (T(1) - t.ax) * plane[t.y1 * W + t.x0] + t.ax * plane[t.y1 * W + t.x1];
          out[(n * C + c) * HW + p] = (T(1) - t.ay) * top + t.ay * bot;
        }
      }
    }
  });
  auto ii = img.impl(), fi = flow.impl();
  return detail::make_result<T>(
      "bilinear_warp", is, std::move(out), {img, flow},
      [ii, fi, N, C, H, W, HW](std::span<const T> g, const detail::TensorImpl<T>&) {
        auto gi = grad_of(ii);
        auto gf = grad_of(fi);
        const T* iv = ii->data.data();
        const T* fv = fi->data.data();
        parallel_for(N, [&](std::int64_t n) {
          for (std::int64_t y = 0; y < H; ++y) {
            for (std::int64_t x = 0; x < W; ++x) {
              const std::int64_t p = y * W + x;
              const auto t = taps(T(x) + fv[(n * 2) * HW + p], T(y) + fv[(n * 2 + 1) * HW + p], W, H);
              T du = T(0), dv = T(0);
              for (std::int64_t c = 0; c < C; ++c) {
                const T go = g[(n * C + c) * HW + p];
                const T* plane = iv + (n * C + c) * HW;
                const T v00 = plane[t.y0 * W + t.x0], v01 = plane[t.y0 * W + t.x1];
                const T v10 = plane[t.y1 * W + t.x0], v11 = plane[t.y1 * W + t.x1];
                if (!gi.empty()) {
                  T* gp = gi.data() + (n * C + c) * HW;
                  gp[t.y0 * W + t.x0] += go * (T(1) - t.ay) * (T(1) - t.ax);
                  gp[t.y0 * W + t.x1] += go * (T(1) - t.ay) * t.ax;
                  gp[t.y1 * W + t.x0] += go * t.ay * (T(1) - t.ax);
                  gp[t.y1 * W + t.x1] += go * t.ay * t.ax;
                }
                du += go * ((T(1) - t.ay) * (v01 - v00) + t.ay * (v11 - v10));
                dv += go * ((T(1) - t.ax) * (v10 - v00) + t.ax * (v11 - v01));
              }
              if (!gf.empty()) {
                if (t.inside_x) gf[(n * 2) * HW + p] += du;
                if (t.inside_y) gf[(n * 2 + 1) * HW + p] += dv;
              }
            }
          }
        });
      });
}

namespace {

// Index of the shuffled element: maps (n, c, Y, X) of the (N, C, H*r, W*r)
// tensor onto the (N, C*r*r, H, W) tensor.
inline std::int64_t shuffle_source(std::int64_t n, std::int64_t c, std::int64_t Y, std::int64_t X, std::int64_t C,
                                   std::int64_t H, std::int64_t W, int r) {
  const std::int64_t y = Y / r, i = Y % r, x = X / r, j = X % r;
  return ((n * C * r * r + c * r * r + i * r + j) * H + y) * W + x;
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  require_nchw("pixel_shuffle", x);
  if (r < 1) throw std::invalid_argument("pixel_shuffle: factor must be positive");
  const auto& s = x.shape();
  if (s[1] % (std::int64_t(r) * r) != 0) {
    throw ShapeError("pixel_shuffle: " + std::to_string(s[1]) + " channels not divisible by r^2 = " +
                     std::to_string(r * r));
  }
  const std::int64_t N = s[0], C = s[1] / (r * r), H = s[2], W = s[3];
  const std::int64_t OH = H * r, OW = W * r;
  std::vector<T> out(static_cast<std::size_t>(x.numel()));
  auto v = x.data();
  std::int64_t o = 0;
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t Y = 0; Y < OH; ++Y)
        for (std::int64_t X = 0; X < OW; ++X) out[o++] = v[shuffle_source(n, c, Y, X, C, H, W, r)];
  auto xi = x.impl();
  return detail::make_result<T>("pixel_shuffle", Shape{N, C, OH, OW}, std::move(out), {x},
                                [xi, N, C, H, W, r](std::span<const T> g, const detail::TensorImpl<T>&) {
                                  auto gx = grad_of(xi);
                                  std::int64_t o = 0;
                                  for (std::int64_t n = 0; n < N; ++n)
                                    for (std::int64_t c = 0; c < C; ++c)
                                      for (std::int64_t Y = 0; Y < H * r; ++Y)
                                        for (std::int64_t X = 0; X < W * r; ++X)
                                          gx[shuffle_source(n, c, Y, X, C, H, W, r)] += g[o++];
                                });
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
  require_nchw("pixel_unshuffle", x);
  if (r < 1) throw std::invalid_argument("pixel_unshuffle: factor must be positive");
  const auto& s = x.shape();
  if (s[2] % r != 0 || s[3] % r != 0) {
    throw ShapeError("pixel_unshuffle: spatial size " + shape_str(s) + " not divisible by " + std::to_string(r));
  }
  const std::int64_t N = s[0], C = s[1], H = s[2] / r, W = s[3] / r;
  std::vector<T> out(static_cast<std::size_t>(x.numel()));
  auto v = x.data();
  std::int64_t i = 0;
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t Y = 0; Y < H * r; ++Y)
        for (std::int64_t X = 0; X < W * r; ++X) out[shuffle_source(n, c, Y, X, C, H, W, r)] = v[i++];
  auto xi = x.impl();
  return detail::make_result<T>("pixel_unshuffle", Shape{N, C * r * r, H, W}, std::move(out), {x},
                                [xi, N, C, H, W, r](std::span<const T> g, const detail::TensorImpl<T>&) {
                                  auto gx = grad_of(xi);
                                  std::int64_t i = 0;
                                  for (std::int64_t n = 0; n < N; ++n)
                                    for (std::int64_t c = 0; c < C; ++c)
                                      for (std::int64_t Y = 0; Y < H * r; ++Y)
                                        for (std::int64_t X = 0; X < W * r; ++X)
                                          gx[i++] += g[shuffle_source(n, c, Y, X, C, H, W, r)];
                                });
}

namespace {

struct ResizeTap {
  std::int64_t i0, i1;
  double frac;
};

std::vector<ResizeTap> resize_taps(std::int64_t in, std::int64_t out) {
  std::vector<ResizeTap> taps(static_cast<std::size_t>(out));
  const double ratio = double(in) / double(out);
  for (std::int64_t o = 0; o < out; ++o) {
    double src = (double(o) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::int64_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::int64_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - double(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
  require_nchw("resize_bilinear", x);
  if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: output size must be positive");
  const auto& s = x.shape();
  const std::int64_t NC = s[0] * s[1], H = s[2], W = s[3];
  auto ty = std::make_shared<std::vector<ResizeTap>>(resize_taps(H, out_h));
  auto tx = std::make_shared<std::vector<ResizeTap>>(resize_taps(W, out_w));
  std::vector<T> out(static_cast<std::size_t>(NC * out_h * out_w));
  auto v = x.data();
  for (std::int64_t p = 0; p < NC; ++p) {
    const T* plane = v.data() + p * H * W;
    T* dst = out.data() + p * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const auto& a = (*ty)[oy];
      const T fy = T(a.frac);
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        const auto& b = (*tx)[ox];
        const T fx = T(b.frac);
        const T top = (T(1) - fx) * plane[a.i0 * W + b.i0] + fx * plane[a.i0 * W + b.i1];
        const T bot = (T(1) - fx) * plane[a.i1 * W + b.i0] + fx * plane[a.i1 * W + b.i1];
        dst[oy * out_w + ox] = (T(1) - fy) * top + fy * bot;
      }
    }
  }
  auto xi = x.impl();
  return detail::make_result<T>(
      "resize_bilinear", Shape{s[0], s[1], out_h, out_w}, std::move(out), {x},
      [xi, ty, tx, NC, H, W, out_h, out_w](std::span<const T> g, const detail::TensorImpl<T>&) {
        auto gx = grad_of(xi);
        for (std::int64_t p = 0; p < NC; ++p) {
          T* plane = gx.data() + p * H * W;
          const T* src = g.data() + p * out_h * out_w;
          for (std::int64_t oy = 0; oy < out_h; ++oy) {
            const auto& a = (*ty)[oy];
            const T fy = T(a.frac);
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
              const auto& b = (*tx)[ox];
              const T fx = T(b.frac);
              const T go = src[oy * out_w + ox];
              plane[a.i0 * W + b.i0] += go * (T(1) - fy) * (T(1) - fx);
              plane[a.i0 * W + b.i1] += go * (T(1) - fy) * fx;
              plane[a.i1 * W + b.i0] += go * fy * (T(1) - fx);
              plane[a.i1 * W + b.i1] += go * fy * fx;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, double scale) {
  require_nchw("bilinear_resize", x);
  if (!(scale > 0)) throw std::invalid_argument("bilinear_resize: scale must be positive");
  const auto oh = static_cast<std::int64_t>(std::llround(double(x.dim(2)) * scale));
  const auto ow = static_cast<std::int64_t>(std::llround(double(x.dim(3)) * scale));
  return resize_bilinear(x, oh, ow);
}

template <typename T>
Tensor<T> reflect_pad(const Tensor<T>& x, std::int64_t pad_bottom, std::int64_t pad_right) {
  require_nchw("reflect_pad", x);
  const auto& s = x.shape();
  const std::int64_t NC = s[0] * s[1], H = s[2], W = s[3];
  if (pad_bottom < 0 || pad_right < 0 || pad_bottom > H - 1 || pad_right > W - 1) {
    throw ShapeError("reflect_pad: padding (" + std::to_string(pad_bottom) + "," + std::to_string(pad_right) +
                     ") must be smaller than the image " + shape_str(s));
  }
  const std::int64_t OH = H + pad_bottom, OW = W + pad_right;
  auto src_index = [H, W](std::int64_t y, std::int64_t x) {
    const std::int64_t sy = y < H ? y : 2 * (H - 1) - y;
    const std::int64_t sx = x < W ? x : 2 * (W - 1) - x;
    return sy * W + sx;
  };
  std::vector<T> out(static_cast<std::size_t>(NC * OH * OW));
  auto v = x.data();
  for (std::int64_t p = 0; p < NC; ++p)
    for (std::int64_t y = 0; y < OH; ++y)
      for (std::int64_t xx = 0; xx < OW; ++xx) out[(p * OH + y) * OW + xx] = v[p * H * W + src_index(y, xx)];
  auto xi = x.impl();
  return detail::make_result<T>("reflect_pad", Shape{s[0], s[1], OH, OW}, std::move(out), {x},
                                [xi, NC, H, W, OH, OW, src_index](std::span<const T> g,
                                                                  const detail::TensorImpl<T>&) {
                                  auto gx = grad_of(xi);
                                  for (std::int64_t p = 0; p < NC; ++p)
                                    for (std::int64_t y = 0; y < OH; ++y)
                                      for (std::int64_t xx = 0; xx < OW; ++xx)
                                        gx[p * H * W + src_index(y, xx)] += g[(p * OH + y) * OW + xx];
                                });
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::int64_t height, std::int64_t width) {
  require_nchw("crop", x);
  if (height == x.dim(2) && width == x.dim(3)) return x;
  return slice(slice(x, 2, 0, height), 3, 0, width);
}

template <typename T>
Tensor<T> local_aggregate(const Tensor<T>& weights, const Tensor<T>& values, int r) {
  require_nchw("local_aggregate", weights);
  require_nchw("local_aggregate", values);
  if (r < 1 || r % 2 == 0) throw std::invalid_argument("local_aggregate: window must be odd and positive");
  const auto& ws = weights.shape();
  const auto& vs = values.shape();
  const std::int64_t R2 = std::int64_t(r) * r;
  if (ws[1] != R2 || ws[0] != vs[0] || ws[2] != vs[2] || ws[3] != vs[3]) {
    throw ShapeError("local_aggregate: weights " + shape_str(ws) + " do not match values " + shape_str(vs) +
                     " for window " + std::to_string(r));
  }
  const std::int64_t N = vs[0], C = vs[1], H = vs[2], W = vs[3], HW = H * W;
  const int half = r / 2;
  std::vector<T> out(static_cast<std::size_t>(values.numel()), T(0));
  const T* wv = weights.data().data();
  const T* vv = values.data().data();
  parallel_for(N * C, [&](std::int64_t nc) {
    const std::int64_t n = nc / C;
    T* dst = out.data() + nc * HW;
    const T* src = vv + nc * HW;
    for (int dy = -half; dy <= half; ++dy) {
      for (int dx = -half; dx <= half; ++dx) {
        const std::int64_t o = (dy + half) * r + (dx + half);
        const T* wo = wv + (n * R2 + o) * HW;
        const std::int64_t y_lo = std::max<std::int64_t>(0, -dy), y_hi = std::min<std::int64_t>(H, H - dy);
        const std::int64_t x_lo = std::max<std::int64_t>(0, -dx), x_hi = std::min<std::int64_t>(W, W - dx);
        for (std::int64_t y = y_lo; y < y_hi; ++y) {
          for (std::int64_t x = x_lo; x < x_hi; ++x) {
            dst[y * W + x] += wo[y * W + x] * src[(y + dy) * W + (x + dx)];
          }
        }
      }
    }
  });
  auto wi = weights.impl(), vi = values.impl();
  return detail::make_result<T>(
      "local_aggregate", vs, std::move(out), {weights, values},
      [wi, vi, N, C, H, W, HW, r, R2, half](std::span<const T> g, const detail::TensorImpl<T>&) {
        auto gw = grad_of(wi);
        auto gv = grad_of(vi);
        const T* wv = wi->data.data();
        const T* vv = vi->data.data();
        for (std::int64_t n = 0; n < N; ++n) {
          for (std::int64_t c = 0; c < C; ++c) {
            const T* gout = g.data() + (n * C + c) * HW;
            const T* src = vv + (n * C + c) * HW;
            for (int dy = -half; dy <= half; ++dy) {
              for (int dx = -half; dx <= half; ++dx) {
                const std::int64_t o = (dy + half) * r + (dx + half);
                const std::int64_t woff = (n * R2 + o) * HW;
                const std::int64_t y_lo = std::max<std::int64_t>(0, -dy), y_hi = std::min<std::int64_t>(H, H - dy);
                const std::int64_t x_lo = std::max<std::int64_t>(0, -dx), x_hi = std::min<std::int64_t>(W, W - dx);
                for (std::int64_t y = y_lo; y < y_hi; ++y) {
                  for (std::int64_t x = x_lo; x < x_hi; ++x) {
                    const std::int64_t p = y * W + x, q = (y + dy) * W + (x + dx);
                    if (!gw.empty()) gw[woff + p] += gout[p] * src[q];
                    if (!gv.empty()) gv[(n * C + c) * HW + q] += gout[p] * wv[woff + p];
                  }
                }
              }
            }
          }
        }
      });
}

#define GARAMOST_INSTANTIATE(T)                                                            \
  template Tensor<T> bilinear_warp(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, int);                                 \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, int);                               \
  template Tensor<T> resize_bilinear(const Tensor<T>&, std::int64_t, std::int64_t);        \
  template Tensor<T> bilinear_resize(const Tensor<T>&, double);                            \
  template Tensor<T> reflect_pad(const Tensor<T>&, std::int64_t, std::int64_t);            \
  template Tensor<T> crop(const Tensor<T>&, std::int64_t, std::int64_t);                   \
  template Tensor<T> local_aggregate(const Tensor<T>&, const Tensor<T>&, int);

GARAMOST_INSTANTIATE(float)
GARAMOST_INSTANTIATE(double)

}  // namespace garamost
