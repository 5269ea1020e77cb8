#include <algorithm>

#include "blas.hpp"
#include "garamost/ops.hpp"
#include "garamost/parallel.hpp"

namespace garamost {

std::int64_t conv_output_size(std::int64_t in, std::int64_t kernel, int stride, int dilation, int padding) {
  const std::int64_t span = in + 2 * std::int64_t(padding) - std::int64_t(dilation) * (kernel - 1) - 1;
  if (span < 0) return 0;
  return span / stride + 1;
}

namespace {

struct ConvGeometry {
  std::int64_t n, c, h, w;     // input
  std::int64_t o, kh, kw;      // kernel
  std::int64_t oh, ow;         // output
  std::int64_t cg, og;         // per group
  int stride, dilation, padding, groups;
  bool pointwise;              // 1x1, stride 1, no padding: the input already is the column matrix

  std::int64_t k() const { return cg * kh * kw; }
  std::int64_t p() const { return oh * ow; }
};

// Range of output columns [lo, hi) whose input column ox*stride + off lies in [0, w).
inline void valid_range(std::int64_t off, std::int64_t w, std::int64_t ow, int stride, std::int64_t& lo,
                        std::int64_t& hi) {
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  hi = w - off <= 0 ? 0 : std::min<std::int64_t>(ow, (w - off - 1) / stride + 1);
  if (hi < lo) hi = lo;
}

// Column matrix for one sample; row (c, i, j), column p, with row stride ld.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col, std::int64_t ld) {
  for (std::int64_t c = 0; c < g.cg; ++c) {
    const T* plane = x + c * g.h * g.w;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        T* row = col + ((c * g.kh + i) * g.kw + j) * ld;
        const std::int64_t xoff = j * g.dilation - g.padding;
        std::int64_t lo, hi;
        valid_range(xoff, g.w, g.ow, g.stride, lo, hi);
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + i * g.dilation;
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst, g.ow, T(0));
            continue;
          }
          const T* src = plane + iy * g.w + xoff;
          std::fill(dst, dst + lo, T(0));
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride];
          }
          std::fill(dst + hi, dst + g.ow, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* x, std::int64_t ld) {
  for (std::int64_t c = 0; c < g.cg; ++c) {
    T* plane = x + c * g.h * g.w;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((c * g.kh + i) * g.kw + j) * ld;
        const std::int64_t xoff = j * g.dilation - g.padding;
        std::int64_t lo, hi;
        valid_range(xoff, g.w, g.ow, g.stride, lo, hi);
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + i * g.dilation;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + oy * g.ow;
          T* dst = plane + iy * g.w + xoff;
          for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox * g.stride] += src[ox];
        }
      }
    }
  }
}

template <typename T>
ConvGeometry geometry(const Tensor<T>& x, const ConvSpec<T>& spec) {
  const auto& xs = x.shape();
  if (!spec.kernel.defined()) throw ShapeError("conv2d: kernel is undefined");
  const auto& ks = spec.kernel.shape();
  if (xs.size() != 4) throw ShapeError("conv2d: input must be NCHW, got " + shape_str(xs));
  if (ks.size() != 4) throw ShapeError("conv2d: kernel must be (out, in/groups, kh, kw), got " + shape_str(ks));
  if (spec.stride < 1 || spec.dilation < 1 || spec.padding < 0 || spec.groups < 1) {
    throw std::invalid_argument("conv2d: stride/dilation/groups must be positive and padding non-negative");
  }
  ConvGeometry g{};
  g.n = xs[0];
  g.c = xs[1];
  g.h = xs[2];
  g.w = xs[3];
  g.o = ks[0];
  g.kh = ks[2];
  g.kw = ks[3];
  g.stride = spec.stride;
  g.dilation = spec.dilation;
  g.padding = spec.padding;
  g.groups = spec.groups;
  if (g.c % g.groups != 0 || g.o % g.groups != 0) {
    throw ShapeError("conv2d: channels (in " + std::to_string(g.c) + ", out " + std::to_string(g.o) +
                     ") not divisible by groups " + std::to_string(g.groups));
  }
  g.cg = g.c / g.groups;
  g.og = g.o / g.groups;
  if (ks[1] != g.cg) {
    throw ShapeError("conv2d: input has " + std::to_string(g.c) + " channels but kernel " + shape_str(ks) +
                     " expects " + std::to_string(ks[1] * g.groups));
  }
  if (spec.bias.defined() && spec.bias.numel() != g.o) {
    throw ShapeError("conv2d: bias has " + std::to_string(spec.bias.numel()) + " elements for " +
                     std::to_string(g.o) + " output channels");
  }
  g.oh = conv_output_size(g.h, g.kh, g.stride, g.dilation, g.padding);
  g.ow = conv_output_size(g.w, g.kw, g.stride, g.dilation, g.padding);
  if (g.oh <= 0 || g.ow <= 0) {
    throw ShapeError("conv2d: input " + shape_str(xs) + " too small for kernel " + shape_str(ks) +
                     " (zero-size output)");
  }
  g.pointwise = g.kh == 1 && g.kw == 1 && g.stride == 1 && g.padding == 0;
  return g;
}

// Samples whose columns are laid side by side so each group needs one wide
// product; bounded so the column buffer stays modest.
std::int64_t chunk_size(const ConvGeometry& g) {
  constexpr std::int64_t kMaxColumnElements = std::int64_t(1) << 23;
  return std::clamp<std::int64_t>(kMaxColumnElements / std::max<std::int64_t>(1, g.k() * g.p()), 1, g.n);
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvSpec<T>& spec) {
  const ConvGeometry g = geometry(x, spec);
  const std::int64_t K = g.k(), P = g.p(), chunk = chunk_size(g);
  std::vector<T> out(static_cast<std::size_t>(g.n * g.o * P));
  const T* xv = x.data().data();
  const T* wv = spec.kernel.data().data();
  const T* bv = spec.bias.defined() ? spec.bias.data().data() : nullptr;

  std::vector<T> col, prod;
  for (std::int64_t n0 = 0; n0 < g.n; n0 += chunk) {
    const std::int64_t nb = std::min(chunk, g.n - n0), ld = nb * P;
    for (std::int64_t grp = 0; grp < g.groups; ++grp) {
      const T* cols;
      if (g.pointwise && nb == 1) {
        cols = xv + (n0 * g.c + grp * g.cg) * g.h * g.w;
      } else {
        col.resize(static_cast<std::size_t>(K * ld));
        detail::note_allocation(static_cast<std::int64_t>(col.size()));
        parallel_for(nb, [&](std::int64_t b) {
          im2col(xv + ((n0 + b) * g.c + grp * g.cg) * g.h * g.w, g, col.data() + b * P, ld);
        });
        cols = col.data();
      }
      const T* wg = wv + grp * g.og * K;
      if (nb == 1) {
        T* dst = out.data() + (n0 * g.o + grp * g.og) * P;
        blas::gemm<T>(false, false, int(g.og), int(P), int(K), T(1), wg, int(K), cols, int(P), T(0), dst, int(P));
      } else {
        prod.resize(static_cast<std::size_t>(g.og * ld));
        detail::note_allocation(static_cast<std::int64_t>(prod.size()));
        blas::gemm<T>(false, false, int(g.og), int(ld), int(K), T(1), wg, int(K), cols, int(ld), T(0), prod.data(),
                      int(ld));
        for (std::int64_t b = 0; b < nb; ++b)
          for (std::int64_t o = 0; o < g.og; ++o)
            std::copy_n(prod.data() + o * ld + b * P, P, out.data() + ((n0 + b) * g.o + grp * g.og + o) * P);
      }
    }
  }
  if (bv) {
    parallel_for(g.n, [&](std::int64_t n) {
      for (std::int64_t o = 0; o < g.o; ++o) {
        T* dst = out.data() + (n * g.o + o) * P;
        const T b = bv[o];
        for (std::int64_t p = 0; p < P; ++p) dst[p] += b;
      }
    });
  }

  auto xi = x.impl();
  auto wi = spec.kernel.impl();
  auto bi = spec.bias.defined() ? spec.bias.impl() : nullptr;
  std::vector<Tensor<T>> inputs{x, spec.kernel};
  if (spec.bias.defined()) inputs.push_back(spec.bias);
  return detail::make_result<T>(
      "conv2d", Shape{g.n, g.o, g.oh, g.ow}, std::move(out), inputs,
      [xi, wi, bi, g](std::span<const T> grad, const detail::TensorImpl<T>&) {
        const std::int64_t K = g.k(), P = g.p(), chunk = chunk_size(g);
        std::span<T> gx = xi->requires_grad ? xi->grad_buffer() : std::span<T>{};
        std::span<T> gw = wi->requires_grad ? wi->grad_buffer() : std::span<T>{};
        std::span<T> gb = (bi && bi->requires_grad) ? bi->grad_buffer() : std::span<T>{};
        const T* xv = xi->data.data();
        const T* wv = wi->data.data();

        // Chunks are visited in sample order and the products are single
        // threaded, so accumulation order never depends on the thread count.
        std::vector<T> col, dcol, dmat;
        for (std::int64_t n0 = 0; n0 < g.n; n0 += chunk) {
          const std::int64_t nb = std::min(chunk, g.n - n0), ld = nb * P;
          for (std::int64_t grp = 0; grp < g.groups; ++grp) {
            const T* dout;
            if (nb == 1) {
              dout = grad.data() + (n0 * g.o + grp * g.og) * P;
            } else {
              dmat.resize(static_cast<std::size_t>(g.og * ld));
              detail::note_allocation(static_cast<std::int64_t>(dmat.size()));
              for (std::int64_t b = 0; b < nb; ++b)
                for (std::int64_t o = 0; o < g.og; ++o)
                  std::copy_n(grad.data() + ((n0 + b) * g.o + grp * g.og + o) * P, P, dmat.data() + o * ld + b * P);
              dout = dmat.data();
            }
            if (!gw.empty()) {
              const T* cols;
              if (g.pointwise && nb == 1) {
                cols = xv + (n0 * g.c + grp * g.cg) * g.h * g.w;
              } else {
                col.resize(static_cast<std::size_t>(K * ld));
                detail::note_allocation(static_cast<std::int64_t>(col.size()));
                parallel_for(nb, [&](std::int64_t b) {
                  im2col(xv + ((n0 + b) * g.c + grp * g.cg) * g.h * g.w, g, col.data() + b * P, ld);
                });
                cols = col.data();
              }
              blas::gemm<T>(false, true, int(g.og), int(K), int(ld), T(1), dout, int(ld), cols, int(ld), T(1),
                            gw.data() + grp * g.og * K, int(K));
            }
            if (!gx.empty()) {
              const T* wg = wv + grp * g.og * K;
              if (g.pointwise && nb == 1) {
                T* dx = gx.data() + (n0 * g.c + grp * g.cg) * g.h * g.w;
                blas::gemm<T>(true, false, int(K), int(P), int(g.og), T(1), wg, int(K), dout, int(P), T(1), dx,
                              int(P));
              } else {
                dcol.resize(static_cast<std::size_t>(K * ld));
                detail::note_allocation(static_cast<std::int64_t>(dcol.size()));
                blas::gemm<T>(true, false, int(K), int(ld), int(g.og), T(1), wg, int(K), dout, int(ld), T(0),
                              dcol.data(), int(ld));
                parallel_for(nb, [&](std::int64_t b) {
                  col2im_add(dcol.data() + b * P, g, gx.data() + ((n0 + b) * g.c + grp * g.cg) * g.h * g.w, ld);
                });
              }
            }
          }
        }
        if (!gb.empty()) {
          for (std::int64_t n = 0; n < g.n; ++n) {
            for (std::int64_t o = 0; o < g.o; ++o) {
              const T* d = grad.data() + (n * g.o + o) * P;
              T acc = T(0);
              for (std::int64_t p = 0; p < P; ++p) acc += d[p];
              gb[o] += acc;
            }
          }
        }
      });
}

template Tensor<float> conv2d(const Tensor<float>&, const ConvSpec<float>&);
template Tensor<double> conv2d(const Tensor<double>&, const ConvSpec<double>&);

}  // namespace garamost
