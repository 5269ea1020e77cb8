#include <cmath>
#include <numeric>

#include "garamost/ops.hpp"

namespace garamost {

namespace {

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <typename T>
std::span<T> grad_of(const std::shared_ptr<detail::TensorImpl<T>>& impl) {
  return impl->requires_grad ? impl->grad_buffer() : std::span<T>{};
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  auto ai = a.impl(), bi = b.impl();
  return detail::make_result<T>("add", a.shape(), std::move(out), {a, b},
                                [ai, bi](std::span<const T> g, const detail::TensorImpl<T>&) {
                                  for (auto* impl : {&ai, &bi}) {
                                    auto ga = grad_of(*impl);
                                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                                  }
                                });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  auto ai = a.impl(), bi = b.impl();
  return detail::make_result<T>("sub", a.shape(), std::move(out), {a, b},
                                [ai, bi](std::span<const T> g, const detail::TensorImpl<T>&) {
                                  auto ga = grad_of(ai);
                                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                                  auto gb = grad_of(bi);
                                  for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                                });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  auto ai = a.impl(), bi = b.impl();
  return detail::make_result<T>("mul", a.shape(), std::move(out), {a, b},
                                [ai, bi](std::span<const T> g, const detail::TensorImpl<T>&) {
                                  auto ga = grad_of(ai);
                                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bi->data[i];
                                  auto gb = grad_of(bi);
                                  for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * ai->data[i];
                                });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  auto v = x.data();
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] + s;
  auto xi = x.impl();
  return detail::make_result<T>("add_scalar", x.shape(), std::move(out), {x},
                                [xi](std::span<const T> g, const detail::TensorImpl<T>&) {
                                  auto gx = grad_of(xi);
                                  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                                });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  auto v = x.data();
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * s;
  auto xi = x.impl();
  return detail::make_result<T>("scale", x.shape(), std::move(out), {x},
                                [xi, s](std::span<const T> g, const detail::TensorImpl<T>&) {
                                  auto gx = grad_of(xi);
                                  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * s;
                                });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto v = x.data();
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-v[i]));
  auto xi = x.impl();
  return detail::make_result<T>("sigmoid", x.shape(), std::move(out), {x},
                                [xi](std::span<const T> g, const detail::TensorImpl<T>& self) {
                                  auto gx = grad_of(xi);
                                  for (std::size_t i = 0; i < gx.size(); ++i) {
                                    const T y = self.data[i];
                                    gx[i] += g[i] * y * (T(1) - y);
                                  }
                                });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  auto v = x.data();
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(v[i]);
  auto xi = x.impl();
  return detail::make_result<T>("abs", x.shape(), std::move(out), {x},
                                [xi](std::span<const T> g, const detail::TensorImpl<T>&) {
                                  auto gx = grad_of(xi);
                                  for (std::size_t i = 0; i < gx.size(); ++i) {
                                    const T s = xi->data[i] > T(0) ? T(1) : (xi->data[i] < T(0) ? T(-1) : T(0));
                                    gx[i] += g[i] * s;
                                  }
                                });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  auto v = x.data();
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(v[i], lo), hi);
  auto xi = x.impl();
  return detail::make_result<T>("clamp", x.shape(), std::move(out), {x},
                                [xi, lo, hi](std::span<const T> g, const detail::TensorImpl<T>&) {
                                  auto gx = grad_of(xi);
                                  for (std::size_t i = 0; i < gx.size(); ++i) {
                                    const T xv = xi->data[i];
                                    if (xv >= lo && xv <= hi) gx[i] += g[i];
                                  }
                                });
}

template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& slope) {
  const auto& s = x.shape();
  if (s.size() < 2) throw ShapeError("prelu: input needs a channel axis, got " + shape_str(s));
  const std::int64_t channels = s[1];
  const std::int64_t n_slope = slope.numel();
  if (n_slope != 1 && n_slope != channels) {
    throw ShapeError("prelu: slope of size " + std::to_string(n_slope) + " for " + std::to_string(channels) +
                     " channels");
  }
  const std::int64_t outer = s[0];
  const std::int64_t inner = x.numel() / std::max<std::int64_t>(1, outer * channels);
  auto v = x.data();
  auto a = slope.data();
  std::vector<T> out(v.size());
  for (std::int64_t n = 0; n < outer; ++n) {
    for (std::int64_t c = 0; c < channels; ++c) {
      const T k = a[n_slope == 1 ? 0 : c];
      const std::int64_t base = (n * channels + c) * inner;
      for (std::int64_t i = 0; i < inner; ++i) {
        const T xv = v[base + i];
        out[base + i] = xv >= T(0) ? xv : k * xv;
      }
    }
  }
  auto xi = x.impl(), si = slope.impl();
  return detail::make_result<T>(
      "prelu", s, std::move(out), {x, slope},
      [xi, si, outer, channels, inner, n_slope](std::span<const T> g, const detail::TensorImpl<T>&) {
        auto gx = grad_of(xi);
        auto gs = grad_of(si);
        for (std::int64_t n = 0; n < outer; ++n) {
          for (std::int64_t c = 0; c < channels; ++c) {
            const std::int64_t sc = n_slope == 1 ? 0 : c;
            const T k = si->data[sc];
            const std::int64_t base = (n * channels + c) * inner;
            T acc = T(0);
            for (std::int64_t i = 0; i < inner; ++i) {
              const T xv = xi->data[base + i];
              if (xv >= T(0)) {
                if (!gx.empty()) gx[base + i] += g[base + i];
              } else {
                if (!gx.empty()) gx[base + i] += g[base + i] * k;
                acc += g[base + i] * xv;
              }
            }
            if (!gs.empty()) gs[sc] += acc;
          }
        }
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  auto v = x.data();
  T total = std::accumulate(v.begin(), v.end(), T(0));
  auto xi = x.impl();
  return detail::make_result<T>("sum", Shape{}, std::vector<T>{total}, {x},
                                [xi](std::span<const T> g, const detail::TensorImpl<T>&) {
                                  auto gx = grad_of(xi);
                                  for (auto& e : gx) e += g[0];
                                });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  auto v = x.data();
  if (v.empty()) throw ShapeError("mean of an empty tensor");
  const T inv = T(1) / static_cast<T>(v.size());
  T total = std::accumulate(v.begin(), v.end(), T(0));
  auto xi = x.impl();
  return detail::make_result<T>("mean", Shape{}, std::vector<T>{total * inv}, {x},
                                [xi, inv](std::span<const T> g, const detail::TensorImpl<T>&) {
                                  auto gx = grad_of(xi);
                                  for (auto& e : gx) e += g[0] * inv;
                                });
}

namespace {

struct AxisSplit {
  std::int64_t outer, len, inner;
};

AxisSplit split_axis(const Shape& s, int& axis, const char* op) {
  const int rank = static_cast<int>(s.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError(std::string(op) + ": axis out of range for shape " + shape_str(s));
  }
  AxisSplit r{1, s[axis], 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  for (int i = axis + 1; i < rank; ++i) r.inner *= s[i];
  return r;
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const auto sp = split_axis(x.shape(), axis, "softmax");
  auto v = x.data();
  std::vector<T> out(v.size());
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t i = 0; i < sp.inner; ++i) {
      const std::int64_t base = o * sp.len * sp.inner + i;
      T mx = v[base];
      for (std::int64_t l = 1; l < sp.len; ++l) mx = std::max(mx, v[base + l * sp.inner]);
      T z = T(0);
      for (std::int64_t l = 0; l < sp.len; ++l) {
        const T e = std::exp(v[base + l * sp.inner] - mx);
        out[base + l * sp.inner] = e;
        z += e;
      }
      const T inv = T(1) / z;
      for (std::int64_t l = 0; l < sp.len; ++l) out[base + l * sp.inner] *= inv;
    }
  }
  auto xi = x.impl();
  return detail::make_result<T>("softmax", x.shape(), std::move(out), {x},
                                [xi, sp](std::span<const T> g, const detail::TensorImpl<T>& self) {
                                  auto gx = grad_of(xi);
                                  const auto& y = self.data;
                                  for (std::int64_t o = 0; o < sp.outer; ++o) {
                                    for (std::int64_t i = 0; i < sp.inner; ++i) {
                                      const std::int64_t base = o * sp.len * sp.inner + i;
                                      T dot = T(0);
                                      for (std::int64_t l = 0; l < sp.len; ++l) {
                                        dot += g[base + l * sp.inner] * y[base + l * sp.inner];
                                      }
                                      for (std::int64_t l = 0; l < sp.len; ++l) {
                                        const auto k = base + l * sp.inner;
                                        gx[k] += y[k] * (g[k] - dot);
                                      }
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift, int axis, T eps) {
  const auto sp = split_axis(x.shape(), axis, "layer_norm");
  if (gain.numel() != sp.len || shift.numel() != sp.len) {
    throw ShapeError("layer_norm: gain/shift must have " + std::to_string(sp.len) + " elements");
  }
  auto v = x.data();
  auto gm = gain.data(), bt = shift.data();
  std::vector<T> out(v.size());
  // normalized values and per-fiber inverse std are kept for the backward pass
  auto xhat = std::make_shared<std::vector<T>>(v.size());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(sp.outer * sp.inner));
  const T inv_len = T(1) / static_cast<T>(sp.len);
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t i = 0; i < sp.inner; ++i) {
      const std::int64_t base = o * sp.len * sp.inner + i;
      T mu = T(0);
      for (std::int64_t l = 0; l < sp.len; ++l) mu += v[base + l * sp.inner];
      mu *= inv_len;
      T var = T(0);
      for (std::int64_t l = 0; l < sp.len; ++l) {
        const T d = v[base + l * sp.inner] - mu;
        var += d * d;
      }
      var *= inv_len;
      const T is = T(1) / std::sqrt(var + eps);
      (*inv_std)[o * sp.inner + i] = is;
      for (std::int64_t l = 0; l < sp.len; ++l) {
        const auto k = base + l * sp.inner;
        const T xh = (v[k] - mu) * is;
        (*xhat)[k] = xh;
        out[k] = gm[l] * xh + bt[l];
      }
    }
  }
  auto xi = x.impl(), gi = gain.impl(), si = shift.impl();
  return detail::make_result<T>(
      "layer_norm", x.shape(), std::move(out), {x, gain, shift},
      [xi, gi, si, sp, xhat, inv_std, inv_len](std::span<const T> g, const detail::TensorImpl<T>&) {
        auto gx = grad_of(xi);
        auto gg = grad_of(gi);
        auto gs = grad_of(si);
        const auto& gm = gi->data;
        std::vector<T> dxh(static_cast<std::size_t>(sp.len));
        for (std::int64_t o = 0; o < sp.outer; ++o) {
          for (std::int64_t i = 0; i < sp.inner; ++i) {
            const std::int64_t base = o * sp.len * sp.inner + i;
            T mean_d = T(0), mean_dx = T(0);
            for (std::int64_t l = 0; l < sp.len; ++l) {
              const auto k = base + l * sp.inner;
              const T gk = g[k];
              if (!gg.empty()) gg[l] += gk * (*xhat)[k];
              if (!gs.empty()) gs[l] += gk;
              dxh[l] = gk * gm[l];
              mean_d += dxh[l];
              mean_dx += dxh[l] * (*xhat)[k];
            }
            if (gx.empty()) continue;
            mean_d *= inv_len;
            mean_dx *= inv_len;
            const T is = (*inv_std)[o * sp.inner + i];
            for (std::int64_t l = 0; l < sp.len; ++l) {
              const auto k = base + l * sp.inner;
              gx[k] += is * (dxh[l] - mean_d - (*xhat)[k] * mean_dx);
            }
          }
        }
      });
}

#define GARAMOST_INSTANTIATE(T)                                                         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                        \
  template Tensor<T> sigmoid(const Tensor<T>&);                                         \
  template Tensor<T> abs(const Tensor<T>&);                                             \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                     \
  template Tensor<T> prelu(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> sum(const Tensor<T>&);                                             \
  template Tensor<T> mean(const Tensor<T>&);                                            \
  template Tensor<T> softmax(const Tensor<T>&, int);                                    \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, T);

GARAMOST_INSTANTIATE(float)
GARAMOST_INSTANTIATE(double)

}  // namespace garamost
