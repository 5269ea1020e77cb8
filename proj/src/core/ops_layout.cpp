#include <algorithm>
#include <cstring>

#include "blas.hpp"
#include "garamost/ops.hpp"

namespace garamost {

namespace {

template <typename T>
std::span<T> grad_of(const std::shared_ptr<detail::TensorImpl<T>>& impl) {
  return impl->requires_grad ? impl->grad_buffer() : std::span<T>{};
}

int normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError(std::string(op) + ": axis out of range");
  return axis;
}

}  // namespace

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto v = x.data();
  auto xi = x.impl();
  return detail::make_result<T>("reshape", std::move(shape), std::vector<T>(v.begin(), v.end()), {x},
                                [xi](std::span<const T> g, const detail::TensorImpl<T>&) {
                                  auto gx = grad_of(xi);
                                  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                                });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  axis = normalize_axis(axis, first.size(), "concat");
  std::vector<std::int64_t> lens;
  std::int64_t total = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (static_cast<int>(d) != axis && s[d] != first[d]) {
        throw ShapeError("concat: shapes " + shape_str(first) + " and " + shape_str(s) + " disagree off axis " +
                         std::to_string(axis));
      }
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));
  std::int64_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto src = parts[p].data();
    const std::int64_t block = lens[p] * inner;
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + o * block, block, out.begin() + o * total * inner + offset);
    }
    offset += block;
  }
  std::vector<std::shared_ptr<detail::TensorImpl<T>>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return detail::make_result<T>(
      "concat", std::move(out_shape), std::move(out), parts,
      [impls, lens, outer, inner, total](std::span<const T> g, const detail::TensorImpl<T>&) {
        std::int64_t off = 0;
        for (std::size_t p = 0; p < impls.size(); ++p) {
          const std::int64_t block = lens[p] * inner;
          auto gp = grad_of(impls[p]);
          if (!gp.empty()) {
            for (std::int64_t o = 0; o < outer; ++o) {
              const T* src = g.data() + o * total * inner + off;
              T* dst = gp.data() + o * block;
              for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
            }
          }
          off += block;
        }
      });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t begin, std::int64_t end) {
  const Shape& s = x.shape();
  axis = normalize_axis(axis, s.size(), "slice");
  if (begin < 0 || end > s[axis] || begin >= end) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for axis of " +
                     std::to_string(s[axis]));
  }
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::int64_t len = s[axis], take = end - begin;
  Shape out_shape = s;
  out_shape[axis] = take;
  std::vector<T> out(static_cast<std::size_t>(outer * take * inner));
  auto v = x.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(v.begin() + (o * len + begin) * inner, take * inner, out.begin() + o * take * inner);
  }
  auto xi = x.impl();
  return detail::make_result<T>("slice", std::move(out_shape), std::move(out), {x},
                                [xi, outer, inner, len, take, begin](std::span<const T> g,
                                                                     const detail::TensorImpl<T>&) {
                                  auto gx = grad_of(xi);
                                  for (std::int64_t o = 0; o < outer; ++o) {
                                    T* dst = gx.data() + (o * len + begin) * inner;
                                    const T* src = g.data() + o * take * inner;
                                    for (std::int64_t i = 0; i < take * inner; ++i) dst[i] += src[i];
                                  }
                                });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a, bool trans_b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != sb.size() || (sa.size() != 2 && sa.size() != 3)) {
    throw ShapeError("matmul: need two 2-D or two 3-D operands, got " + shape_str(sa) + " and " + shape_str(sb));
  }
  const bool batched = sa.size() == 3;
  const std::int64_t batch = batched ? sa[0] : 1;
  if (batched && sb[0] != batch) throw ShapeError("matmul: batch sizes differ");
  const std::size_t r0 = batched ? 1 : 0;
  const std::int64_t a_rows = sa[r0], a_cols = sa[r0 + 1];
  const std::int64_t b_rows = sb[r0], b_cols = sb[r0 + 1];
  const std::int64_t m = trans_a ? a_cols : a_rows;
  const std::int64_t k = trans_a ? a_rows : a_cols;
  const std::int64_t kb = trans_b ? b_cols : b_rows;
  const std::int64_t n = trans_b ? b_rows : b_cols;
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ (" + shape_str(sa) + " x " + shape_str(sb) + ")");
  }
  Shape out_shape = batched ? Shape{batch, m, n} : Shape{m, n};
  std::vector<T> out(static_cast<std::size_t>(batch * m * n), T(0));
  auto av = a.data(), bv = b.data();
  const std::int64_t a_step = a_rows * a_cols, b_step = b_rows * b_cols;
  for (std::int64_t i = 0; i < batch; ++i) {
    if (m && n && k) {
      blas::gemm<T>(trans_a, trans_b, int(m), int(n), int(k), T(1), av.data() + i * a_step, int(a_cols),
                    bv.data() + i * b_step, int(b_cols), T(0), out.data() + i * m * n, int(n));
    }
  }
  auto ai = a.impl(), bi = b.impl();
  return detail::make_result<T>(
      "matmul", std::move(out_shape), std::move(out), {a, b},
      [=](std::span<const T> g, const detail::TensorImpl<T>&) {
        auto ga = grad_of(ai);
        auto gb = grad_of(bi);
        if (!(m && n && k)) return;
        for (std::int64_t i = 0; i < batch; ++i) {
          const T* gi = g.data() + i * m * n;
          const T* A = ai->data.data() + i * a_step;
          const T* B = bi->data.data() + i * b_step;
          if (!ga.empty()) {
            T* dA = ga.data() + i * a_step;
            if (!trans_a) {
              // dA (m x k) = G (m x n) * op(B)^T
              blas::gemm<T>(false, !trans_b, int(m), int(k), int(n), T(1), gi, int(n), B, int(b_cols), T(1), dA,
                            int(a_cols));
            } else {
              // dA (k x m) = op(B) (k x n) * G^T
              blas::gemm<T>(trans_b, true, int(k), int(m), int(n), T(1), B, int(b_cols), gi, int(n), T(1), dA,
                            int(a_cols));
            }
          }
          if (!gb.empty()) {
            T* dB = gb.data() + i * b_step;
            if (!trans_b) {
              // dB (k x n) = op(A)^T (k x m) * G
              blas::gemm<T>(!trans_a, false, int(k), int(n), int(m), T(1), A, int(a_cols), gi, int(n), T(1), dB,
                            int(b_cols));
            } else {
              // dB (n x k) = G^T (n x m) * op(A) (m x k)
              blas::gemm<T>(true, trans_a, int(n), int(k), int(m), T(1), gi, int(n), A, int(a_cols), T(1), dB,
                            int(b_cols));
            }
          }
        }
      });
}

#define GARAMOST_INSTANTIATE(T)                                                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                            \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                  \
  template Tensor<T> slice(const Tensor<T>&, int, std::int64_t, std::int64_t);    \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool, bool);

GARAMOST_INSTANTIATE(float)
GARAMOST_INSTANTIATE(double)

}  // namespace garamost
