#include "blas.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace garamost::blas {

namespace {

// The library parallelizes over our own work items; BLAS stays single-threaded
// so the two never oversubscribe.
struct SingleThreadedBlas {
  SingleThreadedBlas() { openblas_set_num_threads(1); }
};

void ensure_init() { static SingleThreadedBlas once; }

// Plain row-major product, used for double precision when the BLAS build
// fails the self-test below.
void portable_dgemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
                    const double* b, int ldb, double beta, double* c, int ldc) {
  std::vector<double> row(static_cast<std::size_t>(n));
  for (int i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    for (int l = 0; l < k; ++l) {
      const double av = trans_a ? a[l * lda + i] : a[i * lda + l];
      if (trans_b) {
        for (int j = 0; j < n; ++j) row[j] += av * b[j * ldb + l];
      } else {
        const double* br = b + l * ldb;
        for (int j = 0; j < n; ++j) row[j] += av * br[j];
      }
    }
    double* cr = c + i * ldc;
    for (int j = 0; j < n; ++j) cr[j] = alpha * row[j] + (beta == 0.0 ? 0.0 : beta * cr[j]);
  }
}

// Some OpenBLAS 0.3.20 builds pick an AVX-512 dgemm kernel that returns wrong
// results on newer Xeons (sgemm is unaffected). Checked once per process.
bool dgemm_trustworthy() {
  static const bool ok = [] {
    const int m = 16, n = 300, k = 300;
    std::vector<double> a(m * k), b(k * n), c(m * n, 0.0), r(m * n, 0.0);
    for (int i = 0; i < m * k; ++i) a[i] = std::sin(0.37 * i);
    for (int i = 0; i < k * n; ++i) b[i] = std::cos(0.11 * i);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, 1.0, a.data(), k, b.data(), n, 0.0, c.data(), n);
    portable_dgemm(false, false, m, n, k, 1.0, a.data(), k, b.data(), n, 0.0, r.data(), n);
    for (int i = 0; i < m * n; ++i) {
      if (std::abs(c[i] - r[i]) > 1e-9) return false;
    }
    return true;
  }();
  return ok;
}

}  // namespace

template <>
void gemm<float>(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  ensure_init();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha,
              a, lda, b, ldb, beta, c, ldc);
}

template <>
void gemm<double>(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
                  const double* b, int ldb, double beta, double* c, int ldc) {
  ensure_init();
  if (!dgemm_trustworthy()) {
    portable_dgemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    return;
  }
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha,
              a, lda, b, ldb, beta, c, ldc);
}

}  // namespace garamost::blas
