#pragma once

// Thin typed front for the CBLAS gemm routines. Row-major throughout.

namespace garamost::blas {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda, const T* b, int ldb, T beta,
          T* c, int ldc);

}  // namespace garamost::blas
