#pragma once
// Row-major GEMM: a thin overload pair over BLAS plus a reference
// implementation the tests use to cross-check the fast path.

#include <cblas.h>

namespace sst {

// deterministic single-core math everywhere this header is used
struct BlasSingleThread {
    BlasSingleThread() { openblas_set_num_threads(1); }
};
inline BlasSingleThread blas_single_thread_init;

// c[m x n] = alpha * op(a)[m x k] @ op(b)[k x n] + beta * c
// lda/ldb/ldc are leading dimensions of the stored (untransposed) buffers.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
                 int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

// reference path, same contract
template <class Real>
inline void gemm_naive(bool trans_a, bool trans_b, int m, int n, int k, Real alpha, const Real* a,
                       int lda, const Real* b, int ldb, Real beta, Real* c, int ldc) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            Real acc = 0;
            for (int l = 0; l < k; ++l) {
                Real av = trans_a ? a[l * lda + i] : a[i * lda + l];
                Real bv = trans_b ? b[j * ldb + l] : b[l * ldb + j];
                acc += av * bv;
            }
            c[i * ldc + j] = alpha * acc + beta * c[i * ldc + j];
        }
    }
}

} // namespace sst
