#include "pathloss/nn/gemm.hpp"

#ifdef PATHLOSS_USE_OPENBLAS
#include <cblas.h>
#endif

namespace pathloss::nn {

#ifdef PATHLOSS_USE_OPENBLAS

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* A,
          const float* B, float beta, float* C) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
                tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, A, ta ? m : k,
                B, tb ? k : n, beta, C, n);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* A,
          const double* B, double beta, double* C) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
                tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, A, ta ? m : k,
                B, tb ? k : n, beta, C, n);
}

void set_gemm_threads(int n) { openblas_set_num_threads(n); }

#else

namespace {

template <typename T>
void gemm_naive(bool ta, bool tb, int m, int n, int k, T alpha, const T* A,
                const T* B, T beta, T* C) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                T a = ta ? A[static_cast<size_t>(p) * m + i] : A[static_cast<size_t>(i) * k + p];
                T b = tb ? B[static_cast<size_t>(j) * k + p] : B[static_cast<size_t>(p) * n + j];
                acc += static_cast<double>(a) * b;
            }
            size_t idx = static_cast<size_t>(i) * n + j;
            C[idx] = static_cast<T>(alpha * acc + (beta == T(0) ? 0.0 : beta * C[idx]));
        }
    }
}

} // namespace

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* A,
          const float* B, float beta, float* C) {
    gemm_naive(ta, tb, m, n, k, alpha, A, B, beta, C);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* A,
          const double* B, double beta, double* C) {
    gemm_naive(ta, tb, m, n, k, alpha, A, B, beta, C);
}

void set_gemm_threads(int) {}

#endif

} // namespace pathloss::nn
