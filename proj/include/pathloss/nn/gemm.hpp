#pragma once

namespace pathloss::nn {

/// C[m x n] = alpha * op(A) * op(B) + beta * C, row-major.
/// A stores (ta ? k x m : m x k), B stores (tb ? n x k : k x n).
void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* A,
          const float* B, float beta, float* C);
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* A,
          const double* B, double beta, double* C);

/// Caps the threads the BLAS backend may use (no-op for the fallback).
void set_gemm_threads(int n);

} // namespace pathloss::nn
