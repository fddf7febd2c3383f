#pragma once

namespace atlab {

// Accumulating float32 GEMM variants, row-major. Hot paths for dense and
// im2col convolution layers; loop orders chosen so the inner loop streams.

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(int m, int n, int k, const float* A, const float* B, float* C);

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(int m, int n, int k, const float* A, const float* B, float* C);

// C[k,n] += A[m,k]^T * B[m,n]
void gemm_tn(int m, int n, int k, const float* A, const float* B, float* C);

inline float sign_of(float v) { return static_cast<float>((v > 0.0f) - (v < 0.0f)); }

}  // namespace atlab
