#include "atlab/kernels.hpp"

#include <cstddef>

namespace atlab {

void gemm_nn(int m, int n, int k, const float* A, const float* B, float* C) {
  for (int i = 0; i < m; ++i) {
    const float* a = A + static_cast<size_t>(i) * k;
    float* c = C + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const float av = a[p];
      if (av == 0.0f) continue;
      const float* b = B + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const float* A, const float* B, float* C) {
  for (int i = 0; i < m; ++i) {
    const float* a = A + static_cast<size_t>(i) * k;
    float* c = C + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* b = B + static_cast<size_t>(j) * k;
      float acc = 0.0f;
      for (int p = 0; p < k; ++p) acc += a[p] * b[p];
      c[j] += acc;
    }
  }
}

void gemm_tn(int m, int n, int k, const float* A, const float* B, float* C) {
  for (int i = 0; i < m; ++i) {
    const float* a = A + static_cast<size_t>(i) * k;
    const float* b = B + static_cast<size_t>(i) * n;
    for (int r = 0; r < k; ++r) {
      const float av = a[r];
      if (av == 0.0f) continue;
      float* c = C + static_cast<size_t>(r) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace atlab
