#pragma once

// Test-only reference implementations. These stay independent of the library
// code paths they check: straight loops, no shared kernels.

#include <cmath>
#include <functional>
#include <vector>

#include "atlab/graph.hpp"
#include "atlab/tensor.hpp"

namespace oracle {

// Quadruple-loop cross-correlation, NHWC x hwIO.
inline atlab::Tensor conv2d_brute(const atlab::Tensor& x, const atlab::Tensor& k, int stride, atlab::Padding pad) {
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
  const int kh = k.dim(0), kw = k.dim(1), Co = k.dim(3);
  int oh, ow, ph = 0, pw = 0;
  if (pad == atlab::Padding::same) {
    oh = (H + stride - 1) / stride;
    ow = (W + stride - 1) / stride;
    ph = std::max((oh - 1) * stride + kh - H, 0) / 2;
    pw = std::max((ow - 1) * stride + kw - W, 0) / 2;
  } else {
    oh = (H - kh) / stride + 1;
    ow = (W - kw) / stride + 1;
  }
  atlab::Tensor out({N, oh, ow, Co});
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j)
        for (int co = 0; co < Co; ++co) {
          double acc = 0.0;
          for (int r = 0; r < kh; ++r)
            for (int s = 0; s < kw; ++s)
              for (int ci = 0; ci < Ci; ++ci) {
                int ih = i * stride - ph + r;
                int iw = j * stride - pw + s;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += static_cast<double>(x[((static_cast<int64_t>(n) * H + ih) * W + iw) * Ci + ci]) *
                       k[((static_cast<int64_t>(r) * kw + s) * Ci + ci) * Co + co];
              }
          out[((static_cast<int64_t>(n) * oh + i) * ow + j) * Co + co] = static_cast<float>(acc);
        }
  return out;
}

// Central finite differences against the tape gradient.
// Returns ||g_tape - g_fd||_inf / max(||g_tape||_inf, ||g_fd||_inf) over the
// whole parameter set; the shared denominator keeps the metric meaningful at
// the float32 forward-noise floor while an actual backward bug still shows up
// as an O(1) relative discrepancy.
inline double grad_check(const std::function<float()>& loss_with_tape_backward_cleared,
                         std::vector<atlab::Tensor*> params, const std::function<float()>& loss_only,
                         double h = 1e-3) {
  for (auto* p : params) {
    p->requires_grad = true;
    p->zero_grad();
  }
  (void)loss_with_tape_backward_cleared();
  double max_a = 0.0, max_n = 0.0, max_diff = 0.0;
  for (auto* p : params) {
    std::vector<float> analytic = p->grad;
    for (size_t i = 0; i < p->values().size(); ++i) {
      float keep = (*p)[static_cast<int64_t>(i)];
      (*p)[static_cast<int64_t>(i)] = keep + static_cast<float>(h);
      double lp = loss_only();
      (*p)[static_cast<int64_t>(i)] = keep - static_cast<float>(h);
      double lm = loss_only();
      (*p)[static_cast<int64_t>(i)] = keep;
      double numeric = (lp - lm) / (2.0 * h);
      max_a = std::max(max_a, std::fabs(static_cast<double>(analytic[i])));
      max_n = std::max(max_n, std::fabs(numeric));
      max_diff = std::max(max_diff, std::fabs(static_cast<double>(analytic[i]) - numeric));
    }
  }
  double denom = std::max(max_a, max_n);
  if (denom < 1e-8) return 0.0;  // flat function; nothing to compare
  return max_diff / denom;
}

}  // namespace oracle
