#pragma once

#include <vector>

#include "atlab/tensor.hpp"

namespace atlab {

// Per-parameter auxiliary state plus a shared step counter.
struct SgdState {
  float lr = 0.1f;
  float momentum = 0.0f;
  int64_t step_count = 0;
  std::vector<std::vector<float>> velocity;  // one buffer per parameter
};

struct AdamState {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  int64_t step_count = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

// Functional single-parameter updates; grads read from each tensor's grad slot.
void sgd_step(std::vector<Tensor*>& params, SgdState& state);
void adam_step(std::vector<Tensor*>& params, AdamState& state);

void zero_grads(std::vector<Tensor*>& params);

// Convenience owner used by the training loops.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor*> params, float lr);
  void zero_grad() { zero_grads(params_); }
  void step() { adam_step(params_, state_); }
  AdamState& state() { return state_; }

 private:
  std::vector<Tensor*> params_;
  AdamState state_;
};

}  // namespace atlab
