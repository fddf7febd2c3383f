#include "atlab/optim.hpp"

#include <cmath>

namespace atlab {

namespace {

void check_params(const std::vector<Tensor*>& params, float lr) {
  if (lr <= 0.0f) throw ContractViolation("optimizer: learning rate must be positive");
  for (Tensor* p : params) {
    if (!p->grad.empty() && p->grad.size() != p->values().size())
      throw ShapeError("optimizer: grad/parameter shape mismatch");
  }
}

}  // namespace

void sgd_step(std::vector<Tensor*>& params, SgdState& state) {
  check_params(params, state.lr);
  if (state.velocity.size() != params.size() && state.momentum != 0.0f) {
    state.velocity.assign(params.size(), {});
    for (size_t i = 0; i < params.size(); ++i) state.velocity[i].assign(params[i]->values().size(), 0.0f);
  }
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (p.grad.empty()) continue;
    if (state.momentum != 0.0f) {
      std::vector<float>& vel = state.velocity[i];
      for (size_t j = 0; j < vel.size(); ++j) {
        vel[j] = state.momentum * vel[j] + p.grad[j];
        p[static_cast<int64_t>(j)] -= state.lr * vel[j];
      }
    } else {
      for (size_t j = 0; j < p.grad.size(); ++j) p[static_cast<int64_t>(j)] -= state.lr * p.grad[j];
    }
  }
  ++state.step_count;
}

void adam_step(std::vector<Tensor*>& params, AdamState& state) {
  check_params(params, state.lr);
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->values().size(), 0.0f);
      state.v[i].assign(params[i]->values().size(), 0.0f);
    }
  }
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (p.grad.empty()) continue;
    std::vector<float>& m = state.m[i];
    std::vector<float>& v = state.v[i];
    for (size_t j = 0; j < p.grad.size(); ++j) {
      const float g = p.grad[j];
      m[j] = state.beta1 * m[j] + (1.0f - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0f - state.beta2) * g * g;
      const float mhat = static_cast<float>(m[j] / bc1);
      const float vhat = static_cast<float>(v[j] / bc2);
      p[static_cast<int64_t>(j)] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void zero_grads(std::vector<Tensor*>& params) {
  for (Tensor* p : params) p->zero_grad();
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor*> params, float lr) : params_(std::move(params)) {
  state_.lr = lr;
}

}  // namespace atlab
