#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "atlab/errors.hpp"

namespace atlab {

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

// Dense row-major float32 tensor with an optional gradient slot.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, float v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(float v) { return Tensor({1}, std::vector<float>{v}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(values_.size()); }

  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }
  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }

  float& operator[](int64_t i) { return values_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return values_[static_cast<size_t>(i)]; }

  bool is_scalar() const { return values_.size() == 1; }
  float item() const;

  // Gradient slot. Empty until first use; shape always matches values.
  bool requires_grad = false;
  std::vector<float> grad;
  void ensure_grad();
  void zero_grad();

  // NaN policy: any non-finite value is an error state surfaced by operations.
  void check_finite(const char* what) const;

 private:
  Shape shape_;
  std::vector<float> values_;
};

bool allclose(const Tensor& a, const Tensor& b, float atol = 1e-6f, float rtol = 1e-5f);

}  // namespace atlab
