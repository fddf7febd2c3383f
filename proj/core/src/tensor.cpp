#include "atlab/tensor.hpp"

#include <cmath>
#include <sstream>

namespace atlab {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), values_(static_cast<size_t>(numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (static_cast<int64_t>(values_.size()) != numel(shape_))
    throw ShapeError("value count " + std::to_string(values_.size()) + " does not match shape " + shape_str(shape_));
}

float Tensor::item() const {
  if (!is_scalar()) throw ContractViolation("item() on non-scalar tensor of shape " + shape_str(shape_));
  return values_[0];
}

void Tensor::ensure_grad() {
  if (grad.size() != values_.size()) grad.assign(values_.size(), 0.0f);
}

void Tensor::zero_grad() { grad.assign(values_.size(), 0.0f); }

void Tensor::check_finite(const char* what) const {
  for (float v : values_) {
    if (!std::isfinite(v)) throw Error(std::string("non-finite value in ") + what);
  }
}

bool allclose(const Tensor& a, const Tensor& b, float atol, float rtol) {
  if (!same_shape(a.shape(), b.shape())) return false;
  for (int64_t i = 0; i < a.size(); ++i) {
    float x = a[i], y = b[i];
    if (std::fabs(x - y) > atol + rtol * std::fabs(y)) return false;
  }
  return true;
}

}  // namespace atlab
