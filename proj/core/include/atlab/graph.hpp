#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "atlab/tensor.hpp"

namespace atlab {

enum class Padding { same, valid };

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  const Tensor& val() const;
};

// Reverse-mode tape. Ops append nodes in topological order; backward replays
// the record once in reverse and accumulates into the grad slot of every
// registered leaf tensor with requires_grad set.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // External leaf; deduplicated so reusing a parameter merges its gradient.
  Var leaf(Tensor& t);
  // Tape-owned constant; never receives gradient.
  Var constant(Tensor v);

  const Tensor& value(int id) const;
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs; }
  std::vector<float>& grad_buffer(int id);
  int num_nodes() const { return static_cast<int>(nodes_.size()); }

  // Scalar loss only. Leaves untouched by the graph still get a zero grad
  // allocated so callers can treat every registered parameter uniformly.
  void backward(int loss_id);

  // --- used by op implementations ---
  using BackFn = std::function<void(Tape&, int self)>;
  int add_node(Tensor value, std::vector<int> parents, BackFn back);

 private:
  struct Node {
    Tensor owned;
    Tensor* external = nullptr;
    std::vector<float> grad;
    std::vector<int> parents;
    BackFn back;
    bool needs = false;
  };
  std::vector<Node> nodes_;
  std::unordered_map<Tensor*, int> leaf_ids_;
};

inline const Tensor& Var::val() const { return tape->value(id); }

void backward(Tape& tape, Var loss);

// ---- primitive ops -------------------------------------------------------

Var matmul(Var a, Var b);
Var conv2d(Var x, Var kernel, int stride, Padding padding);
Var bias_add(Var x, Var bias);
Var relu(Var x);
Var leaky_relu(Var x, float slope);
Var sigmoid(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, float c);
Var add_const(Var x, const Tensor& c);
Var clip01(Var x);
Var flatten(Var x);
Var global_avg_pool(Var x);
Var batch_norm_simplified(Var x, Var gamma, Var beta, float eps = 1e-5f);
Var softmax_cross_entropy(Var logits, Var targets);
Var weighted_sum_scalars(const std::vector<Var>& terms, const std::vector<float>& weights);
Var sum_abs(Var x);
Var sum_squares(Var x);
Var sqrt_scalar(Var x);
// out[n,h,w,c] = (1 - m[h,w]) * x[n,h,w,c] + m[h,w] * p[h,w,c]
Var masked_blend(Var x, Var mask, Var pattern);
// out[h,w,c] = m[h,w] * p[h,w,c]
Var mask_times_pattern(Var mask, Var pattern);

// ---- tape-free helpers ----------------------------------------------------

Tensor softmax_rows(const Tensor& logits);
std::vector<int> argmax_rows(const Tensor& scores);
Tensor one_hot(const std::vector<int>& labels, int num_classes);

// Output spatial size for a conv axis.
int conv_out_dim(int in, int k, int stride, Padding padding);

}  // namespace atlab
