#include "atlab/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#include "atlab/kernels.hpp"

namespace atlab {

Var Tape::leaf(Tensor& t) {
  auto it = leaf_ids_.find(&t);
  if (it != leaf_ids_.end()) return Var{this, it->second};
  Node n;
  n.external = &t;
  n.needs = t.requires_grad;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  leaf_ids_.emplace(&t, id);
  return Var{this, id};
}

Var Tape::constant(Tensor v) {
  Node n;
  n.owned = std::move(v);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(int id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  return n.external ? *n.external : n.owned;
}

std::vector<float>& Tape::grad_buffer(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.size() != static_cast<size_t>(value(id).size())) n.grad.assign(value(id).size(), 0.0f);
  return n.grad;
}

int Tape::add_node(Tensor value, std::vector<int> parents, BackFn back) {
  Node n;
  n.owned = std::move(value);
  n.parents = std::move(parents);
  n.back = std::move(back);
  for (int p : n.parents)
    if (nodes_[static_cast<size_t>(p)].needs) n.needs = true;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::backward(int loss_id) {
  if (loss_id < 0 || loss_id >= num_nodes()) throw ContractViolation("backward: loss node not on this tape");
  if (!value(loss_id).is_scalar()) throw ContractViolation("backward: loss must be scalar");
  grad_buffer(loss_id)[0] = 1.0f;
  for (int id = loss_id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs || !n.back) continue;
    if (n.grad.empty()) continue;  // never reached from the loss
    n.back(*this, id);
  }
  for (auto& n : nodes_) {
    if (!n.external || !n.external->requires_grad) continue;
    n.external->ensure_grad();
    if (n.grad.empty()) continue;
    float* dst = n.external->grad.data();
    for (size_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i];
  }
}

void backward(Tape& tape, Var loss) { tape.backward(loss.id); }

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ContractViolation("operands live on different tapes");
  return *a.tape;
}

void accumulate(Tape& t, int parent, const std::vector<float>& g) {
  if (!t.needs_grad(parent)) return;
  std::vector<float>& dst = t.grad_buffer(parent);
  for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
  Tensor out({m, n});
  gemm_nn(m, n, k, A.data(), B.data(), out.data());
  int aid = a.id, bid = b.id;
  int id = t.add_node(std::move(out), {aid, bid}, [aid, bid, m, k, n](Tape& tp, int self) {
    const std::vector<float>& go = tp.grad_buffer(self);
    if (tp.needs_grad(aid)) gemm_nt(m, k, n, go.data(), tp.value(bid).data(), tp.grad_buffer(aid).data());
    if (tp.needs_grad(bid)) gemm_tn(m, n, k, tp.value(aid).data(), go.data(), tp.grad_buffer(bid).data());
  });
  return Var{&t, id};
}

int conv_out_dim(int in, int k, int stride, Padding padding) {
  if (padding == Padding::same) return (in + stride - 1) / stride;
  if (in < k) throw ShapeError("conv2d: kernel larger than input in valid mode");
  return (in - k) / stride + 1;
}

Var conv2d(Var x, Var kernel, int stride, Padding padding) {
  Tape& t = same_tape(x, kernel);
  const Tensor& X = x.val();
  const Tensor& K = kernel.val();
  if (X.rank() != 4 || K.rank() != 4) throw ShapeError("conv2d: expects NHWC input and hwIO kernel");
  if (X.dim(3) != K.dim(2))
    throw ShapeError("conv2d: channel mismatch " + shape_str(X.shape()) + " vs " + shape_str(K.shape()));
  if (stride < 1) throw ContractViolation("conv2d: stride must be positive");
  const int N = X.dim(0), H = X.dim(1), W = X.dim(2), Ci = X.dim(3);
  const int kh = K.dim(0), kw = K.dim(1), Co = K.dim(3);
  const int OH = conv_out_dim(H, kh, stride, padding);
  const int OW = conv_out_dim(W, kw, stride, padding);
  int ph = 0, pw = 0;
  if (padding == Padding::same) {
    ph = std::max((OH - 1) * stride + kh - H, 0) / 2;
    pw = std::max((OW - 1) * stride + kw - W, 0) / 2;
    if (kh > H + std::max((OH - 1) * stride + kh - H, 0) || kw > W + std::max((OW - 1) * stride + kw - W, 0))
      throw ShapeError("conv2d: kernel larger than padded input");
  }
  const int M = OH * OW;
  const int Kc = kh * kw * Ci;

  // im2col for the whole batch; retained for the backward pass.
  auto cols = std::make_shared<std::vector<float>>(static_cast<size_t>(N) * M * Kc, 0.0f);
  const float* xin = X.data();
  for (int n = 0; n < N; ++n) {
    float* coln = cols->data() + static_cast<size_t>(n) * M * Kc;
    for (int oh = 0; oh < OH; ++oh) {
      for (int ow = 0; ow < OW; ++ow) {
        float* row = coln + static_cast<size_t>(oh * OW + ow) * Kc;
        for (int r = 0; r < kh; ++r) {
          const int ih = oh * stride - ph + r;
          if (ih < 0 || ih >= H) continue;
          for (int s = 0; s < kw; ++s) {
            const int iw = ow * stride - pw + s;
            if (iw < 0 || iw >= W) continue;
            const float* src = xin + (((static_cast<size_t>(n) * H + ih) * W + iw) * Ci);
            std::memcpy(row + (r * kw + s) * Ci, src, sizeof(float) * static_cast<size_t>(Ci));
          }
        }
      }
    }
  }

  Tensor out({N, OH, OW, Co});
  for (int n = 0; n < N; ++n)
    gemm_nn(M, Co, Kc, cols->data() + static_cast<size_t>(n) * M * Kc, K.data(),
            out.data() + static_cast<size_t>(n) * M * Co);

  int xid = x.id, kid = kernel.id;
  int id = t.add_node(
      std::move(out), {xid, kid},
      [xid, kid, cols, N, H, W, Ci, kh, kw, Co, OH, OW, stride, ph, pw, M, Kc](Tape& tp, int self) {
        const std::vector<float>& go = tp.grad_buffer(self);
        if (tp.needs_grad(kid)) {
          float* dk = tp.grad_buffer(kid).data();
          for (int n = 0; n < N; ++n)
            gemm_tn(M, Co, Kc, cols->data() + static_cast<size_t>(n) * M * Kc,
                    go.data() + static_cast<size_t>(n) * M * Co, dk);
        }
        if (tp.needs_grad(xid)) {
          std::vector<float> dcol(static_cast<size_t>(M) * Kc);
          float* dx = tp.grad_buffer(xid).data();
          const float* kmat = tp.value(kid).data();
          for (int n = 0; n < N; ++n) {
            std::fill(dcol.begin(), dcol.end(), 0.0f);
            gemm_nt(M, Kc, Co, go.data() + static_cast<size_t>(n) * M * Co, kmat, dcol.data());
            for (int oh = 0; oh < OH; ++oh) {
              for (int ow = 0; ow < OW; ++ow) {
                const float* row = dcol.data() + static_cast<size_t>(oh * OW + ow) * Kc;
                for (int r = 0; r < kh; ++r) {
                  const int ih = oh * stride - ph + r;
                  if (ih < 0 || ih >= H) continue;
                  for (int s = 0; s < kw; ++s) {
                    const int iw = ow * stride - pw + s;
                    if (iw < 0 || iw >= W) continue;
                    float* dst = dx + (((static_cast<size_t>(n) * H + ih) * W + iw) * Ci);
                    const float* g = row + (r * kw + s) * Ci;
                    for (int c = 0; c < Ci; ++c) dst[c] += g[c];
                  }
                }
              }
            }
          }
        }
      });
  return Var{&t, id};
}

Var bias_add(Var x, Var bias) {
  Tape& t = same_tape(x, bias);
  const Tensor& X = x.val();
  const Tensor& B = bias.val();
  const int f = X.dim(X.rank() - 1);
  if (B.rank() != 1 || B.dim(0) != f)
    throw ShapeError("bias_add: bias " + shape_str(B.shape()) + " does not match last dim of " + shape_str(X.shape()));
  const int64_t rows = X.size() / f;
  Tensor out(X.shape());
  for (int64_t r = 0; r < rows; ++r)
    for (int c = 0; c < f; ++c) out[r * f + c] = X[r * f + c] + B[c];
  int xid = x.id, bid = bias.id;
  int id = t.add_node(std::move(out), {xid, bid}, [xid, bid, rows, f](Tape& tp, int self) {
    const std::vector<float>& go = tp.grad_buffer(self);
    if (tp.needs_grad(xid)) accumulate(tp, xid, go);
    if (tp.needs_grad(bid)) {
      std::vector<float>& db = tp.grad_buffer(bid);
      for (int64_t r = 0; r < rows; ++r)
        for (int c = 0; c < f; ++c) db[static_cast<size_t>(c)] += go[static_cast<size_t>(r * f + c)];
    }
  });
  return Var{&t, id};
}

namespace {

Var elementwise_unary(Var x, const char* name, float (*fwd)(float, float), float (*dfdx)(float, float), float p) {
  (void)name;
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  Tensor out(X.shape());
  for (int64_t i = 0; i < X.size(); ++i) out[i] = fwd(X[i], p);
  int xid = x.id;
  int id = t.add_node(std::move(out), {xid}, [xid, dfdx, p](Tape& tp, int self) {
    if (!tp.needs_grad(xid)) return;
    const std::vector<float>& go = tp.grad_buffer(self);
    const Tensor& in = tp.value(xid);
    std::vector<float>& gx = tp.grad_buffer(xid);
    for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * dfdx(in[static_cast<int64_t>(i)], p);
  });
  return Var{&t, id};
}

}  // namespace

Var relu(Var x) {
  return elementwise_unary(
      x, "relu", [](float v, float) { return v > 0.0f ? v : 0.0f; },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; }, 0.0f);
}

Var leaky_relu(Var x, float slope) {
  return elementwise_unary(
      x, "leaky_relu", [](float v, float s) { return v > 0.0f ? v : s * v; },
      [](float v, float s) { return v > 0.0f ? 1.0f : s; }, slope);
}

Var sigmoid(Var x) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  Tensor out(X.shape());
  for (int64_t i = 0; i < X.size(); ++i) out[i] = 1.0f / (1.0f + std::exp(-X[i]));
  int xid = x.id;
  int id = t.add_node(std::move(out), {xid}, [xid](Tape& tp, int self) {
    if (!tp.needs_grad(xid)) return;
    const std::vector<float>& go = tp.grad_buffer(self);
    const Tensor& s = tp.value(self);
    std::vector<float>& gx = tp.grad_buffer(xid);
    for (size_t i = 0; i < go.size(); ++i) {
      float sv = s[static_cast<int64_t>(i)];
      gx[i] += go[i] * sv * (1.0f - sv);
    }
  });
  return Var{&t, id};
}

namespace {

Var elementwise_binary(Var a, Var b, int mode) {  // 0 add, 1 sub, 2 mul
  Tape& t = same_tape(a, b);
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (!same_shape(A.shape(), B.shape()))
    throw ShapeError("elementwise op: shape mismatch " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
  Tensor out(A.shape());
  for (int64_t i = 0; i < A.size(); ++i)
    out[i] = mode == 0 ? A[i] + B[i] : (mode == 1 ? A[i] - B[i] : A[i] * B[i]);
  int aid = a.id, bid = b.id;
  int id = t.add_node(std::move(out), {aid, bid}, [aid, bid, mode](Tape& tp, int self) {
    const std::vector<float>& go = tp.grad_buffer(self);
    if (tp.needs_grad(aid)) {
      std::vector<float>& ga = tp.grad_buffer(aid);
      const Tensor& B2 = tp.value(bid);
      for (size_t i = 0; i < go.size(); ++i) ga[i] += mode == 2 ? go[i] * B2[static_cast<int64_t>(i)] : go[i];
    }
    if (tp.needs_grad(bid)) {
      std::vector<float>& gb = tp.grad_buffer(bid);
      const Tensor& A2 = tp.value(aid);
      for (size_t i = 0; i < go.size(); ++i) {
        if (mode == 0)
          gb[i] += go[i];
        else if (mode == 1)
          gb[i] -= go[i];
        else
          gb[i] += go[i] * A2[static_cast<int64_t>(i)];
      }
    }
  });
  return Var{&t, id};
}

}  // namespace

Var add(Var a, Var b) { return elementwise_binary(a, b, 0); }
Var sub(Var a, Var b) { return elementwise_binary(a, b, 1); }
Var mul(Var a, Var b) { return elementwise_binary(a, b, 2); }

Var scale(Var x, float c) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  Tensor out(X.shape());
  for (int64_t i = 0; i < X.size(); ++i) out[i] = c * X[i];
  int xid = x.id;
  int id = t.add_node(std::move(out), {xid}, [xid, c](Tape& tp, int self) {
    if (!tp.needs_grad(xid)) return;
    const std::vector<float>& go = tp.grad_buffer(self);
    std::vector<float>& gx = tp.grad_buffer(xid);
    for (size_t i = 0; i < go.size(); ++i) gx[i] += c * go[i];
  });
  return Var{&t, id};
}

Var add_const(Var x, const Tensor& c) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  if (!same_shape(X.shape(), c.shape())) throw ShapeError("add_const: shape mismatch");
  Tensor out(X.shape());
  for (int64_t i = 0; i < X.size(); ++i) out[i] = X[i] + c[i];
  int xid = x.id;
  int id = t.add_node(std::move(out), {xid}, [xid](Tape& tp, int self) {
    if (tp.needs_grad(xid)) accumulate(tp, xid, tp.grad_buffer(self));
  });
  return Var{&t, id};
}

Var clip01(Var x) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  Tensor out(X.shape());
  for (int64_t i = 0; i < X.size(); ++i) out[i] = std::min(1.0f, std::max(0.0f, X[i]));
  int xid = x.id;
  int id = t.add_node(std::move(out), {xid}, [xid](Tape& tp, int self) {
    if (!tp.needs_grad(xid)) return;
    const std::vector<float>& go = tp.grad_buffer(self);
    const Tensor& in = tp.value(xid);
    std::vector<float>& gx = tp.grad_buffer(xid);
    for (size_t i = 0; i < go.size(); ++i) {
      float v = in[static_cast<int64_t>(i)];
      if (v > 0.0f && v < 1.0f) gx[i] += go[i];
    }
  });
  return Var{&t, id};
}

Var flatten(Var x) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  if (X.rank() < 2) throw ShapeError("flatten: expects rank >= 2");
  int n = X.dim(0);
  int rest = static_cast<int>(X.size() / n);
  Tensor out({n, rest}, X.values());
  int xid = x.id;
  int id = t.add_node(std::move(out), {xid}, [xid](Tape& tp, int self) {
    if (tp.needs_grad(xid)) accumulate(tp, xid, tp.grad_buffer(self));
  });
  return Var{&t, id};
}

Var global_avg_pool(Var x) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  if (X.rank() != 4) throw ShapeError("global_avg_pool: expects NHWC");
  const int N = X.dim(0), H = X.dim(1), W = X.dim(2), C = X.dim(3);
  const int hw = H * W;
  Tensor out({N, C});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      const float* base = X.data() + static_cast<size_t>(n) * hw * C + c;
      for (int i = 0; i < hw; ++i) acc += base[static_cast<size_t>(i) * C];
      out[static_cast<int64_t>(n) * C + c] = static_cast<float>(acc / hw);
    }
  }
  int xid = x.id;
  int id = t.add_node(std::move(out), {xid}, [xid, N, C, hw](Tape& tp, int self) {
    if (!tp.needs_grad(xid)) return;
    const std::vector<float>& go = tp.grad_buffer(self);
    std::vector<float>& gx = tp.grad_buffer(xid);
    const float inv = 1.0f / hw;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        float g = go[static_cast<size_t>(n) * C + c] * inv;
        float* base = gx.data() + static_cast<size_t>(n) * hw * C + c;
        for (int i = 0; i < hw; ++i) base[static_cast<size_t>(i) * C] += g;
      }
  });
  return Var{&t, id};
}

Var batch_norm_simplified(Var x, Var gamma, Var beta, float eps) {
  Tape& t = same_tape(x, gamma);
  same_tape(gamma, beta);
  const Tensor& X = x.val();
  const Tensor& G = gamma.val();
  const Tensor& B = beta.val();
  if (X.rank() != 4) throw ShapeError("batch_norm_simplified: expects NHWC");
  const int C = X.dim(3);
  if (G.rank() != 1 || G.dim(0) != C || B.rank() != 1 || B.dim(0) != C)
    throw ShapeError("batch_norm_simplified: scale/shift must be [C]");
  const int64_t rows = X.size() / C;

  auto xhat = std::make_shared<std::vector<float>>(static_cast<size_t>(X.size()));
  auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(C));
  Tensor out(X.shape());
  for (int c = 0; c < C; ++c) {
    double mean = 0.0, var = 0.0;
    for (int64_t r = 0; r < rows; ++r) mean += X[r * C + c];
    mean /= static_cast<double>(rows);
    for (int64_t r = 0; r < rows; ++r) {
      double d = X[r * C + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(rows);
    float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    (*inv_std)[static_cast<size_t>(c)] = is;
    for (int64_t r = 0; r < rows; ++r) {
      float xh = (X[r * C + c] - static_cast<float>(mean)) * is;
      (*xhat)[static_cast<size_t>(r * C + c)] = xh;
      out[r * C + c] = G[c] * xh + B[c];
    }
  }
  int xid = x.id, gid = gamma.id, bid = beta.id;
  int id = t.add_node(std::move(out), {xid, gid, bid}, [xid, gid, bid, xhat, inv_std, rows, C](Tape& tp, int self) {
    const std::vector<float>& go = tp.grad_buffer(self);
    const Tensor& G2 = tp.value(gid);
    for (int c = 0; c < C; ++c) {
      double sum_go = 0.0, sum_go_xh = 0.0;
      for (int64_t r = 0; r < rows; ++r) {
        float g = go[static_cast<size_t>(r * C + c)];
        sum_go += g;
        sum_go_xh += g * (*xhat)[static_cast<size_t>(r * C + c)];
      }
      if (tp.needs_grad(gid)) tp.grad_buffer(gid)[static_cast<size_t>(c)] += static_cast<float>(sum_go_xh);
      if (tp.needs_grad(bid)) tp.grad_buffer(bid)[static_cast<size_t>(c)] += static_cast<float>(sum_go);
      if (tp.needs_grad(xid)) {
        std::vector<float>& gx = tp.grad_buffer(xid);
        const float k = G2[c] * (*inv_std)[static_cast<size_t>(c)] / static_cast<float>(rows);
        for (int64_t r = 0; r < rows; ++r) {
          float g = go[static_cast<size_t>(r * C + c)];
          float xh = (*xhat)[static_cast<size_t>(r * C + c)];
          gx[static_cast<size_t>(r * C + c)] +=
              k * (static_cast<float>(rows) * g - static_cast<float>(sum_go) - xh * static_cast<float>(sum_go_xh));
        }
      }
    }
  });
  return Var{&t, id};
}

Var softmax_cross_entropy(Var logits, Var targets) {
  Tape& t = same_tape(logits, targets);
  const Tensor& Z = logits.val();
  const Tensor& Y = targets.val();
  if (Z.rank() != 2 || !same_shape(Z.shape(), Y.shape()))
    throw ShapeError("softmax_cross_entropy: logits/targets must both be [N,K]");
  const int N = Z.dim(0), K = Z.dim(1);
  if (K < 2) throw ContractViolation("softmax_cross_entropy: needs K >= 2 classes");
  for (int n = 0; n < N; ++n) {
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += Y[static_cast<int64_t>(n) * K + k];
    if (std::fabs(s - 1.0) > 1e-6)
      throw ContractViolation("softmax_cross_entropy: target row " + std::to_string(n) + " sums to " +
                              std::to_string(s));
  }

  auto probs = std::make_shared<std::vector<float>>(static_cast<size_t>(Z.size()));
  double loss = 0.0;
  for (int n = 0; n < N; ++n) {
    const float* z = Z.data() + static_cast<size_t>(n) * K;
    float mx = z[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, z[k]);
    double denom = 0.0;
    for (int k = 0; k < K; ++k) denom += std::exp(static_cast<double>(z[k]) - mx);
    const double log_denom = std::log(denom);
    double row = 0.0;
    for (int k = 0; k < K; ++k) {
      double logp = static_cast<double>(z[k]) - mx - log_denom;
      (*probs)[static_cast<size_t>(n) * K + k] = static_cast<float>(std::exp(logp));
      row -= static_cast<double>(Y[static_cast<int64_t>(n) * K + k]) * logp;
    }
    loss += row;
  }
  Tensor out({1}, std::vector<float>{static_cast<float>(loss / N)});
  int zid = logits.id, yid = targets.id;
  int id = t.add_node(std::move(out), {zid, yid}, [zid, yid, probs, N, K](Tape& tp, int self) {
    if (!tp.needs_grad(zid)) return;
    const float g = tp.grad_buffer(self)[0] / static_cast<float>(N);
    const Tensor& Y2 = tp.value(yid);
    std::vector<float>& gz = tp.grad_buffer(zid);
    for (size_t i = 0; i < gz.size(); ++i)
      gz[i] += g * ((*probs)[i] - Y2[static_cast<int64_t>(i)]);
  });
  return Var{&t, id};
}

Var weighted_sum_scalars(const std::vector<Var>& terms, const std::vector<float>& weights) {
  if (terms.empty() || terms.size() != weights.size())
    throw ContractViolation("weighted_sum_scalars: needs matching non-empty term/weight lists");
  Tape& t = *terms[0].tape;
  double acc = 0.0;
  std::vector<int> parents;
  for (size_t i = 0; i < terms.size(); ++i) {
    if (!terms[i].val().is_scalar()) throw ContractViolation("weighted_sum_scalars: non-scalar term");
    acc += static_cast<double>(weights[i]) * terms[i].val().item();
    parents.push_back(terms[i].id);
  }
  std::vector<float> w = weights;
  std::vector<int> ps = parents;
  Tensor out({1}, std::vector<float>{static_cast<float>(acc)});
  int id = t.add_node(std::move(out), parents, [ps, w](Tape& tp, int self) {
    const float g = tp.grad_buffer(self)[0];
    for (size_t i = 0; i < ps.size(); ++i)
      if (tp.needs_grad(ps[i])) tp.grad_buffer(ps[i])[0] += g * w[i];
  });
  return Var{&t, id};
}

Var sum_abs(Var x) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  double acc = 0.0;
  for (int64_t i = 0; i < X.size(); ++i) acc += std::fabs(X[i]);
  int xid = x.id;
  Tensor out({1}, std::vector<float>{static_cast<float>(acc)});
  int id = t.add_node(std::move(out), {xid}, [xid](Tape& tp, int self) {
    if (!tp.needs_grad(xid)) return;
    const float g = tp.grad_buffer(self)[0];
    const Tensor& in = tp.value(xid);
    std::vector<float>& gx = tp.grad_buffer(xid);
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += g * sign_of(in[static_cast<int64_t>(i)]);
  });
  return Var{&t, id};
}

Var sum_squares(Var x) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  double acc = 0.0;
  for (int64_t i = 0; i < X.size(); ++i) acc += static_cast<double>(X[i]) * X[i];
  int xid = x.id;
  Tensor out({1}, std::vector<float>{static_cast<float>(acc)});
  int id = t.add_node(std::move(out), {xid}, [xid](Tape& tp, int self) {
    if (!tp.needs_grad(xid)) return;
    const float g = tp.grad_buffer(self)[0];
    const Tensor& in = tp.value(xid);
    std::vector<float>& gx = tp.grad_buffer(xid);
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0f * g * in[static_cast<int64_t>(i)];
  });
  return Var{&t, id};
}

Var sqrt_scalar(Var x) {
  Tape& t = *x.tape;
  if (!x.val().is_scalar()) throw ContractViolation("sqrt_scalar: expects scalar");
  float v = std::sqrt(std::max(x.val().item(), 1e-12f));
  int xid = x.id;
  Tensor out({1}, std::vector<float>{v});
  int id = t.add_node(std::move(out), {xid}, [xid, v](Tape& tp, int self) {
    if (!tp.needs_grad(xid)) return;
    tp.grad_buffer(xid)[0] += tp.grad_buffer(self)[0] * 0.5f / v;
  });
  return Var{&t, id};
}

Var masked_blend(Var x, Var mask, Var pattern) {
  Tape& t = same_tape(x, mask);
  same_tape(mask, pattern);
  const Tensor& X = x.val();
  const Tensor& M = mask.val();
  const Tensor& P = pattern.val();
  if (X.rank() != 4 || M.rank() != 2 || P.rank() != 3) throw ShapeError("masked_blend: expects NHWC, HW, HWC");
  const int N = X.dim(0), H = X.dim(1), W = X.dim(2), C = X.dim(3);
  if (M.dim(0) != H || M.dim(1) != W || P.dim(0) != H || P.dim(1) != W || P.dim(2) != C)
    throw ShapeError("masked_blend: mask/pattern shape mismatch");
  Tensor out(X.shape());
  for (int n = 0; n < N; ++n)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        const float m = M[static_cast<int64_t>(h) * W + w];
        for (int c = 0; c < C; ++c) {
          int64_t xi = ((static_cast<int64_t>(n) * H + h) * W + w) * C + c;
          out[xi] = (1.0f - m) * X[xi] + m * P[(static_cast<int64_t>(h) * W + w) * C + c];
        }
      }
  int xid = x.id, mid = mask.id, pid = pattern.id;
  int id = t.add_node(std::move(out), {xid, mid, pid}, [xid, mid, pid, N, H, W, C](Tape& tp, int self) {
    const std::vector<float>& go = tp.grad_buffer(self);
    const Tensor& X2 = tp.value(xid);
    const Tensor& M2 = tp.value(mid);
    const Tensor& P2 = tp.value(pid);
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        const int64_t hw = static_cast<int64_t>(h) * W + w;
        const float m = M2[hw];
        double dm = 0.0;
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            int64_t xi = ((static_cast<int64_t>(n) * H + h) * W + w) * C + c;
            float g = go[static_cast<size_t>(xi)];
            if (tp.needs_grad(xid)) tp.grad_buffer(xid)[static_cast<size_t>(xi)] += g * (1.0f - m);
            if (tp.needs_grad(pid)) tp.grad_buffer(pid)[static_cast<size_t>(hw * C + c)] += g * m;
            dm += static_cast<double>(g) * (P2[hw * C + c] - X2[xi]);
          }
        if (tp.needs_grad(mid)) tp.grad_buffer(mid)[static_cast<size_t>(hw)] += static_cast<float>(dm);
      }
  });
  return Var{&t, id};
}

Var mask_times_pattern(Var mask, Var pattern) {
  Tape& t = same_tape(mask, pattern);
  const Tensor& M = mask.val();
  const Tensor& P = pattern.val();
  if (M.rank() != 2 || P.rank() != 3 || P.dim(0) != M.dim(0) || P.dim(1) != M.dim(1))
    throw ShapeError("mask_times_pattern: expects HW and HWC");
  const int H = M.dim(0), W = M.dim(1), C = P.dim(2);
  Tensor out(P.shape());
  for (int64_t hw = 0; hw < static_cast<int64_t>(H) * W; ++hw)
    for (int c = 0; c < C; ++c) out[hw * C + c] = M[hw] * P[hw * C + c];
  int mid = mask.id, pid = pattern.id;
  int id = t.add_node(std::move(out), {mid, pid}, [mid, pid, H, W, C](Tape& tp, int self) {
    const std::vector<float>& go = tp.grad_buffer(self);
    const Tensor& M2 = tp.value(mid);
    const Tensor& P2 = tp.value(pid);
    for (int64_t hw = 0; hw < static_cast<int64_t>(H) * W; ++hw) {
      double dm = 0.0;
      for (int c = 0; c < C; ++c) {
        float g = go[static_cast<size_t>(hw * C + c)];
        if (tp.needs_grad(pid)) tp.grad_buffer(pid)[static_cast<size_t>(hw * C + c)] += g * M2[hw];
        dm += static_cast<double>(g) * P2[hw * C + c];
      }
      if (tp.needs_grad(mid)) tp.grad_buffer(mid)[static_cast<size_t>(hw)] += static_cast<float>(dm);
    }
  });
  return Var{&t, id};
}

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax_rows: expects [N,K]");
  const int N = logits.dim(0), K = logits.dim(1);
  Tensor out(logits.shape());
  for (int n = 0; n < N; ++n) {
    const float* z = logits.data() + static_cast<size_t>(n) * K;
    float mx = z[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, z[k]);
    double denom = 0.0;
    for (int k = 0; k < K; ++k) denom += std::exp(static_cast<double>(z[k]) - mx);
    for (int k = 0; k < K; ++k)
      out[static_cast<int64_t>(n) * K + k] = static_cast<float>(std::exp(static_cast<double>(z[k]) - mx) / denom);
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  if (scores.rank() != 2) throw ShapeError("argmax_rows: expects [N,K]");
  const int N = scores.dim(0), K = scores.dim(1);
  std::vector<int> out(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n) {
    const float* row = scores.data() + static_cast<size_t>(n) * K;
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (row[k] > row[best]) best = k;
    out[static_cast<size_t>(n)] = best;
  }
  return out;
}

Tensor one_hot(const std::vector<int>& labels, int num_classes) {
  Tensor out({static_cast<int>(labels.size()), num_classes});
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw ContractViolation("one_hot: label " + std::to_string(labels[i]) + " outside [0," +
                              std::to_string(num_classes) + ")");
    out[static_cast<int64_t>(i) * num_classes + labels[i]] = 1.0f;
  }
  return out;
}

}  // namespace atlab
