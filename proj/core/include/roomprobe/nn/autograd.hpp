#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "roomprobe/nn/rng.hpp"
#include "roomprobe/nn/tensor.hpp"

namespace roomprobe::nn {

// Reverse-mode autodiff at tensor-op granularity. A forward pass records a
// DAG of nodes; backward(root) runs the recorded pulls in reverse
// topological order. Ops never mutate their inputs; optimizer updates go
// through the designated leaf values only.

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void()> backward_fn;  // pulls this->grad into parents' grads

  Tensor<T>& ensure_grad() {
    if (grad.data.empty()) grad = Tensor<T>::zeros(value.shape);
    return grad;
  }
};

/// When grad mode is off, ops compute values only (no graph is recorded).
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }

 private:
  bool prev_;
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  static Var leaf(Tensor<T> v, bool requires_grad = true) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }
  static Var constant(Tensor<T> v) { return leaf(std::move(v), false); }

  bool valid() const { return n_ != nullptr; }
  const Tensor<T>& value() const { return n_->value; }
  /// Optimizer-only access to the parameter store.
  Tensor<T>& mutable_value() { return n_->value; }
  const Tensor<T>& grad() const { return n_->grad; }
  Tensor<T>& ensure_grad() { return n_->ensure_grad(); }
  bool requires_grad() const { return n_->requires_grad; }
  void zero_grad() {
    if (!n_->grad.data.empty()) std::fill(n_->grad.data.begin(), n_->grad.data.end(), T(0));
  }
  std::shared_ptr<Node<T>> node() const { return n_; }

 private:
  std::shared_ptr<Node<T>> n_;
};

using VarF = Var<float>;
using VarD = Var<double>;

/// Accumulate gradients of a scalar root into every reachable node.
template <class T>
void backward(const Var<T>& root);

// ---- elementwise ----
template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> add_const(const Var<T>& a, const Tensor<T>& c);
template <class T> Var<T> mul_const(const Var<T>& a, const Tensor<T>& c);
template <class T> Var<T> scale(const Var<T>& a, T s);
template <class T> Var<T> add_scalar(const Var<T>& a, T s);
template <class T> Var<T> neg(const Var<T>& a);
template <class T> Var<T> exp_(const Var<T>& a);
template <class T> Var<T> square(const Var<T>& a);
template <class T> Var<T> relu(const Var<T>& a);
template <class T> Var<T> elu(const Var<T>& a);
template <class T> Var<T> tanh_(const Var<T>& a);
template <class T> Var<T> sigmoid(const Var<T>& a);
template <class T> Var<T> minimum(const Var<T>& a, const Var<T>& b);
/// Hard clip; gradient passes only where lo < x < hi.
template <class T> Var<T> clamp(const Var<T>& a, T lo, T hi);
/// out[r, :] = a[r, :] * rowscale[r]
template <class T> Var<T> mul_rows(const Var<T>& a, const std::vector<T>& rowscale);

// ---- shape / assembly (tensors treated as [rows, cols]) ----
template <class T> Var<T> concat_cols(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> slice_cols(const Var<T>& a, int c0, int c1);
template <class T> Var<T> slice_rows(const Var<T>& a, int r0, int r1);
template <class T> Var<T> stack_rows(const std::vector<Var<T>>& xs);
template <class T> Var<T> reshape(const Var<T>& a, std::vector<int> new_shape);

// ---- reductions ----
template <class T> Var<T> sum_cols(const Var<T>& a);   // [R,C] -> [R]
template <class T> Var<T> sum_all(const Var<T>& a);    // -> [1]
template <class T> Var<T> mean_all(const Var<T>& a);   // -> [1]

// ---- network ops ----
/// x [B, n] (trailing dims flattened), W [m, n], b [m] -> [B, m]
template <class T> Var<T> linear(const Var<T>& x, const Var<T>& W, const Var<T>& b);
template <class T> Var<T> linear_nobias(const Var<T>& x, const Var<T>& W);
/// ids [B, H, W] glyph grid, table [vocab, d] -> [B, d, H, W] (channels first)
template <class T> Var<T> embedding(const IntTensor& ids, const Var<T>& table);
/// x [B, C, H, W], k [O, C, 3, 3], b [O] -> [B, O, H, W]; zero same-padding.
template <class T> Var<T> conv2d_3x3(const Var<T>& x, const Var<T>& k, const Var<T>& b);
/// Row-wise, numerically stable.
template <class T> Var<T> log_softmax(const Var<T>& x);
/// x [B, k], idx [B] -> [B]
template <class T> Var<T> gather_cols(const Var<T>& x, const std::vector<int>& idx);
/// -log softmax(logits)[target], per row -> [B]
template <class T> Var<T> cross_entropy_rows(const Var<T>& logits, const std::vector<int>& targets);
/// Single-sample convenience: logits [k] or [1, k] -> scalar.
template <class T> Var<T> cross_entropy(const Var<T>& logits, int target);
/// Row-wise policy entropy -sum p log p -> [B]
template <class T> Var<T> entropy_rows(const Var<T>& logits);

/// One LSTM cell step. Gate layout along Wx/Wh rows: [i, f, g, o], each of
/// size `state`; Wx [4*state, n], Wh [4*state, state], b [4*state].
template <class T>
std::pair<Var<T>, Var<T>> lstm_step(const Var<T>& x, const Var<T>& h, const Var<T>& c,
                                    const Var<T>& Wx, const Var<T>& Wh, const Var<T>& b);

// ---- plain tensor utilities (no graph) ----
/// softmax of a single logit row.
template <class T> Tensor<T> softmax_probs(const Tensor<T>& logits);
/// Sample from softmax(logits); returns index and log prob at that index.
/// Errors on non-finite logits or k < 2.
template <class T> std::pair<int, T> categorical(const Tensor<T>& logits, Rng& rng);
/// Argmax with lowest-index tie-break.
template <class T> int argmax_lowest(const T* begin, int64_t n);

}  // namespace roomprobe::nn
