#include "roomprobe/nn/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace roomprobe::nn {

namespace {

thread_local bool g_grad_enabled = true;

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class T>
MatMap<T> mat(Tensor<T>& t, int64_t r, int64_t c) {
  return MatMap<T>(t.ptr(), r, c);
}
template <class T>
ConstMatMap<T> mat(const Tensor<T>& t, int64_t r, int64_t c) {
  return ConstMatMap<T>(t.ptr(), r, c);
}

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.value().shape) + " vs " +
                                shape_str(b.value().shape));
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  const int64_t n = src.numel();
  for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

// Creates the output node; `make_bw` receives the finished node pointer and
// returns the pull closure. The closure is installed only when grad mode is
// on and some parent requires grad.
template <class T, class BackwardFactory>
Var<T> make_op(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFactory&& make_bw) {
  auto out = std::make_shared<Node<T>>();
  out->value = std::move(value);
  bool need = false;
  if (g_grad_enabled)
    for (const Var<T>& p : parents)
      if (p.requires_grad()) need = true;
  if (need) {
    out->requires_grad = true;
    for (const Var<T>& p : parents) out->parents.push_back(p.node());
    out->backward_fn = make_bw(out.get());
  }
  return Var<T>(out);
}

template <class T, class FwdFn, class DFn>
Var<T> unary_elementwise(const Var<T>& a, FwdFn f, DFn dfdx) {
  Tensor<T> out(a.value().shape);
  const int64_t n = out.numel();
  const T* x = a.value().ptr();
  T* y = out.ptr();
  for (int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
  Node<T>* an = a.node().get();
  return make_op<T>(std::move(out), {a}, [an, dfdx](Node<T>* on) {
    return [on, an, dfdx]() {
      Tensor<T>& ga = an->ensure_grad();
      const int64_t m = on->value.numel();
      for (int64_t i = 0; i < m; ++i) ga[i] += on->grad[i] * dfdx(an->value[i], on->value[i]);
    };
  });
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

template <class T>
void backward(const Var<T>& root) {
  if (!root.valid()) throw std::invalid_argument("backward: empty Var");
  if (root.value().numel() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " + shape_str(root.value().shape));
  if (!root.requires_grad()) throw std::invalid_argument("backward: root does not require grad");

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn();
    }
  }
}

// ---------------- elementwise ----------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.value().shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a.value()[i] + b.value()[i];
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return make_op<T>(std::move(out), {a, b}, [an, bn](Node<T>* on) {
    return [on, an, bn]() {
      if (an->requires_grad) accumulate(an->ensure_grad(), on->grad);
      if (bn->requires_grad) accumulate(bn->ensure_grad(), on->grad);
    };
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out(a.value().shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a.value()[i] - b.value()[i];
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return make_op<T>(std::move(out), {a, b}, [an, bn](Node<T>* on) {
    return [on, an, bn]() {
      const int64_t m = on->value.numel();
      if (an->requires_grad) accumulate(an->ensure_grad(), on->grad);
      if (bn->requires_grad) {
        Tensor<T>& gb = bn->ensure_grad();
        for (int64_t i = 0; i < m; ++i) gb[i] -= on->grad[i];
      }
    };
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.value().shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a.value()[i] * b.value()[i];
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return make_op<T>(std::move(out), {a, b}, [an, bn](Node<T>* on) {
    return [on, an, bn]() {
      const int64_t m = on->value.numel();
      if (an->requires_grad) {
        Tensor<T>& ga = an->ensure_grad();
        for (int64_t i = 0; i < m; ++i) ga[i] += on->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        Tensor<T>& gb = bn->ensure_grad();
        for (int64_t i = 0; i < m; ++i) gb[i] += on->grad[i] * an->value[i];
      }
    };
  });
}

template <class T>
Var<T> add_const(const Var<T>& a, const Tensor<T>& c) {
  if (!a.value().same_shape(c))
    throw std::invalid_argument("add_const: shape mismatch " + shape_str(a.value().shape) + " vs " + shape_str(c.shape));
  Tensor<T> out(a.value().shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a.value()[i] + c[i];
  Node<T>* an = a.node().get();
  return make_op<T>(std::move(out), {a}, [an](Node<T>* on) {
    return [on, an]() { accumulate(an->ensure_grad(), on->grad); };
  });
}

template <class T>
Var<T> mul_const(const Var<T>& a, const Tensor<T>& c) {
  if (!a.value().same_shape(c))
    throw std::invalid_argument("mul_const: shape mismatch " + shape_str(a.value().shape) + " vs " + shape_str(c.shape));
  Tensor<T> out(a.value().shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a.value()[i] * c[i];
  Node<T>* an = a.node().get();
  auto cc = std::make_shared<Tensor<T>>(c);
  return make_op<T>(std::move(out), {a}, [an, cc](Node<T>* on) {
    return [on, an, cc]() {
      Tensor<T>& ga = an->ensure_grad();
      const int64_t m = on->value.numel();
      for (int64_t i = 0; i < m; ++i) ga[i] += on->grad[i] * (*cc)[i];
    };
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  return unary_elementwise(a, [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return unary_elementwise(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> neg(const Var<T>& a) {
  return unary_elementwise(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <class T>
Var<T> exp_(const Var<T>& a) {
  return unary_elementwise(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Var<T> square(const Var<T>& a) {
  return unary_elementwise(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  return unary_elementwise(a, [](T x) { return x > T(0) ? x : T(0); },
                           [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> elu(const Var<T>& a) {
  return unary_elementwise(a, [](T x) { return x > T(0) ? x : std::expm1(x); },
                           [](T x, T y) { return x > T(0) ? T(1) : y + T(1); });
}

template <class T>
Var<T> tanh_(const Var<T>& a) {
  return unary_elementwise(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  return unary_elementwise(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
                           [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> minimum(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "minimum");
  Tensor<T> out(a.value().shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = std::min(a.value()[i], b.value()[i]);
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  // Ties route the gradient to `a`.
  return make_op<T>(std::move(out), {a, b}, [an, bn](Node<T>* on) {
    return [on, an, bn]() {
      const int64_t m = on->value.numel();
      for (int64_t i = 0; i < m; ++i) {
        const bool take_a = an->value[i] <= bn->value[i];
        if (take_a && an->requires_grad) an->ensure_grad()[i] += on->grad[i];
        if (!take_a && bn->requires_grad) bn->ensure_grad()[i] += on->grad[i];
      }
    };
  });
}

template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  return unary_elementwise(a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
                           [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

template <class T>
Var<T> mul_rows(const Var<T>& a, const std::vector<T>& rowscale) {
  const int R = a.value().rows();
  const int64_t C = a.value().cols();
  if (static_cast<int>(rowscale.size()) != R)
    throw std::invalid_argument("mul_rows: rowscale size " + std::to_string(rowscale.size()) + " vs rows " +
                                std::to_string(R));
  Tensor<T> out(a.value().shape);
  for (int r = 0; r < R; ++r)
    for (int64_t c = 0; c < C; ++c) out[r * C + c] = a.value()[r * C + c] * rowscale[r];
  Node<T>* an = a.node().get();
  auto sc = std::make_shared<std::vector<T>>(rowscale);
  return make_op<T>(std::move(out), {a}, [an, sc, R, C](Node<T>* on) {
    return [on, an, sc, R, C]() {
      Tensor<T>& ga = an->ensure_grad();
      for (int r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) ga[r * C + c] += on->grad[r * C + c] * (*sc)[r];
    };
  });
}

// ---------------- shape / assembly ----------------

template <class T>
Var<T> concat_cols(const Var<T>& a, const Var<T>& b) {
  const int R = a.value().rows();
  if (b.value().rows() != R)
    throw std::invalid_argument("concat_cols: row mismatch " + std::to_string(R) + " vs " +
                                std::to_string(b.value().rows()));
  const int64_t Ca = a.value().cols(), Cb = b.value().cols();
  Tensor<T> out({R, static_cast<int>(Ca + Cb)});
  for (int r = 0; r < R; ++r) {
    std::memcpy(out.ptr() + r * (Ca + Cb), a.value().ptr() + r * Ca, sizeof(T) * Ca);
    std::memcpy(out.ptr() + r * (Ca + Cb) + Ca, b.value().ptr() + r * Cb, sizeof(T) * Cb);
  }
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return make_op<T>(std::move(out), {a, b}, [an, bn, R, Ca, Cb](Node<T>* on) {
    return [on, an, bn, R, Ca, Cb]() {
      for (int r = 0; r < R; ++r) {
        if (an->requires_grad) {
          Tensor<T>& ga = an->ensure_grad();
          for (int64_t c = 0; c < Ca; ++c) ga[r * Ca + c] += on->grad[r * (Ca + Cb) + c];
        }
        if (bn->requires_grad) {
          Tensor<T>& gb = bn->ensure_grad();
          for (int64_t c = 0; c < Cb; ++c) gb[r * Cb + c] += on->grad[r * (Ca + Cb) + Ca + c];
        }
      }
    };
  });
}

template <class T>
Var<T> slice_cols(const Var<T>& a, int c0, int c1) {
  const int R = a.value().rows();
  const int64_t C = a.value().cols();
  if (c0 < 0 || c1 > C || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                                ") for cols " + std::to_string(C));
  const int W = c1 - c0;
  Tensor<T> out({R, W});
  for (int r = 0; r < R; ++r)
    std::memcpy(out.ptr() + r * W, a.value().ptr() + r * C + c0, sizeof(T) * W);
  Node<T>* an = a.node().get();
  return make_op<T>(std::move(out), {a}, [an, R, C, c0, W](Node<T>* on) {
    return [on, an, R, C, c0, W]() {
      Tensor<T>& ga = an->ensure_grad();
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < W; ++c) ga[r * C + c0 + c] += on->grad[r * W + c];
    };
  });
}

template <class T>
Var<T> slice_rows(const Var<T>& a, int r0, int r1) {
  const int R = a.value().rows();
  const int64_t C = a.value().cols();
  if (r0 < 0 || r1 > R || r0 >= r1)
    throw std::invalid_argument("slice_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) +
                                ") for rows " + std::to_string(R));
  const int H = r1 - r0;
  Tensor<T> out({H, static_cast<int>(C)});
  std::memcpy(out.ptr(), a.value().ptr() + r0 * C, sizeof(T) * H * C);
  Node<T>* an = a.node().get();
  return make_op<T>(std::move(out), {a}, [an, C, r0, H](Node<T>* on) {
    return [on, an, C, r0, H]() {
      Tensor<T>& ga = an->ensure_grad();
      const int64_t n = H * C;
      for (int64_t i = 0; i < n; ++i) ga[r0 * C + i] += on->grad[i];
    };
  });
}

template <class T>
Var<T> stack_rows(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("stack_rows: empty input");
  const int64_t C = xs[0].value().cols();
  int R = 0;
  for (const auto& x : xs) {
    if (x.value().cols() != C) throw std::invalid_argument("stack_rows: column mismatch");
    R += x.value().rows();
  }
  Tensor<T> out({R, static_cast<int>(C)});
  int64_t off = 0;
  for (const auto& x : xs) {
    std::memcpy(out.ptr() + off, x.value().ptr(), sizeof(T) * x.value().numel());
    off += x.value().numel();
  }
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(out);
  bool need = false;
  if (g_grad_enabled)
    for (const auto& x : xs)
      if (x.requires_grad()) need = true;
  if (need) {
    node->requires_grad = true;
    std::vector<Node<T>*> raw;
    for (const auto& x : xs) {
      node->parents.push_back(x.node());
      raw.push_back(x.node().get());
    }
    Node<T>* on = node.get();
    node->backward_fn = [on, raw]() {
      int64_t off2 = 0;
      for (Node<T>* p : raw) {
        const int64_t n = p->value.numel();
        if (p->requires_grad) {
          Tensor<T>& gp = p->ensure_grad();
          for (int64_t i = 0; i < n; ++i) gp[i] += on->grad[off2 + i];
        }
        off2 += n;
      }
    };
  }
  return Var<T>(node);
}

template <class T>
Var<T> reshape(const Var<T>& a, std::vector<int> new_shape) {
  if (numel_of(new_shape) != a.value().numel())
    throw std::invalid_argument("reshape: numel mismatch " + shape_str(a.value().shape) + " -> " + shape_str(new_shape));
  Tensor<T> out(std::move(new_shape), a.value().data);
  Node<T>* an = a.node().get();
  return make_op<T>(std::move(out), {a}, [an](Node<T>* on) {
    return [on, an]() { accumulate(an->ensure_grad(), on->grad); };
  });
}

// ---------------- reductions ----------------

template <class T>
Var<T> sum_cols(const Var<T>& a) {
  const int R = a.value().rows();
  const int64_t C = a.value().cols();
  Tensor<T> out({R});
  for (int r = 0; r < R; ++r) {
    T s = T(0);
    for (int64_t c = 0; c < C; ++c) s += a.value()[r * C + c];
    out[r] = s;
  }
  Node<T>* an = a.node().get();
  return make_op<T>(std::move(out), {a}, [an, R, C](Node<T>* on) {
    return [on, an, R, C]() {
      Tensor<T>& ga = an->ensure_grad();
      for (int r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) ga[r * C + c] += on->grad[r];
    };
  });
}

template <class T>
Var<T> sum_all(const Var<T>& a) {
  T s = T(0);
  const int64_t n = a.value().numel();
  for (int64_t i = 0; i < n; ++i) s += a.value()[i];
  Node<T>* an = a.node().get();
  return make_op<T>(Tensor<T>::scalar(s), {a}, [an, n](Node<T>* on) {
    return [on, an, n]() {
      Tensor<T>& ga = an->ensure_grad();
      for (int64_t i = 0; i < n; ++i) ga[i] += on->grad[0];
    };
  });
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  const int64_t n = a.value().numel();
  T s = T(0);
  for (int64_t i = 0; i < n; ++i) s += a.value()[i];
  s /= static_cast<T>(n);
  Node<T>* an = a.node().get();
  return make_op<T>(Tensor<T>::scalar(s), {a}, [an, n](Node<T>* on) {
    return [on, an, n]() {
      Tensor<T>& ga = an->ensure_grad();
      const T g = on->grad[0] / static_cast<T>(n);
      for (int64_t i = 0; i < n; ++i) ga[i] += g;
    };
  });
}

// ---------------- network ops ----------------

template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& W, const Var<T>& b) {
  const int B = x.value().rows();
  const int64_t n = x.value().cols();
  if (W.value().ndim() != 2 || W.value().dim(1) != n)
    throw std::invalid_argument("linear: weight " + shape_str(W.value().shape) + " incompatible with input cols " +
                                std::to_string(n));
  const int m = W.value().dim(0);
  if (b.valid() && b.value().numel() != m)
    throw std::invalid_argument("linear: bias " + shape_str(b.value().shape) + " vs out dim " + std::to_string(m));

  Tensor<T> out({B, m});
  mat(out, B, m).noalias() = mat(x.value(), B, n) * mat(W.value(), m, n).transpose();
  if (b.valid())
    mat(out, B, m).rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.value().ptr(), m);

  Node<T>* xn = x.node().get();
  Node<T>* Wn = W.node().get();
  Node<T>* bn = b.valid() ? b.node().get() : nullptr;
  auto bw = [xn, Wn, bn, B, n, m](Node<T>* on) {
    return [on, xn, Wn, bn, B, n, m]() {
      auto dY = mat(on->grad, B, m);
      if (xn->requires_grad)
        mat(xn->ensure_grad(), B, n).noalias() += dY * mat(Wn->value, m, n);
      if (Wn->requires_grad)
        mat(Wn->ensure_grad(), m, n).noalias() += dY.transpose() * mat(xn->value, B, n);
      if (bn && bn->requires_grad) {
        Tensor<T>& gb = bn->ensure_grad();
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb.ptr(), m) += dY.colwise().sum();
      }
    };
  };
  if (b.valid()) return make_op<T>(std::move(out), {x, W, b}, bw);
  return make_op<T>(std::move(out), {x, W}, bw);
}

template <class T>
Var<T> linear_nobias(const Var<T>& x, const Var<T>& W) {
  return linear(x, W, Var<T>());
}

template <class T>
Var<T> embedding(const IntTensor& ids, const Var<T>& table) {
  if (table.value().ndim() != 2) throw std::invalid_argument("embedding: table must be 2-D");
  const int V = table.value().dim(0);
  const int d = table.value().dim(1);
  if (ids.ndim() != 3) throw std::invalid_argument("embedding: ids must be [batch, H, W]");
  const int B = ids.dim(0), H = ids.dim(1), Wd = ids.dim(2);
  const int64_t HW = static_cast<int64_t>(H) * Wd;

  Tensor<T> out({B, d, H, Wd});
  for (int b = 0; b < B; ++b) {
    for (int64_t p = 0; p < HW; ++p) {
      const int32_t id = ids.data[b * HW + p];
      if (id < 0 || id >= V)
        throw std::invalid_argument("embedding: id " + std::to_string(id) + " out of range for vocab " +
                                    std::to_string(V));
      const T* row = table.value().ptr() + static_cast<int64_t>(id) * d;
      T* o = out.ptr() + (static_cast<int64_t>(b) * d) * HW + p;
      for (int k = 0; k < d; ++k) o[static_cast<int64_t>(k) * HW] = row[k];
    }
  }
  Node<T>* tn = table.node().get();
  auto idc = std::make_shared<IntTensor>(ids);
  return make_op<T>(std::move(out), {table}, [tn, idc, B, d, HW](Node<T>* on) {
    return [on, tn, idc, B, d, HW]() {
      Tensor<T>& gt = tn->ensure_grad();
      const int dd = d;
      for (int b = 0; b < B; ++b) {
        for (int64_t p = 0; p < HW; ++p) {
          const int32_t id = idc->data[b * HW + p];
          T* grow = gt.ptr() + static_cast<int64_t>(id) * dd;
          const T* g = on->grad.ptr() + (static_cast<int64_t>(b) * dd) * HW + p;
          for (int k = 0; k < dd; ++k) grow[k] += g[static_cast<int64_t>(k) * HW];
        }
      }
    };
  });
}

namespace {

// im2col for 3x3 same-padded convolution: COLS [C*9, B*H*W], row-major.
template <class T>
void im2col_3x3(const Tensor<T>& x, int B, int C, int H, int W, Tensor<T>& cols) {
  const int64_t HW = static_cast<int64_t>(H) * W;
  const int64_t BHW = static_cast<int64_t>(B) * HW;
  std::fill(cols.data.begin(), cols.data.end(), T(0));
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst_row = cols.ptr() + (static_cast<int64_t>(c) * 9 + ky * 3 + kx) * BHW;
        for (int b = 0; b < B; ++b) {
          const T* src = x.ptr() + (static_cast<int64_t>(b) * C + c) * HW;
          for (int y = 0; y < H; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= H) continue;
            const int x0 = std::max(0, 1 - kx);
            const int x1 = std::min(W, W + 1 - kx);
            if (x0 >= x1) continue;
            std::memcpy(dst_row + b * HW + static_cast<int64_t>(y) * W + x0,
                        src + static_cast<int64_t>(sy) * W + x0 + kx - 1, sizeof(T) * (x1 - x0));
          }
        }
      }
    }
  }
}

// Transposed scatter-add of dCOLS back into dx.
template <class T>
void col2im_3x3(const Tensor<T>& dcols, int B, int C, int H, int W, Tensor<T>& dx) {
  const int64_t HW = static_cast<int64_t>(H) * W;
  const int64_t BHW = static_cast<int64_t>(B) * HW;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src_row = dcols.ptr() + (static_cast<int64_t>(c) * 9 + ky * 3 + kx) * BHW;
        for (int b = 0; b < B; ++b) {
          T* dst = dx.ptr() + (static_cast<int64_t>(b) * C + c) * HW;
          for (int y = 0; y < H; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= H) continue;
            const int x0 = std::max(0, 1 - kx);
            const int x1 = std::min(W, W + 1 - kx);
            for (int xx = x0; xx < x1; ++xx)
              dst[static_cast<int64_t>(sy) * W + xx + kx - 1] += src_row[b * HW + static_cast<int64_t>(y) * W + xx];
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
Var<T> conv2d_3x3(const Var<T>& x, const Var<T>& k, const Var<T>& b) {
  if (x.value().ndim() != 4) throw std::invalid_argument("conv2d: input must be [batch, C, H, W]");
  if (k.value().ndim() != 4 || k.value().dim(2) != 3 || k.value().dim(3) != 3)
    throw std::invalid_argument("conv2d: kernel must be [O, C, 3, 3], got " + shape_str(k.value().shape));
  const int B = x.value().dim(0), C = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
  const int O = k.value().dim(0);
  if (k.value().dim(1) != C)
    throw std::invalid_argument("conv2d: channel mismatch, input C=" + std::to_string(C) + " kernel C=" +
                                std::to_string(k.value().dim(1)));
  if (b.value().numel() != O)
    throw std::invalid_argument("conv2d: bias " + shape_str(b.value().shape) + " vs out channels " + std::to_string(O));

  const int64_t HW = static_cast<int64_t>(H) * W;
  const int64_t BHW = static_cast<int64_t>(B) * HW;
  const int C9 = C * 9;

  auto cols = std::make_shared<Tensor<T>>(std::vector<int>{C9, static_cast<int>(BHW)});
  im2col_3x3(x.value(), B, C, H, W, *cols);

  Tensor<T> big({O, static_cast<int>(BHW)});
  mat(big, O, BHW).noalias() = mat(k.value(), O, C9) * mat(*cols, C9, BHW);

  Tensor<T> out({B, O, H, W});
  for (int bb = 0; bb < B; ++bb)
    for (int o = 0; o < O; ++o) {
      const T bias = b.value()[o];
      const T* src = big.ptr() + o * BHW + bb * HW;
      T* dst = out.ptr() + (static_cast<int64_t>(bb) * O + o) * HW;
      for (int64_t p = 0; p < HW; ++p) dst[p] = src[p] + bias;
    }

  Node<T>* xn = x.node().get();
  Node<T>* kn = k.node().get();
  Node<T>* bn = b.node().get();
  const bool keep_cols = g_grad_enabled && (x.requires_grad() || k.requires_grad() || b.requires_grad());
  if (!keep_cols) cols.reset();

  return make_op<T>(std::move(out), {x, k, b}, [=](Node<T>* on) {
    return [=]() {
      // Regroup the output gradient as [O, B*H*W].
      Tensor<T> dbig({O, static_cast<int>(BHW)});
      for (int bb = 0; bb < B; ++bb)
        for (int o = 0; o < O; ++o)
          std::memcpy(dbig.ptr() + o * BHW + bb * HW, on->grad.ptr() + (static_cast<int64_t>(bb) * O + o) * HW,
                      sizeof(T) * HW);
      if (bn->requires_grad) {
        Tensor<T>& gb = bn->ensure_grad();
        for (int o = 0; o < O; ++o) {
          T s = T(0);
          const T* row = dbig.ptr() + o * BHW;
          for (int64_t p = 0; p < BHW; ++p) s += row[p];
          gb[o] += s;
        }
      }
      if (kn->requires_grad)
        mat(kn->ensure_grad(), O, C9).noalias() += mat(dbig, O, BHW) * mat(*cols, C9, BHW).transpose();
      if (xn->requires_grad) {
        Tensor<T> dcols({C9, static_cast<int>(BHW)});
        mat(dcols, C9, BHW).noalias() = mat(kn->value, O, C9).transpose() * mat(dbig, O, BHW);
        col2im_3x3(dcols, B, C, H, W, xn->ensure_grad());
      }
    };
  });
}

template <class T>
Var<T> log_softmax(const Var<T>& x) {
  const int R = x.value().rows();
  const int64_t C = x.value().cols();
  Tensor<T> out(x.value().shape);
  for (int r = 0; r < R; ++r) {
    const T* xi = x.value().ptr() + r * C;
    T* yi = out.ptr() + r * C;
    T m = xi[0];
    for (int64_t c = 1; c < C; ++c) m = std::max(m, xi[c]);
    T s = T(0);
    for (int64_t c = 0; c < C; ++c) s += std::exp(xi[c] - m);
    const T lse = m + std::log(s);
    for (int64_t c = 0; c < C; ++c) yi[c] = xi[c] - lse;
  }
  Node<T>* xn = x.node().get();
  return make_op<T>(std::move(out), {x}, [xn, R, C](Node<T>* on) {
    return [on, xn, R, C]() {
      Tensor<T>& gx = xn->ensure_grad();
      for (int r = 0; r < R; ++r) {
        const T* y = on->value.ptr() + r * C;
        const T* gy = on->grad.ptr() + r * C;
        T gsum = T(0);
        for (int64_t c = 0; c < C; ++c) gsum += gy[c];
        for (int64_t c = 0; c < C; ++c) gx[r * C + c] += gy[c] - std::exp(y[c]) * gsum;
      }
    };
  });
}

template <class T>
Var<T> gather_cols(const Var<T>& x, const std::vector<int>& idx) {
  const int R = x.value().rows();
  const int64_t C = x.value().cols();
  if (static_cast<int>(idx.size()) != R)
    throw std::invalid_argument("gather_cols: index count " + std::to_string(idx.size()) + " vs rows " +
                                std::to_string(R));
  Tensor<T> out({R});
  for (int r = 0; r < R; ++r) {
    if (idx[r] < 0 || idx[r] >= C)
      throw std::invalid_argument("gather_cols: index " + std::to_string(idx[r]) + " out of range for " +
                                  std::to_string(C) + " classes");
    out[r] = x.value()[r * C + idx[r]];
  }
  Node<T>* xn = x.node().get();
  auto ic = std::make_shared<std::vector<int>>(idx);
  return make_op<T>(std::move(out), {x}, [xn, ic, R, C](Node<T>* on) {
    return [on, xn, ic, R, C]() {
      Tensor<T>& gx = xn->ensure_grad();
      for (int r = 0; r < R; ++r) gx[r * C + (*ic)[r]] += on->grad[r];
    };
  });
}

template <class T>
Var<T> cross_entropy_rows(const Var<T>& logits, const std::vector<int>& targets) {
  return neg(gather_cols(log_softmax(logits), targets));
}

template <class T>
Var<T> cross_entropy(const Var<T>& logits, int target) {
  const int64_t k = logits.value().numel();
  if (target < 0 || target >= k)
    throw std::invalid_argument("cross_entropy: target " + std::to_string(target) + " out of range for " +
                                std::to_string(k) + " classes");
  Var<T> row = reshape(logits, {1, static_cast<int>(k)});
  return sum_all(cross_entropy_rows(row, {target}));
}

template <class T>
Var<T> entropy_rows(const Var<T>& logits) {
  Var<T> ls = log_softmax(logits);
  return neg(sum_cols(mul(exp_(ls), ls)));
}

template <class T>
std::pair<Var<T>, Var<T>> lstm_step(const Var<T>& x, const Var<T>& h, const Var<T>& c, const Var<T>& Wx,
                                    const Var<T>& Wh, const Var<T>& b) {
  const int S = static_cast<int>(c.value().cols());
  if (Wx.value().dim(0) != 4 * S || Wh.value().dim(0) != 4 * S || Wh.value().dim(1) != S)
    throw std::invalid_argument("lstm_step: parameter shapes inconsistent with state size " + std::to_string(S));
  Var<T> gates = add(linear(x, Wx, b), linear_nobias(h, Wh));
  Var<T> i = sigmoid(slice_cols(gates, 0, S));
  Var<T> f = sigmoid(slice_cols(gates, S, 2 * S));
  Var<T> g = tanh_(slice_cols(gates, 2 * S, 3 * S));
  Var<T> o = sigmoid(slice_cols(gates, 3 * S, 4 * S));
  Var<T> c_next = add(mul(f, c), mul(i, g));
  Var<T> h_next = mul(o, tanh_(c_next));
  return {h_next, c_next};
}

// ---------------- plain tensor utilities ----------------

template <class T>
Tensor<T> softmax_probs(const Tensor<T>& logits) {
  const int64_t k = logits.numel();
  Tensor<T> p(logits.shape);
  T m = logits[0];
  for (int64_t i = 1; i < k; ++i) m = std::max(m, logits[i]);
  T s = T(0);
  for (int64_t i = 0; i < k; ++i) {
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  for (int64_t i = 0; i < k; ++i) p[i] /= s;
  return p;
}

template <class T>
std::pair<int, T> categorical(const Tensor<T>& logits, Rng& rng) {
  const int64_t k = logits.numel();
  if (k < 2) throw std::invalid_argument("categorical: need at least 2 categories, got " + std::to_string(k));
  logits.check_finite("categorical logits");
  T m = logits[0];
  for (int64_t i = 1; i < k; ++i) m = std::max(m, logits[i]);
  T total = T(0);
  std::vector<T> e(static_cast<size_t>(k));
  for (int64_t i = 0; i < k; ++i) {
    e[i] = std::exp(logits[i] - m);
    total += e[i];
  }
  const T u = static_cast<T>(rng.uniform()) * total;
  T acc = T(0);
  int a = static_cast<int>(k) - 1;
  for (int64_t i = 0; i < k; ++i) {
    acc += e[i];
    if (u < acc) {
      a = static_cast<int>(i);
      break;
    }
  }
  const T logp = (logits[a] - m) - std::log(total);
  return {a, logp};
}

template <class T>
int argmax_lowest(const T* begin, int64_t n) {
  int best = 0;
  for (int64_t i = 1; i < n; ++i)
    if (begin[i] > begin[best]) best = static_cast<int>(i);
  return best;
}

// ---------------- explicit instantiations ----------------

#define ROOMPROBE_INSTANTIATE_AUTOGRAD(T)                                                                      \
  template void backward<T>(const Var<T>&);                                                                   \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> add_const<T>(const Var<T>&, const Tensor<T>&);                                              \
  template Var<T> mul_const<T>(const Var<T>&, const Tensor<T>&);                                              \
  template Var<T> scale<T>(const Var<T>&, T);                                                                 \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                                            \
  template Var<T> neg<T>(const Var<T>&);                                                                      \
  template Var<T> exp_<T>(const Var<T>&);                                                                     \
  template Var<T> square<T>(const Var<T>&);                                                                   \
  template Var<T> relu<T>(const Var<T>&);                                                                     \
  template Var<T> elu<T>(const Var<T>&);                                                                      \
  template Var<T> tanh_<T>(const Var<T>&);                                                                    \
  template Var<T> sigmoid<T>(const Var<T>&);                                                                  \
  template Var<T> minimum<T>(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> clamp<T>(const Var<T>&, T, T);                                                              \
  template Var<T> mul_rows<T>(const Var<T>&, const std::vector<T>&);                                          \
  template Var<T> concat_cols<T>(const Var<T>&, const Var<T>&);                                               \
  template Var<T> slice_cols<T>(const Var<T>&, int, int);                                                     \
  template Var<T> slice_rows<T>(const Var<T>&, int, int);                                                     \
  template Var<T> stack_rows<T>(const std::vector<Var<T>>&);                                                  \
  template Var<T> reshape<T>(const Var<T>&, std::vector<int>);                                                \
  template Var<T> sum_cols<T>(const Var<T>&);                                                                 \
  template Var<T> sum_all<T>(const Var<T>&);                                                                  \
  template Var<T> mean_all<T>(const Var<T>&);                                                                 \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                                     \
  template Var<T> linear_nobias<T>(const Var<T>&, const Var<T>&);                                             \
  template Var<T> embedding<T>(const IntTensor&, const Var<T>&);                                              \
  template Var<T> conv2d_3x3<T>(const Var<T>&, const Var<T>&, const Var<T>&);                                 \
  template Var<T> log_softmax<T>(const Var<T>&);                                                              \
  template Var<T> gather_cols<T>(const Var<T>&, const std::vector<int>&);                                     \
  template Var<T> cross_entropy_rows<T>(const Var<T>&, const std::vector<int>&);                              \
  template Var<T> cross_entropy<T>(const Var<T>&, int);                                                       \
  template Var<T> entropy_rows<T>(const Var<T>&);                                                             \
  template std::pair<Var<T>, Var<T>> lstm_step<T>(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&, \
                                                  const Var<T>&, const Var<T>&);                              \
  template Tensor<T> softmax_probs<T>(const Tensor<T>&);                                                      \
  template std::pair<int, T> categorical<T>(const Tensor<T>&, Rng&);                                          \
  template int argmax_lowest<T>(const T*, int64_t);

ROOMPROBE_INSTANTIATE_AUTOGRAD(float)
ROOMPROBE_INSTANTIATE_AUTOGRAD(double)

}  // namespace roomprobe::nn
