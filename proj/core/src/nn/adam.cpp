#include "roomprobe/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace roomprobe::nn {

template <class T>
AdamState<T> AdamState<T>::for_params(const std::vector<Tensor<T>*>& params, T lr_) {
  AdamState<T> s;
  s.lr = lr_;
  for (const Tensor<T>* p : params) {
    s.m.push_back(Tensor<T>::zeros(p->shape));
    s.v.push_back(Tensor<T>::zeros(p->shape));
  }
  return s;
}

template <class T>
void adam_step(std::vector<Tensor<T>*> params, std::vector<const Tensor<T>*> grads, AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  state.t += 1;
  const T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.t));
  const T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.t));
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k];
    const Tensor<T>& g = *grads[k];
    if (!p.same_shape(g))
      throw std::invalid_argument("adam_step: grad shape " + shape_str(g.shape) + " vs param " + shape_str(p.shape));
    g.check_finite("adam_step gradients");
    Tensor<T>& m = state.m[k];
    Tensor<T>& v = state.v[k];
    const int64_t n = p.numel();
    for (int64_t i = 0; i < n; ++i) {
      m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g[i] * g[i];
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

template <class T>
void adam_step(std::vector<Var<T>>& params, AdamState<T>& state) {
  std::vector<Tensor<T>*> ps;
  std::vector<const Tensor<T>*> gs;
  for (auto& p : params) {
    ps.push_back(&p.mutable_value());
    gs.push_back(&p.ensure_grad());
  }
  adam_step(std::move(ps), std::move(gs), state);
}

template <class T>
T clip_grad_norm(std::vector<Var<T>>& params, T max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    const Tensor<T>& g = p.ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
  }
  const T norm = static_cast<T>(std::sqrt(sq));
  if (norm > max_norm && norm > T(0)) {
    const T s = max_norm / norm;
    for (auto& p : params) {
      Tensor<T>& g = p.ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] *= s;
    }
  }
  return norm;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::vector<Tensor<float>*>, std::vector<const Tensor<float>*>, AdamState<float>&);
template void adam_step<double>(std::vector<Tensor<double>*>, std::vector<const Tensor<double>*>, AdamState<double>&);
template void adam_step<float>(std::vector<Var<float>>&, AdamState<float>&);
template void adam_step<double>(std::vector<Var<double>>&, AdamState<double>&);
template float clip_grad_norm<float>(std::vector<Var<float>>&, float);
template double clip_grad_norm<double>(std::vector<Var<double>>&, double);

}  // namespace roomprobe::nn
