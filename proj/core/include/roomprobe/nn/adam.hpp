#pragma once

#include <cstdint>
#include <vector>

#include "roomprobe/nn/autograd.hpp"
#include "roomprobe/nn/tensor.hpp"

namespace roomprobe::nn {

/// Adam with bias correction. `t` counts completed updates and is
/// incremented exactly once at the start of each step.
template <class T>
struct AdamState {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  int64_t t = 0;
  std::vector<Tensor<T>> m, v;

  static AdamState for_params(const std::vector<Tensor<T>*>& params, T lr);
};

/// In-place update of the designated parameter store. Errors on non-finite
/// gradients or shape mismatches.
template <class T>
void adam_step(std::vector<Tensor<T>*> params, std::vector<const Tensor<T>*> grads, AdamState<T>& state);

/// Convenience for leaf Vars: uses each Var's accumulated grad, then the
/// caller is expected to zero grads before the next pass.
template <class T>
void adam_step(std::vector<Var<T>>& params, AdamState<T>& state);

/// Global gradient-norm clip; returns the pre-clip norm.
template <class T>
T clip_grad_norm(std::vector<Var<T>>& params, T max_norm);

}  // namespace roomprobe::nn
