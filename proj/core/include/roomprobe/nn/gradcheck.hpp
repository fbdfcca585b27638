#pragma once

#include <functional>
#include <string>
#include <vector>

#include "roomprobe/nn/autograd.hpp"

namespace roomprobe::nn {

/// Central-difference verification of reverse-mode gradients, 64-bit only.
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;  // "leaf[i]: analytic=..., fd=..."
  bool ok(double tol) const { return max_rel_err < tol; }
};

/// `f` rebuilds the scalar graph from the current leaf values each call.
/// Relative error is |analytic - fd| / max(1, |analytic|, |fd|).
GradCheckResult gradcheck(const std::function<VarD()>& f, std::vector<VarD> leaves, double h = 1e-5);

}  // namespace roomprobe::nn
