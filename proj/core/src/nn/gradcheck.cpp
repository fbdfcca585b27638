#include "roomprobe/nn/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace roomprobe::nn {

GradCheckResult gradcheck(const std::function<VarD()>& f, std::vector<VarD> leaves, double h) {
  for (auto& l : leaves) l.zero_grad();
  VarD root = f();
  backward(root);

  std::vector<TensorD> analytic;
  for (auto& l : leaves) analytic.push_back(l.ensure_grad());

  GradCheckResult res;
  for (size_t k = 0; k < leaves.size(); ++k) {
    TensorD& vals = leaves[k].mutable_value();
    for (int64_t i = 0; i < vals.numel(); ++i) {
      const double orig = vals[i];
      double plus, minus;
      {
        NoGradGuard ng;
        vals[i] = orig + h;
        plus = f().value()[0];
        vals[i] = orig - h;
        minus = f().value()[0];
        vals[i] = orig;
      }
      const double fd = (plus - minus) / (2.0 * h);
      const double an = analytic[k][i];
      const double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        std::ostringstream os;
        os << "leaf[" << k << "][" << i << "]: analytic=" << an << " fd=" << fd;
        res.worst = os.str();
      }
    }
  }
  return res;
}

}  // namespace roomprobe::nn
