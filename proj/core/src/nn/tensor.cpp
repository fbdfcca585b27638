#include "roomprobe/nn/tensor.hpp"

// Header-only types; this TU pins explicit instantiations used across the
// library so debug symbols have a home.
namespace roomprobe::nn {
template struct Tensor<float>;
template struct Tensor<double>;
}  // namespace roomprobe::nn
