#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace roomprobe::nn {

inline int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor extent must be positive, got " + std::to_string(d));
    n *= d;
  }
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

/// Dense row-major tensor. float for training, double for the verification suite.
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(static_cast<size_t>(numel_of(shape)), T(0)) {}
  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw std::invalid_argument("tensor data size " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  /// Leading extent; tensors fed to row-wise ops are treated as [rows, numel/rows].
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int64_t cols() const { return shape.empty() ? numel() : numel() / shape[0]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
  void check_finite(const char* what) const {
    if (!all_finite()) throw std::runtime_error(std::string("non-finite values in ") + what);
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Integer grids (glyph ids and class labels).
struct IntTensor {
  std::vector<int> shape;
  std::vector<int32_t> data;

  IntTensor() = default;
  explicit IntTensor(std::vector<int> s) : shape(std::move(s)), data(static_cast<size_t>(numel_of(shape)), 0) {}
  IntTensor(std::vector<int> s, std::vector<int32_t> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw std::invalid_argument("int tensor data size does not match shape " + shape_str(shape));
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }
};

}  // namespace roomprobe::nn
