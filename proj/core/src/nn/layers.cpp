#include "roomprobe/nn/layers.hpp"

#include <Eigen/Dense>

namespace roomprobe::nn {

template <class T>
Tensor<T> orthogonal_init(int rows, int cols, T gain, Rng& rng) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  const int big = std::max(rows, cols);
  const int small = std::min(rows, cols);
  Mat a(big, small);
  for (int i = 0; i < big; ++i)
    for (int j = 0; j < small; ++j) a(i, j) = static_cast<T>(rng.normal());
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ() * Mat::Identity(big, small);
  // Fix signs so the factorization is unique.
  Mat r = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j)
    if (r(j, j) < T(0)) q.col(j) = -q.col(j);

  Tensor<T> out({rows, cols});
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out[static_cast<int64_t>(i) * cols + j] = gain * (rows >= cols ? q(i, j) : q(j, i));
  return out;
}

template <class T>
Tensor<T> embedding_init(int vocab, int d, Rng& rng) {
  Tensor<T> out({vocab, d});
  const double lim = 1.0 / std::sqrt(static_cast<double>(d));
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(rng.range(-lim, lim));
  return out;
}

template <class T>
LstmCell<T> LstmCell<T>::init(ParamSet<T>& ps, const std::string& name, int in, int state, Rng& rng) {
  LstmCell l;
  l.state = state;
  l.Wx = ps.add(name + ".Wx", orthogonal_init<T>(4 * state, in, T(1), rng));
  l.Wh = ps.add(name + ".Wh", orthogonal_init<T>(4 * state, state, T(1), rng));
  Tensor<T> bias = Tensor<T>::zeros({4 * state});
  for (int i = state; i < 2 * state; ++i) bias[i] = T(1);
  l.b = ps.add(name + ".b", std::move(bias));
  return l;
}

template Tensor<float> orthogonal_init<float>(int, int, float, Rng&);
template Tensor<double> orthogonal_init<double>(int, int, double, Rng&);
template Tensor<float> embedding_init<float>(int, int, Rng&);
template Tensor<double> embedding_init<double>(int, int, Rng&);
template struct LstmCell<float>;
template struct LstmCell<double>;

}  // namespace roomprobe::nn
