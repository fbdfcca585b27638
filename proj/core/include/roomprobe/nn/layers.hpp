#pragma once

#include <string>
#include <utility>
#include <vector>

#include "roomprobe/nn/autograd.hpp"
#include "roomprobe/nn/rng.hpp"
#include "roomprobe/nn/tensor.hpp"

namespace roomprobe::nn {

/// Orthogonal matrix [rows, cols] scaled by gain (QR of a Gaussian draw).
template <class T>
Tensor<T> orthogonal_init(int rows, int cols, T gain, Rng& rng);

/// uniform(-1/sqrt(d), 1/sqrt(d)) per entry, the embedding-table scheme.
template <class T>
Tensor<T> embedding_init(int vocab, int d, Rng& rng);

/// Named parameter registry; the single mutable store during training.
template <class T>
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Var<T>> vars;

  Var<T> add(const std::string& name, Tensor<T> init) {
    names.push_back(name);
    vars.push_back(Var<T>::leaf(std::move(init), true));
    return vars.back();
  }
  void zero_grad() {
    for (auto& v : vars) v.zero_grad();
  }
  int64_t count() const {
    int64_t n = 0;
    for (const auto& v : vars) n += v.value().numel();
    return n;
  }
};

template <class T>
struct LinearLayer {
  Var<T> W, b;
  static LinearLayer init(ParamSet<T>& ps, const std::string& name, int out, int in, T gain, Rng& rng) {
    LinearLayer l;
    l.W = ps.add(name + ".W", orthogonal_init<T>(out, in, gain, rng));
    l.b = ps.add(name + ".b", Tensor<T>::zeros({out}));
    return l;
  }
  Var<T> operator()(const Var<T>& x) const { return linear(x, W, b); }
};

template <class T>
struct Conv3x3Layer {
  Var<T> K, b;
  static Conv3x3Layer init(ParamSet<T>& ps, const std::string& name, int out_ch, int in_ch, T gain, Rng& rng) {
    Conv3x3Layer l;
    Tensor<T> k = orthogonal_init<T>(out_ch, in_ch * 9, gain, rng);
    k.shape = {out_ch, in_ch, 3, 3};
    l.K = ps.add(name + ".K", std::move(k));
    l.b = ps.add(name + ".b", Tensor<T>::zeros({out_ch}));
    return l;
  }
  Var<T> operator()(const Var<T>& x) const { return conv2d_3x3(x, K, b); }
};

template <class T>
struct EmbeddingLayer {
  Var<T> table;
  static EmbeddingLayer init(ParamSet<T>& ps, const std::string& name, int vocab, int d, Rng& rng) {
    EmbeddingLayer l;
    l.table = ps.add(name + ".table", embedding_init<T>(vocab, d, rng));
    return l;
  }
  Var<T> operator()(const IntTensor& ids) const { return embedding(ids, table); }
};

template <class T>
struct LstmCell {
  Var<T> Wx, Wh, b;
  int state = 0;
  /// Orthogonal gain 1 for both weight blocks; forget-gate bias starts at 1.
  static LstmCell init(ParamSet<T>& ps, const std::string& name, int in, int state, Rng& rng);
  std::pair<Var<T>, Var<T>> step(const Var<T>& x, const Var<T>& h, const Var<T>& c) const {
    return lstm_step(x, h, c, Wx, Wh, b);
  }
};

}  // namespace roomprobe::nn
