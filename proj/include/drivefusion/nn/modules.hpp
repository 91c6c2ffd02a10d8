#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "drivefusion/autodiff/tape.hpp"
#include "drivefusion/core/rng.hpp"
#include "drivefusion/core/strings.hpp"

namespace df {

enum class Init { zeros, ones, he_uniform, recurrent_uniform };

// Owns all parameters of a model. Addresses are stable (unique_ptr) because
// tape nodes and optimizer state refer to them. Initialization draws an rng
// stream from (seed, name) so it is independent of registration order.
template <typename T>
struct ParamStore {
  uint64_t seed = 0;
  std::vector<std::unique_ptr<Parameter<T>>> params;

  Parameter<T>* add(const std::string& name, std::vector<int64_t> shape, Init init,
                    bool trainable = true) {
    for (const auto& p : params)
      if (p->name == name) throw DataError("param store: duplicate name " + name);
    auto param = std::make_unique<Parameter<T>>(name, Tensor<T>(shape), trainable);
    Tensor<T>& v = param->value;
    Pcg32 rng(mix_seed(seed, fnv1a64(name), 0x9A7A));
    switch (init) {
      case Init::zeros:
        break;
      case Init::ones:
        v.fill(T(1));
        break;
      case Init::he_uniform: {
        int64_t fan_in = 1;
        for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
        double bound = std::sqrt(6.0 / static_cast<double>(std::max<int64_t>(1, fan_in)));
        for (auto& x : v.data) x = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case Init::recurrent_uniform: {
        double bound = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(1, shape.back())));
        for (auto& x : v.data) x = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
    }
    params.push_back(std::move(param));
    return params.back().get();
  }

  Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params)
      if (p->name == name) return p.get();
    return nullptr;
  }

  int64_t count_trainable() const {
    int64_t n = 0;
    for (const auto& p : params)
      if (p->trainable) n += p->value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& p : params) p->zero_grad();
  }
};

template <typename T>
struct LinearM {
  Parameter<T>* w = nullptr;
  Parameter<T>* b = nullptr;

  static LinearM create(ParamStore<T>& ps, const std::string& name, int64_t in, int64_t out,
                        bool bias = true) {
    LinearM m;
    m.w = ps.add(name + ".w", {out, in}, Init::he_uniform);
    if (bias) m.b = ps.add(name + ".b", {out}, Init::zeros);
    return m;
  }

  int forward(Tape<T>& t, int x) const {
    return t.linear(x, t.param(*w), b ? t.param(*b) : -1);
  }
};

template <typename T>
struct Conv2dM {
  Parameter<T>* w = nullptr;
  Parameter<T>* b = nullptr;
  int stride = 1, pad = 0;

  static Conv2dM create(ParamStore<T>& ps, const std::string& name, int64_t in_ch, int64_t out_ch,
                        int k, int stride, int pad, bool bias = true) {
    Conv2dM m;
    m.w = ps.add(name + ".w", {out_ch, in_ch, k, k}, Init::he_uniform);
    if (bias) m.b = ps.add(name + ".b", {out_ch}, Init::zeros);
    m.stride = stride;
    m.pad = pad;
    return m;
  }

  int forward(Tape<T>& t, int x) const {
    return t.conv2d(x, t.param(*w), b ? t.param(*b) : -1, stride, pad);
  }
};

template <typename T>
struct BatchNormM {
  Parameter<T>* gamma = nullptr;
  Parameter<T>* beta = nullptr;
  Parameter<T>* running_mean = nullptr;
  Parameter<T>* running_var = nullptr;

  static BatchNormM create(ParamStore<T>& ps, const std::string& name, int64_t channels) {
    BatchNormM m;
    m.gamma = ps.add(name + ".gamma", {channels}, Init::ones);
    m.beta = ps.add(name + ".beta", {channels}, Init::zeros);
    m.running_mean = ps.add(name + ".running_mean", {channels}, Init::zeros, false);
    m.running_var = ps.add(name + ".running_var", {channels}, Init::ones, false);
    return m;
  }

  int forward(Tape<T>& t, int x, bool training) const {
    return t.batchnorm(x, t.param(*gamma), t.param(*beta), *running_mean, *running_var, training);
  }
};

// Single LSTM layer applied step by step; gate order (i, f, g, o).
template <typename T>
struct LstmM {
  Parameter<T>* wx = nullptr;
  Parameter<T>* wh = nullptr;
  Parameter<T>* b = nullptr;
  int64_t hidden = 0;

  static LstmM create(ParamStore<T>& ps, const std::string& name, int64_t in, int64_t hidden) {
    LstmM m;
    m.hidden = hidden;
    m.wx = ps.add(name + ".wx", {4 * hidden, in}, Init::recurrent_uniform);
    m.wh = ps.add(name + ".wh", {4 * hidden, hidden}, Init::recurrent_uniform);
    m.b = ps.add(name + ".b", {4 * hidden}, Init::zeros);
    return m;
  }

  std::pair<int, int> step(Tape<T>& t, int x, int h, int c) const {
    int z = t.add(t.linear(x, t.param(*wx), t.param(*b)), t.linear(h, t.param(*wh)));
    int gi = t.sigmoid(t.slice_axis1(z, 0, hidden));
    int gf = t.sigmoid(t.slice_axis1(z, hidden, hidden));
    int gg = t.tanh_(t.slice_axis1(z, 2 * hidden, hidden));
    int go = t.sigmoid(t.slice_axis1(z, 3 * hidden, hidden));
    int c_new = t.add(t.mul(gf, c), t.mul(gi, gg));
    int h_new = t.mul(go, t.tanh_(c_new));
    return {h_new, c_new};
  }
};

// Single GRU layer; gate order (r, z, n), candidate uses r outside the
// hidden-to-hidden product (the usual fused-gate convention).
template <typename T>
struct GruM {
  Parameter<T>* wx = nullptr;
  Parameter<T>* wh = nullptr;
  Parameter<T>* bx = nullptr;
  Parameter<T>* bh = nullptr;
  int64_t hidden = 0;

  static GruM create(ParamStore<T>& ps, const std::string& name, int64_t in, int64_t hidden) {
    GruM m;
    m.hidden = hidden;
    m.wx = ps.add(name + ".wx", {3 * hidden, in}, Init::recurrent_uniform);
    m.wh = ps.add(name + ".wh", {3 * hidden, hidden}, Init::recurrent_uniform);
    m.bx = ps.add(name + ".bx", {3 * hidden}, Init::zeros);
    m.bh = ps.add(name + ".bh", {3 * hidden}, Init::zeros);
    return m;
  }

  int step(Tape<T>& t, int x, int h) const {
    int gx = t.linear(x, t.param(*wx), t.param(*bx));
    int gh = t.linear(h, t.param(*wh), t.param(*bh));
    int r = t.sigmoid(t.add(t.slice_axis1(gx, 0, hidden), t.slice_axis1(gh, 0, hidden)));
    int z = t.sigmoid(t.add(t.slice_axis1(gx, hidden, hidden), t.slice_axis1(gh, hidden, hidden)));
    int n = t.tanh_(t.add(t.slice_axis1(gx, 2 * hidden, hidden),
                          t.mul(r, t.slice_axis1(gh, 2 * hidden, hidden))));
    // h' = (1-z)*n + z*h
    return t.add(t.mul(t.affine(z, T(-1), T(1)), n), t.mul(z, h));
  }
};

// Regressor head: blocks of (linear, optional batch norm, relu, optional
// dropout), then a final linear to one output.
template <typename T>
struct HeadM {
  std::vector<LinearM<T>> blocks;
  std::vector<BatchNormM<T>> bns;
  LinearM<T> out;
  double dropout = 0;
  bool use_bn = false;

  static HeadM create(ParamStore<T>& ps, const std::string& name, int64_t in,
                      const std::vector<int64_t>& dims, double dropout, bool use_bn) {
    HeadM h;
    h.dropout = dropout;
    h.use_bn = use_bn;
    int64_t d = in;
    for (size_t i = 0; i < dims.size(); ++i) {
      h.blocks.push_back(LinearM<T>::create(ps, strfmt("%s.fc%zu", name.c_str(), i), d, dims[i]));
      if (use_bn) h.bns.push_back(BatchNormM<T>::create(ps, strfmt("%s.bn%zu", name.c_str(), i), dims[i]));
      d = dims[i];
    }
    h.out = LinearM<T>::create(ps, name + ".out", d, 1);
    return h;
  }

  int forward(Tape<T>& t, int x, bool training, Pcg32& rng) const {
    for (size_t i = 0; i < blocks.size(); ++i) {
      x = blocks[i].forward(t, x);
      if (use_bn) x = bns[i].forward(t, x, training);
      x = t.relu(x);
      if (training && dropout > 0) x = t.dropout(x, dropout, rng);
    }
    return out.forward(t, x);
  }
};

}  // namespace df
