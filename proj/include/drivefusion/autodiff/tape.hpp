#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "drivefusion/core/error.hpp"
#include "drivefusion/core/rng.hpp"
#include "drivefusion/core/tensor.hpp"

namespace df {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape), trainable(train) {}

  void zero_grad() { grad.fill(T(0)); }
};

// Reverse-mode tape. Nodes are created in topological order by the op
// builders below; backward() walks them in reverse. One tape per batch.
template <typename T>
class Tape {
public:
  using Id = int;
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatMap = Eigen::Map<Mat>;
  using CMatMap = Eigen::Map<const Mat>;

  Id input(Tensor<T> v) {
    nodes_.push_back(Node{std::move(v)});
    return static_cast<Id>(nodes_.size() - 1);
  }

  Id param(Parameter<T>& p) {
    nodes_.push_back(Node{p.value});
    nodes_.back().param = &p;
    nodes_.back().requires_grad = p.trainable;
    return static_cast<Id>(nodes_.size() - 1);
  }

  bool needs_grad(Id id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

  // Smallest |input| seen by any relu on this tape. Gradient checks use it to
  // pick evaluation points where finite differences cannot cross a kink.
  T relu_margin = std::numeric_limits<T>::infinity();

  const Tensor<T>& val(Id id) const { return nodes_[static_cast<size_t>(id)].value; }

  Tensor<T>& grad(Id id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.has_grad) {
      n.grad = Tensor<T>(n.value.shape);
      n.has_grad = true;
    }
    return n.grad;
  }

  bool has_grad(Id id) const { return nodes_[static_cast<size_t>(id)].has_grad; }

  // ---- elementwise ----

  Id add(Id a, Id b) {
    check_same(a, b, "add");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
    return make(std::move(out), {a, b}, [](Tape& t, Id self, const std::vector<Id>& par) {
      const Tensor<T>& g = t.grad(self);
      accumulate(t.grad(par[0]), g);
      accumulate(t.grad(par[1]), g);
    });
  }

  Id sub(Id a, Id b) {
    check_same(a, b, "sub");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
    return make(std::move(out), {a, b}, [](Tape& t, Id self, const std::vector<Id>& par) {
      const Tensor<T>& g = t.grad(self);
      accumulate(t.grad(par[0]), g);
      Tensor<T>& gb = t.grad(par[1]);
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    });
  }

  Id mul(Id a, Id b) {
    check_same(a, b, "mul");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
    return make(std::move(out), {a, b}, [](Tape& t, Id self, const std::vector<Id>& par) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& va = t.val(par[0]);
      const Tensor<T>& vb2 = t.val(par[1]);
      Tensor<T>& ga = t.grad(par[0]);
      Tensor<T>& gb = t.grad(par[1]);
      for (int64_t i = 0; i < g.numel(); ++i) {
        ga[i] += g[i] * vb2[i];
        gb[i] += g[i] * va[i];
      }
    });
  }

  // k*x + c
  Id affine(Id x, T k, T c) {
    Tensor<T> out = val(x);
    for (auto& v : out.data) v = k * v + c;
    return make(std::move(out), {x}, [k](Tape& t, Id self, const std::vector<Id>& par) {
      const Tensor<T>& g = t.grad(self);
      Tensor<T>& gx = t.grad(par[0]);
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += k * g[i];
    });
  }

  Id relu(Id x) {
    const Tensor<T>& vx = val(x);
    for (const auto& v : vx.data) {
      T a = v < T(0) ? -v : v;
      if (a < relu_margin) relu_margin = a;
    }
    Tensor<T> out = vx;
    for (auto& v : out.data) v = v > T(0) ? v : T(0);
    return make(std::move(out), {x}, [](Tape& t, Id self, const std::vector<Id>& par) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& vx = t.val(par[0]);
      Tensor<T>& gx = t.grad(par[0]);
      for (int64_t i = 0; i < g.numel(); ++i)
        if (vx[i] > T(0)) gx[i] += g[i];
    });
  }

  Id sigmoid(Id x) {
    Tensor<T> out = val(x);
    for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
    return make(std::move(out), {x}, [](Tape& t, Id self, const std::vector<Id>& par) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& y = t.val(self);
      Tensor<T>& gx = t.grad(par[0]);
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
    });
  }

  Id tanh_(Id x) {
    Tensor<T> out = val(x);
    for (auto& v : out.data) v = std::tanh(v);
    return make(std::move(out), {x}, [](Tape& t, Id self, const std::vector<Id>& par) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& y = t.val(self);
      Tensor<T>& gx = t.grad(par[0]);
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (T(1) - y[i] * y[i]);
    });
  }

  Id square(Id x) {
    Tensor<T> out = val(x);
    for (auto& v : out.data) v = v * v;
    return make(std::move(out), {x}, [](Tape& t, Id self, const std::vector<Id>& par) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& vx = t.val(par[0]);
      Tensor<T>& gx = t.grad(par[0]);
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += T(2) * g[i] * vx[i];
    });
  }

  // Inverted dropout with an explicit rng; identity when p == 0.
  Id dropout(Id x, double p, Pcg32& rng) {
    if (p <= 0.0) return x;
    const Tensor<T>& vx = val(x);
    Tensor<T> mask(vx.shape);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (auto& m : mask.data) m = rng.uniform() >= p ? keep_scale : T(0);
    Tensor<T> out = vx;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
    return make(std::move(out), {x},
                [mask = std::move(mask)](Tape& t, Id self, const std::vector<Id>& par) {
                  const Tensor<T>& g = t.grad(self);
                  Tensor<T>& gx = t.grad(par[0]);
                  for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * mask[i];
                });
  }

  // ---- reductions and shape ----

  Id mean_all(Id x) {
    const Tensor<T>& vx = val(x);
    T acc = T(0);
    for (const auto& v : vx.data) acc += v;
    int64_t n = vx.numel();
    Tensor<T> out({1});
    out[0] = acc / static_cast<T>(n);
    return make(std::move(out), {x}, [n](Tape& t, Id self, const std::vector<Id>& par) {
      T g = t.grad(self)[0] / static_cast<T>(n);
      Tensor<T>& gx = t.grad(par[0]);
      for (auto& v : gx.data) v += g;
    });
  }

  Id reshape(Id x, std::vector<int64_t> shape) {
    Tensor<T> out = val(x).reshaped(shape);
    return make(std::move(out), {x}, [](Tape& t, Id self, const std::vector<Id>& par) {
      const Tensor<T>& g = t.grad(self);
      Tensor<T>& gx = t.grad(par[0]);
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    });
  }

  // Concatenate along axis 1. All inputs share rank, dim 0, and dims >= 2.
  Id concat_axis1(const std::vector<Id>& xs) {
    if (xs.empty()) throw DataError("concat: no inputs");
    const Tensor<T>& first = val(xs[0]);
    int64_t outer = first.dim(0);
    int64_t inner = 1;
    for (int i = 2; i < first.rank(); ++i) inner *= first.dim(i);
    int64_t total1 = 0;
    for (Id id : xs) {
      const Tensor<T>& v = val(id);
      if (v.dim(0) != outer) throw DataError("concat: batch dims differ");
      total1 += v.dim(1);
    }
    std::vector<int64_t> oshape = first.shape;
    oshape[1] = total1;
    Tensor<T> out(oshape);
    int64_t offset = 0;
    for (Id id : xs) {
      const Tensor<T>& v = val(id);
      int64_t block = v.dim(1) * inner;
      for (int64_t b = 0; b < outer; ++b)
        std::copy_n(v.ptr() + b * block, block, out.ptr() + b * total1 * inner + offset * inner);
      offset += v.dim(1);
    }
    return make(std::move(out), xs, [inner, total1](Tape& t, Id self, const std::vector<Id>& par) {
      const Tensor<T>& g = t.grad(self);
      int64_t outer2 = g.dim(0);
      int64_t offset2 = 0;
      for (Id id : par) {
        Tensor<T>& gx = t.grad(id);
        int64_t block = gx.shape[1] * inner;
        for (int64_t b = 0; b < outer2; ++b) {
          const T* src = g.ptr() + b * total1 * inner + offset2 * inner;
          T* dst = gx.ptr() + b * block;
          for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
        }
        offset2 += gx.shape[1];
      }
    });
  }

  Id slice_axis1(Id x, int64_t start, int64_t len) {
    const Tensor<T>& v = val(x);
    int64_t outer = v.dim(0);
    int64_t inner = 1;
    for (int i = 2; i < v.rank(); ++i) inner *= v.dim(i);
    int64_t full = v.dim(1);
    if (start < 0 || start + len > full) throw DataError("slice: out of range");
    std::vector<int64_t> oshape = v.shape;
    oshape[1] = len;
    Tensor<T> out(oshape);
    for (int64_t b = 0; b < outer; ++b)
      std::copy_n(v.ptr() + (b * full + start) * inner, len * inner, out.ptr() + b * len * inner);
    return make(std::move(out), {x},
                [start, len, inner, full](Tape& t, Id self, const std::vector<Id>& par) {
                  const Tensor<T>& g = t.grad(self);
                  Tensor<T>& gx = t.grad(par[0]);
                  int64_t outer2 = g.dim(0);
                  for (int64_t b = 0; b < outer2; ++b) {
                    const T* src = g.ptr() + b * len * inner;
                    T* dst = gx.ptr() + (b * full + start) * inner;
                    for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                  }
                });
  }

  // ---- dense / conv ----

  // x:[B,I] w:[O,I] b:[O] or -1 -> [B,O]
  Id linear(Id x, Id w, Id b = -1) {
    const Tensor<T>& vx = val(x);
    const Tensor<T>& vw = val(w);
    if (vx.rank() != 2 || vw.rank() != 2 || vx.dim(1) != vw.dim(1))
      throw DataError(strfmt("linear: shape mismatch %s vs %s", vx.shape_str().c_str(),
                             vw.shape_str().c_str()));
    int64_t B = vx.dim(0), I = vx.dim(1), O = vw.dim(0);
    Tensor<T> out({B, O});
    CMatMap X(vx.ptr(), B, I), W(vw.ptr(), O, I);
    MatMap Y(out.ptr(), B, O);
    Y.noalias() = X * W.transpose();
    if (b >= 0) {
      const Tensor<T>& vb = val(b);
      for (int64_t r = 0; r < B; ++r)
        for (int64_t c = 0; c < O; ++c) out[r * O + c] += vb[c];
    }
    std::vector<Id> parents = b >= 0 ? std::vector<Id>{x, w, b} : std::vector<Id>{x, w};
    return make(std::move(out), parents, [B, I, O](Tape& t, Id self, const std::vector<Id>& par) {
      const Tensor<T>& g = t.grad(self);
      CMatMap G(g.ptr(), B, O);
      CMatMap X2(t.val(par[0]).ptr(), B, I);
      CMatMap W2(t.val(par[1]).ptr(), O, I);
      if (t.needs_grad(par[0])) {
        MatMap GX(t.grad(par[0]).ptr(), B, I);
        GX.noalias() += G * W2;
      }
      {
        MatMap GW(t.grad(par[1]).ptr(), O, I);
        GW.noalias() += G.transpose() * X2;
      }
      if (par.size() == 3) {
        Tensor<T>& gb = t.grad(par[2]);
        for (int64_t r = 0; r < B; ++r)
          for (int64_t c = 0; c < O; ++c) gb[c] += g[r * O + c];
      }
    });
  }

  // x:[B,C,H,W] w:[O,C,kh,kw] b:[O] or -1; zero padding.
  Id conv2d(Id x, Id w, Id b, int stride, int pad) {
    const Tensor<T>& vx = val(x);
    const Tensor<T>& vw = val(w);
    if (vx.rank() != 4 || vw.rank() != 4 || vx.dim(1) != vw.dim(1))
      throw DataError(strfmt("conv2d: shape mismatch %s vs %s", vx.shape_str().c_str(),
                             vw.shape_str().c_str()));
    const int64_t B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    const int64_t O = vw.dim(0), kh = vw.dim(2), kw = vw.dim(3);
    const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho < 1 || Wo < 1) throw DataError("conv2d: output would be empty");
    Tensor<T> out({B, O, Ho, Wo});
    const int64_t K = C * kh * kw, P = Ho * Wo;
    std::vector<T> col(static_cast<size_t>(K * P));
    CMatMap Wm(vw.ptr(), O, K);
    for (int64_t bi = 0; bi < B; ++bi) {
      im2col(vx.ptr() + bi * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
      CMatMap Cm(col.data(), K, P);
      MatMap Ym(out.ptr() + bi * O * P, O, P);
      Ym.noalias() = Wm * Cm;
    }
    if (b >= 0) {
      const Tensor<T>& vb = val(b);
      for (int64_t bi = 0; bi < B; ++bi)
        for (int64_t o = 0; o < O; ++o) {
          T bias = vb[o];
          T* dst = out.ptr() + (bi * O + o) * P;
          for (int64_t i = 0; i < P; ++i) dst[i] += bias;
        }
    }
    std::vector<Id> parents = b >= 0 ? std::vector<Id>{x, w, b} : std::vector<Id>{x, w};
    auto meta = std::make_shared<ConvMeta>(ConvMeta{B, C, H, W, O, kh, kw, Ho, Wo,
                                                    static_cast<int64_t>(stride),
                                                    static_cast<int64_t>(pad)});
    return make(std::move(out), parents, [meta](Tape& t, Id self, const std::vector<Id>& par) {
      conv2d_backward(t, self, par, *meta);
    });
  }

  Id maxpool2d(Id x, int k, int stride, int pad = 0) {
    const Tensor<T>& vx = val(x);
    const int64_t B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    const int64_t Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
    if (Ho < 1 || Wo < 1) throw DataError("maxpool2d: output would be empty");
    Tensor<T> out({B, C, Ho, Wo});
    std::vector<int64_t> arg(static_cast<size_t>(out.numel()));
    int64_t idx = 0;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c) {
        const T* plane = vx.ptr() + (b * C + c) * H * W;
        for (int64_t oy = 0; oy < Ho; ++oy)
          for (int64_t ox = 0; ox < Wo; ++ox, ++idx) {
            T best = T(0);
            int64_t besti = -1;
            for (int64_t dy = 0; dy < k; ++dy) {
              int64_t y = oy * stride + dy - pad;
              if (y < 0 || y >= H) continue;
              for (int64_t dx = 0; dx < k; ++dx) {
                int64_t xx = ox * stride + dx - pad;
                if (xx < 0 || xx >= W) continue;
                int64_t p = y * W + xx;
                if (besti < 0 || plane[p] > best) {
                  best = plane[p];
                  besti = p;
                }
              }
            }
            out[idx] = best;
            arg[static_cast<size_t>(idx)] = (b * C + c) * H * W + besti;
          }
      }
    return make(std::move(out), {x},
                [arg = std::move(arg)](Tape& t, Id self, const std::vector<Id>& par) {
                  const Tensor<T>& g = t.grad(self);
                  Tensor<T>& gx = t.grad(par[0]);
                  for (int64_t i = 0; i < g.numel(); ++i) gx[arg[static_cast<size_t>(i)]] += g[i];
                });
  }

  // Average pool to a fixed output grid (PyTorch adaptive bucketing).
  Id adaptive_avg_pool2d(Id x, int oh, int ow) {
    const Tensor<T>& vx = val(x);
    const int64_t B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    Tensor<T> out({B, C, oh, ow});
    int64_t idx = 0;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c) {
        const T* plane = vx.ptr() + (b * C + c) * H * W;
        for (int64_t oy = 0; oy < oh; ++oy)
          for (int64_t ox = 0; ox < ow; ++ox, ++idx) {
            auto [y0, y1] = bucket(oy, oh, H);
            auto [x0, x1] = bucket(ox, ow, W);
            T acc = T(0);
            for (int64_t y = y0; y < y1; ++y)
              for (int64_t xx = x0; xx < x1; ++xx) acc += plane[y * W + xx];
            out[idx] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
          }
      }
    const int64_t oh64 = oh, ow64 = ow;
    return make(std::move(out), {x},
                [B, C, H, W, oh64, ow64](Tape& t, Id self, const std::vector<Id>& par) {
                  const Tensor<T>& g = t.grad(self);
                  Tensor<T>& gx = t.grad(par[0]);
                  int64_t idx2 = 0;
                  for (int64_t b = 0; b < B; ++b)
                    for (int64_t c = 0; c < C; ++c) {
                      T* plane = gx.ptr() + (b * C + c) * H * W;
                      for (int64_t oy = 0; oy < oh64; ++oy)
                        for (int64_t ox = 0; ox < ow64; ++ox, ++idx2) {
                          auto [y0, y1] = bucket(oy, oh64, H);
                          auto [x0, x1] = bucket(ox, ow64, W);
                          T share = g[idx2] / static_cast<T>((y1 - y0) * (x1 - x0));
                          for (int64_t y = y0; y < y1; ++y)
                            for (int64_t xx = x0; xx < x1; ++xx) plane[y * W + xx] += share;
                        }
                    }
                });
  }

  // Batch norm over all axes except channel axis 1. Works for [B,F] and
  // [B,C,H,W]. Running stats live outside the tape and are updated here.
  Id batchnorm(Id x, Id gamma, Id beta, Parameter<T>& running_mean, Parameter<T>& running_var,
               bool training, double momentum = 0.1, double eps = 1e-5) {
    const Tensor<T>& vx = val(x);
    const int64_t C = vx.dim(1);
    const int64_t B = vx.dim(0);
    int64_t inner = 1;
    for (int i = 2; i < vx.rank(); ++i) inner *= vx.dim(i);
    const int64_t m = B * inner;

    Tensor<T> mean({C}), var({C});
    if (training) {
      for (int64_t c = 0; c < C; ++c) {
        T acc = T(0);
        for (int64_t b = 0; b < B; ++b) {
          const T* p = vx.ptr() + (b * C + c) * inner;
          for (int64_t i = 0; i < inner; ++i) acc += p[i];
        }
        mean[c] = acc / static_cast<T>(m);
        T vacc = T(0);
        for (int64_t b = 0; b < B; ++b) {
          const T* p = vx.ptr() + (b * C + c) * inner;
          for (int64_t i = 0; i < inner; ++i) {
            T d = p[i] - mean[c];
            vacc += d * d;
          }
        }
        var[c] = vacc / static_cast<T>(m);
      }
      const T mom = static_cast<T>(momentum);
      for (int64_t c = 0; c < C; ++c) {
        running_mean.value[c] = (T(1) - mom) * running_mean.value[c] + mom * mean[c];
        T unbiased = m > 1 ? var[c] * static_cast<T>(m) / static_cast<T>(m - 1) : var[c];
        running_var.value[c] = (T(1) - mom) * running_var.value[c] + mom * unbiased;
      }
    } else {
      mean = running_mean.value;
      var = running_var.value;
    }

    const Tensor<T>& vg = val(gamma);
    const Tensor<T>& vb = val(beta);
    Tensor<T> out(vx.shape);
    Tensor<T> xhat(vx.shape);
    std::vector<T> istd(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c) istd[static_cast<size_t>(c)] = T(1) / std::sqrt(var[c] + static_cast<T>(eps));
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c) {
        const T* p = vx.ptr() + (b * C + c) * inner;
        T* ph = xhat.ptr() + (b * C + c) * inner;
        T* po = out.ptr() + (b * C + c) * inner;
        for (int64_t i = 0; i < inner; ++i) {
          ph[i] = (p[i] - mean[c]) * istd[static_cast<size_t>(c)];
          po[i] = vg[c] * ph[i] + vb[c];
        }
      }

    auto saved = std::make_shared<BnSaved>();
    saved->xhat = std::move(xhat);
    saved->istd = std::move(istd);
    saved->training = training;
    saved->inner = inner;
    return make(std::move(out), {x, gamma, beta},
                [saved](Tape& t, Id self, const std::vector<Id>& par) {
                  bn_backward(t, self, par, *saved);
                });
  }

  void backward(Id root) {
    Node& r = nodes_[static_cast<size_t>(root)];
    if (r.value.numel() != 1) throw DataError("backward: root must be scalar");
    grad(root)[0] = T(1);
    for (Id i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.has_grad || !n.requires_grad) continue;
      if (n.backward) n.backward(*this, i, n.parents);
      if (n.param && n.param->trainable) {
        Tensor<T>& pg = n.param->grad;
        for (int64_t k = 0; k < pg.numel(); ++k) pg[k] += n.grad[k];
      }
    }
  }

  size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<Id> parents;
    std::function<void(Tape&, Id, const std::vector<Id>&)> backward;
    Parameter<T>* param = nullptr;
  };

  struct ConvMeta {
    int64_t B, C, H, W, O, kh, kw, Ho, Wo, stride, pad;
  };

  struct BnSaved {
    Tensor<T> xhat;
    std::vector<T> istd;
    bool training = true;
    int64_t inner = 1;
  };

  std::vector<Node> nodes_;

  Id make(Tensor<T> value, std::vector<Id> parents,
          std::function<void(Tape&, Id, const std::vector<Id>&)> bw) {
    bool req = false;
    for (Id p : parents) req = req || nodes_[static_cast<size_t>(p)].requires_grad;
    nodes_.push_back(Node{std::move(value)});
    nodes_.back().parents = std::move(parents);
    nodes_.back().backward = std::move(bw);
    nodes_.back().requires_grad = req;
    return static_cast<Id>(nodes_.size() - 1);
  }

  void check_same(Id a, Id b, const char* op) {
    if (!val(a).same_shape(val(b)))
      throw DataError(strfmt("%s: shape mismatch %s vs %s", op, val(a).shape_str().c_str(),
                             val(b).shape_str().c_str()));
  }

  static void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
    for (int64_t i = 0; i < src.numel(); ++i) dst[i] += src[i];
  }

  static std::pair<int64_t, int64_t> bucket(int64_t o, int64_t n_out, int64_t n_in) {
    int64_t a = (o * n_in) / n_out;
    int64_t b = ((o + 1) * n_in + n_out - 1) / n_out;
    if (b <= a) b = a + 1;
    return {a, b};
  }

  static void im2col(const T* img, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                     int64_t stride, int64_t pad, int64_t Ho, int64_t Wo, T* col) {
    const int64_t P = Ho * Wo;
    for (int64_t c = 0; c < C; ++c)
      for (int64_t dy = 0; dy < kh; ++dy)
        for (int64_t dx = 0; dx < kw; ++dx) {
          T* row = col + ((c * kh + dy) * kw + dx) * P;
          for (int64_t oy = 0; oy < Ho; ++oy) {
            int64_t y = oy * stride + dy - pad;
            T* dst = row + oy * Wo;
            if (y < 0 || y >= H) {
              std::fill_n(dst, Wo, T(0));
              continue;
            }
            const T* src = img + (c * H + y) * W;
            for (int64_t ox = 0; ox < Wo; ++ox) {
              int64_t x = ox * stride + dx - pad;
              dst[ox] = (x >= 0 && x < W) ? src[x] : T(0);
            }
          }
        }
  }

  static void col2im_add(const T* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                         int64_t stride, int64_t pad, int64_t Ho, int64_t Wo, T* img) {
    const int64_t P = Ho * Wo;
    for (int64_t c = 0; c < C; ++c)
      for (int64_t dy = 0; dy < kh; ++dy)
        for (int64_t dx = 0; dx < kw; ++dx) {
          const T* row = col + ((c * kh + dy) * kw + dx) * P;
          for (int64_t oy = 0; oy < Ho; ++oy) {
            int64_t y = oy * stride + dy - pad;
            if (y < 0 || y >= H) continue;
            T* dst = img + (c * H + y) * W;
            const T* src = row + oy * Wo;
            for (int64_t ox = 0; ox < Wo; ++ox) {
              int64_t x = ox * stride + dx - pad;
              if (x >= 0 && x < W) dst[x] += src[ox];
            }
          }
        }
  }

  static void conv2d_backward(Tape& t, Id self, const std::vector<Id>& par, const ConvMeta& mm) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& vx = t.val(par[0]);
    const Tensor<T>& vw = t.val(par[1]);
    const bool need_dx = t.needs_grad(par[0]);
    Tensor<T>& gw = t.grad(par[1]);
    const int64_t K = mm.C * mm.kh * mm.kw, P = mm.Ho * mm.Wo;
    std::vector<T> col(static_cast<size_t>(K * P));
    std::vector<T> dcol(need_dx ? static_cast<size_t>(K * P) : 0);
    CMatMap Wm(vw.ptr(), mm.O, K);
    MatMap GW(gw.ptr(), mm.O, K);
    for (int64_t bi = 0; bi < mm.B; ++bi) {
      CMatMap Gm(g.ptr() + bi * mm.O * P, mm.O, P);
      im2col(vx.ptr() + bi * mm.C * mm.H * mm.W, mm.C, mm.H, mm.W, mm.kh, mm.kw, mm.stride,
             mm.pad, mm.Ho, mm.Wo, col.data());
      CMatMap Cm(col.data(), K, P);
      GW.noalias() += Gm * Cm.transpose();
      if (need_dx) {
        MatMap Dm(dcol.data(), K, P);
        Dm.noalias() = Wm.transpose() * Gm;
        col2im_add(dcol.data(), mm.C, mm.H, mm.W, mm.kh, mm.kw, mm.stride, mm.pad, mm.Ho, mm.Wo,
                   t.grad(par[0]).ptr() + bi * mm.C * mm.H * mm.W);
      }
    }
    if (par.size() == 3) {
      Tensor<T>& gb = t.grad(par[2]);
      for (int64_t bi = 0; bi < mm.B; ++bi)
        for (int64_t o = 0; o < mm.O; ++o) {
          const T* src = g.ptr() + (bi * mm.O + o) * P;
          T acc = T(0);
          for (int64_t i = 0; i < P; ++i) acc += src[i];
          gb[o] += acc;
        }
    }
  }

  static void bn_backward(Tape& t, Id self, const std::vector<Id>& par, const BnSaved& s) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& vg = t.val(par[1]);
    Tensor<T>& gx = t.grad(par[0]);
    Tensor<T>& ggamma = t.grad(par[1]);
    Tensor<T>& gbeta = t.grad(par[2]);
    const int64_t B = g.dim(0), C = g.dim(1), inner = s.inner;
    const int64_t m = B * inner;
    for (int64_t c = 0; c < C; ++c) {
      T sum_dy = T(0), sum_dy_xhat = T(0);
      for (int64_t b = 0; b < B; ++b) {
        const T* pg = g.ptr() + (b * C + c) * inner;
        const T* ph = s.xhat.ptr() + (b * C + c) * inner;
        for (int64_t i = 0; i < inner; ++i) {
          sum_dy += pg[i];
          sum_dy_xhat += pg[i] * ph[i];
        }
      }
      ggamma[c] += sum_dy_xhat;
      gbeta[c] += sum_dy;
      const T istd = s.istd[static_cast<size_t>(c)];
      if (s.training) {
        const T k1 = vg[c] * istd;
        for (int64_t b = 0; b < B; ++b) {
          const T* pg = g.ptr() + (b * C + c) * inner;
          const T* ph = s.xhat.ptr() + (b * C + c) * inner;
          T* px = gx.ptr() + (b * C + c) * inner;
          for (int64_t i = 0; i < inner; ++i)
            px[i] += k1 * (pg[i] - sum_dy / static_cast<T>(m) -
                           ph[i] * sum_dy_xhat / static_cast<T>(m));
        }
      } else {
        const T k1 = vg[c] * istd;
        for (int64_t b = 0; b < B; ++b) {
          const T* pg = g.ptr() + (b * C + c) * inner;
          T* px = gx.ptr() + (b * C + c) * inner;
          for (int64_t i = 0; i < inner; ++i) px[i] += k1 * pg[i];
        }
      }
    }
  }
};

}  // namespace df
