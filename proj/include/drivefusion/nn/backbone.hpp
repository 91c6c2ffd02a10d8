#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "drivefusion/nn/modules.hpp"

namespace df {

enum class Family { toy_conv, residual34, residual50, residual152, dense121, dense201 };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::toy_conv: return "toy_conv";
    case Family::residual34: return "residual34";
    case Family::residual50: return "residual50";
    case Family::residual152: return "residual152";
    case Family::dense121: return "dense121";
    default: return "dense201";
  }
}

inline Family family_from_name(const std::string& s) {
  for (Family f : {Family::toy_conv, Family::residual34, Family::residual50, Family::residual152,
                   Family::dense121, Family::dense201})
    if (s == family_name(f)) return f;
  throw UsageError("unknown backbone family: " + s);
}

struct BackboneSpec {
  Family family = Family::toy_conv;
  bool pretrained = false;
  int in_channels = 3;
  int feature_dim = 0;  // 0: family default (after scaling)
};

inline int64_t scaled_dim(int64_t base, double scale) {
  auto v = static_cast<int64_t>(std::llround(static_cast<double>(base) * scale));
  return v < 1 ? 1 : v;
}

namespace detail {

template <typename T>
struct ResidualBlock {
  // basic: conv3-bn-relu-conv3-bn (+skip); bottleneck: conv1-bn-relu-conv3-bn-relu-conv1-bn
  std::vector<Conv2dM<T>> convs;
  std::vector<BatchNormM<T>> bns;
  bool has_down = false;
  Conv2dM<T> down_conv;
  BatchNormM<T> down_bn;

  int forward(Tape<T>& t, int x, bool training) const {
    int identity = x;
    int y = x;
    for (size_t i = 0; i < convs.size(); ++i) {
      y = convs[i].forward(t, y);
      y = bns[i].forward(t, y, training);
      if (i + 1 < convs.size()) y = t.relu(y);
    }
    if (has_down) {
      identity = down_conv.forward(t, identity);
      identity = down_bn.forward(t, identity, training);
    }
    return t.relu(t.add(y, identity));
  }
};

template <typename T>
struct DenseLayer {
  BatchNormM<T> bn1, bn2;
  Conv2dM<T> conv1, conv2;

  int forward(Tape<T>& t, int x, bool training) const {
    int y = t.relu(bn1.forward(t, x, training));
    y = conv1.forward(t, y);
    y = t.relu(bn2.forward(t, y, training));
    y = conv2.forward(t, y);
    return t.concat_axis1({x, y});
  }
};

template <typename T>
struct DenseTransition {
  BatchNormM<T> bn;
  Conv2dM<T> conv;

  int forward(Tape<T>& t, int x, bool training) const {
    int y = conv.forward(t, t.relu(bn.forward(t, x, training)));
    const auto& shape = t.val(y).shape;
    int oh = static_cast<int>(std::max<int64_t>(1, shape[2] / 2));
    int ow = static_cast<int>(std::max<int64_t>(1, shape[3] / 2));
    return t.adaptive_avg_pool2d(y, oh, ow);
  }
};

}  // namespace detail

// A convolutional feature extractor mapping [B,C,H,W] -> [B,feature_dim].
// toy_conv is the desk-scale default; the named deep families mirror the
// classic residual/densely-connected designs at a configurable width scale.
template <typename T>
struct Backbone {
  BackboneSpec spec;
  double scale = 1.0;
  int64_t feature_dim = 0;

  // toy_conv
  std::vector<Conv2dM<T>> toy_convs;
  LinearM<T> toy_proj;

  // residual / dense shared stem
  Conv2dM<T> stem_conv;
  BatchNormM<T> stem_bn;

  // residual
  std::vector<detail::ResidualBlock<T>> res_blocks;

  // dense
  std::vector<detail::DenseLayer<T>> dense_layers;
  std::vector<int> dense_block_sizes;
  std::vector<detail::DenseTransition<T>> dense_transitions;
  BatchNormM<T> dense_final_bn;

  Parameter<T>* first_conv_weight() const {
    if (spec.family == Family::toy_conv) return toy_convs.front().w;
    return stem_conv.w;
  }

  int forward(Tape<T>& t, int x, bool training, Pcg32& /*rng*/) const {
    const auto& in_shape = t.val(x).shape;
    if (in_shape.size() != 4 || in_shape[1] != spec.in_channels)
      throw DataError(strfmt("backbone %s expects [B,%d,H,W], got %s", family_name(spec.family),
                             spec.in_channels, t.val(x).shape_str().c_str()));
    switch (spec.family) {
      case Family::toy_conv: {
        int y = x;
        for (const auto& conv : toy_convs) y = t.relu(conv.forward(t, y));
        y = t.adaptive_avg_pool2d(y, 4, 10);
        const auto& s = t.val(y).shape;
        y = t.reshape(y, {s[0], s[1] * s[2] * s[3]});
        return t.relu(toy_proj.forward(t, y));
      }
      case Family::residual34:
      case Family::residual50:
      case Family::residual152: {
        int y = t.relu(stem_bn.forward(t, stem_conv.forward(t, x), training));
        y = t.maxpool2d(y, 3, 2, 1);
        for (const auto& blk : res_blocks) y = blk.forward(t, y, training);
        y = t.adaptive_avg_pool2d(y, 1, 1);
        const auto& s = t.val(y).shape;
        return t.reshape(y, {s[0], s[1]});
      }
      default: {  // dense families
        int y = t.relu(stem_bn.forward(t, stem_conv.forward(t, x), training));
        y = t.maxpool2d(y, 3, 2, 1);
        size_t layer_idx = 0;
        for (size_t b = 0; b < dense_block_sizes.size(); ++b) {
          for (int i = 0; i < dense_block_sizes[b]; ++i)
            y = dense_layers[layer_idx++].forward(t, y, training);
          if (b + 1 < dense_block_sizes.size()) y = dense_transitions[b].forward(t, y, training);
        }
        y = t.relu(dense_final_bn.forward(t, y, training));
        y = t.adaptive_avg_pool2d(y, 1, 1);
        const auto& s = t.val(y).shape;
        return t.reshape(y, {s[0], s[1]});
      }
    }
  }
};

namespace detail {

template <typename T>
ResidualBlock<T> make_basic_block(ParamStore<T>& ps, const std::string& name, int64_t in,
                                  int64_t out, int stride) {
  ResidualBlock<T> b;
  b.convs.push_back(Conv2dM<T>::create(ps, name + ".conv1", in, out, 3, stride, 1, false));
  b.bns.push_back(BatchNormM<T>::create(ps, name + ".bn1", out));
  b.convs.push_back(Conv2dM<T>::create(ps, name + ".conv2", out, out, 3, 1, 1, false));
  b.bns.push_back(BatchNormM<T>::create(ps, name + ".bn2", out));
  if (stride != 1 || in != out) {
    b.has_down = true;
    b.down_conv = Conv2dM<T>::create(ps, name + ".down", in, out, 1, stride, 0, false);
    b.down_bn = BatchNormM<T>::create(ps, name + ".down_bn", out);
  }
  return b;
}

template <typename T>
ResidualBlock<T> make_bottleneck_block(ParamStore<T>& ps, const std::string& name, int64_t in,
                                       int64_t mid, int stride) {
  const int64_t out = mid * 4;
  ResidualBlock<T> b;
  b.convs.push_back(Conv2dM<T>::create(ps, name + ".conv1", in, mid, 1, 1, 0, false));
  b.bns.push_back(BatchNormM<T>::create(ps, name + ".bn1", mid));
  b.convs.push_back(Conv2dM<T>::create(ps, name + ".conv2", mid, mid, 3, stride, 1, false));
  b.bns.push_back(BatchNormM<T>::create(ps, name + ".bn2", mid));
  b.convs.push_back(Conv2dM<T>::create(ps, name + ".conv3", mid, out, 1, 1, 0, false));
  b.bns.push_back(BatchNormM<T>::create(ps, name + ".bn3", out));
  if (stride != 1 || in != out) {
    b.has_down = true;
    b.down_conv = Conv2dM<T>::create(ps, name + ".down", in, out, 1, stride, 0, false);
    b.down_bn = BatchNormM<T>::create(ps, name + ".down_bn", out);
  }
  return b;
}

}  // namespace detail

inline void warn_pretrained_unavailable(const std::string& where) {
  std::fprintf(stderr,
               "warning: no pretrained checkpoint available for %s; using random initialization\n",
               where.c_str());
}

template <typename T>
Backbone<T> build_backbone(ParamStore<T>& ps, const std::string& name, BackboneSpec spec,
                           double scale) {
  Backbone<T> bb;
  bb.spec = spec;
  bb.scale = scale;
  if (spec.pretrained) warn_pretrained_unavailable(name + " (" + family_name(spec.family) + ")");

  switch (spec.family) {
    case Family::toy_conv: {
      const int64_t widths[4] = {scaled_dim(16, scale), scaled_dim(32, scale), scaled_dim(64, scale),
                                 scaled_dim(128, scale)};
      int64_t in = spec.in_channels;
      for (int i = 0; i < 4; ++i) {
        bb.toy_convs.push_back(
            Conv2dM<T>::create(ps, strfmt("%s.conv%d", name.c_str(), i), in, widths[i], 3, 2, 1));
        in = widths[i];
      }
      bb.feature_dim = spec.feature_dim > 0 ? spec.feature_dim : scaled_dim(256, scale);
      bb.toy_proj = LinearM<T>::create(ps, name + ".proj", widths[3] * 40, bb.feature_dim);
      break;
    }
    case Family::residual34:
    case Family::residual50:
    case Family::residual152: {
      const bool bottleneck = spec.family != Family::residual34;
      std::vector<int> counts;
      if (spec.family == Family::residual34)
        counts = {3, 4, 6, 3};
      else if (spec.family == Family::residual50)
        counts = {3, 4, 6, 3};
      else
        counts = {3, 8, 36, 3};
      const int64_t base = scaled_dim(64, scale);
      bb.stem_conv = Conv2dM<T>::create(ps, name + ".stem", spec.in_channels, base, 7, 2, 3, false);
      bb.stem_bn = BatchNormM<T>::create(ps, name + ".stem_bn", base);
      int64_t in = base;
      for (int stage = 0; stage < 4; ++stage) {
        const int64_t width = scaled_dim(64LL << stage, scale);
        for (int i = 0; i < counts[static_cast<size_t>(stage)]; ++i) {
          int stride = (stage > 0 && i == 0) ? 2 : 1;
          std::string bname = strfmt("%s.layer%d.%d", name.c_str(), stage + 1, i);
          if (bottleneck) {
            bb.res_blocks.push_back(detail::make_bottleneck_block(ps, bname, in, width, stride));
            in = width * 4;
          } else {
            bb.res_blocks.push_back(detail::make_basic_block(ps, bname, in, width, stride));
            in = width;
          }
        }
      }
      bb.feature_dim = in;
      break;
    }
    default: {  // dense121 / dense201
      bb.dense_block_sizes = spec.family == Family::dense121 ? std::vector<int>{6, 12, 24, 16}
                                                             : std::vector<int>{6, 12, 48, 32};
      const int64_t growth = scaled_dim(32, scale);
      int64_t ch = 2 * growth;
      bb.stem_conv = Conv2dM<T>::create(ps, name + ".stem", spec.in_channels, ch, 7, 2, 3, false);
      bb.stem_bn = BatchNormM<T>::create(ps, name + ".stem_bn", ch);
      for (size_t b = 0; b < bb.dense_block_sizes.size(); ++b) {
        for (int i = 0; i < bb.dense_block_sizes[b]; ++i) {
          std::string lname = strfmt("%s.block%zu.%d", name.c_str(), b, i);
          detail::DenseLayer<T> layer;
          layer.bn1 = BatchNormM<T>::create(ps, lname + ".bn1", ch);
          layer.conv1 = Conv2dM<T>::create(ps, lname + ".conv1", ch, 4 * growth, 1, 1, 0, false);
          layer.bn2 = BatchNormM<T>::create(ps, lname + ".bn2", 4 * growth);
          layer.conv2 = Conv2dM<T>::create(ps, lname + ".conv2", 4 * growth, growth, 3, 1, 1, false);
          bb.dense_layers.push_back(std::move(layer));
          ch += growth;
        }
        if (b + 1 < bb.dense_block_sizes.size()) {
          std::string tname = strfmt("%s.trans%zu", name.c_str(), b);
          detail::DenseTransition<T> tr;
          tr.bn = BatchNormM<T>::create(ps, tname + ".bn", ch);
          int64_t half = std::max<int64_t>(1, ch / 2);
          tr.conv = Conv2dM<T>::create(ps, tname + ".conv", ch, half, 1, 1, 0, false);
          bb.dense_transitions.push_back(std::move(tr));
          ch = half;
        }
      }
      bb.dense_final_bn = BatchNormM<T>::create(ps, name + ".final_bn", ch);
      bb.feature_dim = ch;
      break;
    }
  }
  return bb;
}

// Widens the first convolution to accept `in_channels`: the existing kernels
// fill the leading channel slices and new slices start at zero, so inputs
// whose extra channels are zero reproduce the original activations exactly.
template <typename T>
void adapt_first_layer(Backbone<T>& bb, int in_channels) {
  if (in_channels < 3) throw UsageError("adapt_first_layer: in_channels must be >= 3");
  if (in_channels == bb.spec.in_channels) return;
  Parameter<T>* w = bb.first_conv_weight();
  const auto old_shape = w->value.shape;  // [O, C_old, k, k]
  const int64_t O = old_shape[0], C_old = old_shape[1], kh = old_shape[2], kw = old_shape[3];
  if (in_channels < C_old) throw UsageError("adapt_first_layer: cannot shrink input channels");
  Tensor<T> nw({O, in_channels, kh, kw});
  for (int64_t o = 0; o < O; ++o)
    std::copy_n(w->value.ptr() + o * C_old * kh * kw, C_old * kh * kw,
                nw.ptr() + o * in_channels * kh * kw);
  w->value = std::move(nw);
  w->grad = Tensor<T>(w->value.shape);
  bb.spec.in_channels = in_channels;
}

}  // namespace df
