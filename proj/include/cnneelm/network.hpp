/*
 * Copyright 2026 The CNNEELM Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// A small convolutional network with exact backpropagation.
//
// Layers are stored as plain values (no virtual dispatch); the activation
// mode is a forward-time argument so one set of weights can be evaluated
// with either sigmoid variant.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cnneelm/errors.hpp"
#include "cnneelm/numerics.hpp"
#include "cnneelm/saliency.hpp"

namespace cnneelm {

enum class ActivationMode { Baseline, Flattened };
enum class LossMode { CrossEntropyStandard, PaperEntropyLiteral, LogLikelihood };

inline constexpr double kProbEpsilon = 1e-12;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Flattened sigmoid: the input is halved, so the slope at 0 is 1/8.
inline double sigmoid_mod(double x) { return 1.0 / (1.0 + std::exp(-x / 2.0)); }

inline double activate(double x, ActivationMode mode) {
  return mode == ActivationMode::Baseline ? sigmoid(x) : sigmoid_mod(x);
}

// Derivative expressed through the activation output s.
inline double activation_slope(double s, ActivationMode mode) {
  const double d = s * (1.0 - s);
  return mode == ActivationMode::Baseline ? d : 0.5 * d;
}

// Max-subtracted softmax.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double total = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : p) v /= total;
  return p;
}

struct LossEval {
  double value = 0.0;
  bool clamped = false;  // some probability hit the epsilon floor
};

namespace detail {

inline double safe_log(double p, bool& clamped) {
  if (p < kProbEpsilon) {
    clamped = true;
    return std::log(kProbEpsilon);
  }
  return std::log(p);
}

inline double safe_log_slope(double p) { return p < kProbEpsilon ? 0.0 : 1.0 / p; }

}  // namespace detail

// Mean one-vs-rest Bernoulli log-likelihood of a single prediction:
// (1/C) sum_c [y_c log p_c + (1 - y_c) log(1 - p_c)].
inline double log_likelihood(std::span<const double> probs, std::size_t label) {
  bool clamped = false;
  double ll = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    ll += c == label ? detail::safe_log(probs[c], clamped) : detail::safe_log(1.0 - probs[c], clamped);
  }
  return ll / static_cast<double>(probs.size());
}

// Binomial log-likelihood exactly as the printed estimator reads: the
// summand does not depend on i, so the 1/n average collapses to
// log(p^k (1-p)^(n-k)) with k successes out of n.
inline double literal_log_likelihood(double p, std::size_t successes, std::size_t trials) {
  if (successes > trials) throw ParameterError("literal_log_likelihood: successes > trials");
  bool clamped = false;
  return static_cast<double>(successes) * detail::safe_log(p, clamped) +
         static_cast<double>(trials - successes) * detail::safe_log(1.0 - p, clamped);
}

inline LossEval evaluate_loss(std::span<const double> probs, std::size_t label, LossMode mode) {
  if (label >= probs.size()) throw ParameterError("loss: label out of range");
  LossEval out;
  switch (mode) {
    case LossMode::CrossEntropyStandard:
      out.value = -detail::safe_log(probs[label], out.clamped);
      break;
    case LossMode::PaperEntropyLiteral: {
      // -p log p of the true-label probability.
      const double p = probs[label];
      out.value = -p * detail::safe_log(p, out.clamped);
      break;
    }
    case LossMode::LogLikelihood: {
      double ll = 0.0;
      for (std::size_t c = 0; c < probs.size(); ++c) {
        ll += c == label ? detail::safe_log(probs[c], out.clamped)
                         : detail::safe_log(1.0 - probs[c], out.clamped);
      }
      out.value = -ll / static_cast<double>(probs.size());
      break;
    }
  }
  return out;
}

inline double loss(std::span<const double> probs, std::size_t label, LossMode mode) {
  return evaluate_loss(probs, label, mode).value;
}

// dLoss/dprobs, consistent with the epsilon clamping in evaluate_loss.
inline std::vector<double> loss_gradient_probs(std::span<const double> probs, std::size_t label,
                                               LossMode mode) {
  std::vector<double> g(probs.size(), 0.0);
  switch (mode) {
    case LossMode::CrossEntropyStandard:
      g[label] = -detail::safe_log_slope(probs[label]);
      break;
    case LossMode::PaperEntropyLiteral: {
      const double p = probs[label];
      // Below the floor the loss is -p log(eps), linear in p.
      g[label] = p < kProbEpsilon ? -std::log(kProbEpsilon) : -(std::log(p) + 1.0);
      break;
    }
    case LossMode::LogLikelihood: {
      const double inv_c = 1.0 / static_cast<double>(probs.size());
      for (std::size_t c = 0; c < probs.size(); ++c) {
        g[c] = c == label ? -inv_c * detail::safe_log_slope(probs[c])
                          : inv_c * detail::safe_log_slope(1.0 - probs[c]);
      }
      break;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Network structure
// ---------------------------------------------------------------------------

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t size() const { return channels * height * width; }
  bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

enum class LayerKind { Conv, MaxPool, FullyConnected, Activation };

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::FullyConnected: return "fullyconnected";
    case LayerKind::Activation: return "activation";
  }
  return "?";
}

// conv: stride 1, zero "same" padding, weights out x (in*k*k) ordered
//       [in][ky][kx], bias 1 x out.
// maxpool: k x k window with stride k (kernel == stride).
// fullyconnected: weights out x in over the flattened input, bias 1 x out.
struct Layer {
  LayerKind kind = LayerKind::Activation;
  std::size_t out_channels = 0;  // conv channels or fc units
  std::size_t kernel = 0;
  Matrix weights;
  Matrix bias;

  bool has_params() const { return kind == LayerKind::Conv || kind == LayerKind::FullyConnected; }
};

struct NetworkParams {
  Shape input;
  std::vector<Layer> layers;
  // The output of this layer is the feature vector handed to the heads.
  std::size_t feature_layer = 0;

  // Output shape of every layer; throws naming the first incompatible layer.
  std::vector<Shape> shapes() const {
    std::vector<Shape> out;
    Shape cur = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const Layer& l = layers[i];
      auto fail = [&](const std::string& why) {
        throw DimensionError("layer " + std::to_string(i) + " (" + to_string(l.kind) + "): " + why);
      };
      switch (l.kind) {
        case LayerKind::Conv:
          if (l.weights.rows() != l.out_channels || l.weights.cols() != cur.channels * l.kernel * l.kernel)
            fail("weights " + std::to_string(l.weights.rows()) + "x" + std::to_string(l.weights.cols()) +
                 " incompatible with input " + to_string(cur));
          if (l.bias.size() != l.out_channels) fail("bias length mismatch");
          if (l.kernel % 2 == 0) fail("kernel must be odd");
          cur = {l.out_channels, cur.height, cur.width};
          break;
        case LayerKind::MaxPool:
          if (l.kernel == 0 || cur.height < l.kernel || cur.width < l.kernel) fail("pool window exceeds input");
          cur = {cur.channels, cur.height / l.kernel, cur.width / l.kernel};
          break;
        case LayerKind::FullyConnected:
          if (l.weights.rows() != l.out_channels || l.weights.cols() != cur.size())
            fail("weights " + std::to_string(l.weights.rows()) + "x" + std::to_string(l.weights.cols()) +
                 " incompatible with input " + to_string(cur));
          if (l.bias.size() != l.out_channels) fail("bias length mismatch");
          cur = {l.out_channels, 1, 1};
          break;
        case LayerKind::Activation:
          break;
      }
      out.push_back(cur);
    }
    if (layers.empty()) throw DimensionError("network has no layers");
    if (feature_layer >= layers.size()) throw DimensionError("feature layer index out of range");
    return out;
  }

  std::size_t class_count() const { return shapes().back().size(); }
  std::size_t feature_size() const { return shapes()[feature_layer].size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
      if (l.has_params()) n += l.weights.size() + l.bias.size();
    return n;
  }

  // Visits weights then bias of every parametric layer, in layer order.
  template <typename F>
  void for_each_tensor(F&& f) {
    for (auto& l : layers)
      if (l.has_params()) {
        f(l.weights);
        f(l.bias);
      }
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    for (const auto& l : layers)
      if (l.has_params()) {
        f(l.weights);
        f(l.bias);
      }
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&](const Matrix& m) { ok = ok && m.all_finite(); });
    return ok;
  }

  bool operator==(const NetworkParams& o) const {
    if (!(input == o.input) || feature_layer != o.feature_layer || layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto &a = layers[i], &b = o.layers[i];
      if (a.kind != b.kind || a.out_channels != b.out_channels || a.kernel != b.kernel ||
          !(a.weights == b.weights) || !(a.bias == b.bias))
        return false;
    }
    return true;
  }
};

// Same structure, every parameter zero. Used for gradient accumulators.
inline NetworkParams zeros_like(const NetworkParams& p) {
  NetworkParams z = p;
  z.for_each_tensor([](Matrix& m) { std::fill(m.data().begin(), m.data().end(), 0.0); });
  return z;
}

// Plain Glorot bounds leave sigmoid units in their linear middle where the
// slope is at most 1/4; a gain of 4 restores unit slope at initialisation.
// Only layers that feed an activation get it; the logits layer does not.
inline constexpr double kInitGain = 4.0;

class NetworkBuilder {
 public:
  explicit NetworkBuilder(Shape input) { net_.input = input; }

  NetworkBuilder& conv(std::size_t out_channels, std::size_t kernel) {
    Layer l;
    l.kind = LayerKind::Conv;
    l.out_channels = out_channels;
    l.kernel = kernel;
    l.weights = Matrix(out_channels, current().channels * kernel * kernel);
    l.bias = Matrix(1, out_channels);
    return push(std::move(l));
  }
  NetworkBuilder& maxpool(std::size_t window) {
    Layer l;
    l.kind = LayerKind::MaxPool;
    l.kernel = window;
    return push(std::move(l));
  }
  NetworkBuilder& fully_connected(std::size_t units) {
    Layer l;
    l.kind = LayerKind::FullyConnected;
    l.out_channels = units;
    l.weights = Matrix(units, current().size());
    l.bias = Matrix(1, units);
    return push(std::move(l));
  }
  NetworkBuilder& activation() {
    Layer l;
    l.kind = LayerKind::Activation;
    return push(std::move(l));
  }
  // The most recently added layer becomes the feature layer.
  NetworkBuilder& mark_features() {
    features_ = net_.layers.size() - 1;
    return *this;
  }

  // Glorot-uniform weights, scaled by kInitGain where an activation follows;
  // zero biases. Without mark_features() the layer
  // feeding the final fully-connected layer is the feature layer.
  NetworkParams build(Rng& rng) const {
    NetworkParams net = net_;
    if (net.layers.empty()) throw ParameterError("NetworkBuilder: no layers");
    if (features_) {
      net.feature_layer = *features_;
    } else {
      net.feature_layer = net.layers.size() >= 2 ? net.layers.size() - 2 : 0;
    }
    Shape cur = net.input;
    const auto shapes = net.shapes();
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      Layer& l = net.layers[i];
      if (l.has_params()) {
        const double k2 = static_cast<double>(l.kernel * l.kernel);
        const double fan_in = l.kind == LayerKind::Conv ? static_cast<double>(cur.channels) * k2
                                                        : static_cast<double>(cur.size());
        const double fan_out = l.kind == LayerKind::Conv ? static_cast<double>(l.out_channels) * k2
                                                         : static_cast<double>(l.out_channels);
        const bool activated = i + 1 < net.layers.size() && net.layers[i + 1].kind == LayerKind::Activation;
        const double limit = (activated ? kInitGain : 1.0) * std::sqrt(6.0 / (fan_in + fan_out));
        for (double& w : l.weights.data()) w = rng.uniform(-limit, limit);
      }
      cur = shapes[i];
    }
    return net;
  }

 private:
  Shape current() const { return net_.layers.empty() ? net_.input : net_.shapes().back(); }
  NetworkBuilder& push(Layer l) {
    net_.layers.push_back(std::move(l));
    net_.feature_layer = 0;
    net_.shapes();
    return *this;
  }

  NetworkParams net_;
  std::optional<std::size_t> features_;
};

// 9x12x12 patch stack -> conv 3x3x8 -> act -> pool 2 -> conv 3x3x16 -> act
// -> pool 2 -> fc 64 -> act (features) -> fc C.
inline NetworkParams make_default_network(std::size_t classes, Rng& rng, std::size_t patches = 9,
                                          std::size_t patch_size = 12) {
  return NetworkBuilder({patches, patch_size, patch_size})
      .conv(8, 3).activation().maxpool(2)
      .conv(16, 3).activation().maxpool(2)
      .fully_connected(64).activation().mark_features()
      .fully_connected(classes)
      .build(rng);
}

namespace detail {

// Slot order for a patch set. Saliency rank says nothing about where a patch
// sits, so rank order would feed the mouth to channel 0 on one face and an
// eye on the next. Instead each patch is assigned to a distinct cell of a
// g x g grid (g = ceil(sqrt(n))) over the source image, minimising the total
// squared distance between patch centres and cell centres, and channels
// follow cell order. Beyond 16 cells the exact assignment gets expensive and
// raster order (row band, then x) is used instead.
inline std::vector<std::size_t> patch_slot_order(const PatchSet& ps) {
  const std::size_t n = ps.patches.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (n <= 1) return order;
  std::size_t g = 1;
  while (g * g < n) ++g;
  const double w = static_cast<double>(ps.source_width ? ps.source_width : 1);
  const double h = static_cast<double>(ps.source_height ? ps.source_height : 1);

  if (g * g > 16 || ps.source_width == 0 || ps.source_height == 0) {
    const double band = h / static_cast<double>(g);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto ba = static_cast<long>(static_cast<double>(ps.patches[a].center_y) / band);
      const auto bb = static_cast<long>(static_cast<double>(ps.patches[b].center_y) / band);
      return ba != bb ? ba < bb : ps.patches[a].center_x < ps.patches[b].center_x;
    });
    return order;
  }

  // dp[mask]: best cost of placing the first popcount(mask) patches into
  // the cells in mask.
  const std::size_t cells = g * g, states = std::size_t{1} << cells;
  std::vector<double> dp(states, std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> pick(states, 0);
  dp[0] = 0.0;
  for (std::size_t mask = 0; mask < states; ++mask) {
    if (!std::isfinite(dp[mask])) continue;
    const auto k = static_cast<std::size_t>(std::popcount(mask));
    if (k == n) continue;
    const Patch& p = ps.patches[k];
    for (std::size_t c = 0; c < cells; ++c) {
      if (mask & (std::size_t{1} << c)) continue;
      const double cx = (static_cast<double>(c % g) + 0.5) * w / static_cast<double>(g);
      const double cy = (static_cast<double>(c / g) + 0.5) * h / static_cast<double>(g);
      const double dx = static_cast<double>(p.center_x) - cx, dy = static_cast<double>(p.center_y) - cy;
      const double cost = dp[mask] + dx * dx + dy * dy;
      const std::size_t next = mask | (std::size_t{1} << c);
      if (cost < dp[next]) {
        dp[next] = cost;
        pick[next] = static_cast<std::uint8_t>(c);
      }
    }
  }
  std::size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 0; mask < states; ++mask)
    if (static_cast<std::size_t>(std::popcount(mask)) == n && dp[mask] < best_cost) {
      best_cost = dp[mask];
      best = mask;
    }
  std::vector<std::size_t> cell_of(n);
  for (std::size_t k = n; k-- > 0;) {
    cell_of[k] = pick[best];
    best &= ~(std::size_t{1} << pick[best]);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cell_of[a] < cell_of[b]; });
  return order;
}

}  // namespace detail

// Flattened network input: one channel per patch in grid-slot order, each
// patch shifted to zero mean and scaled to unit deviation (flat patches are
// only centred).
inline std::vector<double> patches_to_input(const PatchSet& ps) {
  std::vector<double> in;
  for (const std::size_t i : detail::patch_slot_order(ps)) {
    const auto& px = ps.patches[i].image.pixels();
    double mean = 0.0, var = 0.0;
    for (double v : px) mean += v;
    mean /= static_cast<double>(px.size());
    for (double v : px) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / static_cast<double>(px.size()));
    if (sd < 1e-3) sd = 1.0;
    for (double v : px) in.push_back((v - mean) / sd);
  }
  return in;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

struct ForwardTrace {
  // values[0] is the input; values[i + 1] is the output of layer i.
  std::vector<std::vector<double>> values;
  // Flat input index chosen by each maxpool output (empty for other layers).
  std::vector<std::vector<std::size_t>> argmax;
  std::vector<double> features;
  std::vector<double> logits;
  std::vector<double> probs;
  ActivationMode mode = ActivationMode::Baseline;
};

namespace detail {

inline void conv_forward(const Layer& l, const Shape& in_shape, const double* in, double* out) {
  const std::size_t H = in_shape.height, W = in_shape.width, K = l.kernel;
  const long pad = static_cast<long>(K / 2);
  for (std::size_t oc = 0; oc < l.out_channels; ++oc) {
    double* o = out + oc * H * W;
    std::fill(o, o + H * W, l.bias.data()[oc]);
    for (std::size_t ic = 0; ic < in_shape.channels; ++ic) {
      const double* src = in + ic * H * W;
      for (std::size_t ky = 0; ky < K; ++ky) {
        const long dy = static_cast<long>(ky) - pad;
        const std::size_t y_lo = static_cast<std::size_t>(std::max(0L, -dy));
        const std::size_t y_hi = static_cast<std::size_t>(std::min(static_cast<long>(H), static_cast<long>(H) - dy));
        for (std::size_t kx = 0; kx < K; ++kx) {
          const long dx = static_cast<long>(kx) - pad;
          const double w = l.weights(oc, (ic * K + ky) * K + kx);
          const std::size_t x_lo = static_cast<std::size_t>(std::max(0L, -dx));
          const std::size_t x_hi =
              static_cast<std::size_t>(std::min(static_cast<long>(W), static_cast<long>(W) - dx));
          for (std::size_t y = y_lo; y < y_hi; ++y) {
            const double* s = src + static_cast<std::size_t>(static_cast<long>(y) + dy) * W;
            double* d = o + y * W;
            for (std::size_t x = x_lo; x < x_hi; ++x) d[x] += w * s[static_cast<long>(x) + dx];
          }
        }
      }
    }
  }
}

inline void conv_backward(const Layer& l, Layer& grad, const Shape& in_shape, const double* in,
                          const double* dout, double* din) {
  const std::size_t H = in_shape.height, W = in_shape.width, K = l.kernel;
  const long pad = static_cast<long>(K / 2);
  std::fill(din, din + in_shape.size(), 0.0);
  for (std::size_t oc = 0; oc < l.out_channels; ++oc) {
    const double* g = dout + oc * H * W;
    double bsum = 0.0;
    for (std::size_t i = 0; i < H * W; ++i) bsum += g[i];
    grad.bias.data()[oc] += bsum;
    for (std::size_t ic = 0; ic < in_shape.channels; ++ic) {
      const double* src = in + ic * H * W;
      double* dsrc = din + ic * H * W;
      for (std::size_t ky = 0; ky < K; ++ky) {
        const long dy = static_cast<long>(ky) - pad;
        const std::size_t y_lo = static_cast<std::size_t>(std::max(0L, -dy));
        const std::size_t y_hi = static_cast<std::size_t>(std::min(static_cast<long>(H), static_cast<long>(H) - dy));
        for (std::size_t kx = 0; kx < K; ++kx) {
          const long dx = static_cast<long>(kx) - pad;
          const std::size_t widx = (ic * K + ky) * K + kx;
          const double w = l.weights(oc, widx);
          const std::size_t x_lo = static_cast<std::size_t>(std::max(0L, -dx));
          const std::size_t x_hi =
              static_cast<std::size_t>(std::min(static_cast<long>(W), static_cast<long>(W) - dx));
          double wsum = 0.0;
          for (std::size_t y = y_lo; y < y_hi; ++y) {
            const std::size_t sy = static_cast<std::size_t>(static_cast<long>(y) + dy);
            const double* s = src + sy * W;
            double* ds = dsrc + sy * W;
            const double* gy = g + y * W;
            for (std::size_t x = x_lo; x < x_hi; ++x) {
              const std::size_t sx = static_cast<std::size_t>(static_cast<long>(x) + dx);
              wsum += gy[x] * s[sx];
              ds[sx] += w * gy[x];
            }
          }
          grad.weights(oc, widx) += wsum;
        }
      }
    }
  }
}

}  // namespace detail

inline ForwardTrace forward(const NetworkParams& params, std::span<const double> input, ActivationMode mode) {
  const auto shapes = params.shapes();
  if (input.size() != params.input.size()) {
    throw DimensionError("forward: input has " + std::to_string(input.size()) + " values, layer 0 expects " +
                         to_string(params.input));
  }
  ForwardTrace t;
  t.mode = mode;
  t.values.reserve(params.layers.size() + 1);
  t.values.emplace_back(input.begin(), input.end());
  t.argmax.resize(params.layers.size());

  Shape cur = params.input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const Layer& l = params.layers[i];
    const std::vector<double>& in = t.values.back();
    std::vector<double> out(shapes[i].size());
    switch (l.kind) {
      case LayerKind::Conv:
        detail::conv_forward(l, cur, in.data(), out.data());
        break;
      case LayerKind::MaxPool: {
        const std::size_t K = l.kernel, oh = shapes[i].height, ow = shapes[i].width;
        auto& am = t.argmax[i];
        am.resize(out.size());
        for (std::size_t c = 0; c < cur.channels; ++c)
          for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
              std::size_t best = (c * cur.height + oy * K) * cur.width + ox * K;
              for (std::size_t ky = 0; ky < K; ++ky)
                for (std::size_t kx = 0; kx < K; ++kx) {
                  const std::size_t idx = (c * cur.height + oy * K + ky) * cur.width + ox * K + kx;
                  if (in[idx] > in[best]) best = idx;
                }
              const std::size_t o = (c * oh + oy) * ow + ox;
              out[o] = in[best];
              am[o] = best;
            }
        break;
      }
      case LayerKind::FullyConnected:
        for (std::size_t u = 0; u < l.out_channels; ++u) {
          const auto w = l.weights.row(u);
          double acc = l.bias.data()[u];
          for (std::size_t j = 0; j < in.size(); ++j) acc += w[j] * in[j];
          out[u] = acc;
        }
        break;
      case LayerKind::Activation:
        for (std::size_t j = 0; j < in.size(); ++j) out[j] = activate(in[j], mode);
        break;
    }
    t.values.push_back(std::move(out));
    cur = shapes[i];
  }
  t.features = t.values[params.feature_layer + 1];
  t.logits = t.values.back();
  t.probs = softmax(t.logits);
  return t;
}

inline ForwardTrace forward(const NetworkParams& params, const PatchSet& patches, ActivationMode mode) {
  return forward(params, patches_to_input(patches), mode);
}

// Gradient of the selected loss for one sample, accumulated into `grad`
// (which must be shaped like `params`). Returns the loss value.
inline double accumulate_gradient(const ForwardTrace& trace, const NetworkParams& params, std::size_t label,
                                  LossMode loss_mode, ActivationMode act_mode, NetworkParams& grad) {
  const auto shapes = params.shapes();
  if (trace.values.size() != params.layers.size() + 1) throw DimensionError("backward: stale trace (layer count)");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (trace.values[i + 1].size() != shapes[i].size()) {
      throw DimensionError("backward: stale trace at layer " + std::to_string(i));
    }
  }
  if (label >= trace.probs.size()) throw ParameterError("backward: label out of range");
  if (trace.mode != act_mode) throw ParameterError("backward: activation mode differs from forward pass");

  const auto g_probs = loss_gradient_probs(trace.probs, label, loss_mode);
  double dot = 0.0;
  for (std::size_t c = 0; c < g_probs.size(); ++c) dot += g_probs[c] * trace.probs[c];
  std::vector<double> delta(g_probs.size());
  for (std::size_t c = 0; c < delta.size(); ++c) delta[c] = trace.probs[c] * (g_probs[c] - dot);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const Layer& l = params.layers[li];
    const Shape in_shape = li == 0 ? params.input : shapes[li - 1];
    const std::vector<double>& in = trace.values[li];
    std::vector<double> din(in_shape.size(), 0.0);
    switch (l.kind) {
      case LayerKind::Conv:
        detail::conv_backward(l, grad.layers[li], in_shape, in.data(), delta.data(), din.data());
        break;
      case LayerKind::MaxPool: {
        const auto& am = trace.argmax[li];
        for (std::size_t o = 0; o < delta.size(); ++o) din[am[o]] += delta[o];
        break;
      }
      case LayerKind::FullyConnected: {
        Layer& g = grad.layers[li];
        for (std::size_t u = 0; u < l.out_channels; ++u) {
          const double d = delta[u];
          g.bias.data()[u] += d;
          if (d == 0.0) continue;
          auto gw = g.weights.row(u);
          const auto w = l.weights.row(u);
          for (std::size_t j = 0; j < in.size(); ++j) {
            gw[j] += d * in[j];
            din[j] += d * w[j];
          }
        }
        break;
      }
      case LayerKind::Activation: {
        const std::vector<double>& out = trace.values[li + 1];
        for (std::size_t j = 0; j < din.size(); ++j) din[j] = delta[j] * activation_slope(out[j], act_mode);
        break;
      }
    }
    delta = std::move(din);
  }
  return evaluate_loss(trace.probs, label, loss_mode).value;
}

// Exact gradient of the loss with respect to every weight and bias.
inline NetworkParams backward(const ForwardTrace& trace, const NetworkParams& params, std::size_t label,
                              LossMode loss_mode, ActivationMode act_mode) {
  NetworkParams grad = zeros_like(params);
  accumulate_gradient(trace, params, label, loss_mode, act_mode, grad);
  return grad;
}

}  // namespace cnneelm
