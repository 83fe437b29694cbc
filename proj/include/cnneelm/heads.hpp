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

// Classifier heads over network features: a probabilistic decision forest
// whose split nodes are sigmoids of feature coordinates, and an extreme
// learning machine solved in closed form.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnneelm/errors.hpp"
#include "cnneelm/network.hpp"
#include "cnneelm/numerics.hpp"

namespace cnneelm {

enum class HeadKind { Softmax, Forest, Elm };

inline std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::Softmax: return "softmax";
    case HeadKind::Forest: return "forest";
    case HeadKind::Elm: return "elm";
  }
  return "softmax";
}

inline HeadKind parse_head_kind(const std::string& s) {
  if (s == "softmax") return HeadKind::Softmax;
  if (s == "forest") return HeadKind::Forest;
  if (s == "elm") return HeadKind::Elm;
  throw ParameterError("unknown head '" + s + "' (expected softmax|forest|elm)");
}

// ---------------------------------------------------------------------------
// Decision forest
// ---------------------------------------------------------------------------

// Routing probability to the left child: sigmoid(f) or, flattened,
// sigmoid(f / 2).
inline double ncsf_split(std::span<const double> features, std::size_t feature_index, ActivationMode mode) {
  if (feature_index >= features.size()) {
    throw ParameterError("ncsf_split: feature index " + std::to_string(feature_index) + " out of range");
  }
  const double f = features[feature_index];
  return mode == ActivationMode::Baseline ? sigmoid(f) : sigmoid(f / 2.0);
}

// Complete binary tree in heap order: internal node i has children 2i+1 and
// 2i+2; leaves are numbered left to right.
struct DecisionTree {
  std::size_t depth = 0;
  std::vector<std::size_t> split_features;  // 2^depth - 1 entries
  Matrix leaves;                            // 2^depth x C, rows are distributions

  std::size_t leaf_count() const { return std::size_t{1} << depth; }
  std::size_t node_count() const { return leaf_count() - 1; }
};

struct ForestHead {
  std::vector<DecisionTree> trees;
  ActivationMode mode = ActivationMode::Baseline;
  double smoothing = 0.0;

  std::size_t class_count() const { return trees.empty() ? 0 : trees.front().leaves.cols(); }
};

// Probability of reaching each leaf: the product along the root path of
// d_n (left) or 1 - d_n (right).
inline std::vector<double> tree_leaf_probabilities(const DecisionTree& tree, std::span<const double> features,
                                                   ActivationMode mode) {
  std::vector<double> reach{1.0};
  std::size_t node = 0;
  for (std::size_t level = 0; level < tree.depth; ++level) {
    std::vector<double> next(reach.size() * 2);
    for (std::size_t i = 0; i < reach.size(); ++i, ++node) {
      const double d = ncsf_split(features, tree.split_features[node], mode);
      next[2 * i] = reach[i] * d;
      next[2 * i + 1] = reach[i] * (1.0 - d);
    }
    reach = std::move(next);
  }
  return reach;
}

// Average over trees of the reach-weighted leaf distributions.
inline std::vector<double> forest_predict(const ForestHead& head, std::span<const double> features) {
  const std::size_t C = head.class_count();
  std::vector<double> out(C, 0.0);
  for (const auto& tree : head.trees) {
    const auto reach = tree_leaf_probabilities(tree, features, head.mode);
    for (std::size_t l = 0; l < reach.size(); ++l) {
      const auto dist = tree.leaves.row(l);
      for (std::size_t c = 0; c < C; ++c) out[c] += reach[l] * dist[c];
    }
  }
  for (double& v : out) v /= static_cast<double>(head.trees.size());
  return out;
}

// T trees of depth D. Split nodes take feature coordinates round-robin
// across the whole forest; leaves start uniform. Smoothing defaults to 1/C.
inline ForestHead forest_init(std::size_t feature_dim, std::size_t classes, std::size_t trees = 5,
                              std::size_t depth = 5, ActivationMode mode = ActivationMode::Baseline,
                              double smoothing = -1.0) {
  if (feature_dim == 0 || classes == 0 || trees == 0) throw ParameterError("forest_init: empty dimensions");
  ForestHead head;
  head.mode = mode;
  head.smoothing = smoothing < 0.0 ? 1.0 / static_cast<double>(classes) : smoothing;
  std::size_t next = 0;
  for (std::size_t t = 0; t < trees; ++t) {
    DecisionTree tree;
    tree.depth = depth;
    tree.split_features.resize(tree.node_count());
    for (auto& f : tree.split_features) f = next++ % feature_dim;
    tree.leaves = Matrix(tree.leaf_count(), classes, 1.0 / static_cast<double>(classes));
    head.trees.push_back(std::move(tree));
  }
  return head;
}

// One-shot leaf fit: each leaf becomes the smoothed, normalised
// reach-weighted label histogram of the batch. Leaves that no sample reaches
// (total reach < 1e-12) keep a uniform distribution.
inline ForestHead forest_update_leaves(ForestHead head, const Matrix& features, std::span<const std::size_t> labels) {
  if (features.rows() == 0) throw ParameterError("forest_update_leaves: empty batch");
  if (features.rows() != labels.size()) throw DimensionError("forest_update_leaves: label count mismatch");
  const std::size_t C = head.class_count();
  for (auto& tree : head.trees) {
    Matrix hist(tree.leaf_count(), C);
    std::vector<double> total(tree.leaf_count(), 0.0);
    for (std::size_t i = 0; i < features.rows(); ++i) {
      if (labels[i] >= C) throw ParameterError("forest_update_leaves: label out of range");
      const auto reach = tree_leaf_probabilities(tree, features.row(i), head.mode);
      for (std::size_t l = 0; l < reach.size(); ++l) {
        hist(l, labels[i]) += reach[l];
        total[l] += reach[l];
      }
    }
    for (std::size_t l = 0; l < tree.leaf_count(); ++l) {
      auto dist = tree.leaves.row(l);
      if (total[l] < 1e-12) {
        std::fill(dist.begin(), dist.end(), 1.0 / static_cast<double>(C));
        continue;
      }
      const double denom = total[l] + static_cast<double>(C) * head.smoothing;
      for (std::size_t c = 0; c < C; ++c) dist[c] = (hist(l, c) + head.smoothing) / denom;
    }
  }
  return head;
}

// ---------------------------------------------------------------------------
// Extreme learning machine
// ---------------------------------------------------------------------------

struct ElmModel {
  Matrix input_weights;        // d x L, fixed after init
  std::vector<double> bias;    // L, fixed after init
  Matrix output_weights;       // L x C
  double ridge = 0.01;
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return input_weights.rows(); }
  std::size_t hidden_size() const { return input_weights.cols(); }
  std::size_t class_count() const { return output_weights.cols(); }
  bool fitted() const {
    return std::any_of(output_weights.data().begin(), output_weights.data().end(),
                       [](double v) { return v != 0.0; });
  }
};

// W and b drawn i.i.d. from U[-1, 1]; beta starts at zero.
inline ElmModel elm_init(std::size_t feature_dim, std::size_t hidden, std::size_t classes, Rng& rng,
                         double ridge = 0.01) {
  if (hidden < 1) throw ParameterError("elm_init: hidden size must be >= 1");
  if (ridge < 0.0) throw ParameterError("elm_init: ridge must be >= 0");
  ElmModel m;
  m.seed = rng.seed();
  m.ridge = ridge;
  m.input_weights = Matrix(feature_dim, hidden);
  for (double& w : m.input_weights.data()) w = rng.uniform(-1.0, 1.0);
  m.bias.resize(hidden);
  for (double& b : m.bias) b = rng.uniform(-1.0, 1.0);
  m.output_weights = Matrix(hidden, classes);
  return m;
}

// H = sigmoid(X W + b).
inline Matrix elm_hidden(const ElmModel& m, const Matrix& features) {
  if (features.cols() != m.input_dim()) {
    throw DimensionError("elm_hidden: features have " + std::to_string(features.cols()) + " columns, model expects " +
                         std::to_string(m.input_dim()));
  }
  Matrix h = matmul(features, m.input_weights);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    auto row = h.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = sigmoid(row[j] + m.bias[j]);
  }
  return h;
}

inline Matrix one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  Matrix t(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw ParameterError("one_hot: label out of range");
    t(i, labels[i]) = 1.0;
  }
  return t;
}

// Closed-form output weights: beta = (H^T H + lambda I)^-1 H^T T when
// lambda > 0, otherwise beta = pinv(H) T.
inline ElmModel elm_fit(ElmModel m, const Matrix& features, std::span<const std::size_t> labels) {
  if (features.rows() == 0) throw ParameterError("elm_fit: no samples");
  if (features.rows() != labels.size()) throw DimensionError("elm_fit: label count mismatch");
  const Matrix h = elm_hidden(m, features);
  const Matrix t = one_hot(labels, m.class_count());
  if (m.ridge > 0.0) {
    const Eigen::MatrixXd he = detail::to_eigen(h);
    const Eigen::MatrixXd te = detail::to_eigen(t);
    Eigen::MatrixXd gram = he.transpose() * he;
    gram.diagonal().array() += m.ridge;
    const Eigen::MatrixXd beta = gram.ldlt().solve(he.transpose() * te);
    m.output_weights = detail::from_eigen(beta);
  } else {
    m.output_weights = matmul(pinv(h), t);
  }
  if (!m.output_weights.all_finite()) throw NumericError("elm_fit: non-finite output weights");
  return m;
}

struct ElmPrediction {
  std::vector<double> scores;
  std::size_t label = 0;
  bool unfitted = false;
};

// Ties resolve to the lowest class index.
inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline ElmPrediction elm_predict(const ElmModel& m, std::span<const double> features) {
  if (features.size() != m.input_dim()) throw DimensionError("elm_predict: feature dimension mismatch");
  ElmPrediction out;
  const std::size_t L = m.hidden_size(), C = m.class_count();
  std::vector<double> hidden(m.bias);
  for (std::size_t j = 0; j < features.size(); ++j) {
    const double x = features[j];
    const auto w = m.input_weights.row(j);
    for (std::size_t u = 0; u < L; ++u) hidden[u] += x * w[u];
  }
  out.scores.assign(C, 0.0);
  for (std::size_t u = 0; u < L; ++u) {
    const double hu = sigmoid(hidden[u]);
    const auto b = m.output_weights.row(u);
    for (std::size_t c = 0; c < C; ++c) out.scores[c] += hu * b[c];
  }
  out.unfitted = !m.fitted();
  out.label = out.unfitted ? 0 : argmax(out.scores);
  return out;
}

}  // namespace cnneelm
