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

// Mini-batch construction, the three parameter-update rules, the training
// loop and evaluation.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cnneelm/dataio.hpp"
#include "cnneelm/errors.hpp"
#include "cnneelm/heads.hpp"
#include "cnneelm/model.hpp"
#include "cnneelm/network.hpp"

namespace cnneelm {

enum class UpdateRule { Baseline, ModifiedLiteral, ModifiedConventional };

inline std::string to_string(UpdateRule r) {
  switch (r) {
    case UpdateRule::Baseline: return "baseline";
    case UpdateRule::ModifiedLiteral: return "modified-literal";
    case UpdateRule::ModifiedConventional: return "modified-conventional";
  }
  return "baseline";
}
inline UpdateRule parse_update_rule(const std::string& s) {
  if (s == "baseline") return UpdateRule::Baseline;
  if (s == "modified-literal") return UpdateRule::ModifiedLiteral;
  if (s == "modified-conventional") return UpdateRule::ModifiedConventional;
  throw ParameterError("unknown update rule '" + s + "'");
}
inline std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::CrossEntropyStandard: return "cross-entropy";
    case LossMode::PaperEntropyLiteral: return "entropy-literal";
    case LossMode::LogLikelihood: return "log-likelihood";
  }
  return "cross-entropy";
}
inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "cross-entropy") return LossMode::CrossEntropyStandard;
  if (s == "entropy-literal") return LossMode::PaperEntropyLiteral;
  if (s == "log-likelihood") return LossMode::LogLikelihood;
  throw ParameterError("unknown loss '" + s + "' (expected cross-entropy|entropy-literal|log-likelihood)");
}
inline std::string to_string(ActivationMode m) { return m == ActivationMode::Baseline ? "baseline" : "flattened"; }
inline ActivationMode parse_activation_mode(const std::string& s) {
  if (s == "baseline") return ActivationMode::Baseline;
  if (s == "flattened") return ActivationMode::Flattened;
  throw ParameterError("unknown activation '" + s + "' (expected baseline|flattened)");
}

struct TrainConfig {
  double learning_rate = 1.0;
  std::size_t batch_size = 35;
  std::size_t epochs = 30;
  UpdateRule update_rule = UpdateRule::Baseline;
  LossMode loss_mode = LossMode::CrossEntropyStandard;
  ActivationMode activation = ActivationMode::Baseline;
  std::uint64_t seed = 42;
  std::optional<double> gradient_clip;

  std::size_t forest_trees = 5;
  std::size_t forest_depth = 5;
  std::size_t elm_hidden = 500;
  double elm_ridge = 0.01;
  PreprocessConfig preprocess;

  // Default batch is 35 for the baseline rule and 70 for the modified rules.
  static std::size_t default_batch(UpdateRule r) { return r == UpdateRule::Baseline ? 35 : 70; }
  static double default_lr(UpdateRule r) {
    switch (r) {
      case UpdateRule::Baseline: return 1.0;
      case UpdateRule::ModifiedLiteral: return 0.5;
      case UpdateRule::ModifiedConventional: return 6.0;
    }
    return 1.0;
  }

  void validate() const {
    if (!(learning_rate > 0.0)) throw ParameterError("learning rate must be > 0");
    if (batch_size < 1) throw ParameterError("batch size must be >= 1");
    if (epochs < 1) throw ParameterError("epochs must be >= 1");
    if (update_rule != UpdateRule::Baseline && loss_mode != LossMode::LogLikelihood) {
      throw ParameterError("update rule '" + to_string(update_rule) +
                           "' is defined on the log-likelihood objective; use --loss log-likelihood");
    }
    if (gradient_clip && !(*gradient_clip > 0.0)) throw ParameterError("gradient clip must be > 0");
  }
};

// Network input plus label; inputs are precomputed once per training run.
struct Example {
  std::vector<double> input;
  std::size_t label = 0;
};
using Batch = std::vector<const Example*>;

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

// Stratified shuffled batches over positions 0..labels.size()-1. Each class
// queue is shuffled, then classes are drawn round-robin (in a freshly
// shuffled class order each round) so every batch is as balanced as the
// counts allow. The last batch may be short.
inline std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> labels,
                                                          std::size_t batch_size, Rng& rng) {
  if (labels.empty()) throw ParameterError("make_batches: empty dataset");
  if (batch_size < 1) throw ParameterError("make_batches: batch size must be >= 1");
  const std::size_t C = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<std::size_t>> queues(C);
  for (std::size_t i = 0; i < labels.size(); ++i) queues[labels[i]].push_back(i);
  for (auto& q : queues) rng.shuffle(q);

  std::vector<std::size_t> order;
  order.reserve(labels.size());
  std::vector<std::size_t> cursor(C, 0), classes(C);
  std::iota(classes.begin(), classes.end(), std::size_t{0});
  while (order.size() < labels.size()) {
    rng.shuffle(classes);
    for (std::size_t c : classes)
      if (cursor[c] < queues[c].size()) order.push_back(queues[c][cursor[c]++]);
  }

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<long>(i),
                         order.begin() + static_cast<long>(std::min(order.size(), i + batch_size)));
  }
  return batches;
}

inline std::vector<std::vector<std::size_t>> make_batches(const Dataset& ds, Split split, std::size_t batch_size,
                                                          Rng& rng) {
  std::vector<std::size_t> labels, index;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (ds.samples[i].split == split) {
      labels.push_back(ds.samples[i].label);
      index.push_back(i);
    }
  auto batches = make_batches(labels, batch_size, rng);
  for (auto& b : batches)
    for (auto& i : b) i = index[i];
  return batches;
}

// ---------------------------------------------------------------------------
// Update rules on flat parameter arrays
// ---------------------------------------------------------------------------

// Y <- Y - (lr / |B|) * sum dL/dY
inline void step_baseline(std::span<double> y, std::span<const double> grad_sum, double lr, std::size_t batch) {
  const double k = lr / static_cast<double>(batch);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= k * grad_sum[i];
}

// The modified rule exactly as printed: Y <- -Y * (lr / 2|B|) * sum dL_I/dY,
// with an elementwise product and L_I the log-likelihood (not negated).
inline void step_modified_literal(std::span<double> y, std::span<const double> ll_grad_sum, double lr,
                                  std::size_t batch) {
  const double k = lr / (2.0 * static_cast<double>(batch));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = -y[i] * k * ll_grad_sum[i];
}

// Descent on -L_I with the halved coefficient:
// Y <- Y - (lr / 2|B|) * sum d(-L_I)/dY
inline void step_modified_conventional(std::span<double> y, std::span<const double> neg_ll_grad_sum, double lr,
                                       std::size_t batch) {
  const double k = lr / (2.0 * static_cast<double>(batch));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= k * neg_ll_grad_sum[i];
}

// ---------------------------------------------------------------------------
// Batch steps on a network
// ---------------------------------------------------------------------------

struct BatchGradient {
  NetworkParams sum;   // sum over the batch of dLoss/dY
  double loss_sum = 0.0;
};

// Samples are accumulated in batch order so the sum is reproducible.
inline BatchGradient batch_gradient(const NetworkParams& params, const Batch& batch, LossMode loss_mode,
                                    ActivationMode act) {
  if (batch.empty()) throw ParameterError("empty batch");
  BatchGradient g{zeros_like(params), 0.0};
  for (const Example* ex : batch) {
    const ForwardTrace t = forward(params, ex->input, act);
    g.loss_sum += accumulate_gradient(t, params, ex->label, loss_mode, act, g.sum);
  }
  return g;
}

namespace detail {

inline void condition_gradient(NetworkParams& grad, const std::optional<double>& clip) {
  grad.for_each_tensor([&](Matrix& m) {
    for (double& v : m.data()) {
      if (clip) {
        v = std::isnan(v) ? 0.0 : std::clamp(v, -*clip, *clip);
      } else if (!std::isfinite(v)) {
        throw DivergenceError("non-finite gradient; set a gradient clip to continue");
      }
    }
  });
}

template <typename Step>
NetworkParams apply_step(const NetworkParams& params, const NetworkParams& grad, Step step) {
  NetworkParams out = params;
  auto g = grad.layers.begin();
  for (auto& l : out.layers) {
    if (l.has_params()) {
      step(std::span<double>(l.weights.data()), std::span<const double>(g->weights.data()));
      step(std::span<double>(l.bias.data()), std::span<const double>(g->bias.data()));
    }
    ++g;
  }
  return out;
}

}  // namespace detail

inline NetworkParams sgd_step_baseline(const NetworkParams& params, const Batch& batch, double lr, LossMode loss_mode,
                                       ActivationMode act, std::optional<double> clip = std::nullopt) {
  BatchGradient g = batch_gradient(params, batch, loss_mode, act);
  detail::condition_gradient(g.sum, clip);
  return detail::apply_step(params, g.sum, [&](std::span<double> y, std::span<const double> gs) {
    step_baseline(y, gs, lr, batch.size());
  });
}

// Always on the log-likelihood objective. The literal map tends to collapse
// or blow up; non-finite results abort.
inline NetworkParams sgd_step_modified_literal(const NetworkParams& params, const Batch& batch, double lr,
                                               ActivationMode act, std::optional<double> clip = std::nullopt) {
  BatchGradient g = batch_gradient(params, batch, LossMode::LogLikelihood, act);
  detail::condition_gradient(g.sum, clip);
  // batch_gradient returns d(-L_I)/dY; the literal rule consumes dL_I/dY.
  g.sum.for_each_tensor([](Matrix& m) {
    for (double& v : m.data()) v = -v;
  });
  NetworkParams out = detail::apply_step(params, g.sum, [&](std::span<double> y, std::span<const double> gs) {
    step_modified_literal(y, gs, lr, batch.size());
  });
  if (!out.all_finite()) throw DivergenceError("modified-literal update produced non-finite parameters");
  return out;
}

inline NetworkParams sgd_step_modified_conventional(const NetworkParams& params, const Batch& batch, double lr,
                                                    ActivationMode act, std::optional<double> clip = std::nullopt) {
  BatchGradient g = batch_gradient(params, batch, LossMode::LogLikelihood, act);
  detail::condition_gradient(g.sum, clip);
  return detail::apply_step(params, g.sum, [&](std::span<double> y, std::span<const double> gs) {
    step_modified_conventional(y, gs, lr, batch.size());
  });
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct LayerStats {
  std::size_t layer = 0;
  double weight_mean = 0.0, weight_std = 0.0;
  double bias_mean = 0.0, bias_std = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double train_loss = 0.0;  // selected loss
  double val_loss = 0.0;
  double train_cross_entropy = 0.0;
  double val_cross_entropy = 0.0;
  std::vector<LayerStats> layers;
};

struct EvalResult {
  double accuracy = 0.0;
  Matrix confusion;  // rows: true class, cols: predicted
  std::vector<double> per_class_accuracy;
  std::size_t count = 0;
  StageTimings mean_latency;  // per image
};

struct Metrics {
  std::vector<EpochMetrics> epochs;
  std::optional<EvalResult> final_eval;
  std::size_t head_fit_calls = 0;
};

inline std::vector<LayerStats> layer_stats(const NetworkParams& p) {
  auto moments = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    sd = std::sqrt(var / static_cast<double>(v.size()));
  };
  std::vector<LayerStats> out;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const Layer& l = p.layers[i];
    if (!l.has_params()) continue;
    LayerStats s;
    s.layer = i;
    moments(l.weights.data(), s.weight_mean, s.weight_std);
    moments(l.bias.data(), s.bias_mean, s.bias_std);
    out.push_back(s);
  }
  return out;
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string metrics_csv_header(const NetworkParams& p) {
  std::string h = "epoch,trainAcc,valAcc,trainLoss,valLoss,trainCE,valCE";
  for (const auto& s : layer_stats(p)) {
    const std::string k = "L" + std::to_string(s.layer);
    h += "," + k + "_wMean," + k + "_wStd," + k + "_bMean," + k + "_bStd";
  }
  return h;
}

inline std::string metrics_csv_row(const EpochMetrics& m) {
  using detail::fmt_double;
  std::string r = std::to_string(m.epoch) + "," + fmt_double(m.train_accuracy) + "," + fmt_double(m.val_accuracy) +
                  "," + fmt_double(m.train_loss) + "," + fmt_double(m.val_loss) + "," +
                  fmt_double(m.train_cross_entropy) + "," + fmt_double(m.val_cross_entropy);
  for (const auto& s : m.layers) {
    r += "," + fmt_double(s.weight_mean) + "," + fmt_double(s.weight_std) + "," + fmt_double(s.bias_mean) + "," +
         fmt_double(s.bias_std);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// Thrown when the loss or parameters stop being finite; carries the last
// parameters that were finite.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, NetworkParams last_good, std::size_t epoch)
      : DivergenceError(what), last_good_(std::move(last_good)), epoch_(epoch) {}
  const NetworkParams& last_good() const { return last_good_; }
  std::size_t epoch() const { return epoch_; }

 private:
  NetworkParams last_good_;
  std::size_t epoch_;
};

struct TrainResult {
  ModelBundle bundle;
  Metrics metrics;
};

inline std::vector<Example> make_examples(const Dataset& ds, Split split, const PreprocessConfig& cfg) {
  std::vector<Example> out;
  for (const auto& s : ds.samples)
    if (s.split == split) out.push_back({network_input(s.image, cfg), s.label});
  return out;
}

struct SetScores {
  double accuracy = 0.0;
  double loss = 0.0;
  double cross_entropy = 0.0;
};

inline SetScores score_examples(const NetworkParams& net, const std::vector<Example>& examples, LossMode loss_mode,
                                ActivationMode act) {
  SetScores s;
  if (examples.empty()) return s;
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    const ForwardTrace t = forward(net, ex.input, act);
    correct += argmax(t.probs) == ex.label;
    s.loss += loss(t.probs, ex.label, loss_mode);
    s.cross_entropy += loss(t.probs, ex.label, LossMode::CrossEntropyStandard);
  }
  const auto n = static_cast<double>(examples.size());
  s.accuracy = static_cast<double>(correct) / n;
  s.loss /= n;
  s.cross_entropy /= n;
  return s;
}

// Fits the configured head on the final network's training features.
inline void fit_head(ModelBundle& b, HeadKind head, const std::vector<Example>& train, const TrainConfig& cfg,
                     Rng& rng, Metrics& metrics) {
  b.head = head;
  b.forest.reset();
  b.elm.reset();
  if (head == HeadKind::Softmax) return;
  const std::size_t d = b.network.feature_size();
  Matrix feats(train.size(), d);
  std::vector<std::size_t> labels(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const ForwardTrace t = forward(b.network, train[i].input, b.activation);
    std::copy(t.features.begin(), t.features.end(), feats.row(i).begin());
    labels[i] = train[i].label;
  }
  const std::size_t C = b.class_names.size();
  if (head == HeadKind::Forest) {
    b.forest = forest_update_leaves(forest_init(d, C, cfg.forest_trees, cfg.forest_depth, b.activation), feats, labels);
  } else {
    Rng elm_rng = rng.fork(2);
    b.elm = elm_fit(elm_init(d, cfg.elm_hidden, C, elm_rng, cfg.elm_ridge), feats, labels);
  }
  ++metrics.head_fit_calls;
}

inline EvalResult evaluate_examples(const ModelBundle& b, const std::vector<Example>& examples) {
  if (examples.empty()) throw ParameterError("evaluate: empty split");
  const std::size_t C = b.class_names.size();
  EvalResult r;
  r.count = examples.size();
  r.confusion = Matrix(C, C);
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    const Prediction p = predict_features(b, forward(b.network, ex.input, b.activation));
    r.confusion(ex.label, p.label) += 1.0;
    correct += p.label == ex.label;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  r.per_class_accuracy.assign(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double total = 0.0;
    for (std::size_t k = 0; k < C; ++k) total += r.confusion(c, k);
    r.per_class_accuracy[c] = total > 0.0 ? r.confusion(c, c) / total : 0.0;
  }
  return r;
}

// Evaluation from raw images, timing each pipeline stage.
inline EvalResult evaluate(const ModelBundle& b, const Dataset& ds, Split split = Split::Test) {
  const auto samples = ds.subset(split);
  if (samples.empty()) throw ParameterError("evaluate: " + to_string(split) + " split is empty");
  const std::size_t C = b.class_names.size();
  EvalResult r;
  r.count = samples.size();
  r.confusion = Matrix(C, C);
  std::size_t correct = 0;
  for (const Sample* s : samples) {
    if (s->label >= C) throw LabelError("evaluate: label out of range for model");
    const Prediction p = classify(b, s->image);
    r.confusion(s->label, p.label) += 1.0;
    correct += p.label == s->label;
    r.mean_latency.preprocess_ms += p.timings.preprocess_ms;
    r.mean_latency.saliency_ms += p.timings.saliency_ms;
    r.mean_latency.network_ms += p.timings.network_ms;
    r.mean_latency.head_ms += p.timings.head_ms;
  }
  const auto n = static_cast<double>(samples.size());
  r.accuracy = static_cast<double>(correct) / n;
  r.mean_latency.preprocess_ms /= n;
  r.mean_latency.saliency_ms /= n;
  r.mean_latency.network_ms /= n;
  r.mean_latency.head_ms /= n;
  r.per_class_accuracy.assign(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double total = 0.0;
    for (std::size_t k = 0; k < C; ++k) total += r.confusion(c, k);
    r.per_class_accuracy[c] = total > 0.0 ? r.confusion(c, c) / total : 0.0;
  }
  return r;
}

// Called after each epoch with the freshly computed row.
using EpochCallback = std::function<void(const EpochMetrics&)>;

inline TrainResult train(const TrainConfig& cfg, const Dataset& ds, HeadKind head, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const auto train_set = make_examples(ds, Split::Train, cfg.preprocess);
  const auto val_set = make_examples(ds, Split::Validation, cfg.preprocess);
  if (train_set.empty()) throw ParameterError("train: training split is empty");
  if (val_set.empty()) throw ParameterError("train: validation split is empty");

  Rng rng(cfg.seed);
  Rng init_rng = rng.fork(1);
  Rng batch_rng = rng.fork(3);

  TrainResult result;
  ModelBundle& b = result.bundle;
  b.class_names = ds.class_names;
  b.activation = cfg.activation;
  b.preprocess = cfg.preprocess;
  b.seed = cfg.seed;
  b.network = make_default_network(ds.class_count(), init_rng, cfg.preprocess.patches.count,
                                   cfg.preprocess.patches.size);

  const LossMode loss_mode = cfg.update_rule == UpdateRule::Baseline ? cfg.loss_mode : LossMode::LogLikelihood;
  std::vector<std::size_t> labels(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) labels[i] = train_set[i].label;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const auto& idx : make_batches(labels, cfg.batch_size, batch_rng)) {
      Batch batch;
      for (std::size_t i : idx) batch.push_back(&train_set[i]);
      NetworkParams next;
      try {
        switch (cfg.update_rule) {
          case UpdateRule::Baseline:
            next = sgd_step_baseline(b.network, batch, cfg.learning_rate, loss_mode, cfg.activation, cfg.gradient_clip);
            break;
          case UpdateRule::ModifiedLiteral:
            next = sgd_step_modified_literal(b.network, batch, cfg.learning_rate, cfg.activation, cfg.gradient_clip);
            break;
          case UpdateRule::ModifiedConventional:
            next = sgd_step_modified_conventional(b.network, batch, cfg.learning_rate, cfg.activation,
                                                  cfg.gradient_clip);
            break;
        }
      } catch (const DivergenceError& e) {
        throw TrainingDiverged(std::string("training diverged in epoch ") + std::to_string(epoch) + ": " + e.what(),
                               b.network, epoch);
      }
      if (!next.all_finite()) {
        throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch), b.network, epoch);
      }
      b.network = std::move(next);
    }

    EpochMetrics m;
    m.epoch = epoch;
    const SetScores tr = score_examples(b.network, train_set, loss_mode, cfg.activation);
    const SetScores va = score_examples(b.network, val_set, loss_mode, cfg.activation);
    if (!std::isfinite(tr.loss)) {
      throw TrainingDiverged("non-finite training loss in epoch " + std::to_string(epoch), b.network, epoch);
    }
    m.train_accuracy = tr.accuracy;
    m.val_accuracy = va.accuracy;
    m.train_loss = tr.loss;
    m.val_loss = va.loss;
    m.train_cross_entropy = tr.cross_entropy;
    m.val_cross_entropy = va.cross_entropy;
    m.layers = layer_stats(b.network);
    result.metrics.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }

  fit_head(b, head, train_set, cfg, rng, result.metrics);

  const Split final_split = ds.count(Split::Test) > 0 ? Split::Test : Split::Validation;
  result.metrics.final_eval = evaluate_examples(b, make_examples(ds, final_split, cfg.preprocess));
  return result;
}

}  // namespace cnneelm
