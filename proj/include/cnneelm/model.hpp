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

// End-to-end inference: face -> salient patches -> network features -> head.

#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "cnneelm/dataio.hpp"
#include "cnneelm/heads.hpp"
#include "cnneelm/network.hpp"
#include "cnneelm/saliency.hpp"

namespace cnneelm {

inline constexpr int kModelFormatVersion = 1;

struct PreprocessConfig {
  double saliency_sigma = 2.0;
  PatchOptions patches;
  bool operator==(const PreprocessConfig& o) const {
    return saliency_sigma == o.saliency_sigma && patches.count == o.patches.count &&
           patches.size == o.patches.size && patches.min_separation == o.patches.min_separation &&
           patches.sim_threshold == o.patches.sim_threshold;
  }
};

// Salient patches of a 48x48 face, padded to the configured count.
inline PatchSet extract_patches(const GrayImage& face, const PreprocessConfig& cfg) {
  const SaliencyMap map = image_signature_saliency(face, cfg.saliency_sigma);
  return pad_patches(sample_patches(face, map, cfg.patches), cfg.patches.count);
}

inline std::vector<double> network_input(const GrayImage& face, const PreprocessConfig& cfg) {
  return patches_to_input(extract_patches(normalize_face(face), cfg));
}

struct ModelBundle {
  int format_version = kModelFormatVersion;
  NetworkParams network;
  ActivationMode activation = ActivationMode::Baseline;
  HeadKind head = HeadKind::Softmax;
  std::optional<ForestHead> forest;
  std::optional<ElmModel> elm;
  PreprocessConfig preprocess;
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;
};

struct StageTimings {
  double preprocess_ms = 0.0;
  double saliency_ms = 0.0;
  double network_ms = 0.0;
  double head_ms = 0.0;
  double total_ms() const { return preprocess_ms + saliency_ms + network_ms + head_ms; }
};

struct Prediction {
  std::vector<double> scores;
  std::size_t label = 0;
  bool unfitted = false;
  StageTimings timings;
};

inline Prediction predict_features(const ModelBundle& b, const ForwardTrace& trace) {
  Prediction p;
  switch (b.head) {
    case HeadKind::Softmax:
      p.scores = trace.probs;
      p.label = argmax(p.scores);
      break;
    case HeadKind::Forest:
      if (!b.forest) throw ParameterError("bundle has no forest head");
      p.scores = forest_predict(*b.forest, trace.features);
      p.label = argmax(p.scores);
      break;
    case HeadKind::Elm: {
      if (!b.elm) throw ParameterError("bundle has no ELM head");
      auto e = elm_predict(*b.elm, trace.features);
      p.scores = std::move(e.scores);
      p.label = e.label;
      p.unfitted = e.unfitted;
      break;
    }
  }
  return p;
}

// Full classification with per-stage wall-clock timings.
inline Prediction classify(const ModelBundle& b, const GrayImage& image) {
  using Clock = std::chrono::steady_clock;
  auto ms = [](Clock::time_point a, Clock::time_point z) {
    return std::chrono::duration<double, std::milli>(z - a).count();
  };
  const auto t0 = Clock::now();
  const GrayImage face = normalize_face(image);
  const auto t1 = Clock::now();
  const auto input = patches_to_input(extract_patches(face, b.preprocess));
  const auto t2 = Clock::now();
  const ForwardTrace trace = forward(b.network, input, b.activation);
  const auto t3 = Clock::now();
  Prediction p = predict_features(b, trace);
  const auto t4 = Clock::now();
  p.timings = {ms(t0, t1), ms(t1, t2), ms(t2, t3), ms(t3, t4)};
  return p;
}

}  // namespace cnneelm
