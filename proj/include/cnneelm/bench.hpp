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

// Per-image latency benchmark over pre-loaded images. Disk I/O is outside
// the timed region.

#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cnneelm/model.hpp"
#include "cnneelm/numerics.hpp"
#include "cnneelm/trainer.hpp"

namespace cnneelm {

struct BenchEntry {
  std::string head;
  std::string activation;
  std::size_t images = 0;
  std::size_t repeats = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  double fps = 0.0;
  double accuracy = 0.0;
  StageTimings stages;                // mean per image
  std::vector<double> repeat_means;   // mean latency of each timed pass
  double repeat_median_ms = 0.0;      // median of repeat_means
};

struct BenchReport {
  std::vector<BenchEntry> entries;

  const BenchEntry* find(const std::string& head) const {
    for (const auto& e : entries)
      if (e.head == head) return &e;
    return nullptr;
  }
};

// One warm-up pass, then `repeats` timed passes over every image.
// Percentiles use linear interpolation, so p95 exists for any sample count.
inline BenchEntry bench_model(const ModelBundle& b, const std::vector<const Sample*>& images, std::size_t repeats) {
  if (images.empty()) throw ParameterError("bench: no images to time");
  if (repeats < 1) throw ParameterError("bench: repeats must be >= 1");
  using Clock = std::chrono::steady_clock;
  BenchEntry e;
  e.head = to_string(b.head);
  e.activation = to_string(b.activation);
  e.images = images.size();
  e.repeats = repeats;

  std::size_t correct = 0;
  for (const Sample* s : images) correct += classify(b, s->image).label == s->label;
  e.accuracy = static_cast<double>(correct) / static_cast<double>(images.size());

  std::vector<double> all;
  for (std::size_t r = 0; r < repeats; ++r) {
    double pass = 0.0;
    for (const Sample* s : images) {
      const auto t0 = Clock::now();
      const Prediction p = classify(b, s->image);
      const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      all.push_back(ms);
      pass += ms;
      e.stages.preprocess_ms += p.timings.preprocess_ms;
      e.stages.saliency_ms += p.timings.saliency_ms;
      e.stages.network_ms += p.timings.network_ms;
      e.stages.head_ms += p.timings.head_ms;
    }
    e.repeat_means.push_back(pass / static_cast<double>(images.size()));
  }
  const auto n = static_cast<double>(all.size());
  e.stages.preprocess_ms /= n;
  e.stages.saliency_ms /= n;
  e.stages.network_ms /= n;
  e.stages.head_ms /= n;
  double sum = 0.0;
  for (double v : all) sum += v;
  e.mean_ms = sum / n;
  e.median_ms = quantile(all, 0.5);
  e.p95_ms = quantile(all, 0.95);
  e.fps = 1000.0 / e.mean_ms;
  e.repeat_median_ms = quantile(e.repeat_means, 0.5);
  return e;
}

inline nlohmann::json bench_to_json(const BenchReport& r) {
  using nlohmann::json;
  json entries = json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"head", e.head},
                       {"activation", e.activation},
                       {"images", e.images},
                       {"repeats", e.repeats},
                       {"mean_ms", e.mean_ms},
                       {"median_ms", e.median_ms},
                       {"p95_ms", e.p95_ms},
                       {"fps", e.fps},
                       {"accuracy", e.accuracy},
                       {"repeat_means_ms", e.repeat_means},
                       {"repeat_median_ms", e.repeat_median_ms},
                       {"stages_ms",
                        {{"preprocess", e.stages.preprocess_ms},
                         {"saliency", e.stages.saliency_ms},
                         {"network", e.stages.network_ms},
                         {"head", e.stages.head_ms}}}});
  }
  json j{{"entries", std::move(entries)}};
  const BenchEntry *elm = r.find("elm"), *forest = r.find("forest");
  if (elm && forest) {
    j["elm_vs_forest"] = {{"latency_ratio", elm->repeat_median_ms / forest->repeat_median_ms},
                          {"head_stage_ratio", elm->stages.head_ms / forest->stages.head_ms},
                          {"head_stage_delta_ms", elm->stages.head_ms - forest->stages.head_ms},
                          {"total_delta_ms", elm->repeat_median_ms - forest->repeat_median_ms}};
  }
  return j;
}

inline std::string bench_csv(const BenchReport& r) {
  std::string out = "head,activation,accuracy,mean_ms,median_ms,p95_ms,fps,preprocess_ms,saliency_ms,network_ms,head_ms\n";
  char buf[512];
  for (const auto& e : r.entries) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", e.head.c_str(),
                  e.activation.c_str(), e.accuracy, e.mean_ms, e.median_ms, e.p95_ms, e.fps, e.stages.preprocess_ms,
                  e.stages.saliency_ms, e.stages.network_ms, e.stages.head_ms);
    out += buf;
  }
  return out;
}

}  // namespace cnneelm
