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

// Report emission: SVG charts, CSV tables and the baseline-vs-modified
// accuracy experiment.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "cnneelm/dataio.hpp"
#include "cnneelm/trainer.hpp"

namespace cnneelm {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};
  return colors[i % 7];
}

}  // namespace detail

inline constexpr int kChartW = 640, kChartH = 400, kMargin = 56;

// Self-contained line chart. Non-finite points are skipped.
inline std::string svg_line_chart(const std::string& title, const std::vector<Series>& series,
                                  const std::string& xlabel, const std::string& ylabel) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  y0 = std::min(y0, 0.0);
  const double pw = kChartW - 2 * kMargin, ph = kChartH - 2 * kMargin;
  auto px = [&](double x) { return kMargin + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kChartH - kMargin - (y - y0) / (y1 - y0) * ph; };

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kChartW) + "\" height=\"" +
                  std::to_string(kChartH) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(kChartW / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
       detail::xml_escape(title) + "</text>\n";
  s += "<line x1=\"" + detail::fmt("%.1f", kMargin) + "\" y1=\"" + detail::fmt("%.1f", kChartH - kMargin) +
       "\" x2=\"" + detail::fmt("%.1f", kChartW - kMargin) + "\" y2=\"" + detail::fmt("%.1f", kChartH - kMargin) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + detail::fmt("%.1f", kMargin) + "\" y1=\"" + detail::fmt("%.1f", kMargin) + "\" x2=\"" +
       detail::fmt("%.1f", kMargin) + "\" y2=\"" + detail::fmt("%.1f", kChartH - kMargin) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double yv = y0 + (y1 - y0) * t / 4.0, xv = x0 + (x1 - x0) * t / 4.0;
    s += "<text x=\"" + detail::fmt("%.1f", kMargin - 6) + "\" y=\"" + detail::fmt("%.1f", py(yv) + 4) +
         "\" text-anchor=\"end\">" + detail::fmt("%.3g", yv) + "</text>\n";
    s += "<text x=\"" + detail::fmt("%.1f", px(xv)) + "\" y=\"" + detail::fmt("%.1f", kChartH - kMargin + 16) +
         "\" text-anchor=\"middle\">" + detail::fmt("%.3g", xv) + "</text>\n";
  }
  s += "<text x=\"" + std::to_string(kChartW / 2) + "\" y=\"" + std::to_string(kChartH - 12) +
       "\" text-anchor=\"middle\">" + detail::xml_escape(xlabel) + "</text>\n";
  s += "<text x=\"16\" y=\"" + std::to_string(kChartH / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       std::to_string(kChartH / 2) + ")\">" + detail::xml_escape(ylabel) + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::string pts;
    for (std::size_t i = 0; i < series[k].x.size() && i < series[k].y.size(); ++i) {
      if (!std::isfinite(series[k].x[i]) || !std::isfinite(series[k].y[i])) continue;
      pts += detail::fmt("%.2f", px(series[k].x[i])) + "," + detail::fmt("%.2f", py(series[k].y[i])) + " ";
    }
    s += "<polyline fill=\"none\" stroke=\"" + std::string(detail::palette(k)) + "\" stroke-width=\"1.5\" points=\"" +
         pts + "\"/>\n";
    s += "<text x=\"" + std::to_string(kChartW - kMargin - 4) + "\" y=\"" + std::to_string(kMargin + 14 * k) +
         "\" text-anchor=\"end\" fill=\"" + detail::palette(k) + "\">" + detail::xml_escape(series[k].name) +
         "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

inline std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                                 const std::vector<double>& values, const std::string& ylabel) {
  double top = 0.0;
  for (double v : values)
    if (std::isfinite(v)) top = std::max(top, v);
  if (top <= 0.0) top = 1.0;
  const double pw = kChartW - 2 * kMargin, ph = kChartH - 2 * kMargin;
  const double slot = values.empty() ? pw : pw / static_cast<double>(values.size());
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kChartW) + "\" height=\"" +
                  std::to_string(kChartH) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(kChartW / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
       detail::xml_escape(title) + "</text>\n";
  s += "<text x=\"16\" y=\"" + std::to_string(kChartH / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       std::to_string(kChartH / 2) + ")\">" + detail::xml_escape(ylabel) + "</text>\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::isfinite(values[i]) ? std::max(values[i], 0.0) : 0.0;
    const double h = v / top * ph, x = kMargin + slot * i + slot * 0.15;
    s += "<rect x=\"" + detail::fmt("%.2f", x) + "\" y=\"" + detail::fmt("%.2f", kChartH - kMargin - h) +
         "\" width=\"" + detail::fmt("%.2f", slot * 0.7) + "\" height=\"" + detail::fmt("%.2f", h) + "\" fill=\"" +
         detail::palette(i) + "\"/>\n";
    s += "<text x=\"" + detail::fmt("%.2f", x + slot * 0.35) + "\" y=\"" +
         detail::fmt("%.2f", kChartH - kMargin - h - 4) + "\" text-anchor=\"middle\">" +
         detail::fmt("%.3g", values[i]) + "</text>\n";
    const std::string label = i < labels.size() ? labels[i] : std::to_string(i);
    s += "<text x=\"" + detail::fmt("%.2f", x + slot * 0.35) + "\" y=\"" +
         std::to_string(kChartH - kMargin + 16) + "\" text-anchor=\"middle\">" + detail::xml_escape(label) +
         "</text>\n";
  }
  s += "<line x1=\"" + std::to_string(kMargin) + "\" y1=\"" + std::to_string(kChartH - kMargin) + "\" x2=\"" +
       std::to_string(kChartW - kMargin) + "\" y2=\"" + std::to_string(kChartH - kMargin) + "\" stroke=\"black\"/>\n";
  s += "</svg>\n";
  return s;
}

// Parsed metrics CSV: header names and numeric rows.
struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw ParameterError("metrics CSV has no column '" + name + "'");
    const auto k = static_cast<std::size_t>(it - columns.begin());
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(k < r.size() ? r[k] : std::nan(""));
    return out;
  }
};

inline MetricsTable parse_metrics_csv(const std::string& text) {
  MetricsTable t;
  std::size_t pos = 0, lineno = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t a = 0;
    while (true) {
      const std::size_t b = line.find(',', a);
      cells.push_back(line.substr(a, b == std::string::npos ? std::string::npos : b - a));
      if (b == std::string::npos) break;
      a = b + 1;
    }
    if (t.columns.empty()) {
      t.columns = cells;
      continue;
    }
    if (cells.size() != t.columns.size()) throw RowError(lineno, "expected " + std::to_string(t.columns.size()) + " columns");
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw RowError(lineno, "not a number: '" + c + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (t.columns.empty()) throw InputError("metrics CSV is empty");
  return t;
}

// ---------------------------------------------------------------------------
// Accuracy-delta experiment
// ---------------------------------------------------------------------------

struct DeltaRun {
  std::uint64_t seed = 0;
  double baseline_val = 0.0;
  double modified_val = 0.0;
  double delta() const { return modified_val - baseline_val; }
};

struct DeltaSummary {
  std::vector<DeltaRun> runs;
  double mean_delta = 0.0;
  double sd_delta = 0.0;
  double confidence = 0.95;
  // Student-t interval; NaN with fewer than two runs.
  double ci_low = std::nan("");
  double ci_high = std::nan("");
};

inline DeltaSummary summarize_deltas(std::vector<DeltaRun> runs, double confidence = 0.95) {
  DeltaSummary s;
  s.runs = std::move(runs);
  s.confidence = confidence;
  const auto n = s.runs.size();
  if (n == 0) return s;
  for (const auto& r : s.runs) s.mean_delta += r.delta();
  s.mean_delta /= static_cast<double>(n);
  if (n < 2) return s;
  double ss = 0.0;
  for (const auto& r : s.runs) ss += (r.delta() - s.mean_delta) * (r.delta() - s.mean_delta);
  s.sd_delta = std::sqrt(ss / static_cast<double>(n - 1));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  const double t = boost::math::quantile(boost::math::complement(dist, (1.0 - confidence) / 2.0));
  const double half = t * s.sd_delta / std::sqrt(static_cast<double>(n));
  s.ci_low = s.mean_delta - half;
  s.ci_high = s.mean_delta + half;
  return s;
}

struct DeltaOptions {
  std::vector<std::uint64_t> seeds;
  std::size_t per_class = 50;
  std::size_t classes = 6;
  TrainConfig baseline;
  TrainConfig modified;
};

// Same synthetic dataset and split per seed for both configurations; the
// figure of merit is the last epoch's validation accuracy.
inline DeltaSummary run_accuracy_delta(const DeltaOptions& opt, const std::function<void(const DeltaRun&)>& on_run = {}) {
  std::vector<DeltaRun> runs;
  for (const auto seed : opt.seeds) {
    Rng rng(seed);
    Rng data_rng = rng.fork(10), split_rng = rng.fork(11);
    const Dataset ds = split(synth_dataset(data_rng, opt.per_class, opt.classes), SplitRatios{}, split_rng);
    TrainConfig b = opt.baseline, m = opt.modified;
    b.seed = m.seed = seed;
    DeltaRun r;
    r.seed = seed;
    r.baseline_val = train(b, ds, HeadKind::Softmax).metrics.epochs.back().val_accuracy;
    r.modified_val = train(m, ds, HeadKind::Softmax).metrics.epochs.back().val_accuracy;
    if (on_run) on_run(r);
    runs.push_back(r);
  }
  return summarize_deltas(std::move(runs));
}

inline nlohmann::json delta_to_json(const DeltaSummary& s, const DeltaOptions& opt) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : s.runs)
    runs.push_back({{"seed", r.seed}, {"baseline_val", r.baseline_val}, {"modified_val", r.modified_val}, {"delta", r.delta()}});
  auto cfg = [](const TrainConfig& c) {
    return nlohmann::json{{"update", to_string(c.update_rule)}, {"loss", to_string(c.loss_mode)},
                          {"activation", to_string(c.activation)}, {"lr", c.learning_rate},
                          {"batch", c.batch_size}, {"epochs", c.epochs}};
  };
  return {{"runs", std::move(runs)},
          {"mean_delta", num(s.mean_delta)},
          {"sd_delta", num(s.sd_delta)},
          {"confidence", s.confidence},
          {"ci_low", num(s.ci_low)},
          {"ci_high", num(s.ci_high)},
          {"per_class", opt.per_class},
          {"baseline", cfg(opt.baseline)},
          {"modified", cfg(opt.modified)},
          {"reference_delta", 0.02}};
}

}  // namespace cnneelm
