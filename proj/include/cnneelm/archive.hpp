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

// On-disk dataset archive (PGM files + index.json) and the prepare step that
// produces it: load, normalise, PCA-filter, split.

#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cnneelm/dataio.hpp"

namespace cnneelm {

inline constexpr int kArchiveFormatVersion = 1;

// Writes every sample as an 8-bit PGM plus an index. Pixel values are
// quantised to 1/255 on the way out.
inline void save_dataset_archive(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.pgm", i);
    write_pgm(dir / name, s.image);
    samples.push_back({{"file", name}, {"label", s.label}, {"split", to_string(s.split)}});
  }
  const nlohmann::json index{{"format_version", kArchiveFormatVersion},
                             {"class_names", ds.class_names},
                             {"samples", std::move(samples)},
                             {"warnings", ds.warnings}};
  std::ofstream out(dir / "index.json");
  if (!out) throw IoError("cannot write " + (dir / "index.json").string());
  out << index.dump(1) << "\n";
}

inline Dataset load_dataset_archive(const std::filesystem::path& dir) {
  const auto index_path = dir / "index.json";
  std::ifstream in(index_path);
  if (!in) throw IoError("no dataset archive at " + dir.string() + " (missing index.json)");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(index_path.string() + ": " + e.what());
  }
  auto bad = [&](const std::string& why) { return IoError(index_path.string() + ": " + why); };
  try {
    if (j.value("format_version", 0) != kArchiveFormatVersion) throw bad("unsupported archive format version");
    Dataset ds;
    ds.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (ds.class_names.empty()) throw bad("no class names");
    if (j.contains("warnings")) ds.warnings = j["warnings"].get<std::vector<std::string>>();
    for (const auto& s : j.at("samples")) {
      const auto label = s.at("label").get<std::size_t>();
      if (label >= ds.class_names.size()) throw LabelError(index_path.string() + ": label " + std::to_string(label) + " out of range");
      const auto file = s.at("file").get<std::string>();
      GrayImage img = read_pgm(dir / file);
      if (img.width() != kFaceSize || img.height() != kFaceSize) throw bad(file + " is not 48x48");
      ds.samples.push_back({std::move(img), label, parse_split(s.at("split").get<std::string>())});
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw bad(e.what());
  }
}

struct PrepareOptions {
  std::string format = "dir";  // dir | csv
  std::size_t pca_keep = 0;    // 0: min(16, n)
  double pca_percentile = 95.0;
  SplitRatios ratios;
};

struct FilterRow {
  std::size_t index = 0;  // position in the loaded input
  std::size_t label = 0;
  FilterReport report;
};

struct PrepareResult {
  Dataset dataset;
  std::vector<FilterRow> filter;
  std::size_t pca_components = 0;
  double threshold = 0.0;
};

// Threshold never drops below this, so a model that reconstructs every
// image exactly keeps all of them.
inline constexpr double kMinFilterThreshold = 1e-8;

inline PrepareResult prepare_dataset(const std::filesystem::path& input, const PrepareOptions& opt, Rng& rng) {
  if (!(opt.pca_percentile > 0.0 && opt.pca_percentile <= 100.0))
    throw ParameterError("pca threshold percentile must be in (0, 100]");
  Dataset loaded;
  bool presplit = false;
  if (opt.format == "dir") {
    loaded = load_directory_dataset(input);
  } else if (opt.format == "csv") {
    loaded = load_csv_dataset(input);
    presplit = true;
  } else {
    throw ParameterError("unknown input format '" + opt.format + "' (expected dir|csv)");
  }
  if (loaded.samples.empty()) throw InputError("no images found in " + input.string());

  PrepareResult r;
  std::vector<GrayImage> imgs;
  for (const auto& s : loaded.samples) imgs.push_back(s.image);
  const std::size_t n = imgs.size(), full = std::min(n, kFaceSize * kFaceSize);
  const std::size_t k = opt.pca_keep == 0 ? std::min<std::size_t>(16, full) : opt.pca_keep;
  if (k > full) throw ParameterError("--pca-keep " + std::to_string(k) + " exceeds rank bound " + std::to_string(full));
  const PcaModel model = pca_fit(images_to_matrix(imgs), k);
  std::vector<double> errors;
  for (const auto& img : imgs) errors.push_back(reconstruction_error(model, img));
  r.pca_components = k;
  r.threshold = std::max(quantile(errors, opt.pca_percentile / 100.0), kMinFilterThreshold);
  const auto reports = pca_filter(imgs, model, r.threshold);

  Dataset kept;
  kept.class_names = loaded.class_names;
  kept.warnings = loaded.warnings;
  for (std::size_t i = 0; i < n; ++i) {
    r.filter.push_back({i, loaded.samples[i].label, reports[i]});
    if (reports[i].kept) kept.samples.push_back(loaded.samples[i]);
  }
  r.dataset = presplit ? std::move(kept) : split(kept, opt.ratios, rng);
  return r;
}

inline void write_filter_report_csv(const std::filesystem::path& path, const std::vector<FilterRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "index,label,error,threshold,kept\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%d\n", r.index, r.label, r.report.error, r.report.threshold,
                  r.report.kept ? 1 : 0);
    out << buf;
  }
}

}  // namespace cnneelm
