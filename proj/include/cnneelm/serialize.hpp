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

// Model bundle <-> JSON. Keys are sorted and doubles are written in the
// shortest form that reads back to the same bits, so save -> load -> save
// reproduces the file byte for byte.

#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "cnneelm/model.hpp"
#include "cnneelm/trainer.hpp"

namespace cnneelm {

namespace detail {

using nlohmann::json;

inline json tensor_json(const Matrix& m, const std::string& where) {
  if (!m.all_finite()) throw NonFiniteError("non-finite value in " + where);
  return json{{"shape", {m.rows(), m.cols()}}, {"data", m.data()}};
}

inline const json& field(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) throw ModelFormatError(where + " is not an object");
  auto it = j.find(key);
  if (it == j.end()) throw MissingFieldError("missing field '" + (where.empty() ? key : where + "." + key) + "'");
  return *it;
}

inline std::string path(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

inline double number(const json& v, const std::string& where) {
  if (v.is_number()) {
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw NonFiniteError("non-finite value in " + where);
    return d;
  }
  // JSON has no NaN/Inf; writers emit null or a string in their place.
  if (v.is_null() || v.is_string()) throw NonFiniteError("non-finite value in " + where);
  throw ModelFormatError(where + ": expected a number");
}

inline std::uint64_t count(const json& v, const std::string& where) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw ModelFormatError(where + ": expected a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::string text(const json& v, const std::string& where) {
  if (!v.is_string()) throw ModelFormatError(where + ": expected a string");
  return v.get<std::string>();
}

template <typename F>
auto parse_enum(F&& parse, const json& v, const std::string& where) {
  try {
    return parse(text(v, where));
  } catch (const ParameterError& e) {
    throw ModelFormatError(where + ": " + e.what());
  }
}

inline Matrix tensor(const json& j, const std::string& where) {
  const json& shape = field(j, "shape", where);
  const json& data = field(j, "data", where);
  if (!shape.is_array() || shape.size() != 2) throw ShapeError(where + ".shape: expected [rows, cols]");
  if (!data.is_array()) throw ModelFormatError(where + ".data: expected an array");
  const auto rows = count(shape[0], where + ".shape"), cols = count(shape[1], where + ".shape");
  if (data.size() != rows * cols) {
    throw ShapeError(where + ": shape " + std::to_string(rows) + "x" + std::to_string(cols) + " but " +
                     std::to_string(data.size()) + " values");
  }
  std::vector<double> v(data.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = number(data[i], where + ".data[" + std::to_string(i) + "]");
  return Matrix(rows, cols, std::move(v));
}

}  // namespace detail

inline nlohmann::json model_to_json(const ModelBundle& b) {
  using nlohmann::json;
  json layers = json::array();
  for (std::size_t i = 0; i < b.network.layers.size(); ++i) {
    const Layer& l = b.network.layers[i];
    json jl{{"kind", to_string(l.kind)}, {"out_channels", l.out_channels}, {"kernel", l.kernel}};
    if (l.has_params()) {
      const std::string where = "network.layers[" + std::to_string(i) + "]";
      jl["weights"] = detail::tensor_json(l.weights, where + ".weights");
      jl["bias"] = detail::tensor_json(l.bias, where + ".bias");
    }
    layers.push_back(std::move(jl));
  }
  const Shape& in = b.network.input;
  json j{
      {"format_version", b.format_version},
      {"class_names", b.class_names},
      {"seed", b.seed},
      {"activation", to_string(b.activation)},
      {"head", to_string(b.head)},
      {"preprocess",
       {{"saliency_sigma", b.preprocess.saliency_sigma},
        {"patch_count", b.preprocess.patches.count},
        {"patch_size", b.preprocess.patches.size},
        {"min_separation", b.preprocess.patches.min_separation},
        {"sim_threshold", b.preprocess.patches.sim_threshold}}},
      {"network",
       {{"input", {{"channels", in.channels}, {"height", in.height}, {"width", in.width}}},
        {"feature_layer", b.network.feature_layer},
        {"layers", std::move(layers)}}},
  };
  if (b.forest) {
    json trees = json::array();
    for (std::size_t t = 0; t < b.forest->trees.size(); ++t) {
      const auto& tr = b.forest->trees[t];
      trees.push_back({{"depth", tr.depth},
                       {"split_features", tr.split_features},
                       {"leaves", detail::tensor_json(tr.leaves, "forest.trees[" + std::to_string(t) + "].leaves")}});
    }
    j["forest"] = {{"mode", to_string(b.forest->mode)}, {"smoothing", b.forest->smoothing}, {"trees", std::move(trees)}};
  }
  if (b.elm) {
    if (!std::all_of(b.elm->bias.begin(), b.elm->bias.end(), [](double v) { return std::isfinite(v); }))
      throw NonFiniteError("non-finite value in elm.bias");
    j["elm"] = {{"input_weights", detail::tensor_json(b.elm->input_weights, "elm.input_weights")},
                {"bias", b.elm->bias},
                {"output_weights", detail::tensor_json(b.elm->output_weights, "elm.output_weights")},
                {"ridge", b.elm->ridge},
                {"seed", b.elm->seed}};
  }
  return j;
}

// Parses and fully validates a bundle. Every failure is a ModelFormatError
// subtype: VersionError, MissingFieldError, ShapeError or NonFiniteError.
inline ModelBundle model_from_json(const nlohmann::json& j) {
  using detail::count;
  using detail::field;
  using detail::number;
  using detail::text;
  ModelBundle b;
  if (!j.is_object()) throw VersionError("model document is not a JSON object; format version unknown");
  if (!j.contains("format_version")) throw VersionError("missing field 'format_version'; format version unknown");
  const auto& ver = j["format_version"];
  if (!ver.is_number_integer() || ver.get<std::int64_t>() != kModelFormatVersion) {
    throw VersionError("unsupported model format version " + ver.dump() + " (expected " +
                       std::to_string(kModelFormatVersion) + ")");
  }
  b.format_version = kModelFormatVersion;

  const auto& names = field(j, "class_names", "");
  if (!names.is_array()) throw ModelFormatError("class_names: expected an array");
  for (std::size_t i = 0; i < names.size(); ++i) b.class_names.push_back(text(names[i], "class_names"));
  b.seed = count(field(j, "seed", ""), "seed");
  b.activation = detail::parse_enum(parse_activation_mode, field(j, "activation", ""), "activation");
  b.head = detail::parse_enum(parse_head_kind, field(j, "head", ""), "head");

  const auto& pp = field(j, "preprocess", "");
  b.preprocess.saliency_sigma = number(field(pp, "saliency_sigma", "preprocess"), "preprocess.saliency_sigma");
  b.preprocess.patches.count = count(field(pp, "patch_count", "preprocess"), "preprocess.patch_count");
  b.preprocess.patches.size = count(field(pp, "patch_size", "preprocess"), "preprocess.patch_size");
  b.preprocess.patches.min_separation =
      number(field(pp, "min_separation", "preprocess"), "preprocess.min_separation");
  b.preprocess.patches.sim_threshold = number(field(pp, "sim_threshold", "preprocess"), "preprocess.sim_threshold");

  const auto& net = field(j, "network", "");
  const auto& in = field(net, "input", "network");
  b.network.input = {count(field(in, "channels", "network.input"), "network.input.channels"),
                     count(field(in, "height", "network.input"), "network.input.height"),
                     count(field(in, "width", "network.input"), "network.input.width")};
  b.network.feature_layer = count(field(net, "feature_layer", "network"), "network.feature_layer");
  const auto& layers = field(net, "layers", "network");
  if (!layers.is_array()) throw ModelFormatError("network.layers: expected an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string where = "network.layers[" + std::to_string(i) + "]";
    Layer l;
    const std::string kind = text(field(layers[i], "kind", where), where + ".kind");
    if (kind == "conv") l.kind = LayerKind::Conv;
    else if (kind == "maxpool") l.kind = LayerKind::MaxPool;
    else if (kind == "fullyconnected") l.kind = LayerKind::FullyConnected;
    else if (kind == "activation") l.kind = LayerKind::Activation;
    else throw ModelFormatError(where + ".kind: unknown layer kind '" + kind + "'");
    l.out_channels = count(field(layers[i], "out_channels", where), where + ".out_channels");
    l.kernel = count(field(layers[i], "kernel", where), where + ".kernel");
    if (l.has_params()) {
      l.weights = detail::tensor(field(layers[i], "weights", where), where + ".weights");
      l.bias = detail::tensor(field(layers[i], "bias", where), where + ".bias");
    }
    b.network.layers.push_back(std::move(l));
  }
  std::size_t classes = 0, feature_dim = 0;
  try {
    classes = b.network.class_count();
    feature_dim = b.network.feature_size();
  } catch (const DimensionError& e) {
    throw ShapeError(std::string("network: ") + e.what());
  }
  const auto& pc = b.preprocess.patches;
  if (b.network.input.channels != pc.count || b.network.input.height != pc.size || b.network.input.width != pc.size) {
    throw ShapeError("network input " + to_string(b.network.input) + " does not match " +
                     std::to_string(pc.count) + " patches of " + std::to_string(pc.size) + "x" +
                     std::to_string(pc.size));
  }
  if (b.class_names.size() != classes) {
    throw ShapeError(std::to_string(b.class_names.size()) + " class names but the network has " +
                     std::to_string(classes) + " outputs");
  }

  if (j.contains("forest")) {
    const auto& jf = j["forest"];
    ForestHead f;
    f.mode = detail::parse_enum(parse_activation_mode, field(jf, "mode", "forest"), "forest.mode");
    f.smoothing = number(field(jf, "smoothing", "forest"), "forest.smoothing");
    const auto& trees = field(jf, "trees", "forest");
    if (!trees.is_array() || trees.empty()) throw ShapeError("forest.trees: expected a non-empty array");
    for (std::size_t t = 0; t < trees.size(); ++t) {
      const std::string where = "forest.trees[" + std::to_string(t) + "]";
      DecisionTree tr;
      tr.depth = count(field(trees[t], "depth", where), where + ".depth");
      if (tr.depth > 24) throw ShapeError(where + ".depth: too deep");
      const auto& sf = field(trees[t], "split_features", where);
      if (!sf.is_array() || sf.size() != tr.node_count())
        throw ShapeError(where + ".split_features: expected " + std::to_string(tr.node_count()) + " entries");
      for (const auto& v : sf) {
        const auto idx = count(v, where + ".split_features");
        if (idx >= feature_dim) throw ShapeError(where + ".split_features: index " + std::to_string(idx) + " out of range");
        tr.split_features.push_back(idx);
      }
      tr.leaves = detail::tensor(field(trees[t], "leaves", where), where + ".leaves");
      if (tr.leaves.rows() != tr.leaf_count() || tr.leaves.cols() != classes)
        throw ShapeError(where + ".leaves: expected " + std::to_string(tr.leaf_count()) + "x" + std::to_string(classes));
      for (std::size_t r = 0; r < tr.leaves.rows(); ++r) {
        double s = 0.0;
        for (double v : tr.leaves.row(r)) {
          if (v < 0.0) throw ShapeError(where + ".leaves: negative probability");
          s += v;
        }
        if (std::abs(s - 1.0) > 1e-9) throw ShapeError(where + ".leaves: row " + std::to_string(r) + " does not sum to 1");
      }
      f.trees.push_back(std::move(tr));
    }
    b.forest = std::move(f);
  }
  if (j.contains("elm")) {
    const auto& je = j["elm"];
    ElmModel e;
    e.input_weights = detail::tensor(field(je, "input_weights", "elm"), "elm.input_weights");
    const auto& jb = field(je, "bias", "elm");
    if (!jb.is_array()) throw ModelFormatError("elm.bias: expected an array");
    for (std::size_t i = 0; i < jb.size(); ++i) e.bias.push_back(number(jb[i], "elm.bias[" + std::to_string(i) + "]"));
    e.output_weights = detail::tensor(field(je, "output_weights", "elm"), "elm.output_weights");
    e.ridge = number(field(je, "ridge", "elm"), "elm.ridge");
    e.seed = count(field(je, "seed", "elm"), "elm.seed");
    if (e.input_weights.rows() != feature_dim)
      throw ShapeError("elm.input_weights: " + std::to_string(e.input_weights.rows()) + " rows but " +
                       std::to_string(feature_dim) + " features");
    if (e.bias.size() != e.hidden_size() || e.output_weights.rows() != e.hidden_size() ||
        e.output_weights.cols() != classes)
      throw ShapeError("elm: hidden/output dimensions inconsistent");
    if (e.ridge < 0.0) throw ModelFormatError("elm.ridge: must be >= 0");
    b.elm = std::move(e);
  }
  if (b.head == HeadKind::Forest && !b.forest) throw MissingFieldError("missing field 'forest'");
  if (b.head == HeadKind::Elm && !b.elm) throw MissingFieldError("missing field 'elm'");
  return b;
}

inline std::string model_to_string(const ModelBundle& b) { return model_to_json(b).dump(1) + "\n"; }

inline ModelBundle model_from_string(const std::string& s) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(s);
  } catch (const nlohmann::json::parse_error& e) {
    // Bare NaN/Infinity tokens are the usual way a non-finite value sneaks in.
    const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
    for (const char* tok : {"NaN", "nan", "Infinity", "-Infinity", "inf"}) {
      const std::size_t from = at >= 10 ? at - 10 : 0;
      const std::size_t hit = s.find(tok, from);
      if (hit != std::string::npos && hit <= at + 1) throw NonFiniteError("non-finite value in model file");
    }
    throw VersionError(std::string("malformed model JSON, format version unknown: ") + e.what());
  }
  return model_from_json(j);
}

inline void save_model(const ModelBundle& b, const std::string& path) {
  const std::string s = model_to_string(b);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file " + path);
  out << s;
  if (!out) throw IoError("failed writing model file " + path);
}

inline ModelBundle load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read model file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return model_from_string(ss.str());
  } catch (const ModelFormatError& e) {
    // Keep the type, prefix the file.
    const std::string msg = path + ": " + e.what();
    if (dynamic_cast<const VersionError*>(&e)) throw VersionError(msg);
    if (dynamic_cast<const MissingFieldError*>(&e)) throw MissingFieldError(msg);
    if (dynamic_cast<const ShapeError*>(&e)) throw ShapeError(msg);
    if (dynamic_cast<const NonFiniteError*>(&e)) throw NonFiniteError(msg);
    throw ModelFormatError(msg);
  }
}

}  // namespace cnneelm
