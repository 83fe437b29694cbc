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

// cnneelm command-line tool: prepare | train | classify | video | bench | report.
// Exit codes: 0 success, 1 internal error, 2 user or input error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cnneelm/archive.hpp"
#include "cnneelm/bench.hpp"
#include "cnneelm/motion.hpp"
#include "cnneelm/report.hpp"
#include "cnneelm/serialize.hpp"
#include "cnneelm/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cnneelm;

namespace {

constexpr std::uint64_t kDefaultSeed = 42;

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << s;
  if (!out) throw IoError("failed writing " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Turns a --config JSON object into argv-style tokens. Keys already given on
// the command line are skipped so flags win over the file.
std::vector<std::string> config_args(const fs::path& path, const std::vector<std::string>& cli) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw InputError(path.string() + ": config must be a JSON object");
  auto on_cli = [&](const std::string& flag) {
    for (const auto& a : cli)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  auto scalar = [&](const std::string& key, const json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer() || v.is_number_unsigned() || v.is_number_float()) return v.dump();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    throw InputError(path.string() + ": unsupported value for '" + key + "'");
  };
  std::vector<std::string> out;
  for (const auto& [key, v] : j.items()) {
    const std::string flag = "--" + key;
    if (key == "config" || on_cli(flag)) continue;
    if (v.is_array()) {
      for (const auto& e : v) out.insert(out.end(), {flag, scalar(key, e)});
    } else if (v.is_boolean()) {
      if (v.get<bool>()) out.push_back(flag);
    } else {
      out.insert(out.end(), {flag, scalar(key, v)});
    }
  }
  return out;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("CNNEELM_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ParameterError(std::string("CNNEELM_SEED is not an unsigned integer: '") + env + "'");
  }
  return kDefaultSeed;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

// ---------------------------------------------------------------------------

struct PrepareArgs {
  std::string input, format = "dir", output;
  std::size_t pca_keep = 0, per_class = 50, classes = 6;
  double percentile = 95.0;
  std::optional<std::uint64_t> seed;
};

int cmd_prepare(const PrepareArgs& a) {
  Rng rng(resolve_seed(a.seed));
  PrepareResult r;
  if (a.format == "synthetic") {
    Rng data_rng = rng.fork(10), split_rng = rng.fork(11);
    Dataset raw = synth_dataset(data_rng, a.per_class, a.classes);
    fs::create_directories(a.output);
    const fs::path tmp = fs::path(a.output) / "raw";
    // Route through the regular loader so synthetic and real data share
    // the filter and split path.
    for (const auto& name : raw.class_names) fs::create_directories(tmp / name);
    for (std::size_t i = 0; i < raw.samples.size(); ++i) {
      char file[32];
      std::snprintf(file, sizeof file, "%05zu.pgm", i);
      write_pgm(tmp / raw.class_names[raw.samples[i].label] / file, raw.samples[i].image);
    }
    PrepareOptions opt{"dir", a.pca_keep, a.percentile, {}};
    r = prepare_dataset(tmp, opt, split_rng);
    r.dataset.class_names = raw.class_names;
    fs::remove_all(tmp);
  } else {
    if (a.input.empty()) throw ParameterError("--input is required for --format " + a.format);
    PrepareOptions opt{a.format, a.pca_keep, a.percentile, {}};
    r = prepare_dataset(a.input, opt, rng);
  }
  save_dataset_archive(r.dataset, a.output);
  write_filter_report_csv(fs::path(a.output) / "filter_report.csv", r.filter);
  std::size_t dropped = 0;
  for (const auto& f : r.filter) dropped += !f.report.kept;
  print_json({{"output", a.output},
              {"loaded", r.filter.size()},
              {"kept", r.filter.size() - dropped},
              {"discarded", dropped},
              {"pca_components", r.pca_components},
              {"threshold", r.threshold},
              {"train", r.dataset.count(Split::Train)},
              {"validation", r.dataset.count(Split::Validation)},
              {"test", r.dataset.count(Split::Test)},
              {"warnings", r.dataset.warnings}});
  for (const auto& w : r.dataset.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string dataset, head = "elm", update = "baseline", loss, activation = "baseline", out = "model.json",
                       metrics;
  std::optional<std::size_t> epochs, batch;
  std::optional<double> lr, clip;
  std::optional<std::uint64_t> seed;
  std::size_t trees = 5, depth = 5, hidden = 500;
  double ridge = 0.01;
  bool quiet = false;
};

fs::path metrics_path_for(const std::string& model_out, const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  fs::path p(model_out);
  return p.replace_extension(".metrics.csv");
}

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.update_rule = parse_update_rule(a.update);
  cfg.loss_mode = a.loss.empty() ? (cfg.update_rule == UpdateRule::Baseline ? LossMode::CrossEntropyStandard
                                                                            : LossMode::LogLikelihood)
                                 : parse_loss_mode(a.loss);
  cfg.activation = parse_activation_mode(a.activation);
  cfg.learning_rate = a.lr.value_or(TrainConfig::default_lr(cfg.update_rule));
  cfg.batch_size = a.batch.value_or(TrainConfig::default_batch(cfg.update_rule));
  cfg.epochs = a.epochs.value_or(cfg.epochs);
  cfg.seed = resolve_seed(a.seed);
  cfg.gradient_clip = a.clip;
  cfg.forest_trees = a.trees;
  cfg.forest_depth = a.depth;
  cfg.elm_hidden = a.hidden;
  cfg.elm_ridge = a.ridge;
  const HeadKind head = parse_head_kind(a.head);
  cfg.validate();

  const Dataset ds = load_dataset_archive(a.dataset);
  const fs::path metrics_path = metrics_path_for(a.out, a.metrics);
  std::string csv;
  TrainResult r;
  try {
    r = train(cfg, ds, head, [&](const EpochMetrics& m) {
      if (!a.quiet) {
        std::fprintf(stderr, "epoch %zu trainAcc %.4f valAcc %.4f trainLoss %.5f valLoss %.5f\n", m.epoch,
                     m.train_accuracy, m.val_accuracy, m.train_loss, m.val_loss);
      }
      csv += metrics_csv_row(m) + "\n";
    });
  } catch (const TrainingDiverged& e) {
    // Keep what was learned so far for inspection.
    ModelBundle last;
    last.network = e.last_good();
    last.activation = cfg.activation;
    last.head = HeadKind::Softmax;
    last.preprocess = cfg.preprocess;
    last.class_names = ds.class_names;
    last.seed = cfg.seed;
    const fs::path ckpt = fs::path(a.out).replace_extension(".diverged.json");
    if (last.network.all_finite()) save_model(last, ckpt.string());
    write_text(metrics_path, metrics_csv_header(last.network) + "\n" + csv);
    std::cerr << "error: " << e.what() << "; last good parameters in " << ckpt.string() << "\n";
    return 1;
  }
  write_text(metrics_path, metrics_csv_header(r.bundle.network) + "\n" + csv);
  save_model(r.bundle, a.out);
  json out{{"model", a.out},
           {"metrics", metrics_path.string()},
           {"epochs", r.metrics.epochs.size()},
           {"head", to_string(head)},
           {"update", to_string(cfg.update_rule)},
           {"loss", to_string(cfg.loss_mode)},
           {"activation", to_string(cfg.activation)},
           {"lr", cfg.learning_rate},
           {"batch", cfg.batch_size},
           {"seed", cfg.seed}};
  if (!r.metrics.epochs.empty()) {
    out["final_train_accuracy"] = r.metrics.epochs.back().train_accuracy;
    out["final_val_accuracy"] = r.metrics.epochs.back().val_accuracy;
  }
  if (r.metrics.final_eval) out["eval_accuracy"] = r.metrics.final_eval->accuracy;
  print_json(out);
  return 0;
}

// ---------------------------------------------------------------------------

json prediction_json(const ModelBundle& b, const Prediction& p) {
  json j{{"label", b.class_names.at(p.label)},
         {"labelIndex", p.label},
         {"scores", p.scores},
         {"latencyMs", p.timings.total_ms()},
         {"stagesMs",
          {{"preprocess", p.timings.preprocess_ms},
           {"saliency", p.timings.saliency_ms},
           {"network", p.timings.network_ms},
           {"head", p.timings.head_ms}}}};
  if (p.unfitted) j["warning"] = "head is not fitted";
  return j;
}

int cmd_classify(const std::string& model, const std::string& image) {
  const ModelBundle b = load_model(model);
  const GrayImage img = read_image(image);
  print_json(prediction_json(b, classify(b, img)));
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_video(const std::string& model, const std::string& frames, double fps_check, bool all_frames) {
  if (!(fps_check > 0.0)) throw ParameterError("--fps-check must be > 0");
  const ModelBundle b = load_model(model);
  const FrameSequence seq = load_frame_sequence(frames);
  if (seq.frames.empty()) throw InputError("no frames in " + frames);
  using Clock = std::chrono::steady_clock;
  std::vector<GrayImage> faces;
  for (const auto& f : seq.frames) faces.push_back(normalize_face(f));
  const auto t0 = Clock::now();
  const PeakResult peak = detect_peak_frame(FrameSequence{faces, seq.fps});
  const double detect_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

  const Prediction p = classify(b, faces[peak.index]);
  double classify_ms = p.timings.total_ms();
  json per_frame = json::array();
  if (all_frames) {
    classify_ms = 0.0;
    for (const auto& f : faces) {
      const Prediction q = classify(b, f);
      classify_ms += q.timings.total_ms();
      per_frame.push_back({{"label", b.class_names.at(q.label)}, {"labelIndex", q.label}});
    }
    classify_ms /= static_cast<double>(faces.size());
  }
  // Streaming cost of one frame: its share of flow work plus one classification.
  const double per_frame_ms = detect_ms / static_cast<double>(faces.size()) + classify_ms;
  const double budget_ms = 1000.0 / fps_check;
  json out{{"frames", faces.size()},
           {"fps", seq.fps},
           {"peakIndex", peak.index},
           {"energies", peak.energies},
           {"prediction", prediction_json(b, p)},
           {"meanFrameMs", per_frame_ms},
           {"fpsTarget", fps_check},
           {"frameBudgetMs", budget_ms},
           {"meetsFps", per_frame_ms <= budget_ms}};
  if (all_frames) out["perFrame"] = std::move(per_frame);
  if (!peak.warning.empty()) {
    out["warning"] = peak.warning;
    std::cerr << "warning: " << peak.warning << "\n";
  }
  print_json(out);
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_bench(const std::string& dataset, const std::vector<std::string>& models, std::vector<std::string> heads,
              std::size_t repeats, const std::string& out, std::size_t limit) {
  const Dataset ds = load_dataset_archive(dataset);
  auto images = ds.subset(Split::Test);
  if (images.empty()) images = ds.subset(Split::Validation);
  if (images.empty()) throw InputError("dataset has neither test nor validation samples");
  if (limit > 0 && images.size() > limit) images.resize(limit);

  std::vector<ModelBundle> bundles;
  for (const auto& m : models) bundles.push_back(load_model(m));
  if (heads.empty())
    for (const auto& b : bundles) heads.push_back(to_string(b.head));
  if (heads.empty()) throw ParameterError("bench: give at least one --model");

  BenchReport report;
  for (const auto& h : heads) {
    const HeadKind kind = parse_head_kind(h);
    const auto it = std::find_if(bundles.begin(), bundles.end(), [&](const ModelBundle& b) { return b.head == kind; });
    if (it == bundles.end()) throw InputError("bench: missing model for head '" + h + "'");
    report.entries.push_back(bench_model(*it, images, repeats));
  }
  const json j = bench_to_json(report);
  write_text(out, j.dump(2) + "\n");
  write_text(fs::path(out).replace_extension(".csv"), bench_csv(report));
  print_json(j);
  return 0;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string metrics, model, dataset, bench, experiment, out = "report";
  std::size_t seeds = 10, per_class = 50;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> baseline_lr, modified_lr;
};

int cmd_report(const ReportArgs& a) {
  const fs::path dir(a.out);
  fs::create_directories(dir);
  json written = json::array();
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(dir / name, text);
    written.push_back((dir / name).string());
  };
  bool any = false;

  if (!a.metrics.empty()) {
    any = true;
    const MetricsTable t = parse_metrics_csv(read_text(a.metrics));
    const auto ep = t.column("epoch");
    emit("accuracy.svg", svg_line_chart("Training vs validation accuracy",
                                        {{"train", ep, t.column("trainAcc")}, {"validation", ep, t.column("valAcc")}},
                                        "epoch", "accuracy"));
    emit("loss.svg", svg_line_chart("Training vs validation loss",
                                    {{"train", ep, t.column("trainLoss")}, {"validation", ep, t.column("valLoss")}},
                                    "epoch", "loss"));
    std::vector<Series> w, bs;
    for (const auto& c : t.columns) {
      if (c.size() > 6 && c.ends_with("_wMean")) w.push_back({c.substr(0, c.size() - 6), ep, t.column(c)});
      if (c.size() > 6 && c.ends_with("_bMean")) bs.push_back({c.substr(0, c.size() - 6), ep, t.column(c)});
    }
    emit("weights.svg", svg_line_chart("Weight mean per layer", w, "epoch", "mean"));
    emit("biases.svg", svg_line_chart("Bias mean per layer", bs, "epoch", "mean"));
  }

  if (!a.model.empty() || !a.dataset.empty()) {
    if (a.model.empty() || a.dataset.empty()) throw ParameterError("--model and --dataset go together");
    any = true;
    const ModelBundle b = load_model(a.model);
    const Dataset ds = load_dataset_archive(a.dataset);
    const Split s = ds.count(Split::Test) > 0 ? Split::Test : Split::Validation;
    const EvalResult r = evaluate(b, ds, s);
    emit("per_class_accuracy.svg", svg_bar_chart("Accuracy per expression (" + to_string(b.head) + " head)",
                                                 b.class_names, r.per_class_accuracy, "accuracy"));
    std::string pc = "class,accuracy\n", cm = "true\\predicted";
    for (std::size_t c = 0; c < b.class_names.size(); ++c) {
      pc += b.class_names[c] + "," + detail::fmt("%.6f", r.per_class_accuracy[c]) + "\n";
      cm += "," + b.class_names[c];
    }
    cm += "\n";
    for (std::size_t i = 0; i < r.confusion.rows(); ++i) {
      cm += b.class_names[i];
      for (std::size_t k = 0; k < r.confusion.cols(); ++k) cm += "," + detail::fmt("%.0f", r.confusion(i, k));
      cm += "\n";
    }
    emit("per_class_accuracy.csv", pc);
    emit("confusion.csv", cm);
  }

  if (!a.bench.empty()) {
    any = true;
    json j;
    try {
      j = json::parse(read_text(a.bench));
    } catch (const json::exception& e) {
      throw InputError(a.bench + ": " + e.what());
    }
    std::vector<std::string> labels;
    std::vector<double> mean;
    std::string table = "head,accuracy,mean_ms,fps,head_ms\n";
    for (const auto& e : j.at("entries")) {
      labels.push_back(e.at("head").get<std::string>());
      mean.push_back(e.at("mean_ms").get<double>());
      table += labels.back() + "," + detail::fmt("%.6f", e.at("accuracy").get<double>()) + "," +
               detail::fmt("%.6f", mean.back()) + "," + detail::fmt("%.6f", e.at("fps").get<double>()) + "," +
               detail::fmt("%.6f", e.at("stages_ms").at("head").get<double>()) + "\n";
    }
    emit("latency.svg", svg_bar_chart("Per-image latency by head", labels, mean, "ms"));
    emit("latency_table.csv", table);
  }

  if (!a.experiment.empty()) {
    if (a.experiment != "accuracy-delta") throw ParameterError("unknown experiment '" + a.experiment + "'");
    if (a.seeds < 1) throw ParameterError("--seeds must be >= 1");
    any = true;
    DeltaOptions opt;
    const std::uint64_t base = resolve_seed(a.seed);
    for (std::size_t i = 0; i < a.seeds; ++i) opt.seeds.push_back(base + i);
    opt.per_class = a.per_class;
    opt.baseline.update_rule = UpdateRule::Baseline;
    opt.baseline.loss_mode = LossMode::CrossEntropyStandard;
    opt.baseline.activation = ActivationMode::Baseline;
    opt.baseline.learning_rate = a.baseline_lr.value_or(TrainConfig::default_lr(UpdateRule::Baseline));
    opt.baseline.batch_size = TrainConfig::default_batch(UpdateRule::Baseline);
    opt.modified.update_rule = UpdateRule::ModifiedConventional;
    opt.modified.loss_mode = LossMode::LogLikelihood;
    opt.modified.activation = ActivationMode::Flattened;
    opt.modified.learning_rate = a.modified_lr.value_or(TrainConfig::default_lr(UpdateRule::ModifiedConventional));
    opt.modified.batch_size = TrainConfig::default_batch(UpdateRule::ModifiedConventional);
    opt.baseline.epochs = opt.modified.epochs = a.epochs.value_or(100);
    const DeltaSummary s = run_accuracy_delta(opt, [](const DeltaRun& r) {
      std::fprintf(stderr, "seed %llu baseline %.4f modified %.4f\n", static_cast<unsigned long long>(r.seed),
                   r.baseline_val, r.modified_val);
    });
    const json j = delta_to_json(s, opt);
    emit("accuracy_delta.json", j.dump(2) + "\n");
    std::string csv = "seed,baseline_val,modified_val,delta\n";
    std::vector<std::string> labels;
    std::vector<double> deltas;
    for (const auto& r : s.runs) {
      csv += std::to_string(r.seed) + "," + detail::fmt("%.6f", r.baseline_val) + "," +
             detail::fmt("%.6f", r.modified_val) + "," + detail::fmt("%.6f", r.delta()) + "\n";
      labels.push_back(std::to_string(r.seed));
      deltas.push_back(r.delta());
    }
    emit("accuracy_delta.csv", csv);
    emit("accuracy_delta.svg", svg_line_chart("Validation accuracy: modified minus baseline, per seed",
                                              {{"delta", [&] {
                                                  std::vector<double> x;
                                                  for (const auto& r : s.runs) x.push_back(static_cast<double>(r.seed));
                                                  return x;
                                                }(), deltas}},
                                              "seed", "accuracy delta"));
  }

  if (!any) throw ParameterError("report: nothing to do (give --metrics, --model/--dataset, --bench or --experiment)");
  print_json({{"written", written}});
  return 0;
}

template <typename T>
void seed_option(CLI::App* sub, std::optional<T>& target) {
  sub->add_option("--seed", target, "Random seed (falls back to CNNEELM_SEED, then 42)");
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  // --config contributes flags the command line does not set.
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      continue;
    }
    const auto extra = config_args(path, args);
    args.insert(args.end(), extra.begin(), extra.end());
    break;
  }

  CLI::App app{"Facial expression recognition with salient patches, a small CNN and ELM or forest heads", "cnneelm"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config;
  app.add_option("--config", config, "JSON file supplying any flag; command-line flags win");

  PrepareArgs pa;
  auto* prep = app.add_subcommand("prepare", "Load, normalise, PCA-filter and split a face dataset");
  prep->add_option("--input", pa.input, "Class-per-directory root or CSV file");
  prep->add_option("--format", pa.format, "dir | csv | synthetic")->check(CLI::IsMember({"dir", "csv", "synthetic"}));
  prep->add_option("--output", pa.output, "Archive directory to write")->required();
  prep->add_option("--pca-keep", pa.pca_keep, "PCA components (0: min(16, n))");
  prep->add_option("--pca-threshold-percentile", pa.percentile, "Reconstruction-error percentile kept");
  prep->add_option("--per-class", pa.per_class, "Synthetic samples per class");
  prep->add_option("--classes", pa.classes, "Synthetic class count");
  seed_option(prep, pa.seed);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train the network and fit a head");
  tr->add_option("--dataset", ta.dataset, "Prepared dataset archive")->required();
  tr->add_option("--head", ta.head, "softmax | forest | elm");
  tr->add_option("--update", ta.update, "baseline | modified-literal | modified-conventional");
  tr->add_option("--loss", ta.loss, "cross-entropy | entropy-literal | log-likelihood");
  tr->add_option("--activation", ta.activation, "baseline | flattened");
  tr->add_option("--epochs", ta.epochs, "Training epochs");
  tr->add_option("--lr", ta.lr, "Learning rate");
  tr->add_option("--batch", ta.batch, "Batch size (35 baseline, 70 modified rules)");
  tr->add_option("--gradient-clip", ta.clip, "Clip gradients elementwise to this magnitude");
  tr->add_option("--trees", ta.trees, "Forest trees");
  tr->add_option("--depth", ta.depth, "Forest depth");
  tr->add_option("--hidden", ta.hidden, "ELM hidden units");
  tr->add_option("--ridge", ta.ridge, "ELM ridge (0: pseudoinverse)");
  tr->add_option("--out", ta.out, "Model file");
  tr->add_option("--metrics", ta.metrics, "Metrics CSV (default: next to the model)");
  tr->add_flag("--quiet", ta.quiet, "No per-epoch progress on stderr");
  seed_option(tr, ta.seed);

  std::string cm, ci;
  auto* cl = app.add_subcommand("classify", "Classify one image");
  cl->add_option("--model", cm, "Model file")->required();
  cl->add_option("--image", ci, "PGM or PNG image")->required();

  std::string vm, vf;
  double fps = 20.0;
  bool all_frames = false;
  auto* vid = app.add_subcommand("video", "Find the peak frame of a sequence and classify it");
  vid->add_option("--model", vm, "Model file")->required();
  vid->add_option("--frames", vf, "Directory of frame_NNNN.pgm plus manifest.json")->required();
  vid->add_option("--fps-check", fps, "Frame rate the per-frame cost must sustain");
  vid->add_flag("--all-frames", all_frames, "Also classify every frame");

  std::string bd, bout = "bench.json";
  std::vector<std::string> bmodels, bheads;
  std::size_t repeats = 5, limit = 0;
  auto* be = app.add_subcommand("bench", "Time per-image classification for each head");
  be->add_option("--dataset", bd, "Prepared dataset archive")->required();
  be->add_option("--model", bmodels, "Model file (repeat once per head)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  be->add_option("--heads", bheads, "Heads to time, e.g. elm,forest")->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  be->add_option("--repeats", repeats, "Timed passes after one warm-up pass");
  be->add_option("--limit", limit, "Time at most this many images (0: all)");
  be->add_option("--out", bout, "Report JSON (a CSV is written next to it)");

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Emit charts and tables");
  rep->add_option("--metrics", ra.metrics, "Metrics CSV from train");
  rep->add_option("--model", ra.model, "Model for per-class accuracy");
  rep->add_option("--dataset", ra.dataset, "Dataset archive for per-class accuracy");
  rep->add_option("--bench", ra.bench, "Bench report JSON");
  rep->add_option("--experiment", ra.experiment, "accuracy-delta");
  rep->add_option("--seeds", ra.seeds, "Seeds for the experiment");
  rep->add_option("--per-class", ra.per_class, "Synthetic samples per class for the experiment");
  rep->add_option("--epochs", ra.epochs, "Epochs per experiment run");
  rep->add_option("--baseline-lr", ra.baseline_lr, "Learning rate of the baseline arm");
  rep->add_option("--modified-lr", ra.modified_lr, "Learning rate of the modified arm");
  rep->add_option("--out", ra.out, "Output directory");
  seed_option(rep, ra.seed);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*prep) return cmd_prepare(pa);
  if (*tr) return cmd_train(ta);
  if (*cl) return cmd_classify(cm, ci);
  if (*vid) return cmd_video(vm, vf, fps, all_frames);
  if (*be) return cmd_bench(bd, bmodels, bheads, repeats, bout, limit);
  if (*rep) return cmd_report(ra);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
