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

// Dataset ingestion and preprocessing: PGM/PNG decoding, directory-per-class
// and FER2013-style CSV loaders, bilinear resize, the PCA reconstruction-error
// filter, a procedural face generator and stratified splitting.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "cnneelm/errors.hpp"
#include "cnneelm/image.hpp"
#include "cnneelm/numerics.hpp"

namespace cnneelm {

inline constexpr std::size_t kFaceSize = 48;

inline std::vector<std::string> default_class_names(std::size_t count = 6) {
  static const std::array<std::string, 7> kNames = {"happy", "sad",     "disgust", "fear",
                                                    "surprise", "neutral", "angry"};
  std::vector<std::string> names;
  for (std::size_t i = 0; i < count; ++i) {
    names.push_back(i < kNames.size() ? kNames[i] : "class" + std::to_string(i));
  }
  return names;
}

enum class Split { Train, Validation, Test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "validation") return Split::Validation;
  if (s == "test") return Split::Test;
  throw ParameterError("unknown split '" + s + "'");
}

struct Sample {
  GrayImage image;
  std::size_t label = 0;
  Split split = Split::Train;
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<Sample> samples;
  std::vector<std::string> warnings;

  std::size_t class_count() const { return class_names.size(); }

  std::vector<const Sample*> subset(Split s) const {
    std::vector<const Sample*> out;
    for (const auto& smp : samples)
      if (smp.split == s) out.push_back(&smp);
    return out;
  }

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [s](const Sample& x) { return x.split == s; }));
  }
};

// ---------------------------------------------------------------------------
// Image files
// ---------------------------------------------------------------------------

namespace detail {

inline void skip_pnm_space(std::istream& in) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace detail

// Reads a binary (P5) or ASCII (P2) greymap.
inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") throw IoError(path.string() + ": not a PGM file");
  std::size_t w = 0, h = 0;
  long maxval = 0;
  detail::skip_pnm_space(in);
  in >> w;
  detail::skip_pnm_space(in);
  in >> h;
  detail::skip_pnm_space(in);
  in >> maxval;
  if (!in || w == 0 || h == 0 || maxval <= 0 || maxval > 65535) {
    throw IoError(path.string() + ": malformed PGM header");
  }
  std::vector<double> px(w * h);
  const double scale = 1.0 / static_cast<double>(maxval);
  if (magic == "P5") {
    in.get();
    const std::size_t bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> raw(w * h * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
      throw IoError(path.string() + ": truncated PGM data");
    }
    for (std::size_t i = 0; i < w * h; ++i) {
      const unsigned v = bytes == 1 ? raw[i] : (unsigned(raw[2 * i]) << 8) | raw[2 * i + 1];
      px[i] = std::min(1.0, v * scale);
    }
  } else {
    for (std::size_t i = 0; i < w * h; ++i) {
      long v;
      if (!(in >> v)) throw IoError(path.string() + ": truncated PGM data");
      px[i] = std::clamp(static_cast<double>(v) * scale, 0.0, 1.0);
    }
  }
  return GrayImage(w, h, std::move(px));
}

// Writes an 8-bit P5 greymap, rounding to the nearest level.
inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<unsigned char> raw(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    raw[i] = static_cast<unsigned char>(std::lround(img.pixels()[i] * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline GrayImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError(path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError(path.string() + ": " + msg);
  }
  std::vector<double> px(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) px[i] = buffer[i] / 255.0;
  return GrayImage(image.width, image.height, std::move(px));
}

inline GrayImage read_image(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return read_png(path);
  return read_pgm(path);
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

// Bilinear resize with corner-aligned sampling; the four corner pixels of
// the output equal those of the input.
inline GrayImage resize_bilinear(const GrayImage& img, std::size_t w, std::size_t h) {
  if (w == 0 || h == 0) throw DimensionError("resize_bilinear: zero target dimension");
  if (img.empty()) throw DimensionError("resize_bilinear: empty image");
  if (w == img.width() && h == img.height()) return img;
  auto src_coord = [](std::size_t i, std::size_t out, std::size_t in) {
    if (out == 1) return (static_cast<double>(in) - 1.0) / 2.0;
    return static_cast<double>(i) * (static_cast<double>(in) - 1.0) / (static_cast<double>(out) - 1.0);
  };
  std::vector<double> px(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    const double sy = src_coord(y, h, img.height());
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double sx = src_coord(x, w, img.width());
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = img.at(x0, y0) * (1.0 - fx) + img.at(x1, y0) * fx;
      const double bottom = img.at(x0, y1) * (1.0 - fx) + img.at(x1, y1) * fx;
      px[y * w + x] = std::clamp(top * (1.0 - fy) + bottom * fy, 0.0, 1.0);
    }
  }
  return GrayImage(w, h, std::move(px));
}

inline GrayImage center_square_crop(const GrayImage& img) {
  const std::size_t side = std::min(img.width(), img.height());
  if (img.width() == img.height()) return img;
  const std::size_t x0 = (img.width() - side) / 2, y0 = (img.height() - side) / 2;
  std::vector<double> px(side * side);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) px[y * side + x] = img.at(x0 + x, y0 + y);
  return GrayImage(side, side, std::move(px));
}

// Pre-cropped face to the canonical 48x48 network size.
inline GrayImage normalize_face(const GrayImage& img) {
  return resize_bilinear(center_square_crop(img), kFaceSize, kFaceSize);
}

// ---------------------------------------------------------------------------
// Loaders
// ---------------------------------------------------------------------------

// <root>/<className>/<file>.pgm|png. Directory names must be canonical class
// names; C is 7 when "angry" is present, else 6.
inline Dataset load_directory_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());

  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());

  bool seven = std::any_of(dirs.begin(), dirs.end(), [](const fs::path& p) { return p.filename() == "angry"; });
  Dataset ds;
  ds.class_names = default_class_names(seven ? 7 : 6);

  for (const auto& dir : dirs) {
    const std::string name = dir.filename().string();
    const auto it = std::find(ds.class_names.begin(), ds.class_names.end(), name);
    if (it == ds.class_names.end()) throw LabelError("unknown class directory '" + name + "'");
    const auto label = static_cast<std::size_t>(it - ds.class_names.begin());

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      auto ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext == ".pgm" || ext == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) ds.warnings.push_back("class '" + name + "' has no images");
    for (const auto& f : files) ds.samples.push_back({normalize_face(read_image(f)), label, Split::Train});
  }
  return ds;
}

// CSV with header "emotion,pixels,Usage"; pixels are 2304 space-separated
// integers in 0..255.
inline Dataset load_csv_dataset(const std::filesystem::path& path, std::size_t class_count = 6) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Dataset ds;
  ds.class_names = default_class_names(class_count);

  auto chomp = [](std::string& s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  };
  auto unquote = [](std::string s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
  };

  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw RowError(1, "missing header");
  chomp(line);
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line = line.substr(3);
  if (line != "emotion,pixels,Usage") throw RowError(1, "expected header 'emotion,pixels,Usage'");

  const std::size_t npix = kFaceSize * kFaceSize;
  while (std::getline(in, line)) {
    ++lineno;
    chomp(line);
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.rfind(',');
    if (c1 == std::string::npos || c1 == c2) throw RowError(lineno, "expected 3 columns");

    const std::string emo = unquote(line.substr(0, c1));
    std::size_t label = 0;
    try {
      std::size_t used = 0;
      const long v = std::stol(emo, &used);
      if (used != emo.size() || v < 0) throw std::invalid_argument(emo);
      label = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw RowError(lineno, "bad emotion value '" + emo + "'");
    }
    if (label >= class_count) {
      throw LabelError("line " + std::to_string(lineno) + ": emotion " + std::to_string(label) +
                       " >= class count " + std::to_string(class_count));
    }

    std::istringstream pix(unquote(line.substr(c1 + 1, c2 - c1 - 1)));
    std::vector<double> px;
    px.reserve(npix);
    long v;
    while (pix >> v) {
      if (v < 0 || v > 255) throw RowError(lineno, "pixel value out of range");
      px.push_back(static_cast<double>(v) / 255.0);
    }
    if (!pix.eof()) throw RowError(lineno, "non-numeric pixel data");
    if (px.size() != npix) {
      throw RowError(lineno, "expected " + std::to_string(npix) + " pixels, got " + std::to_string(px.size()));
    }

    const std::string usage = unquote(line.substr(c2 + 1));
    Split split;
    if (usage == "Training") split = Split::Train;
    else if (usage == "PublicTest") split = Split::Validation;
    else if (usage == "PrivateTest") split = Split::Test;
    else throw RowError(lineno, "unknown Usage '" + usage + "'");

    ds.samples.push_back({GrayImage(kFaceSize, kFaceSize, std::move(px)), label, split});
  }
  return ds;
}

// ---------------------------------------------------------------------------
// PCA reconstruction-error filter
// ---------------------------------------------------------------------------

struct FilterReport {
  double error = 0.0;
  bool kept = true;
  double threshold = 0.0;
};

// Mean squared pixel error of projecting onto the PCA subspace and back.
inline double reconstruction_error(const PcaModel& model, const GrayImage& img) {
  if (img.size() != model.dim()) {
    throw DimensionError("reconstruction_error: image has " + std::to_string(img.size()) +
                         " pixels, model dimension " + std::to_string(model.dim()));
  }
  const auto rec = pca_reconstruct(model, pca_project(model, img.pixels()));
  double err = 0.0;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const double d = img.pixels()[i] - rec[i];
    err += d * d;
  }
  return err / static_cast<double>(rec.size());
}

inline std::vector<FilterReport> pca_filter(const std::vector<GrayImage>& imgs, const PcaModel& model,
                                            double threshold) {
  if (model.dim() != kFaceSize * kFaceSize) {
    throw DimensionError("pca_filter: model dimension " + std::to_string(model.dim()) + " is not 48*48");
  }
  if (!(threshold > 0.0)) throw ParameterError("pca_filter: threshold must be positive");
  std::vector<FilterReport> out;
  out.reserve(imgs.size());
  for (const auto& img : imgs) {
    const double e = reconstruction_error(model, img);
    out.push_back({e, e <= threshold, threshold});
  }
  return out;
}

inline Matrix images_to_matrix(const std::vector<GrayImage>& imgs) {
  if (imgs.empty()) throw ParameterError("images_to_matrix: no images");
  Matrix m(imgs.size(), imgs.front().size());
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    if (imgs[i].size() != m.cols()) throw DimensionError("images_to_matrix: mixed image sizes");
    std::copy(imgs[i].pixels().begin(), imgs[i].pixels().end(), m.row(i).begin());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic faces
// ---------------------------------------------------------------------------

// Geometry knobs of a rendered face. Mouth curve > 0 lifts the mouth
// corners (smile); brow_angle > 0 raises the inner brow ends.
struct FaceParams {
  double mouth_curve = 0.0;
  double mouth_open = 0.0;   // 0 closed .. 1 wide open
  double mouth_half_width = 7.0;
  double eye_open = 0.7;     // 0 shut .. 1 wide
  double brow_angle = 0.0;   // radians
  double brow_raise = 0.0;   // pixels
  double offset_x = 0.0;
  double offset_y = 0.0;
};

inline FaceParams class_face_params(std::size_t cls) {
  switch (cls) {
    case 0: return {6.0, 0.0, 9.0, 0.6, 0.0, 0.0};     // happy
    case 1: return {-5.0, 0.0, 7.0, 0.5, 0.5, 0.5};    // sad
    case 2: return {-3.0, 0.0, 5.0, 0.15, -0.5, -2.0}; // disgust
    case 3: return {-1.0, 0.6, 8.0, 1.0, 0.5, 2.5};    // fear
    case 4: return {0.0, 1.2, 5.0, 1.0, 0.0, 3.5};     // surprise
    case 5: return {0.0, 0.0, 7.0, 0.7, 0.0, 0.0};     // neutral
    case 6: return {0.0, 0.0, 6.0, 0.35, -0.7, -1.5};  // angry
    default: {
      Rng r(0xFACE0000ULL + cls);
      return {r.uniform(-4, 4), r.uniform(0, 1), r.uniform(5, 8), r.uniform(0.2, 1.0),
              r.uniform(-0.6, 0.6), r.uniform(-1.5, 3.0)};
    }
  }
}

// Shapes are drawn with hard edges and then box-filtered over a 3x3
// supersampling grid, so small geometry changes move pixel values smoothly.
inline GrayImage render_face(const FaceParams& p, double noise_sigma = 0.0, Rng* rng = nullptr) {
  constexpr double kBackground = 0.4, kSkin = 0.65, kFeature = 0.08;
  constexpr int kSuper = 3;
  const double cx = 24.0 + p.offset_x, cy = 25.0 + p.offset_y;

  auto seg_dist = [](double x, double y, double ax, double ay, double bx, double by) {
    const double vx = bx - ax, vy = by - ay;
    const double t = std::clamp(((x - ax) * vx + (y - ay) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
    return std::hypot(x - ax - t * vx, y - ay - t * vy);
  };

  const double eye_y = cy - 5.0;
  const double eye_ry = 0.6 + 2.4 * p.eye_open;
  const double brow_y = cy - 11.0 - p.brow_raise;
  const double mouth_y = cy + 9.0;
  const double hw = p.mouth_half_width;

  auto shade = [&](double x, double y) {
    double v = kBackground;
    const double hx = (x - cx) / 21.0, hy = (y - cy) / 25.0;
    if (hx * hx + hy * hy <= 1.0) v = kSkin;

    for (double side : {-1.0, 1.0}) {
      const double ex = cx + side * 7.0;
      const double dx = (x - ex) / 3.5, dy = (y - eye_y) / eye_ry;
      if (dx * dx + dy * dy <= 1.0) v = kFeature;
      // Inner end sits toward the face midline.
      const double inner_x = ex - side * 4.0, outer_x = ex + side * 4.0;
      const double lift = 4.0 * std::sin(p.brow_angle);
      if (seg_dist(x, y, inner_x, brow_y - lift, outer_x, brow_y + lift) <= 1.0) v = kFeature;

      const double nx = (x - cx - side * 2.5) / 1.3, ny = y - cy - 2.0;
      if (nx * nx + ny * ny <= 1.0) v = kFeature;
    }

    const double mdx = x - cx;
    if (std::abs(mdx) <= hw) {
      const double u = mdx / hw;
      const double curve_y = mouth_y - p.mouth_curve * (u * u - 0.5);
      if (std::abs(y - curve_y) <= 1.0) v = kFeature;
    }
    if (p.mouth_open > 0.0) {
      const double ry = 4.0 * p.mouth_open, rx = 0.7 * hw;
      const double dx = mdx / rx, dy = (y - mouth_y) / ry;
      if (dx * dx + dy * dy <= 1.0) v = kFeature;
    }
    return v;
  };

  std::vector<double> px(kFaceSize * kFaceSize);
  for (std::size_t yi = 0; yi < kFaceSize; ++yi) {
    for (std::size_t xi = 0; xi < kFaceSize; ++xi) {
      double v = 0.0;
      for (int sy = 0; sy < kSuper; ++sy)
        for (int sx = 0; sx < kSuper; ++sx)
          v += shade(static_cast<double>(xi) + (sx + 0.5) / kSuper - 0.5,
                     static_cast<double>(yi) + (sy + 0.5) / kSuper - 0.5);
      v /= kSuper * kSuper;
      if (noise_sigma > 0.0 && rng != nullptr) v += noise_sigma * rng->normal();
      px[yi * kFaceSize + xi] = std::clamp(v, 0.0, 1.0);
    }
  }
  return GrayImage(kFaceSize, kFaceSize, std::move(px));
}

// Procedural stand-in for a labelled face corpus: per-class geometry plus
// seeded jitter on the expression parameters and pixel noise. Faces are
// centred, like the output of a face aligner. Every sample lands in the
// train split.
inline Dataset synth_dataset(Rng& rng, std::size_t per_class, std::size_t class_count = 6) {
  if (per_class < 1) throw ParameterError("synth_dataset: perClass must be >= 1");
  if (class_count < 1) throw ParameterError("synth_dataset: class count must be >= 1");
  Dataset ds;
  ds.class_names = default_class_names(class_count);
  for (std::size_t c = 0; c < class_count; ++c) {
    const FaceParams base = class_face_params(c);
    for (std::size_t i = 0; i < per_class; ++i) {
      FaceParams p = base;
      p.mouth_curve += rng.uniform(-0.25, 0.25);
      p.mouth_open = std::max(0.0, p.mouth_open + rng.uniform(-0.05, 0.05));
      p.mouth_half_width += rng.uniform(-0.25, 0.25);
      p.eye_open = std::clamp(p.eye_open + rng.uniform(-0.05, 0.05), 0.0, 1.0);
      p.brow_angle += rng.uniform(-0.04, 0.04);
      p.brow_raise += rng.uniform(-0.2, 0.2);
      ds.samples.push_back({render_face(p, 0.01, &rng), c, Split::Train});
    }
  }
  return ds;
}

// Noise-free sequence morphing a neutral face toward `target` with amplitude
// 1 - |t - peak| / max(peak, frames - 1 - peak), clipped at 0.
inline std::vector<GrayImage> synth_expression_sequence(std::size_t frames, std::size_t peak,
                                                        const FaceParams& target = class_face_params(4)) {
  if (frames == 0 || peak >= frames) throw ParameterError("synth_expression_sequence: bad frame/peak");
  const FaceParams neutral = class_face_params(5);
  const double span = static_cast<double>(std::max<std::size_t>({peak, frames - 1 - peak, 1}));
  std::vector<GrayImage> seq;
  for (std::size_t t = 0; t < frames; ++t) {
    const double a =
        std::max(0.0, 1.0 - std::abs(static_cast<double>(t) - static_cast<double>(peak)) / span);
    FaceParams p;
    p.mouth_curve = neutral.mouth_curve + a * (target.mouth_curve - neutral.mouth_curve);
    p.mouth_open = neutral.mouth_open + a * (target.mouth_open - neutral.mouth_open);
    p.mouth_half_width = neutral.mouth_half_width + a * (target.mouth_half_width - neutral.mouth_half_width);
    p.eye_open = neutral.eye_open + a * (target.eye_open - neutral.eye_open);
    p.brow_angle = neutral.brow_angle + a * (target.brow_angle - neutral.brow_angle);
    p.brow_raise = neutral.brow_raise + a * (target.brow_raise - neutral.brow_raise);
    seq.push_back(render_face(p));
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

// Stratified shuffle-split. Classes with fewer samples than non-empty splits
// go entirely to train, with a warning.
inline Dataset split(const Dataset& ds, const SplitRatios& r, Rng& rng) {
  if (r.train < 0 || r.validation < 0 || r.test < 0 ||
      std::abs(r.train + r.validation + r.test - 1.0) > 1e-9) {
    throw ParameterError("split: ratios must be non-negative and sum to 1");
  }
  const int nonempty = (r.train > 0) + (r.validation > 0) + (r.test > 0);
  Dataset out = ds;
  for (std::size_t c = 0; c < ds.class_count(); ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      if (ds.samples[i].label == c) idx.push_back(i);
    if (idx.empty()) continue;
    rng.shuffle(idx);
    const std::size_t n = idx.size();
    if (n < static_cast<std::size_t>(nonempty)) {
      out.warnings.push_back("class '" + ds.class_names[c] + "' has " + std::to_string(n) +
                             " samples; all assigned to train");
      for (auto i : idx) out.samples[i].split = Split::Train;
      continue;
    }
    auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.validation));
    auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.test));
    n_val = std::min(n_val, n);
    n_test = std::min(n_test, n - n_val);
    const std::size_t n_train = n - n_val - n_test;
    for (std::size_t k = 0; k < n; ++k) {
      Split s = k < n_train ? Split::Train : (k < n_train + n_val ? Split::Validation : Split::Test);
      out.samples[idx[k]].split = s;
    }
  }
  return out;
}

}  // namespace cnneelm
