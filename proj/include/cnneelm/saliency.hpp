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

// Image-signature saliency and salient patch sampling.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cnneelm/errors.hpp"
#include "cnneelm/image.hpp"
#include "cnneelm/numerics.hpp"

namespace cnneelm {

struct SaliencyMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;  // row-major, in [0,1]

  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

// Separable Gaussian blur with edge replication; sigma == 0 is a no-op.
inline Matrix gaussian_blur(const Matrix& m, double sigma) {
  if (sigma < 0.0) throw ParameterError("gaussian_blur: sigma must be >= 0");
  if (sigma == 0.0 || m.empty()) return m;
  const auto radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& k : kernel) k /= total;

  const auto rows = static_cast<long>(m.rows()), cols = static_cast<long>(m.cols());
  Matrix tmp(m.rows(), m.cols()), out(m.rows(), m.cols());
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (long i = -radius; i <= radius; ++i) {
        const long cc = std::clamp(c + i, 0L, cols - 1);
        acc += kernel[static_cast<std::size_t>(i + radius)] * m(static_cast<std::size_t>(r), static_cast<std::size_t>(cc));
      }
      tmp(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
    }
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (long i = -radius; i <= radius; ++i) {
        const long rr = std::clamp(r + i, 0L, rows - 1);
        acc += kernel[static_cast<std::size_t>(i + radius)] * tmp(static_cast<std::size_t>(rr), static_cast<std::size_t>(c));
      }
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
    }
  return out;
}

// blur((idct2(sign(dct2(img))))^2), scaled so the maximum is 1. DCT
// coefficients within 1e-12 of the largest magnitude count as zero, and
// sign(0) = 0.
inline SaliencyMap image_signature_saliency(const GrayImage& img, double sigma = 2.0) {
  if (sigma < 0.0) throw ParameterError("image_signature_saliency: sigma must be >= 0");
  Matrix coeffs = dct2(img);
  double peak = 0.0;
  for (double v : coeffs.data()) peak = std::max(peak, std::abs(v));
  const double zero_tol = 1e-12 * peak;
  for (double& v : coeffs.data()) v = std::abs(v) <= zero_tol ? 0.0 : (v > 0.0 ? 1.0 : -1.0);

  Matrix recon = idct2(coeffs);
  for (double& v : recon.data()) v *= v;
  Matrix blurred = gaussian_blur(recon, sigma);

  SaliencyMap map{img.width(), img.height(), std::move(blurred.data())};
  const double mx = map.values.empty() ? 0.0 : *std::max_element(map.values.begin(), map.values.end());
  if (mx > 0.0) {
    for (double& v : map.values) v = std::clamp(v / mx, 0.0, 1.0);
  }
  return map;
}

// Normalised cross-correlation in [-1, 1]. If either patch has zero
// variance the result is 1 for pixelwise-equal patches and 0 otherwise.
inline double patch_similarity(const GrayImage& a, const GrayImage& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionError("patch_similarity: patch sizes differ");
  }
  const std::size_t n = a.size();
  if (n == 0) return 1.0;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a.pixels()[i];
    mb += b.pixels()[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a.pixels()[i] - ma, db = b.pixels()[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  constexpr double kFlat = 1e-20;
  if (saa <= kFlat || sbb <= kFlat) return a == b ? 1.0 : 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct Patch {
  GrayImage image;
  std::size_t center_x = 0;  // saliency peak location
  std::size_t center_y = 0;
  std::size_t origin_x = 0;  // top-left corner of the cropped window
  std::size_t origin_y = 0;
  double score = 0.0;
};

struct PatchSet {
  std::vector<Patch> patches;  // scores nonincreasing
  // Number of distinct patches found before any padding.
  std::size_t true_count = 0;
  // Size of the image the patches were cut from.
  std::size_t source_width = 0;
  std::size_t source_height = 0;
  bool padded() const { return patches.size() > true_count; }
};

struct PatchOptions {
  std::size_t count = 9;
  std::size_t size = 12;
  double min_separation = 8.0;
  double sim_threshold = 0.9;
};

inline GrayImage crop(const GrayImage& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  std::vector<double> px(w * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) px[y * w + x] = img.at(x0 + x, y0 + y);
  return GrayImage(w, h, std::move(px));
}

// Greedy selection over strict local maxima of the map, highest score first
// (raster order among equal scores). A candidate is skipped when it lies
// closer than min_separation to a chosen centre or its patch correlates above
// sim_threshold with a chosen patch. Windows near the border are shifted
// inward so that every patch lies inside the image. When the map has no
// strict local maximum the global maximum is used as the single candidate.
inline PatchSet sample_patches(const GrayImage& img, const SaliencyMap& map, const PatchOptions& opt = {}) {
  if (opt.count < 1) throw ParameterError("sample_patches: count must be >= 1");
  if (opt.size == 0 || opt.size > img.width() || opt.size > img.height()) {
    throw DimensionError("sample_patches: patch size " + std::to_string(opt.size) + " exceeds image");
  }
  if (map.width != img.width() || map.height != img.height()) {
    throw DimensionError("sample_patches: saliency map does not match image");
  }

  struct Candidate {
    std::size_t x, y;
    double score;
  };
  std::vector<Candidate> cands;
  const auto w = static_cast<long>(map.width), h = static_cast<long>(map.height);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const double v = map.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
      if (v <= 0.0) continue;
      bool geq_all = true, gt_any = false;
      for (long dy = -1; dy <= 1 && geq_all; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const long nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const double nv = map.at(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny));
          if (nv > v) {
            geq_all = false;
            break;
          }
          if (nv < v) gt_any = true;
        }
      if (geq_all && gt_any) cands.push_back({static_cast<std::size_t>(x), static_cast<std::size_t>(y), v});
    }
  }
  if (cands.empty() && !map.values.empty()) {
    const auto it = std::max_element(map.values.begin(), map.values.end());
    const auto i = static_cast<std::size_t>(it - map.values.begin());
    cands.push_back({i % map.width, i / map.width, *it});
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  PatchSet out;
  out.source_width = img.width();
  out.source_height = img.height();
  const std::size_t half = opt.size / 2;
  for (const auto& c : cands) {
    if (out.patches.size() >= opt.count) break;
    bool too_close = false;
    for (const auto& p : out.patches) {
      const double d = std::hypot(static_cast<double>(c.x) - static_cast<double>(p.center_x),
                                  static_cast<double>(c.y) - static_cast<double>(p.center_y));
      if (d < opt.min_separation) {
        too_close = true;
        break;
      }
    }
    if (too_close) continue;
    const std::size_t ox = std::min(c.x >= half ? c.x - half : 0, img.width() - opt.size);
    const std::size_t oy = std::min(c.y >= half ? c.y - half : 0, img.height() - opt.size);
    GrayImage patch = crop(img, ox, oy, opt.size, opt.size);
    bool similar = false;
    for (const auto& p : out.patches) {
      if (patch_similarity(patch, p.image) > opt.sim_threshold) {
        similar = true;
        break;
      }
    }
    if (similar) continue;
    out.patches.push_back({std::move(patch), c.x, c.y, ox, oy, c.score});
  }
  out.true_count = out.patches.size();
  return out;
}

// Pads by repeating the top patch so the network always sees `count` patches.
inline PatchSet pad_patches(PatchSet ps, std::size_t count) {
  if (ps.patches.empty()) throw ParameterError("pad_patches: no patches to pad from");
  const Patch top = ps.patches.front();
  while (ps.patches.size() < count) ps.patches.push_back(top);
  return ps;
}

}  // namespace cnneelm
