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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cnneelm/dataio.hpp"
#include "cnneelm/errors.hpp"
#include "cnneelm/image.hpp"

namespace cnneelm {

struct FrameSequence {
  std::vector<GrayImage> frames;
  double fps = 30.0;
};

struct Displacement {
  int dx = 0;
  int dy = 0;
  bool operator==(const Displacement&) const = default;
};

struct FlowField {
  std::size_t block_size = 8;
  std::size_t grid_width = 0;
  std::size_t grid_height = 0;
  std::vector<Displacement> vectors;  // row-major over the block grid

  const Displacement& at(std::size_t bx, std::size_t by) const { return vectors[by * grid_width + bx]; }
};

// Block-matching flow: for each block of `a`, the displacement within
// [-radius, radius]^2 minimising the sum of absolute differences against `b`
// (zero outside the image). Ties go to the smallest |(dx,dy)|, then the
// smallest (dy, dx) lexicographically.
inline FlowField optical_flow(const GrayImage& a, const GrayImage& b, std::size_t block_size = 8,
                              std::size_t radius = 4) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionError("optical_flow: frame sizes differ");
  }
  if (block_size < 4) throw ParameterError("optical_flow: blockSize must be >= 4");
  if (radius < 1) throw ParameterError("optical_flow: radius must be >= 1");

  const auto w = static_cast<long>(a.width()), h = static_cast<long>(a.height());
  const auto bs = static_cast<long>(block_size), r = static_cast<long>(radius);
  FlowField f;
  f.block_size = block_size;
  f.grid_width = (a.width() + block_size - 1) / block_size;
  f.grid_height = (a.height() + block_size - 1) / block_size;
  f.vectors.resize(f.grid_width * f.grid_height);

  auto sample_b = [&](long x, long y) {
    return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0
                                                : b.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
  };

  for (std::size_t gy = 0; gy < f.grid_height; ++gy) {
    for (std::size_t gx = 0; gx < f.grid_width; ++gx) {
      const long x0 = static_cast<long>(gx) * bs, y0 = static_cast<long>(gy) * bs;
      const long x1 = std::min(x0 + bs, w), y1 = std::min(y0 + bs, h);
      double best_sad = std::numeric_limits<double>::infinity();
      Displacement best;
      long best_norm = std::numeric_limits<long>::max();
      for (long dy = -r; dy <= r; ++dy) {
        for (long dx = -r; dx <= r; ++dx) {
          double sad = 0.0;
          for (long y = y0; y < y1; ++y)
            for (long x = x0; x < x1; ++x)
              sad += std::abs(a.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) -
                              sample_b(x + dx, y + dy));
          const long norm = dx * dx + dy * dy;
          // Scan order is already lexicographic in (dy, dx), so only a
          // strictly better SAD or an equal SAD with smaller norm wins.
          if (sad < best_sad || (sad == best_sad && norm < best_norm)) {
            best_sad = sad;
            best_norm = norm;
            best = {static_cast<int>(dx), static_cast<int>(dy)};
          }
        }
      }
      f.vectors[gy * f.grid_width + gx] = best;
    }
  }
  return f;
}

// Mean Euclidean block displacement, border blocks included.
inline double motion_energy(const FlowField& f) {
  if (f.vectors.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& v : f.vectors) sum += std::hypot(static_cast<double>(v.dx), static_cast<double>(v.dy));
  return sum / static_cast<double>(f.vectors.size());
}

struct PeakResult {
  std::size_t index = 0;
  std::vector<double> energies;  // energies[t] against frame 0; energies[0] == 0
  std::string warning;
};

// Peak frame = argmax over t >= 1 of the motion energy between frame 0
// (assumed neutral onset) and frame t. Ties resolve to the earliest frame;
// if no frame moves at all the result is 0.
inline PeakResult detect_peak_frame(const FrameSequence& seq, std::size_t block_size = 8,
                                    std::size_t radius = 4) {
  PeakResult out;
  if (seq.frames.empty()) throw ParameterError("detect_peak_frame: empty sequence");
  out.energies.assign(seq.frames.size(), 0.0);
  if (seq.frames.size() == 1) {
    out.warning = "single-frame sequence; returning frame 0";
    return out;
  }
  double best = 0.0;
  for (std::size_t t = 1; t < seq.frames.size(); ++t) {
    out.energies[t] = motion_energy(optical_flow(seq.frames[0], seq.frames[t], block_size, radius));
    if (out.energies[t] > best) {
      best = out.energies[t];
      out.index = t;
    }
  }
  if (best == 0.0) out.warning = "no motion detected";
  return out;
}

// Directory of frame_NNNN.pgm files plus manifest.json {"fps": <float>}.
inline FrameSequence load_frame_sequence(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  FrameSequence seq;
  const auto manifest = dir / "manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    try {
      const auto j = nlohmann::json::parse(in);
      seq.fps = j.at("fps").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError(manifest.string() + ": " + e.what());
    }
    if (!(seq.fps > 0.0)) throw IoError(manifest.string() + ": fps must be positive");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("frame_", 0) == 0 && e.path().extension() == ".pgm") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no frame_*.pgm files in " + dir.string());
  for (const auto& f : files) {
    seq.frames.push_back(read_pgm(f));
    if (seq.frames.back().width() != seq.frames.front().width() ||
        seq.frames.back().height() != seq.frames.front().height()) {
      throw DimensionError(f.string() + ": frame size differs from the first frame");
    }
  }
  return seq;
}

inline void write_frame_sequence(const std::filesystem::path& dir, const FrameSequence& seq) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.pgm", i + 1);
    write_pgm(dir / name, seq.frames[i]);
  }
  std::ofstream(dir / "manifest.json") << nlohmann::json{{"fps", seq.fps}}.dump() << "\n";
}

}  // namespace cnneelm
