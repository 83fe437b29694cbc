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

#include <cstddef>
#include <string>
#include <vector>

#include "cnneelm/errors.hpp"

namespace cnneelm {

// Grayscale image with pixels in [0,1], row-major.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(std::size_t width, std::size_t height, double fill = 0.0)
      : width_(width), height_(height), pixels_(width * height, fill) {
    check_range();
  }
  GrayImage(std::size_t width, std::size_t height, std::vector<double> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (pixels_.size() != width_ * height_) {
      throw DimensionError("GrayImage: " + std::to_string(pixels_.size()) +
                           " pixels for " + std::to_string(width_) + "x" +
                           std::to_string(height_));
    }
    check_range();
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  double at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }
  // Caller keeps the value in [0,1].
  double& at(std::size_t x, std::size_t y) { return pixels_[y * width_ + x]; }

  const std::vector<double>& pixels() const { return pixels_; }

  bool operator==(const GrayImage&) const = default;

 private:
  void check_range() const {
    for (double p : pixels_) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw ParameterError("GrayImage: pixel value outside [0,1]");
      }
    }
  }

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> pixels_;
};

}  // namespace cnneelm
