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

// Dense matrices, orthonormal 2-D DCT, SVD pseudoinverse, PCA and a
// seedable PRNG. All arithmetic is double precision.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "cnneelm/errors.hpp"
#include "cnneelm/image.hpp"

namespace cnneelm {

// Row-major matrix of finite doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                           " does not match " + std::to_string(rows_) + "x" +
                           std::to_string(cols_));
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * brow[j];
    }
  }
  return out;
}

inline double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

namespace detail {

using EigenRowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline EigenRowMatrix to_eigen(const Matrix& m) {
  return Eigen::Map<const EigenRowMatrix>(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                                          static_cast<Eigen::Index>(m.cols()));
}

inline Matrix from_eigen(const Eigen::MatrixXd& e) {
  Matrix m(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
  for (Eigen::Index r = 0; r < e.rows(); ++r)
    for (Eigen::Index c = 0; c < e.cols(); ++c)
      m(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = e(r, c);
  return m;
}

// Orthonormal DCT-II basis: B(k, n) = a_k cos(pi (2n+1) k / 2N).
inline Matrix dct_basis(std::size_t n) {
  Matrix b(n, n);
  const double nd = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / nd) : std::sqrt(2.0 / nd);
    for (std::size_t i = 0; i < n; ++i) {
      b(k, i) = scale * std::cos(std::numbers::pi * (2.0 * static_cast<double>(i) + 1.0) *
                                 static_cast<double>(k) / (2.0 * nd));
    }
  }
  return b;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Rng: xoshiro256** seeded through splitmix64. The stream depends only on the
// seed, never on the platform or standard library.
// ---------------------------------------------------------------------------
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  std::uint64_t seed() const { return seed_; }

  result_type operator()() { return next(); }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0,1) with 53 bits of randomness.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller (no cached second value).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Fisher-Yates; std::shuffle is implementation-defined.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream, e.g. one per model component.
  Rng fork(std::uint64_t salt) {
    std::uint64_t x = seed_ ^ (salt * 0x9E3779B97F4A7C15ULL);
    return Rng(splitmix64(x) ^ next());
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t state_[4];
};

// ---------------------------------------------------------------------------
// DCT
// ---------------------------------------------------------------------------

// Orthonormal 2-D DCT-II; rows index y, columns index x.
inline Matrix dct2(const Matrix& img) {
  if (img.empty()) throw DimensionError("dct2: empty input");
  const Matrix bh = detail::dct_basis(img.rows());
  const Matrix bw = detail::dct_basis(img.cols());
  return matmul(matmul(bh, img), transpose(bw));
}

inline Matrix dct2(const GrayImage& img) {
  if (img.empty()) throw DimensionError("dct2: empty image");
  return dct2(Matrix(img.height(), img.width(), img.pixels()));
}

// Inverse of dct2. Returns a Matrix: arbitrary coefficients do not map into
// the [0,1] pixel range.
inline Matrix idct2(const Matrix& coeffs) {
  if (coeffs.empty()) throw DimensionError("idct2: empty input");
  const Matrix bh = detail::dct_basis(coeffs.rows());
  const Matrix bw = detail::dct_basis(coeffs.cols());
  return matmul(matmul(transpose(bh), coeffs), bw);
}

// ---------------------------------------------------------------------------
// Pseudoinverse
// ---------------------------------------------------------------------------

// Moore-Penrose pseudoinverse via full SVD. Singular values below
// tol * sigma_max are dropped; a negative tol selects eps * max(rows, cols).
inline Matrix pinv(const Matrix& m, double tol = -1.0) {
  if (!m.all_finite()) throw NumericError("pinv: non-finite input");
  if (m.empty()) return Matrix(m.cols(), m.rows());
  if (tol < 0.0) {
    tol = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(m.rows(), m.cols()));
  }
  const Eigen::MatrixXd a = detail::to_eigen(m);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? tol * s(0) : 0.0;
  Eigen::VectorXd inv(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) inv(i) = (s(i) > cutoff && s(i) > 0.0) ? 1.0 / s(i) : 0.0;
  const Eigen::MatrixXd p = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return detail::from_eigen(p);
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

struct PcaModel {
  std::vector<double> mean;    // d
  Matrix components;           // k x d, orthonormal rows
  std::vector<double> variances;  // k, nonincreasing

  std::size_t dim() const { return mean.size(); }
  std::size_t rank() const { return components.rows(); }
};

// PCA through the SVD of the mean-centred data. Each component is
// sign-normalised so that its largest-magnitude entry is positive.
inline PcaModel pca_fit(const Matrix& data, std::size_t k) {
  const std::size_t n = data.rows(), d = data.cols();
  if (k < 1 || k > std::min(n, d)) {
    throw ParameterError("pca_fit: k=" + std::to_string(k) + " outside [1, " +
                         std::to_string(std::min(n, d)) + "]");
  }
  if (!data.all_finite()) throw NumericError("pca_fit: non-finite data");

  PcaModel model;
  model.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) model.mean[j] += data(i, j);
  for (double& m : model.mean) m /= static_cast<double>(n);

  Eigen::MatrixXd centered(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data(i, j) - model.mean[j];

  // Thin V has min(n, d) columns, enough for any valid k.
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const auto& v = svd.matrixV();
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;

  model.components = Matrix(k, d);
  model.variances.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    const double sv = ci < s.size() ? s(ci) : 0.0;
    model.variances[c] = sv * sv / denom;
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double a = std::abs(v(static_cast<Eigen::Index>(j), ci));
      if (a > best + 1e-12) {
        best = a;
        arg = j;
      }
    }
    const double sign = v(static_cast<Eigen::Index>(arg), ci) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) model.components(c, j) = sign * v(static_cast<Eigen::Index>(j), ci);
  }
  return model;
}

inline std::vector<double> pca_project(const PcaModel& m, std::span<const double> x) {
  if (x.size() != m.dim()) {
    throw DimensionError("pca_project: vector of length " + std::to_string(x.size()) +
                         ", model dimension " + std::to_string(m.dim()));
  }
  std::vector<double> z(m.rank(), 0.0);
  for (std::size_t c = 0; c < m.rank(); ++c) {
    const auto comp = m.components.row(c);
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += comp[j] * (x[j] - m.mean[j]);
    z[c] = acc;
  }
  return z;
}

inline std::vector<double> pca_reconstruct(const PcaModel& m, std::span<const double> z) {
  if (z.size() != m.rank()) {
    throw DimensionError("pca_reconstruct: code of length " + std::to_string(z.size()) +
                         ", model rank " + std::to_string(m.rank()));
  }
  std::vector<double> x = m.mean;
  for (std::size_t c = 0; c < m.rank(); ++c) {
    const auto comp = m.components.row(c);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += comp[j] * z[c];
  }
  return x;
}

// Linear-interpolated quantile of a sample (q in [0,1]); a single value is
// its own quantile at every q.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ParameterError("quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace cnneelm
