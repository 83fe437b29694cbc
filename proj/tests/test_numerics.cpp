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

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "cnneelm/numerics.hpp"
#include "test_util.hpp"

namespace cnneelm {
namespace {

using test::random_matrix;

// Direct O(n^4) orthonormal DCT-II, independent of the basis-matrix code.
Matrix naive_dct2(const Matrix& x) {
  const std::size_t h = x.rows(), w = x.cols();
  Matrix out(h, w);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      double s = 0.0;
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
          s += x(i, j) * std::cos(std::numbers::pi * (2.0 * i + 1.0) * u / (2.0 * h)) *
               std::cos(std::numbers::pi * (2.0 * j + 1.0) * v / (2.0 * w));
      const double au = u == 0 ? std::sqrt(1.0 / h) : std::sqrt(2.0 / h);
      const double av = v == 0 ? std::sqrt(1.0 / w) : std::sqrt(2.0 / w);
      out(u, v) = au * av * s;
    }
  return out;
}

TEST(Dct, ConstantImageHasOnlyDc) {
  const std::size_t n = 8;
  const double c = 0.37;
  const Matrix coeffs = dct2(Matrix(n, n, c));
  EXPECT_NEAR(coeffs(0, 0), c * n, 1e-12);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i || j) {
        EXPECT_NEAR(coeffs(i, j), 0.0, 1e-12);
      }
}

TEST(Dct, MatchesDirectSummation) {
  Rng rng(3);
  const Matrix x = random_matrix(6, 9, rng);
  test::expect_matrix_near(dct2(x), naive_dct2(x), 1e-12);
}

TEST(Dct, RoundTripOnRandomImagesUpTo64) {
  Rng rng(5);
  for (std::size_t n : {1u, 2u, 8u, 13u, 48u, 64u}) {
    const Matrix x = random_matrix(n, n + (n % 3), rng);
    test::expect_matrix_near(idct2(dct2(x)), x, 1e-10);
    test::expect_matrix_near(dct2(idct2(x)), x, 1e-10);
  }
}

TEST(Dct, Parseval) {
  Rng rng(7);
  const Matrix x = random_matrix(16, 16, rng);
  const Matrix c = dct2(x);
  double ex = 0.0, ec = 0.0;
  for (double v : x.data()) ex += v * v;
  for (double v : c.data()) ec += v * v;
  EXPECT_NEAR(ex, ec, 1e-8);
}

TEST(Dct, InverseOfZeroAndDcOnly) {
  const Matrix z = idct2(Matrix(5, 5));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  Matrix dc(4, 4);
  dc(0, 0) = 2.0;
  const Matrix back = idct2(dc);
  for (double v : back.data()) EXPECT_NEAR(v, 0.5, 1e-12);
}

TEST(Dct, EmptyInputIsDimensionError) { EXPECT_THROW(dct2(Matrix()), DimensionError); }

TEST(Pinv, IdentityAndDiagonal) {
  test::expect_matrix_near(pinv(Matrix::identity(3)), Matrix::identity(3), 1e-14);
  Matrix d(2, 2);
  d(0, 0) = 2.0;
  const Matrix p = pinv(d);
  EXPECT_NEAR(p(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(p(0, 1), 0.0, 1e-14);
  EXPECT_NEAR(p(1, 0), 0.0, 1e-14);
  EXPECT_NEAR(p(1, 1), 0.0, 1e-14);
}

// (A^T A)^-1 A^T by Gauss-Jordan on the 3x3 normal matrix.
Matrix normal_equations_pinv(const Matrix& a) {
  const Matrix at = transpose(a);
  Matrix m = matmul(at, a);
  const std::size_t n = m.rows();
  Matrix inv = Matrix::identity(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(m(r, c)) > std::abs(m(piv, c))) piv = r;
    for (std::size_t k = 0; k < n; ++k) {
      std::swap(m(c, k), m(piv, k));
      std::swap(inv(c, k), inv(piv, k));
    }
    const double d = m(c, c);
    for (std::size_t k = 0; k < n; ++k) {
      m(c, k) /= d;
      inv(c, k) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = m(r, c);
      for (std::size_t k = 0; k < n; ++k) {
        m(r, k) -= f * m(c, k);
        inv(r, k) -= f * inv(c, k);
      }
    }
  }
  return matmul(inv, at);
}

TEST(Pinv, FullColumnRankMatchesNormalEquations) {
  Rng rng(11);
  const Matrix a = random_matrix(5, 3, rng);
  test::expect_matrix_near(pinv(a), normal_equations_pinv(a), 1e-8);
}

void expect_penrose(const Matrix& a, double tol) {
  const Matrix p = pinv(a);
  const double na = std::max(1.0, frobenius_norm(a)), np = std::max(1.0, frobenius_norm(p));
  test::expect_matrix_near(matmul(matmul(a, p), a), a, tol * na);
  test::expect_matrix_near(matmul(matmul(p, a), p), p, tol * np);
  const Matrix ap = matmul(a, p), pa = matmul(p, a);
  test::expect_matrix_near(transpose(ap), ap, tol);
  test::expect_matrix_near(transpose(pa), pa, tol);
}

TEST(Pinv, PenroseConditionsOnRandomAndRankDeficient) {
  Rng rng(13);
  for (int t = 0; t < 10; ++t) {
    const std::size_t r = 1 + rng.below(7), c = 1 + rng.below(7);
    expect_penrose(random_matrix(r, c, rng), 1e-8);
  }
  // Rank 2 in a 6x5 matrix.
  const Matrix u = random_matrix(6, 2, rng), v = random_matrix(2, 5, rng);
  expect_penrose(matmul(u, v), 1e-8);
  expect_penrose(Matrix(3, 4), 1e-8);
}

TEST(Pinv, NonFiniteInputIsNumericError) {
  Matrix a = Matrix::identity(2);
  a(0, 1) = std::nan("");
  EXPECT_THROW(pinv(a), NumericError);
}

TEST(Pca, IdenticalRowsGiveZeroVariances) {
  Matrix d(4, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    d(i, 0) = 1.0;
    d(i, 1) = -2.0;
    d(i, 2) = 0.5;
  }
  const PcaModel m = pca_fit(d, 2);
  EXPECT_EQ(m.mean, (std::vector<double>{1.0, -2.0, 0.5}));
  for (double v : m.variances) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Pca, PointsOnDiagonalGiveDiagonalComponent) {
  Matrix d(5, 2);
  for (std::size_t i = 0; i < 5; ++i) d(i, 0) = d(i, 1) = static_cast<double>(i) * 0.7 - 1.0;
  const PcaModel m = pca_fit(d, 1);
  EXPECT_NEAR(m.components(0, 0), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(m.components(0, 1), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Pca, ComponentsOrthonormalAndVariancesSorted) {
  Rng rng(17);
  const Matrix d = random_matrix(20, 8, rng);
  const PcaModel m = pca_fit(d, 6);
  test::expect_matrix_near(matmul(m.components, transpose(m.components)), Matrix::identity(6), 1e-8);
  for (std::size_t i = 1; i < m.variances.size(); ++i) EXPECT_LE(m.variances[i], m.variances[i - 1]);
  for (std::size_t i = 0; i < m.rank(); ++i) {
    // Sign convention: largest-magnitude entry positive.
    const auto row = m.components.row(i);
    const auto it = std::max_element(row.begin(), row.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    EXPECT_GT(*it, 0.0);
  }
}

TEST(Pca, ProjectMeanIsZeroAndFullRankReconstructs) {
  Rng rng(19);
  const Matrix d = random_matrix(6, 4, rng);
  const PcaModel m = pca_fit(d, 4);
  for (double v : pca_project(m, m.mean)) EXPECT_NEAR(v, 0.0, 1e-12);
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const auto rec = pca_reconstruct(m, pca_project(m, d.row(i)));
    for (std::size_t j = 0; j < d.cols(); ++j) EXPECT_NEAR(rec[j], d(i, j), 1e-8);
  }
}

TEST(Pca, ReconstructionErrorNonincreasingInK) {
  Rng rng(23);
  const Matrix d = random_matrix(10, 6, rng);
  for (std::size_t i = 0; i < d.rows(); ++i) {
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= 6; ++k) {
      const PcaModel m = pca_fit(d, k);
      const auto rec = pca_reconstruct(m, pca_project(m, d.row(i)));
      double err = 0.0;
      for (std::size_t j = 0; j < d.cols(); ++j) err += (rec[j] - d(i, j)) * (rec[j] - d(i, j));
      EXPECT_LE(err, prev + 1e-12);
      prev = err;
    }
    EXPECT_LE(prev, 1e-8);
  }
}

TEST(Pca, BadKAndDimensionMismatch) {
  Rng rng(29);
  const Matrix d = random_matrix(4, 3, rng);
  EXPECT_THROW(pca_fit(d, 0), ParameterError);
  EXPECT_THROW(pca_fit(d, 4), ParameterError);
  const PcaModel m = pca_fit(d, 2);
  EXPECT_THROW(pca_project(m, std::vector<double>(2)), DimensionError);
  EXPECT_THROW(pca_reconstruct(m, std::vector<double>(3)), DimensionError);
}

TEST(Rng, SameSeedSameStreamAndKnownFirstValue) {
  Rng a(123), b(123), c(124);
  std::vector<std::uint64_t> va, vb, vc;
  for (int i = 0; i < 100; ++i) {
    va.push_back(a.next());
    vb.push_back(b.next());
    vc.push_back(c.next());
  }
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
}

// Reference xoshiro256** seeded through splitmix64, written out longhand.
TEST(Rng, MatchesReferenceXoshiro) {
  std::uint64_t sm = 99;
  auto splitmix = [&] {
    std::uint64_t z = (sm += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t s[4] = {splitmix(), splitmix(), splitmix(), splitmix()};
  auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
  Rng rng(99);
  for (int i = 0; i < 20; ++i) {
    const std::uint64_t expect = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    EXPECT_EQ(rng.next(), expect);
  }
}

TEST(Rng, UniformBoundsAndMean) {
  Rng rng(31);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform(-1.0, 1.0);
    ASSERT_GE(u, -1.0);
    ASSERT_LE(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 10000.0, 0.0, 0.05);
}

TEST(Quantile, LinearInterpolationAndDegenerateSample) {
  EXPECT_DOUBLE_EQ(quantile({5.0}, 0.95), 5.0);
  EXPECT_DOUBLE_EQ(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({0.0, 10.0}, 0.95), 9.5);
  EXPECT_THROW(quantile({}, 0.5), ParameterError);
}

}  // namespace
}  // namespace cnneelm
