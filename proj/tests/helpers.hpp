#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "lrs/model.hpp"
#include "lrs/rng.hpp"

namespace lrs::test {

// Test inputs use their own stream id so they never alias library draws.
inline constexpr std::uint64_t kTestStream = 0x7E57'0000'0000'0000ULL;

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  KeyedStream s(seed, kTestStream);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = s.gaussian();
  }
  return m;
}

inline Vector gaussian_vector(Eigen::Index n, std::uint64_t seed) {
  return gaussian_matrix(n, 1, seed).col(0);
}

// Orthonormal basis from Eigen's Householder QR, independent of the library's QR.
inline Matrix random_orthonormal(Eigen::Index d, Eigen::Index r, std::uint64_t seed) {
  const Matrix g = gaussian_matrix(d, r, seed);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(d, r);
}

inline std::vector<TaskDataset> random_tasks(int t, int m, int d, std::uint64_t seed) {
  std::vector<TaskDataset> out;
  for (int i = 0; i < t; ++i) {
    out.emplace_back(gaussian_matrix(m, d, seed * 1000 + 2 * static_cast<std::uint64_t>(i)),
                     gaussian_vector(m, seed * 1000 + 2 * static_cast<std::uint64_t>(i) + 1));
  }
  return out;
}

// Kronecker product written out entry by entry.
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      for (Eigen::Index p = 0; p < b.rows(); ++p) {
        for (Eigen::Index q = 0; q < b.cols(); ++q) {
          out(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
        }
      }
    }
  }
  return out;
}

inline Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

inline Matrix unvec(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

} // namespace lrs::test
