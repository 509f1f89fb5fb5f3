#pragma once

#include <functional>
#include <vector>

#include "lrs/model.hpp"

namespace lrs {

/// Keeps v_i when |v_i| > delta (strict), zeroes it otherwise.
Vector hard_threshold(const Vector& v, double delta);
/// Keeps only the k largest-magnitude entries (lower index wins ties).
Vector keep_largest(const Vector& v, int k);

/// Scales v onto the L2 ball of radius rho when it lies outside.
Vector clip_vector(const Vector& v, double rho);
/// Scalar clip; uses the magnitude so negative inputs keep their sign.
double clip_scalar(double x, double rho);
Matrix clip_frobenius(const Matrix& m, double rho);

struct QrResult {
  Matrix q;        // d x r, orthonormal columns
  Matrix r_factor; // r x r, upper triangular with positive diagonal
};

/// Thin QR with the positive-diagonal sign convention. Throws RankDeficient.
QrResult qr_orthonormalize(const Matrix& m);

/// argmin ||a z - y||^2 + ridge ||z||^2. Throws SingularSystem when ridge is 0
/// and a^T a is numerically singular.
Vector least_squares(const Matrix& a, const Vector& y, double ridge);

/// Same as least_squares but starting from a precomputed Gram a^T a and a^T y.
Vector solve_normal_equations(const Matrix& gram, const Vector& rhs, double ridge);

/// The system  sum_i (w_i w_i^T kron G_i) vec(U) = vec(V)  solved for U.
///
/// grams[i] = X_i^T X_i (d x d) and weights.row(i) = w_i^T. The optional
/// perturbation is a dense rd x rd matrix added to the operator, and the whole
/// operator is multiplied by scale before the solve (scale also applies to
/// the perturbation but not to rhs, which callers prescale).
struct StructuredSystem {
  std::vector<std::reference_wrapper<const Matrix>> grams;
  Matrix weights; // t x r
  Matrix rhs;     // d x r
  Matrix perturbation;
  double scale = 1.0;

  Eigen::Index dim() const { return rhs.rows(); }
  Eigen::Index rank() const { return rhs.cols(); }

  /// Applies the (scaled, perturbed) operator to U.
  Matrix apply(const Matrix& u) const;
  /// Materializes the rd x rd operator in column-major vec ordering.
  Matrix materialize() const;
};

/// Direct factorization up to rd = direct_limit, conjugate gradients above.
Matrix solve_structured(const StructuredSystem& sys, Eigen::Index direct_limit = 2048);

struct EigResult {
  Matrix vectors;  // d x r, columns sorted by descending eigenvalue
  Vector values;   // r
  bool degenerate; // r-th and (r+1)-th eigenvalues are numerically tied
};

/// Leading r eigenvectors of the symmetric part of s.
EigResult top_r_eigvecs(const Matrix& s, int r);

} // namespace lrs
