#include "lrs/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lrs/errors.hpp"

namespace lrs {

Vector hard_threshold(const Vector& v, double delta) {
  if (delta < 0.0) throw DomainError("hard_threshold: delta must be nonnegative");
  Vector out = v;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (!(std::abs(out[i]) > delta)) out[i] = 0.0;
  }
  return out;
}

Vector keep_largest(const Vector& v, int k) {
  if (k < 0) throw DomainError("keep_largest: k must be nonnegative");
  std::vector<Eigen::Index> nz;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0) nz.push_back(i);
  }
  if (nz.size() <= static_cast<std::size_t>(k)) return v;
  std::stable_sort(nz.begin(), nz.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(v[a]) > std::abs(v[b]); });
  Vector out = Vector::Zero(v.size());
  for (std::size_t j = 0; j < static_cast<std::size_t>(k); ++j) out[nz[j]] = v[nz[j]];
  return out;
}

double clip_scalar(double x, double rho) {
  if (!(rho > 0.0)) throw DomainError("clip: rho must be positive");
  const double mag = std::abs(x);
  return mag > rho ? x * (rho / mag) : x;
}

Vector clip_vector(const Vector& v, double rho) {
  if (!(rho > 0.0)) throw DomainError("clip: rho must be positive");
  const double norm = v.norm();
  return norm > rho ? Vector(v * (rho / norm)) : v;
}

Matrix clip_frobenius(const Matrix& m, double rho) {
  if (!(rho > 0.0)) throw DomainError("clip: rho must be positive");
  const double norm = m.norm();
  return norm > rho ? Matrix(m * (rho / norm)) : m;
}

QrResult qr_orthonormalize(const Matrix& m) {
  const auto d = m.rows();
  const auto r = m.cols();
  if (r < 1 || d < r) throw RankDeficient("qr: need d >= r >= 1");
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ() * Matrix::Identity(d, r);
  Matrix rf = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  const double scale = m.norm();
  for (Eigen::Index j = 0; j < r; ++j) {
    if (!(std::abs(rf(j, j)) >= 1e-12 * scale) || scale == 0.0) {
      throw RankDeficient("qr: column " + std::to_string(j) + " is linearly dependent");
    }
    if (rf(j, j) < 0.0) {
      rf.row(j) *= -1.0;
      q.col(j) *= -1.0;
    }
  }
  return {std::move(q), std::move(rf)};
}

Vector solve_normal_equations(const Matrix& gram, const Vector& rhs, double ridge) {
  if (ridge < 0.0) throw DomainError("least squares: ridge must be nonnegative");
  if (ridge == 0.0) {
    const double trace = gram.trace();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
    if (!(trace > 0.0) || eig.eigenvalues().minCoeff() < 1e-12 * trace) {
      throw SingularSystem("least squares: normal matrix is singular");
    }
    return gram.ldlt().solve(rhs);
  }
  Matrix reg = gram;
  reg.diagonal().array() += ridge;
  return reg.llt().solve(rhs);
}

Vector least_squares(const Matrix& a, const Vector& y, double ridge) {
  if (a.rows() < 1) throw DomainError("least squares: need at least one row");
  if (a.rows() != y.size()) throw DomainError("least squares: dimension mismatch");
  const Matrix gram = a.transpose() * a;
  return solve_normal_equations(gram, a.transpose() * y, ridge);
}

Matrix StructuredSystem::apply(const Matrix& u) const {
  const auto d = dim();
  const auto r = rank();
  Matrix out = Matrix::Zero(d, r);
  for (std::size_t i = 0; i < grams.size(); ++i) {
    const Vector w = weights.row(static_cast<Eigen::Index>(i)).transpose();
    if (w.squaredNorm() == 0.0) continue;
    out.noalias() += grams[i].get() * (u * w) * w.transpose();
  }
  if (perturbation.size() > 0) {
    const Eigen::Map<const Vector> vu(u.data(), d * r);
    const Vector pv = perturbation * vu;
    out += Eigen::Map<const Matrix>(pv.data(), d, r);
  }
  return scale * out;
}

Matrix StructuredSystem::materialize() const {
  const auto d = dim();
  const auto r = rank();
  Matrix op = Matrix::Zero(d * r, d * r);
  for (std::size_t i = 0; i < grams.size(); ++i) {
    const auto w = weights.row(static_cast<Eigen::Index>(i));
    for (Eigen::Index a = 0; a < r; ++a) {
      for (Eigen::Index b = 0; b <= a; ++b) {
        const double c = w(a) * w(b);
        if (c == 0.0) continue;
        op.block(a * d, b * d, d, d) += c * grams[i].get();
      }
    }
  }
  for (Eigen::Index a = 0; a < r; ++a) {
    for (Eigen::Index b = 0; b < a; ++b) {
      op.block(b * d, a * d, d, d) = op.block(a * d, b * d, d, d).transpose();
    }
  }
  if (perturbation.size() > 0) op += perturbation;
  return scale * op;
}

namespace {

void check_shapes(const StructuredSystem& sys) {
  if (sys.weights.rows() != static_cast<Eigen::Index>(sys.grams.size()) ||
      sys.weights.cols() != sys.rank()) {
    throw DomainError("structured system: weights must be t x r");
  }
  for (const Matrix& g : sys.grams) {
    if (g.rows() != sys.dim() || g.cols() != sys.dim()) {
      throw DomainError("structured system: every gram block must be d x d");
    }
  }
  const auto n = sys.dim() * sys.rank();
  if (sys.perturbation.size() > 0 &&
      (sys.perturbation.rows() != n || sys.perturbation.cols() != n)) {
    throw DomainError("structured system: perturbation must be rd x rd");
  }
}

Matrix solve_direct(const StructuredSystem& sys) {
  const auto d = sys.dim();
  const auto r = sys.rank();
  const Matrix op = sys.materialize();
  const Eigen::Map<const Vector> rhs(sys.rhs.data(), d * r);
  Vector sol;
  if (sys.perturbation.size() == 0) {
    Eigen::LDLT<Matrix> ldlt(op);
    const Vector piv = ldlt.vectorD().cwiseAbs();
    if (ldlt.info() != Eigen::Success || piv.size() == 0 ||
        !(piv.maxCoeff() > 0.0) || piv.minCoeff() < 1e-12 * piv.maxCoeff()) {
      throw SingularSystem("structured solve: operator is singular");
    }
    sol = ldlt.solve(rhs);
  } else {
    Eigen::PartialPivLU<Matrix> lu(op);
    if (!(lu.rcond() > 1e-14)) throw SingularSystem("structured solve: operator is singular");
    sol = lu.solve(rhs);
  }
  return Eigen::Map<const Matrix>(sol.data(), d, r);
}

Matrix solve_cg(const StructuredSystem& sys) {
  const auto d = sys.dim();
  const auto r = sys.rank();
  const double rhs_norm = sys.rhs.norm();
  Matrix x = Matrix::Zero(d, r);
  if (rhs_norm == 0.0) return x;
  Matrix res = sys.rhs;
  Matrix dir = res;
  double rr = res.squaredNorm();
  const auto cap = 10 * d * r;
  for (Eigen::Index it = 0; it < cap; ++it) {
    const Matrix ad = sys.apply(dir);
    const double curv = (dir.array() * ad.array()).sum();
    if (!(curv > 0.0)) throw SingularSystem("structured solve: operator is not positive definite");
    const double step = rr / curv;
    x += step * dir;
    res -= step * ad;
    const double rr_next = res.squaredNorm();
    if (std::sqrt(rr_next) <= 1e-10 * rhs_norm) return x;
    dir = res + (rr_next / rr) * dir;
    rr = rr_next;
  }
  throw SingularSystem("structured solve: conjugate gradients did not converge");
}

} // namespace

Matrix solve_structured(const StructuredSystem& sys, Eigen::Index direct_limit) {
  check_shapes(sys);
  if (sys.dim() * sys.rank() <= direct_limit || sys.perturbation.size() > 0) {
    return solve_direct(sys);
  }
  return solve_cg(sys);
}

EigResult top_r_eigvecs(const Matrix& s, int r) {
  const auto d = s.rows();
  if (s.cols() != d) throw DomainError("top_r_eigvecs: matrix must be square");
  if (r < 1 || r > d) throw DomainError("top_r_eigvecs: need 1 <= r <= d");
  if ((s - s.transpose()).norm() > 1e-10 * std::max(1.0, s.norm())) {
    throw DomainError("top_r_eigvecs: matrix is not symmetric");
  }
  const Matrix sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  const Vector& vals = eig.eigenvalues(); // ascending
  EigResult out;
  out.vectors.resize(d, r);
  out.values.resize(r);
  for (int j = 0; j < r; ++j) {
    const auto src = d - 1 - j;
    Vector v = eig.eigenvectors().col(src);
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v[pivot] < 0.0) v = -v;
    out.vectors.col(j) = v;
    out.values[j] = vals[src];
  }
  const double norm = vals.cwiseAbs().maxCoeff();
  out.degenerate = r < d && (vals[d - r] - vals[d - r - 1]) <= 1e-12 * norm;
  return out;
}

} // namespace lrs
