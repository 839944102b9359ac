#pragma once

// Dense complex linear algebra used throughout the simulator.
//
// Conventions:
//  * hbar = 1; all matrices are double precision complex.
//  * Density matrices are vectorized by column stacking:
//      vectorize(rho)[i + j*D] = rho(i, j)
//    so that vectorize(A rho B) = kron(B^T, A) * vectorize(rho).
//  * Two-level systems use index 0 = excited |e>, index 1 = ground |g>.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "qfb/error.hpp"

namespace qfb {

using Complex = std::complex<double>;
using Index = Eigen::Index;
using Operator = Eigen::MatrixXcd;
using StateVector = Eigen::VectorXcd;

inline constexpr Complex kI{0.0, 1.0};

inline Operator identity(Index dim) { return Operator::Identity(dim, dim); }
inline Operator zero_operator(Index dim) { return Operator::Zero(dim, dim); }

// Pauli operators in the {|e>, |g>} basis.
inline Operator sigma_x() {
  Operator m(2, 2);
  m << 0.0, 1.0, 1.0, 0.0;
  return m;
}
inline Operator sigma_y() {
  Operator m(2, 2);
  m << 0.0, -kI, kI, 0.0;
  return m;
}
inline Operator sigma_z() {
  Operator m(2, 2);
  m << 1.0, 0.0, 0.0, -1.0;
  return m;
}
// |g><e|
inline Operator sigma_minus() {
  Operator m = Operator::Zero(2, 2);
  m(1, 0) = 1.0;
  return m;
}
// |e><g|
inline Operator sigma_plus() {
  Operator m = Operator::Zero(2, 2);
  m(0, 1) = 1.0;
  return m;
}

inline StateVector basis_vector(Index dim, Index k) {
  if (k < 0 || k >= dim) {
    throw DimensionError("basis index " + std::to_string(k) + " out of range for dim " +
                         std::to_string(dim));
  }
  StateVector v = StateVector::Zero(dim);
  v(k) = 1.0;
  return v;
}

inline void require_square(const Operator& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() < 1) {
    throw DimensionError(std::string(what) + ": operator is " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + ", expected square with dim >= 1");
  }
}

inline void require_same_dim(const Operator& a, const Operator& b, const char* what) {
  require_square(a, what);
  require_square(b, what);
  if (a.rows() != b.rows()) {
    throw DimensionError(std::string(what) + ": dimension mismatch " + std::to_string(a.rows()) +
                         " vs " + std::to_string(b.rows()));
  }
}

inline Operator dagger(const Operator& a) { return a.adjoint(); }

inline Operator commutator(const Operator& a, const Operator& b) {
  require_same_dim(a, b, "commutator");
  return a * b - b * a;
}

inline Operator anticommutator(const Operator& a, const Operator& b) {
  require_same_dim(a, b, "anticommutator");
  return a * b + b * a;
}

// max_ij |a_ij - conj(a_ji)|
inline double hermitian_defect(const Operator& a) {
  if (a.rows() != a.cols()) return std::numeric_limits<double>::infinity();
  return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

inline bool is_hermitian(const Operator& a, double tol = 1e-12) {
  return hermitian_defect(a) <= tol;
}

// Largest absolute column sum.
inline double norm_1(const Operator& a) { return a.cwiseAbs().colwise().sum().maxCoeff(); }

// Matrix exponential by scaling and squaring with a Taylor core. The input is
// scaled by 2^-s so that its 1-norm is at most 1/2, the series is summed to
// machine precision, and the result squared s times.
inline Operator matrix_exp(const Operator& a) {
  require_square(a, "matrix_exp");
  constexpr int kMaxSquarings = 64;
  constexpr int kMaxTerms = 40;
  constexpr double kTargetNorm = 0.5;

  const Index n = a.rows();
  const double norm = norm_1(a);
  if (!std::isfinite(norm)) {
    throw ConvergenceError("matrix_exp: non-finite input norm");
  }
  int squarings = 0;
  if (norm > kTargetNorm) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / kTargetNorm)));
  }
  if (squarings > kMaxSquarings) {
    throw ConvergenceError("matrix_exp: scaling/squaring depth exhausted (need " +
                           std::to_string(squarings) + " > " + std::to_string(kMaxSquarings) +
                           " squarings)");
  }
  const Operator scaled = a / std::ldexp(1.0, squarings);

  Operator result = Operator::Identity(n, n);
  Operator term = Operator::Identity(n, n);
  bool converged = false;
  for (int k = 1; k <= kMaxTerms; ++k) {
    term = (term * scaled).eval() / static_cast<double>(k);
    result += term;
    if (norm_1(term) <= std::numeric_limits<double>::epsilon() * norm_1(result)) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw ConvergenceError("matrix_exp: Taylor core did not converge in " +
                           std::to_string(kMaxTerms) + " terms");
  }
  for (int i = 0; i < squarings; ++i) result = (result * result).eval();
  return result;
}

inline Operator kron(const Operator& a, const Operator& b) {
  Operator out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

// Column stacking.
inline StateVector vectorize(const Operator& rho) {
  require_square(rho, "vectorize");
  return Eigen::Map<const StateVector>(rho.data(), rho.size());
}

inline Operator unvectorize(const StateVector& v) {
  const auto d = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(v.size()))));
  if (d < 1 || d * d != v.size()) {
    throw DimensionError("unvectorize: length " + std::to_string(v.size()) +
                         " is not a perfect square");
  }
  return Eigen::Map<const Operator>(v.data(), d, d);
}

// Smallest eigenvalue of a Hermitian operator. Only the Hermitian part of the
// input is used.
inline double min_eigenvalue(const Operator& a) {
  require_square(a, "min_eigenvalue");
  const Operator h = 0.5 * (a + a.adjoint());
  Eigen::SelfAdjointEigenSolver<Operator> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

struct NullSpace {
  StateVector vector;              // right singular vector of the smallest singular value
  Eigen::VectorXd singular_values; // ascending
  double tolerance;

  // Number of singular values at or below tolerance.
  int dimension() const {
    return static_cast<int>((singular_values.array() <= tolerance).count());
  }
};

inline NullSpace null_space(const Operator& a, double tolerance = 1e-8) {
  require_square(a, "null_space");
  Eigen::BDCSVD<Operator> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd& s = svd.singularValues();  // descending
  const Index n = s.size();
  NullSpace out;
  out.vector = svd.matrixV().col(n - 1);
  out.singular_values = s.reverse();
  out.tolerance = tolerance;
  return out;
}

// Unit vector v minimizing |A v|. Throws if |A v| > tolerance.
inline StateVector null_vector(const Operator& a, double tolerance = 1e-8) {
  NullSpace ns = null_space(a, tolerance);
  if (ns.singular_values(0) > tolerance) {
    throw NoSteadyState("null_vector: smallest singular value " +
                        std::to_string(ns.singular_values(0)) + " exceeds tolerance " +
                        std::to_string(tolerance));
  }
  return ns.vector;
}

inline double normalize(StateVector& psi) {
  const double n = psi.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw InvariantBreach("normalize: state has norm " + std::to_string(n));
  }
  psi /= n;
  return n;
}

inline Complex trace(const Operator& a) { return a.trace(); }

inline double purity(const Operator& rho) { return (rho * rho).trace().real(); }

// <psi|A|psi>
inline Complex expectation(const Operator& a, const StateVector& psi) {
  return psi.dot(a * psi);
}

// Tr(A rho)
inline Complex expectation(const Operator& a, const Operator& rho) {
  return (a.transpose().cwiseProduct(rho)).sum();
}

// Half the sum of absolute eigenvalues of the Hermitian part of (a - b).
inline double trace_distance(const Operator& a, const Operator& b) {
  require_same_dim(a, b, "trace_distance");
  const Operator diff = a - b;
  const Operator h = 0.5 * (diff + diff.adjoint());
  Eigen::SelfAdjointEigenSolver<Operator> solver(h, Eigen::EigenvaluesOnly);
  return 0.5 * solver.eigenvalues().cwiseAbs().sum();
}

struct DensityTolerance {
  double hermitian = 1e-10;
  double trace = 1e-8;
  double positivity = 1e-8;
};

// Hermitian, unit-trace, positive-semidefinite operator.
class DensityMatrix {
 public:
  using Tolerance = DensityTolerance;

  explicit DensityMatrix(Operator rho, const Tolerance& tol = Tolerance{}) : rho_(std::move(rho)) {
    if (auto problem = check(rho_, tol)) throw InvariantBreach("density matrix: " + *problem);
  }

  static DensityMatrix unchecked(Operator rho) { return DensityMatrix(std::move(rho), Unchecked{}); }

  static DensityMatrix pure(const StateVector& psi) {
    StateVector v = psi;
    normalize(v);
    return DensityMatrix(Operator(v * v.adjoint()));
  }

  static DensityMatrix basis(Index dim, Index k) { return pure(basis_vector(dim, k)); }

  static DensityMatrix maximally_mixed(Index dim) {
    return DensityMatrix(Operator(Operator::Identity(dim, dim) / static_cast<double>(dim)));
  }

  // Describes the first violated invariant, if any.
  static std::optional<std::string> check(const Operator& rho, const Tolerance& tol) {
    if (rho.rows() != rho.cols() || rho.rows() < 1) return "not square";
    if (!rho.allFinite()) return std::string("non-finite entries");
    const double herm = hermitian_defect(rho);
    if (herm > tol.hermitian) return "not Hermitian: defect " + std::to_string(herm);
    const double tr = std::abs(rho.trace() - Complex(1.0));
    if (tr > tol.trace) return "trace deviates from 1 by " + std::to_string(tr);
    const double lam = min_eigenvalue(rho);
    if (lam < -tol.positivity) return "negative eigenvalue " + std::to_string(lam);
    return std::nullopt;
  }

  const Operator& op() const noexcept { return rho_; }
  Index dim() const noexcept { return rho_.rows(); }

 private:
  struct Unchecked {};
  DensityMatrix(Operator rho, Unchecked) : rho_(std::move(rho)) {}

  Operator rho_;
};

inline StateVector vectorize(const DensityMatrix& rho) { return vectorize(rho.op()); }

}  // namespace qfb
