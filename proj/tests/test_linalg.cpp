#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qfb/linalg.hpp"

namespace qfb {
namespace {

double max_abs(const Operator& a) { return a.cwiseAbs().maxCoeff(); }

TEST(Dagger, Examples) {
  Operator lower(2, 2);
  lower << 0.0, 1.0, 0.0, 0.0;
  Operator expected(2, 2);
  expected << 0.0, 0.0, 1.0, 0.0;
  EXPECT_EQ(dagger(lower), expected);
  EXPECT_EQ(dagger(identity(3)), identity(3));
  EXPECT_EQ(dagger(sigma_y()), sigma_y());
}

TEST(Dagger, InvolutionIsExact) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Operator a = oracle::random_operator(rng, 1 + trial % 4);
    EXPECT_EQ(dagger(dagger(a)), a);
  }
}

TEST(Commutator, Examples) {
  EXPECT_EQ(max_abs(commutator(sigma_x(), sigma_x())), 0.0);
  // [sx, sy] = 2i sz, worked by hand: sx sy = i sz, sy sx = -i sz.
  Operator expected(2, 2);
  expected << 2.0 * kI, 0.0, 0.0, -2.0 * kI;
  EXPECT_LT(max_abs(commutator(sigma_x(), sigma_y()) - expected), 1e-15);
  EXPECT_EQ(anticommutator(sigma_z(), identity(2)), 2.0 * sigma_z());
}

TEST(Commutator, DimensionMismatchThrows) {
  EXPECT_THROW(commutator(identity(2), identity(3)), DimensionError);
  EXPECT_THROW(anticommutator(identity(2), identity(3)), DimensionError);
}

TEST(MatrixExp, ZeroGivesIdentity) { EXPECT_EQ(matrix_exp(zero_operator(3)), identity(3)); }

TEST(MatrixExp, HalfPiSigmaX) {
  const Operator a = -kI * (std::numbers::pi / 2) * sigma_x();
  const Operator oracle_value = oracle::taylor_exp(a);
  EXPECT_LT(max_abs(oracle_value - (-kI * sigma_x())), 1e-12);
  EXPECT_LT(max_abs(matrix_exp(a) - oracle_value), 1e-12);
}

TEST(MatrixExp, DiagonalPhase) {
  const double phi = 0.3;
  const Operator a = -kI * phi * sigma_z();
  Operator closed = Operator::Zero(2, 2);
  closed(0, 0) = std::exp(-kI * phi);
  closed(1, 1) = std::exp(kI * phi);
  EXPECT_LT(max_abs(oracle::taylor_exp(a) - closed), 1e-14);
  EXPECT_LT(max_abs(matrix_exp(a) - closed), 1e-14);
}

TEST(MatrixExp, AgreesWithTaylorOracleOnRandomMatrices) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Operator a = oracle::random_operator(rng, 1 + trial % 5, 0.7);
    const Operator ref = oracle::taylor_exp(a);
    EXPECT_LT(max_abs(matrix_exp(a) - ref), 1e-12 * std::max(1.0, max_abs(ref)));
  }
}

TEST(MatrixExp, UnitaryForHermitianGenerators) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = 1 + trial % 4;
    Operator z = oracle::random_hermitian(rng, d);
    const double scale = 10.0 * static_cast<double>(trial + 1) / 50.0;
    z *= scale / z.operatorNorm();
    const Operator u = matrix_exp(-kI * z);
    EXPECT_LT(max_abs(u * dagger(u) - identity(d)), 1e-12) << "norm " << scale;
  }
}

TEST(MatrixExp, NonFiniteInputReportsConvergenceFailure) {
  Operator a = identity(2);
  a(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(matrix_exp(a), ConvergenceError);
  EXPECT_THROW(matrix_exp(1e300 * identity(2)), ConvergenceError);
}

TEST(Kron, Examples) {
  EXPECT_EQ(kron(identity(2), identity(2)), identity(4));
  Operator expected = Operator::Zero(4, 4);
  expected.diagonal() << 1.0, 1.0, -1.0, -1.0;
  EXPECT_EQ(kron(sigma_z(), identity(2)), expected);

  // |00> -> |11> through an explicit 4x4 product.
  StateVector v00 = basis_vector(4, 0);
  StateVector v11 = basis_vector(4, 3);
  const Operator xx = oracle::kron_by_index(sigma_x(), sigma_x());
  EXPECT_EQ(xx * v00, v11);
  EXPECT_EQ(kron(sigma_x(), sigma_x()) * v00, v11);
}

TEST(Kron, MatchesIndexFormulaAndIsAssociative) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Operator a = oracle::random_operator(rng, 1 + trial % 3);
    const Operator b = oracle::random_operator(rng, 1 + (trial / 3) % 3);
    const Operator c = oracle::random_operator(rng, 2);
    EXPECT_EQ(kron(a, b), oracle::kron_by_index(a, b));
    EXPECT_LT(max_abs(kron(kron(a, b), c) - kron(a, kron(b, c))), 1e-13);
  }
}

TEST(Vectorize, Examples) {
  const Operator half = identity(2) / 2.0;
  StateVector expected(4);
  expected << 0.5, 0.0, 0.0, 0.5;
  EXPECT_EQ(vectorize(half), expected);

  const DensityMatrix excited = DensityMatrix::basis(2, 0);
  StateVector e(4);
  e << 1.0, 0.0, 0.0, 0.0;
  EXPECT_EQ(vectorize(excited), e);

  // Column stacking: entry (i, j) lands at i + j*D.
  Operator m(2, 2);
  m << 1.0, 2.0, 3.0, 4.0;
  StateVector cols(4);
  cols << 1.0, 3.0, 2.0, 4.0;
  EXPECT_EQ(vectorize(m), cols);
}

TEST(Vectorize, RoundTripIsExact) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Operator rho = oracle::random_density(rng, 1 + trial % 4);
    EXPECT_EQ(unvectorize(vectorize(rho)), rho);
  }
}

TEST(Vectorize, RejectsNonSquareLength) {
  EXPECT_THROW(unvectorize(StateVector::Zero(3)), DimensionError);
  EXPECT_THROW(unvectorize(StateVector::Zero(0)), DimensionError);
}

TEST(Vectorize, SandwichIdentity) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const Index d = 1 + trial % 4;
    const Operator a = oracle::random_operator(rng, d);
    const Operator b = oracle::random_operator(rng, d);
    const Operator rho = oracle::random_density(rng, d);
    const StateVector lhs = vectorize(Operator(a * rho * b));
    const StateVector rhs = kron(b.transpose(), a) * vectorize(rho);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MinEigenvalue, Examples) {
  Operator d = Operator::Zero(2, 2);
  d.diagonal() << 0.2, 0.8;
  EXPECT_NEAR(min_eigenvalue(d), 0.2, 1e-10);
  // det(sx - l I) = l^2 - 1.
  EXPECT_NEAR(min_eigenvalue(sigma_x()), -1.0, 1e-10);
}

TEST(NullVector, Examples) {
  Operator d = Operator::Zero(3, 3);
  d.diagonal() << 0.0, 1.0, 2.0;
  const StateVector v = null_vector(d);
  EXPECT_NEAR(std::abs(v(0)), 1.0, 1e-12);
  EXPECT_LT((d * v).norm(), 1e-8);
  EXPECT_THROW(null_vector(identity(3)), NoSteadyState);
}

TEST(NullSpace, CountsDegeneracy) {
  Operator d = Operator::Zero(3, 3);
  d(2, 2) = 1.0;
  EXPECT_EQ(null_space(d).dimension(), 2);
}

TEST(TraceDistance, PureOrthogonalStatesAreOne) {
  EXPECT_NEAR(trace_distance(DensityMatrix::basis(2, 0).op(), DensityMatrix::basis(2, 1).op()),
              1.0, 1e-14);
}

TEST(DensityMatrix, RejectsInvalidOperators) {
  Operator bad = identity(2);
  EXPECT_THROW(DensityMatrix{bad}, InvariantBreach);  // trace 2
  Operator neg = Operator::Zero(2, 2);
  neg.diagonal() << 1.5, -0.5;
  EXPECT_THROW(DensityMatrix{neg}, InvariantBreach);
  Operator nonherm = identity(2) / 2.0;
  nonherm(0, 1) = 0.1;
  EXPECT_THROW(DensityMatrix{nonherm}, InvariantBreach);
  EXPECT_NO_THROW(DensityMatrix::maximally_mixed(3));
}

TEST(Normalize, UnitNormAfterCall) {
  std::mt19937_64 rng(19);
  StateVector v = 3.7 * oracle::random_state(rng, 4);
  normalize(v);
  EXPECT_LT(std::abs(v.norm() - 1.0), 1e-12);
  StateVector z = StateVector::Zero(2);
  EXPECT_THROW(normalize(z), InvariantBreach);
}

}  // namespace
}  // namespace qfb
