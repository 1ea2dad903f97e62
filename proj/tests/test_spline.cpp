#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "pamm/error.hpp"
#include "pamm/spline.hpp"

using namespace pamm;

TEST(Basis, PartitionOfUnityAtRandomPoints) {
  std::mt19937_64 rng(1);
  for (int M : {4, 7, 10, 20}) {
    const auto spec = make_basis(BasisKind::bspline, -2.0, 3.0, M);
    std::uniform_real_distribution<double> U(-2.0, 3.0);
    for (int i = 0; i < 1000; ++i) {
      const auto b = evaluate_basis(spec, U(rng));
      EXPECT_NEAR(b.sum(), 1.0, 1e-10);
      EXPECT_GE(b.minCoeff(), 0.0);
    }
    EXPECT_NEAR(evaluate_basis(spec, 3.0).sum(), 1.0, 1e-10);
  }
}

TEST(Basis, LeftBoundaryOfCubicWithFourFunctions) {
  const auto spec = make_basis(BasisKind::bspline, 0.0, 1.0, 4, 3);
  const auto b = evaluate_basis(spec, 0.0);
  EXPECT_DOUBLE_EQ(b(0), 1.0);
  EXPECT_DOUBLE_EQ(b(1), 0.0);
  EXPECT_DOUBLE_EQ(b(2), 0.0);
  EXPECT_DOUBLE_EQ(b(3), 0.0);
}

TEST(Basis, CubicBernsteinCaseMatchesClosedForm) {
  // one segment: the basis is the Bernstein polynomials of degree 3
  const auto spec = make_basis(BasisKind::bspline, 0.0, 1.0, 4, 3);
  for (double x : {0.1, 0.25, 0.5, 0.9}) {
    const auto b = evaluate_basis(spec, x);
    const double u = 1 - x;
    EXPECT_NEAR(b(0), u * u * u, 1e-14);
    EXPECT_NEAR(b(1), 3 * x * u * u, 1e-14);
    EXPECT_NEAR(b(2), 3 * x * x * u, 1e-14);
    EXPECT_NEAR(b(3), x * x * x, 1e-14);
  }
}

TEST(Basis, CyclicEndpointsBitwiseIdentical) {
  const auto spec = make_basis(BasisKind::cyclic, 0.0, 24.0, 10);
  const auto a = evaluate_basis(spec, 0.0);
  const auto b = evaluate_basis(spec, 24.0);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())), 0);
  EXPECT_NEAR(a.sum(), 1.0, 1e-12);
}

TEST(Basis, CyclicContinuityAndDerivativeAtWrap) {
  const auto spec = make_basis(BasisKind::cyclic, 0.0, 24.0, 8);
  const double h = 1e-6;
  const auto lo = evaluate_basis(spec, 0.0), lo_h = evaluate_basis(spec, h);
  const auto hi = evaluate_basis(spec, 24.0), hi_h = evaluate_basis(spec, 24.0 - h);
  for (Eigen::Index m = 0; m < lo.size(); ++m) {
    EXPECT_NEAR(lo(m), hi(m), 1e-14);
    EXPECT_NEAR((lo_h(m) - lo(m)) / h, (hi(m) - hi_h(m)) / h, 1e-4);
  }
}

TEST(Basis, CyclicPeriodicity) {
  const auto spec = make_basis(BasisKind::cyclic, 1.0, 5.0, 6);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(1.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    const double x = U(rng);
    const auto a = evaluate_basis(spec, x);
    EXPECT_NEAR(a.sum(), 1.0, 1e-12);
  }
}

TEST(Basis, OutOfDomainClampsAndReports) {
  const auto spec = make_basis(BasisKind::bspline, 0.0, 1.0, 6);
  Eigen::VectorXd v(6);
  EXPECT_TRUE(evaluate_basis_into(spec, 1.5, {v.data(), 6}));
  EXPECT_TRUE(v.isApprox(evaluate_basis(spec, 1.0)));
  EXPECT_FALSE(evaluate_basis_into(spec, 0.5, {v.data(), 6}));
}

TEST(Basis, InvalidSpecs) {
  EXPECT_THROW(make_basis(BasisKind::bspline, 0.0, 1.0, 3, 3), InputError);
  EXPECT_THROW(make_basis(BasisKind::bspline, 1.0, 1.0, 10), InputError);
  auto s = make_basis(BasisKind::bspline, 0.0, 1.0, 6);
  s.knots.pop_back();
  EXPECT_THROW(evaluate_basis(s, 0.5), InputError);
}

TEST(Tensor, SumsToOneAndHasProductLength) {
  const auto a = make_basis(BasisKind::bspline, 0.0, 1.0, 4);
  const auto b = make_basis(BasisKind::bspline, -1.0, 1.0, 4);
  const auto t = tensor_basis(a, b, 0.3, 0.2);
  EXPECT_EQ(t.size(), 16);
  EXPECT_NEAR(t.sum(), 1.0, 1e-12);
}

TEST(Tensor, OuterProductIdentityAtBoundaryKnot) {
  const auto a = make_basis(BasisKind::bspline, 0.0, 1.0, 4);
  const auto b = make_basis(BasisKind::bspline, -1.0, 1.0, 5);
  const auto t = tensor_basis(a, b, 0.0, 0.37);
  const auto b2 = evaluate_basis(b, 0.37);
  for (Eigen::Index j = 0; j < b2.size(); ++j) EXPECT_DOUBLE_EQ(t(j), b2(j));
  for (Eigen::Index j = b2.size(); j < t.size(); ++j) EXPECT_EQ(t(j), 0.0);
}

TEST(Tensor, RejectsCyclicMargins) {
  const auto a = make_basis(BasisKind::cyclic, 0.0, 1.0, 6);
  const auto b = make_basis(BasisKind::bspline, 0.0, 1.0, 6);
  EXPECT_THROW(tensor_basis(a, b, 0.1, 0.1), InputError);
}

TEST(Penalty, ExplicitSecondDifferenceMatrix) {
  const auto P = difference_penalty(4, 2);
  Eigen::MatrixXd D(2, 4);
  D << 1, -2, 1, 0, 0, 1, -2, 1;
  EXPECT_TRUE(P.matrix.isApprox(D.transpose() * D));
  Eigen::VectorXd e1 = Eigen::VectorXd::Unit(4, 0);
  EXPECT_DOUBLE_EQ(P.quadratic(e1), 1.0);
  EXPECT_DOUBLE_EQ(P.quadratic(Eigen::VectorXd::Zero(4)), 0.0);
  Eigen::VectorXd lin(4);
  lin << 1, 2, 3, 4;
  EXPECT_NEAR(P.quadratic(lin), 0.0, 1e-12);
}

TEST(Penalty, NullSpaceIsPolynomialsBelowOrder) {
  for (int order = 1; order <= 3; ++order) {
    const auto P = difference_penalty(10, order);
    EXPECT_TRUE(P.matrix.isApprox(P.matrix.transpose()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P.matrix);
    int zeros = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      EXPECT_GT(es.eigenvalues()(i), -1e-10);
      zeros += std::abs(es.eigenvalues()(i)) < 1e-9 ? 1 : 0;
    }
    EXPECT_EQ(zeros, order);
    for (int deg = 0; deg < order; ++deg) {
      Eigen::VectorXd th(10);
      for (int i = 0; i < 10; ++i) th(i) = std::pow(i + 1.0, deg);
      EXPECT_NEAR(P.quadratic(th), 0.0, 1e-8);
    }
  }
}

TEST(Penalty, CyclicLeavesOnlyConstants) {
  const auto P = difference_penalty(8, 2, true);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P.matrix);
  int zeros = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) zeros += std::abs(es.eigenvalues()(i)) < 1e-9 ? 1 : 0;
  EXPECT_EQ(zeros, 1);
  EXPECT_NEAR(P.quadratic(Eigen::VectorXd::Ones(8)), 0.0, 1e-12);
}

TEST(Penalty, TensorIsKroneckerSum) {
  const auto p1 = difference_penalty(3, 1), p2 = difference_penalty(4, 2);
  const auto T = tensor_penalty(p1, p2);
  const Eigen::MatrixXd I1 = Eigen::MatrixXd::Identity(3, 3), I2 = Eigen::MatrixXd::Identity(4, 4);
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(12, 12);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) expect.block(a * 4, b * 4, 4, 4) += p1.matrix(a, b) * I2 + I1(a, b) * p2.matrix;
  EXPECT_TRUE(T.matrix.isApprox(expect));
}

TEST(Penalty, OrderMustBeBelowSize) { EXPECT_THROW(difference_penalty(3, 3), InputError); }
