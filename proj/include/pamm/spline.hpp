#pragma once

// B-spline bases (open and cyclic) with difference penalties, P-spline style:
// equidistant knots, penalty on d-th order differences of the coefficients.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pamm/error.hpp"

namespace pamm {

enum class BasisKind { bspline, cyclic };

inline std::string to_string(BasisKind k) { return k == BasisKind::bspline ? "bspline" : "cyclic"; }

inline BasisKind basis_kind_from_string(const std::string& s) {
  if (s == "bspline") return BasisKind::bspline;
  if (s == "cyclic") return BasisKind::cyclic;
  throw InputError("unknown basis kind '" + s + "'");
}

/// One spline margin. Knots are materialized on construction and carried
/// through serialization so that evaluation never depends on recomputation.
struct BasisSpec {
  BasisKind kind = BasisKind::bspline;
  int degree = 3;
  int n_basis = 10;
  double lo = 0.0;
  double hi = 1.0;
  int penalty_order = 2;
  std::vector<double> knots;

  void validate() const {
    if (degree < 0) throw InputError("spline degree must be >= 0");
    if (n_basis < degree + 1) throw InputError("spline needs n_basis >= degree + 1");
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
      throw InputError("spline domain needs lo < hi");
    if (penalty_order < 0 || penalty_order >= n_basis)
      throw InputError("penalty order must be < n_basis");
    const std::size_t expected = kind == BasisKind::bspline
                                     ? static_cast<std::size_t>(n_basis + degree + 1)
                                     : static_cast<std::size_t>(n_basis + 1);
    if (knots.size() != expected) throw InputError("spline knot vector has wrong length");
  }

  friend bool operator==(const BasisSpec&, const BasisSpec&) = default;
};

inline BasisSpec make_basis(BasisKind kind, double lo, double hi, int n_basis = 10, int degree = 3,
                            int penalty_order = 2) {
  BasisSpec s;
  s.kind = kind;
  s.lo = lo;
  s.hi = hi;
  s.n_basis = n_basis;
  s.degree = degree;
  s.penalty_order = penalty_order;
  if (!(lo < hi)) throw InputError("spline domain needs lo < hi");
  if (kind == BasisKind::bspline) {
    if (n_basis < degree + 1) throw InputError("spline needs n_basis >= degree + 1");
    const int segments = n_basis - degree;
    const double h = (hi - lo) / segments;
    for (int i = 0; i <= degree; ++i) s.knots.push_back(lo);
    for (int i = 1; i < segments; ++i) s.knots.push_back(lo + i * h);
    for (int i = 0; i <= degree; ++i) s.knots.push_back(hi);
  } else {
    const double h = (hi - lo) / n_basis;
    for (int i = 0; i < n_basis; ++i) s.knots.push_back(lo + i * h);
    s.knots.push_back(hi);
  }
  s.validate();
  return s;
}

namespace detail {

// Nonzero basis values N[0..p] on span i (Cox-de Boor triangle).
template <class KnotAt>
inline void cox_de_boor(double x, int i, int p, KnotAt knot, double* N) {
  double left[32], right[32];
  N[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - knot(i + 1 - j);
    right[j] = knot(i + j) - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = N[r] / (right[r + 1] + left[j - r]);
      N[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    N[j] = saved;
  }
}

}  // namespace detail

/// Writes (B_1(x), ..., B_M(x)) into `out`. Returns true when x was outside
/// [lo, hi] and got clamped to the boundary.
inline bool evaluate_basis_into(const BasisSpec& spec, double x, std::span<double> out) {
  if (out.size() != static_cast<std::size_t>(spec.n_basis))
    throw InputError("basis output has wrong length");
  if (spec.degree > 30) throw InputError("spline degree too large");
  if (!std::isfinite(x)) throw InputError("non-finite value passed to spline basis");
  bool clamped = false;
  if (x < spec.lo) {
    x = spec.lo;
    clamped = true;
  } else if (x > spec.hi) {
    x = spec.hi;
    clamped = true;
  }
  std::fill(out.begin(), out.end(), 0.0);
  const int p = spec.degree;
  const int M = spec.n_basis;
  double N[32];

  if (spec.kind == BasisKind::bspline) {
    const auto& t = spec.knots;
    // span i with t[i] <= x < t[i+1], restricted to p..M-1
    int i = static_cast<int>(std::upper_bound(t.begin(), t.end(), x) - t.begin()) - 1;
    i = std::clamp(i, p, M - 1);
    detail::cox_de_boor(x, i, p, [&](int k) { return t[static_cast<std::size_t>(k)]; }, N);
    for (int r = 0; r <= p; ++r) out[static_cast<std::size_t>(i - p + r)] = N[r];
  } else {
    // Periodic: wrap in the original units so that lo and hi coincide bitwise.
    const double period = spec.hi - spec.lo;
    double xx = std::fmod(x - spec.lo, period);
    if (xx < 0) xx += period;
    const double u = xx / (period / M);
    int i = static_cast<int>(std::floor(u));
    if (i >= M) i = M - 1;
    const double s = u - i;
    // uniform integer knots, local coordinate s on span [0, 1)
    detail::cox_de_boor(s, 0, p, [](int k) { return static_cast<double>(k); }, N);
    for (int r = 0; r <= p; ++r) {
      int m = ((i - p + r) % M + M) % M;
      out[static_cast<std::size_t>(m)] += N[r];
    }
  }
  return clamped;
}

inline Eigen::VectorXd evaluate_basis(const BasisSpec& spec, double x) {
  spec.validate();
  Eigen::VectorXd v(spec.n_basis);
  evaluate_basis_into(spec, x, std::span<double>(v.data(), static_cast<std::size_t>(v.size())));
  return v;
}

/// Row-major flattened outer product of two open B-spline margins.
inline Eigen::VectorXd tensor_basis(const BasisSpec& first, const BasisSpec& second, double x1,
                                    double x2) {
  if (first.kind != BasisKind::bspline || second.kind != BasisKind::bspline)
    throw InputError("tensor product margins must be open B-splines");
  const Eigen::VectorXd b1 = evaluate_basis(first, x1);
  const Eigen::VectorXd b2 = evaluate_basis(second, x2);
  Eigen::VectorXd out(b1.size() * b2.size());
  for (Eigen::Index a = 0; a < b1.size(); ++a)
    for (Eigen::Index b = 0; b < b2.size(); ++b) out(a * b2.size() + b) = b1(a) * b2(b);
  return out;
}

struct PenaltyMatrix {
  Eigen::MatrixXd matrix;
  int order = 2;

  double quadratic(const Eigen::VectorXd& theta) const { return theta.dot(matrix * theta); }
  Eigen::Index size() const { return matrix.rows(); }
};

/// D'D for the order-th difference operator D. The cyclic variant wraps
/// indices, so only constants remain unpenalized.
inline PenaltyMatrix difference_penalty(int M, int order, bool cyclic = false) {
  if (order < 0 || order >= M) throw InputError("difference penalty needs order < M");
  // binomial coefficients with alternating sign, lowest index first
  std::vector<double> c(static_cast<std::size_t>(order) + 1);
  for (int r = 0; r <= order; ++r) {
    double b = 1.0;
    for (int q = 1; q <= r; ++q) b = b * (order - q + 1) / q;
    c[static_cast<std::size_t>(r)] = ((order - r) % 2 == 0 ? 1.0 : -1.0) * b;
  }
  const int rows = cyclic ? M : M - order;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(rows, M);
  for (int i = 0; i < rows; ++i)
    for (int r = 0; r <= order; ++r) D(i, (i + r) % M) += c[static_cast<std::size_t>(r)];
  return {D.transpose() * D, order};
}

inline PenaltyMatrix basis_penalty(const BasisSpec& spec) {
  return difference_penalty(spec.n_basis, spec.penalty_order, spec.kind == BasisKind::cyclic);
}

/// P1 (x) I + I (x) P2, matching the row-major layout of tensor_basis.
inline PenaltyMatrix tensor_penalty(const PenaltyMatrix& p1, const PenaltyMatrix& p2) {
  const Eigen::Index m1 = p1.size(), m2 = p2.size();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(m1 * m2, m1 * m2);
  for (Eigen::Index a = 0; a < m1; ++a)
    for (Eigen::Index a2 = 0; a2 < m1; ++a2)
      for (Eigen::Index b = 0; b < m2; ++b) P(a * m2 + b, a2 * m2 + b) += p1.matrix(a, a2);
  for (Eigen::Index a = 0; a < m1; ++a)
    for (Eigen::Index b = 0; b < m2; ++b)
      for (Eigen::Index b2 = 0; b2 < m2; ++b2) P(a * m2 + b, a * m2 + b2) += p2.matrix(b, b2);
  return {P, std::max(p1.order, p2.order)};
}

}  // namespace pamm
