#pragma once

// Shared fixtures and independent reference implementations for tests.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pamm/model.hpp"
#include "pamm/ped.hpp"
#include "pamm/trainer.hpp"

namespace pamm::reference {

// ---------------------------------------------------------------------------
// Fixtures

/// Fixed 50-subject single-risk sample on five cut points.
inline SurvivalData pem_fixture() {
  SurvivalData d;
  d.feature_names = {"x"};
  std::mt19937_64 rng(20240611);
  std::exponential_distribution<double> E(0.6);
  std::uniform_real_distribution<double> U(0.0, 6.0);
  for (int i = 0; i < 50; ++i) {
    SurvivalRecord r;
    r.id = "p" + std::to_string(i);
    const double t = E(rng), c = U(rng);
    r.exit = std::min(t, c);
    r.cause = t <= c ? 1 : 0;
    r.features = {static_cast<double>(i % 5)};
    d.records.push_back(r);
  }
  return d;
}

/// Closed-form piecewise exponential MLE: events / exposure per interval.
inline std::vector<double> pem_closed_form(const SurvivalData& d, const CutPoints& cuts) {
  const std::size_t J = cuts.n_intervals();
  std::vector<double> ev(J, 0.0), ex(J, 0.0);
  for (const auto& r : d.records) {
    const double exit = std::min(r.exit, cuts.horizon());
    for (std::size_t j = 1; j <= J; ++j) {
      const double a = std::max(r.entry, cuts[j - 1]), b = std::min(exit, cuts[j]);
      if (b > a) ex[j - 1] += b - a;
      if (r.event() && r.exit <= cuts.horizon() && r.exit > cuts[j - 1] && r.exit <= cuts[j]) ev[j - 1] += 1;
    }
  }
  std::vector<double> h(J);
  for (std::size_t j = 0; j < J; ++j) h[j] = ev[j] / ex[j];
  return h;
}

// ---------------------------------------------------------------------------
// Random small instances for gradient checks

struct Instance {
  SurvivalData data;
  PedFrame ped;
  ModelSpec spec;
  HazardModel model;
  PenaltyStrengths penalty;
  std::string label;
};

/// Instance `i` of a family that cycles through every term kind, the deep
/// head in PH and non-PH mode with both activations and both trunk layouts,
/// competing risks and random effects.
inline Instance random_instance(std::uint64_t i) {
  std::mt19937_64 rng(1000 + i);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::uniform_int_distribution<int> n_dist(6, 20);
  Instance inst;
  const int P = 1 + static_cast<int>(i % 3);
  const int K = 1 + static_cast<int>((i / 3) % 3);  // 1, 2 or 3 causes
  const bool clusters = (i % 4) != 1;
  SurvivalData d;
  for (int p = 0; p < P; ++p) d.feature_names.push_back("f" + std::to_string(p));
  d.has_clusters = clusters;
  const int n = n_dist(rng);
  for (int s = 0; s < n; ++s) {
    SurvivalRecord r;
    r.id = "r" + std::to_string(s);
    r.entry = (s % 5 == 4) ? 0.3 : 0.0;
    r.exit = r.entry + 0.2 + 2.5 * (0.5 + 0.5 * U(rng));
    r.cause = (s % 3 == 0) ? 0 : 1 + s % K;
    if (s < K) r.cause = s + 1;  // every cause observed
    for (int p = 0; p < P; ++p) r.features.push_back(2.0 * U(rng));
    if (clusters) r.cluster = "g" + std::to_string(s % 3);
    d.records.push_back(r);
  }
  const CutPoints cuts({0.0, 0.5, 1.1, 1.8, 2.4, 3.5});
  inst.ped = prepare_ped(d, cuts, K);
  inst.data = d;

  auto add = [&](TermKind k, std::vector<std::string> f = {}) {
    TermSpec t;
    t.kind = k;
    t.features = std::move(f);
    t.n_basis = {5 + static_cast<int>(i % 3)};
    t.penalty = 0.5 + (i % 4);
    inst.spec.terms.push_back(t);
    return inst.spec.terms.size() - 1;
  };
  switch (i % 7) {
    case 0: add(TermKind::intercept); add(TermKind::linear, {"f0"}); break;
    case 1: add(TermKind::intercept); add(TermKind::smooth, {"f0"}); break;
    case 2: add(TermKind::smooth_time); break;
    case 3: {
      add(TermKind::intercept);
      const auto idx = add(TermKind::smooth, {"f0"});
      inst.spec.terms[idx].basis = BasisKind::cyclic;
      break;
    }
    case 4:
      add(TermKind::intercept);
      if (P >= 2) add(TermKind::tensor, {"f0", "f1"}); else add(TermKind::tensor, {"f0", "f0"});
      break;
    case 5: add(TermKind::interval); break;
    case 6: add(TermKind::intercept); add(TermKind::smooth_time); add(TermKind::linear, {"f" + std::to_string(P - 1)}); break;
  }
  if (clusters) add(TermKind::random_effect);
  if (i % 5 != 2) {
    DeepSpec ds;
    for (int p = 0; p < P; ++p) ds.inputs.push_back("f" + std::to_string(p));
    ds.widths = (i % 2) ? std::vector<int>{4, 3} : std::vector<int>{5};
    ds.activation = (i % 3 == 0) ? Activation::relu : Activation::tanh;
    ds.time_input = (i % 4) == 0;
    ds.shared_trunk = (i % 6) != 5;
    inst.spec.deep = ds;
  }
  inst.spec.n_causes = K;
  inst.model = initialize_model(inst.spec, inst.ped, 77 + i);
  Eigen::VectorXd theta = get_parameters(inst.model);
  for (Eigen::Index k = 0; k < theta.size(); ++k) theta(k) = 0.4 * U(rng);
  set_parameters(inst.model, theta);
  inst.penalty.psi_scale = 0.1 + 0.9 * (0.5 + 0.5 * U(rng));
  inst.penalty.lambda_re = 0.1 + (0.5 + 0.5 * U(rng));
  inst.penalty.weight_decay = 1e-2;
  inst.label = "instance " + std::to_string(i) + " (K=" + std::to_string(K) + ")";
  return inst;
}

/// |a - f| / max(1, |a|, |f|) for analytic a and finite-difference f.
inline double gradient_relative_error(const Instance& inst, double h = 1e-5) {
  const Problem p = make_problem(inst.model, inst.ped);
  const Eigen::VectorXd g = objective_and_gradient(p, inst.model, inst.penalty).gradient;
  HazardModel m = inst.model;
  const Eigen::VectorXd theta = get_parameters(m);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd t = theta;
    t(k) = theta(k) + h;
    set_parameters(m, t);
    const double fp = penalized_objective(p, m, inst.penalty);
    t(k) = theta(k) - h;
    set_parameters(m, t);
    const double fm = penalized_objective(p, m, inst.penalty);
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(g(k) - fd) / std::max({1.0, std::abs(g(k)), std::abs(fd)});
    worst = std::max(worst, err);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Brute-force metric references (no library code involved)

/// Product-limit estimate at t, recomputing risk sets by scanning.
inline double brute_km(const std::vector<double>& time, const std::vector<int>& event, double t) {
  std::set<double> event_times;
  for (std::size_t i = 0; i < time.size(); ++i)
    if (event[i] && time[i] <= t) event_times.insert(time[i]);
  double s = 1.0;
  for (double u : event_times) {
    double at_risk = 0, d = 0;
    for (std::size_t i = 0; i < time.size(); ++i) {
      if (time[i] >= u) at_risk += 1;
      if (time[i] == u && event[i]) d += 1;
    }
    s *= 1.0 - d / at_risk;
  }
  return s;
}

/// Left limit of the product-limit estimate at t.
inline double brute_km_left(const std::vector<double>& time, const std::vector<int>& event, double t) {
  std::set<double> event_times;
  for (std::size_t i = 0; i < time.size(); ++i)
    if (event[i] && time[i] < t) event_times.insert(time[i]);
  double s = 1.0;
  for (double u : event_times) {
    double at_risk = 0, d = 0;
    for (std::size_t i = 0; i < time.size(); ++i) {
      if (time[i] >= u) at_risk += 1;
      if (time[i] == u && event[i]) d += 1;
    }
    s *= 1.0 - d / at_risk;
  }
  return s;
}

/// IPCW Brier score from the textbook formula; `pred[i]` is S_i(tau).
inline double brute_brier(const std::vector<double>& time, const std::vector<int>& event,
                          const std::vector<double>& pred, double tau) {
  std::vector<int> cens(event.size());
  for (std::size_t i = 0; i < event.size(); ++i) cens[i] = event[i] ? 0 : 1;
  double sum = 0.0;
  for (std::size_t i = 0; i < time.size(); ++i) {
    if (time[i] <= tau && event[i]) {
      const double g = brute_km_left(time, cens, time[i]);
      if (g > 0) sum += pred[i] * pred[i] / g;
    } else if (time[i] > tau) {
      const double g = brute_km(time, cens, tau);
      if (g > 0) sum += (1 - pred[i]) * (1 - pred[i]) / g;
    }
  }
  return sum / static_cast<double>(time.size());
}

/// Lower quartiles of event times and (1/q) trapezoid integrals of BS.
template <class PredictAt>
std::vector<double> brute_ibs(const std::vector<double>& time, const std::vector<int>& event, PredictAt&& pred_at) {
  std::vector<double> ev;
  for (std::size_t i = 0; i < time.size(); ++i)
    if (event[i]) ev.push_back(time[i]);
  std::sort(ev.begin(), ev.end());
  std::vector<double> out;
  for (int q = 1; q <= 3; ++q) {
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(ev.size()) / 4.0 - 1e-12));
    const double Q = ev[idx - 1];
    std::set<double> grid{0.0, Q};
    for (double t : ev)
      if (t > 0 && t <= Q) grid.insert(t);
    if (grid.size() < 50)
      for (int k = 1; k < 49; ++k) grid.insert(Q * k / 49.0);
    std::vector<double> g(grid.begin(), grid.end());
    double acc = 0.0;
    auto bs = [&](double tau) {
      std::vector<double> p(time.size());
      for (std::size_t i = 0; i < time.size(); ++i) p[i] = pred_at(i, tau);
      return brute_brier(time, event, p, tau);
    };
    double prev = bs(g[0]);
    for (std::size_t k = 1; k < g.size(); ++k) {
      const double cur = bs(g[k]);
      acc += 0.5 * (prev + cur) * (g[k] - g[k - 1]);
      prev = cur;
    }
    out.push_back(acc / Q);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov test against the uniform distribution

/// Two-sided one-sample KS statistic of `u` against U(0, 1).
inline double ks_statistic(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d = std::max(d, static_cast<double>(i + 1) / n - u[i]);
    d = std::max(d, u[i] - static_cast<double>(i) / n);
  }
  return d;
}

/// Asymptotic p-value with the Stephens small-sample correction.
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace pamm::reference
