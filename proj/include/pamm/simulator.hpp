#pragma once

// Survival data from user-specified log-hazards by exact inversion of a
// piecewise constant cumulative hazard on a fine time grid.
//
// The hazard on grid interval (t_{m-1}, t_m] is exp(rho(x, t_m)), so the
// ground-truth survival of each subject is itself piecewise exponential and
// can be evaluated exactly with the inference module.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pamm/error.hpp"
#include "pamm/inference.hpp"
#include "pamm/ped.hpp"

namespace pamm {

using Rng = std::mt19937_64;

/// Independent stream for (seed, index, stream tag).
inline Rng make_stream(std::uint64_t seed, std::uint64_t index, std::uint64_t tag = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(tag)};
  return Rng(seq);
}

struct SampledTime {
  double time = 0.0;
  bool event = false;
};

namespace detail {

inline void check_grid(const std::vector<double>& grid) {
  if (grid.size() < 2 || grid.front() != 0.0) throw InputError("simulation grid must start at 0");
  for (std::size_t m = 1; m < grid.size(); ++m)
    if (!(grid[m] > grid[m - 1])) throw InputError("simulation grid must be strictly increasing");
}

inline double hazard_from_log(double rho) {
  if (std::isnan(rho) || rho == std::numeric_limits<double>::infinity())
    throw NumericalError("non-finite log-hazard in simulation");
  return std::exp(rho);  // -inf disables the hazard
}

// Inverts H(t) = E over per-interval hazards. Returns censoring at grid.back().
inline std::pair<SampledTime, std::size_t> invert(const std::vector<double>& grid,
                                                  const std::vector<double>& h, double E) {
  double H = 0.0;
  for (std::size_t m = 1; m < grid.size(); ++m) {
    const double width = grid[m] - grid[m - 1];
    const double inc = h[m - 1] * width;
    if (H + inc >= E && h[m - 1] > 0.0) {
      double t = grid[m - 1] + (E - H) / h[m - 1];
      if (t > grid[m]) t = grid[m];
      return {{t, true}, m};
    }
    H += inc;
  }
  return {{grid.back(), false}, 0};
}

}  // namespace detail

/// Event time for one subject; `rho(t)` is the log-hazard at fixed features.
template <class LogHazard>
SampledTime sample_survival_time(LogHazard&& rho, const std::vector<double>& grid, Rng& rng) {
  detail::check_grid(grid);
  std::vector<double> h(grid.size() - 1);
  for (std::size_t m = 1; m < grid.size(); ++m) h[m - 1] = detail::hazard_from_log(rho(grid[m]));
  std::exponential_distribution<double> Exp1(1.0);
  return detail::invert(grid, h, Exp1(rng)).first;
}

struct SampledCause {
  double time = 0.0;
  int cause = 0;  // 0 = no event before the end of the grid
};

/// Competing risks: time from the all-cause hazard, cause drawn with
/// probabilities h_k / h. within the event interval.
inline SampledCause sample_competing(const std::vector<std::function<double(double)>>& rhos,
                                     const std::vector<double>& grid, Rng& rng) {
  if (rhos.size() < 2) throw InputError("sample_competing needs K >= 2");
  detail::check_grid(grid);
  const std::size_t K = rhos.size(), M = grid.size() - 1;
  std::vector<double> hk(M * K), h(M, 0.0);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < K; ++k) {
      hk[m * K + k] = detail::hazard_from_log(rhos[k](grid[m + 1]));
      h[m] += hk[m * K + k];
    }
  std::exponential_distribution<double> Exp1(1.0);
  auto [s, m] = detail::invert(grid, h, Exp1(rng));
  if (!s.event) return {s.time, 0};
  std::uniform_real_distribution<double> U(0.0, h[m - 1]);
  const double u = U(rng);
  double acc = 0.0;
  int cause = static_cast<int>(K);
  for (std::size_t k = 0; k < K; ++k) {
    acc += hk[(m - 1) * K + k];
    if (u < acc) {
      cause = static_cast<int>(k) + 1;
      break;
    }
  }
  // skip disabled causes that could be picked by roundoff at the upper end
  while (cause > 1 && hk[(m - 1) * K + static_cast<std::size_t>(cause - 1)] == 0.0) --cause;
  return {s.time, cause};
}

// ---------------------------------------------------------------------------
// Scenario library

enum class ShapeKind { sine, bump };

struct SmoothShape {
  std::size_t feature = 0;
  ShapeKind kind = ShapeKind::sine;
  double amplitude = 1.0;
  double frequency = 1.0;

  double operator()(double x) const {
    return kind == ShapeKind::sine ? amplitude * std::sin(frequency * x)
                                   : amplitude * std::exp(-frequency * x * x);
  }
};

struct Interaction {
  std::size_t a = 0, b = 0;
  double coefficient = 0.0;
};

/// rho(x, t) = intercept + time_slope * t + time_amplitude * sin(time_frequency * t)
///             + sum linear + sum interactions + sum smooth shapes
///             + cluster effect + latent-group effect
struct LogHazardSpec {
  double intercept = 0.0;
  double time_slope = 0.0;
  double time_amplitude = 0.0;
  double time_frequency = 1.0;
  std::vector<double> linear;  // one coefficient per feature (missing = 0)
  std::vector<Interaction> interactions;
  std::vector<SmoothShape> smooths;
  double cluster_loading = 0.0;  // 1 adds the subject's cluster effect
  double group_loading = 0.0;    // 1 adds the subject's latent-group coefficient
  bool disabled = false;         // rho = -inf

  double operator()(const std::vector<double>& x, double t, double cluster_effect = 0.0,
                    double group_effect = 0.0) const {
    if (disabled) return -std::numeric_limits<double>::infinity();
    double r = intercept + time_slope * t + time_amplitude * std::sin(time_frequency * t);
    for (std::size_t p = 0; p < linear.size() && p < x.size(); ++p) r += linear[p] * x[p];
    for (const auto& in : interactions) r += in.coefficient * x.at(in.a) * x.at(in.b);
    for (const auto& s : smooths) r += s(x.at(s.feature));
    return r + cluster_loading * cluster_effect + group_loading * group_effect;
  }
};

struct Scenario {
  enum class Kind { single, competing_risks, mixed_effects };
  std::string name = "custom";
  int version = 1;
  Kind kind = Kind::single;
  std::vector<LogHazardSpec> causes;
  std::size_t n_features = 1;
  double feature_lo = -1.0, feature_hi = 1.0;  // independent uniform features
  std::size_t n_subjects = 1000;
  double t_max = 10.0;
  double censoring_rate = 0.0;  // independent exponential censoring
  std::size_t n_clusters = 0;
  double cluster_sd = 0.0;
  std::vector<double> group_effects;  // categorical latent groups, exposed as feature "group"
  std::size_t grid_steps = 200;

  void validate() const {
    if (!(t_max > 0.0)) throw InputError("scenario t_max must be > 0");
    if (!(cluster_sd >= 0.0)) throw InputError("scenario cluster sd must be >= 0");
    if (causes.empty()) throw InputError("scenario needs K >= 1");
    if (!(feature_lo < feature_hi)) throw InputError("scenario feature range is empty");
    if (grid_steps < 1) throw InputError("scenario grid needs >= 1 step");
    if (kind == Kind::mixed_effects && n_clusters == 0) throw InputError("mixed effects scenario needs clusters");
  }

  std::vector<double> grid() const {
    std::vector<double> g(grid_steps + 1);
    for (std::size_t m = 0; m <= grid_steps; ++m) g[m] = t_max * static_cast<double>(m) / static_cast<double>(grid_steps);
    g.back() = t_max;
    return g;
  }
};

/// Competing risks, two causes. Cause 1: linear in five features, two
/// pairwise interactions and a sine term; cause 2: three features and one
/// interaction. About 30% of subjects are censored.
inline Scenario scenario_cr_v1() {
  Scenario s;
  s.name = "cr_v1";
  s.kind = Scenario::Kind::competing_risks;
  s.n_features = 5;
  s.feature_lo = -1.5;
  s.feature_hi = 1.5;
  s.t_max = 6.0;
  s.censoring_rate = 0.06;
  LogHazardSpec c1;
  c1.intercept = -1.6;
  c1.time_slope = 0.15;
  c1.linear = {0.5, -0.4, 0.3, 0.3, -0.3};
  c1.interactions = {{0, 1, 0.9}, {2, 3, -0.8}};
  c1.smooths = {{4, ShapeKind::sine, 0.6, 2.0}};
  LogHazardSpec c2;
  c2.intercept = -2.3;
  c2.time_slope = 0.1;
  c2.linear = {0.4, 0.3, -0.4};
  c2.interactions = {{1, 2, 0.4}};
  s.causes = {c1, c2};
  return s;
}

/// Single risk with the cr_v1 cause-1 structure plus normal cluster effects
/// (60 clusters, standard deviation 1.5).
inline Scenario scenario_mixed_v1() {
  Scenario s = scenario_cr_v1();
  s.name = "mixed_v1";
  s.kind = Scenario::Kind::mixed_effects;
  LogHazardSpec c1 = s.causes.front();
  c1.cluster_loading = 1.0;
  s.causes = {c1};
  s.n_clusters = 60;
  s.cluster_sd = 1.5;
  s.censoring_rate = 0.08;
  s.n_subjects = 3000;
  return s;
}

/// Single risk with a categorical latent group standing in for an
/// unstructured data source; group coefficients spread over [-0.5, 0.75].
inline Scenario scenario_latent_v1() {
  Scenario s = scenario_cr_v1();
  s.name = "latent_v1";
  s.kind = Scenario::Kind::single;
  LogHazardSpec c1 = s.causes.front();
  c1.group_loading = 1.0;
  s.causes = {c1};
  s.group_effects = {-0.5, -0.25, 0.0, 0.25, 0.5, 0.75};
  return s;
}

inline Scenario named_scenario(const std::string& name) {
  if (name == "cr_v1") return scenario_cr_v1();
  if (name == "mixed_v1") return scenario_mixed_v1();
  if (name == "latent_v1") return scenario_latent_v1();
  throw InputError("unknown scenario '" + name + "'");
}

struct ScenarioDataset {
  SurvivalData data;
  std::vector<double> cluster_effects;
  CutPoints grid;
  std::vector<Eigen::MatrixXd> true_hazards;  // per subject, grid steps x K

  /// Ground-truth all-cause survival of subject i.
  double true_survival(std::size_t i, double t) const { return oracle(i).survival(t); }

  /// Ground-truth CIF of 1-based cause k.
  double true_cif(std::size_t i, int k, double t) const {
    return oracle(i).cif(static_cast<std::size_t>(k - 1), t);
  }

  CifSet oracle(std::size_t i) const { return CifSet(grid, true_hazards.at(i)); }
};

inline ScenarioDataset make_scenario_dataset(const Scenario& sc, std::uint64_t seed) {
  sc.validate();
  ScenarioDataset out;
  const std::vector<double> grid = sc.grid();
  out.grid = CutPoints(grid);
  const std::size_t K = sc.causes.size();
  const std::size_t M = grid.size() - 1;

  for (std::size_t p = 0; p < sc.n_features; ++p) out.data.feature_names.push_back("x" + std::to_string(p + 1));
  if (!sc.group_effects.empty()) out.data.feature_names.push_back("group");
  out.data.has_clusters = sc.n_clusters > 0;

  {
    Rng rng = make_stream(seed, 0, 1);
    std::normal_distribution<double> N(0.0, sc.cluster_sd);
    for (std::size_t v = 0; v < sc.n_clusters; ++v) out.cluster_effects.push_back(sc.cluster_sd > 0 ? N(rng) : 0.0);
  }

  std::uniform_real_distribution<double> U(sc.feature_lo, sc.feature_hi);
  for (std::size_t i = 0; i < sc.n_subjects; ++i) {
    Rng rng = make_stream(seed, i, 2);
    SurvivalRecord rec;
    rec.id = std::to_string(i + 1);
    for (std::size_t p = 0; p < sc.n_features; ++p) rec.features.push_back(U(rng));
    double group_effect = 0.0;
    if (!sc.group_effects.empty()) {
      std::uniform_int_distribution<std::size_t> G(0, sc.group_effects.size() - 1);
      const std::size_t g = G(rng);
      group_effect = sc.group_effects[g];
      rec.features.push_back(static_cast<double>(g));
    }
    double cluster_effect = 0.0;
    if (sc.n_clusters > 0) {
      std::uniform_int_distribution<std::size_t> C(0, sc.n_clusters - 1);
      const std::size_t c = C(rng);
      rec.cluster = "c" + std::to_string(c + 1);
      cluster_effect = out.cluster_effects[c];
    }
    Eigen::MatrixXd h(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(K));
    std::vector<std::function<double(double)>> rhos;
    for (std::size_t k = 0; k < K; ++k) {
      const auto& spec = sc.causes[k];
      const auto x = rec.features;
      rhos.emplace_back([spec, x, cluster_effect, group_effect](double t) {
        return spec(x, t, cluster_effect, group_effect);
      });
      for (std::size_t m = 0; m < M; ++m)
        h(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = detail::hazard_from_log(rhos[k](grid[m + 1]));
    }
    int cause;
    double time;
    if (K == 1) {
      const SampledTime s = sample_survival_time(rhos[0], grid, rng);
      time = s.time;
      cause = s.event ? 1 : 0;
    } else {
      const SampledCause s = sample_competing(rhos, grid, rng);
      time = s.time;
      cause = s.cause;
    }
    if (sc.censoring_rate > 0.0) {
      std::exponential_distribution<double> C(sc.censoring_rate);
      const double c = C(rng);
      if (c < time) {
        time = c;
        cause = 0;
      }
    }
    rec.exit = time;
    rec.cause = cause;
    out.data.records.push_back(std::move(rec));
    out.true_hazards.push_back(std::move(h));
  }
  return out;
}

}  // namespace pamm
