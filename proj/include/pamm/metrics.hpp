#pragma once

// Kaplan-Meier, IPCW Brier score and the integrated Brier score evaluated up
// to the first three quartiles of the observed test event times.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

#include "pamm/error.hpp"
#include "pamm/ped.hpp"

namespace pamm {

/// Right-continuous step function starting at 1 (or 0 for incidence curves).
struct StepFunction {
  std::vector<double> times;   // jump times, increasing
  std::vector<double> values;  // value from times[i] (inclusive) onwards
  double initial = 1.0;

  double operator()(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return initial;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
  }

  /// Left limit f(t-).
  double left_limit(double t) const {
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return initial;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
  }
};

/// Product-limit estimator. `is_event[i]` marks events; subjects leave the
/// risk set after their time, so censorings tied with events are still at risk.
inline StepFunction kaplan_meier(const std::vector<double>& times, const std::vector<char>& is_event) {
  if (times.size() != is_event.size()) throw InputError("kaplan_meier: length mismatch");
  std::vector<std::size_t> idx(times.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  StepFunction km;
  double s = 1.0;
  std::size_t at_risk = times.size();
  for (std::size_t k = 0; k < idx.size();) {
    const double t = times[idx[k]];
    std::size_t d = 0, leaving = 0;
    while (k < idx.size() && times[idx[k]] == t) {
      d += is_event[idx[k]] ? 1 : 0;
      ++leaving;
      ++k;
    }
    if (d > 0) {
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
      km.times.push_back(t);
      km.values.push_back(s);
    }
    at_risk -= leaving;
  }
  return km;
}

inline StepFunction kaplan_meier(const std::vector<SurvivalRecord>& records) {
  std::vector<double> t;
  std::vector<char> e;
  for (const auto& r : records) {
    t.push_back(r.exit);
    e.push_back(r.event() ? 1 : 0);
  }
  return kaplan_meier(t, e);
}

/// Censoring-distribution KM: censorings are the events.
inline StepFunction censoring_km(const std::vector<SurvivalRecord>& records) {
  std::vector<double> t;
  std::vector<char> e;
  for (const auto& r : records) {
    t.push_back(r.exit);
    e.push_back(r.event() ? 0 : 1);
  }
  return kaplan_meier(t, e);
}

/// Nonparametric (Aalen-Johansen) cumulative incidence of each cause,
/// the covariate-free baseline for competing risks. Entry k-1 holds cause k.
inline std::vector<StepFunction> aalen_johansen(const std::vector<SurvivalRecord>& records, int K) {
  std::vector<std::size_t> idx(records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return records[a].exit < records[b].exit; });
  std::vector<StepFunction> out(static_cast<std::size_t>(K));
  for (auto& f : out) f.initial = 0.0;
  std::vector<double> cif(static_cast<std::size_t>(K), 0.0);
  double s = 1.0;
  std::size_t at_risk = records.size();
  for (std::size_t k = 0; k < idx.size();) {
    const double t = records[idx[k]].exit;
    std::vector<std::size_t> d(static_cast<std::size_t>(K), 0);
    std::size_t d_all = 0, leaving = 0;
    while (k < idx.size() && records[idx[k]].exit == t) {
      const int c = records[idx[k]].cause;
      if (c > 0) {
        if (c > K) throw InputError("cause exceeds K");
        ++d[static_cast<std::size_t>(c - 1)];
        ++d_all;
      }
      ++leaving;
      ++k;
    }
    if (d_all > 0) {
      const double n = static_cast<double>(at_risk);
      for (std::size_t c = 0; c < d.size(); ++c) {
        cif[c] += s * static_cast<double>(d[c]) / n;
        out[c].times.push_back(t);
        out[c].values.push_back(cif[c]);
      }
      s *= 1.0 - static_cast<double>(d_all) / n;
    }
    at_risk -= leaving;
  }
  return out;
}

struct BrierResult {
  double value = 0.0;
  std::size_t dropped = 0;  // terms skipped because the censoring survival was 0
};

/// IPCW Brier score at tau. `predict(i, tau)` returns the predicted
/// probability of being free of the event of interest at tau (S_i(tau), or
/// 1 - CIF_k,i(tau) when `cause` > 0 selects cause k of competing risks).
/// With cause == 0 any event counts.
template <class Predictor>
BrierResult brier(const std::vector<SurvivalRecord>& records, Predictor&& predict, double tau,
                  const StepFunction& G, int cause = 0) {
  BrierResult out;
  if (records.empty()) throw InputError("brier: no records");
  double sum = 0.0;
  const double g_tau = G(tau);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    double target, weight;
    if (r.exit <= tau) {
      if (!r.event()) continue;  // censored before tau
      const double g = G.left_limit(r.exit);
      if (!(g > 0.0)) {
        ++out.dropped;
        continue;
      }
      const bool of_interest = cause == 0 || r.cause == cause;
      target = of_interest ? 0.0 : 1.0;
      weight = 1.0 / g;
    } else {
      if (!(g_tau > 0.0)) {
        ++out.dropped;
        continue;
      }
      target = 1.0;
      weight = 1.0 / g_tau;
    }
    const double p = predict(i, tau);
    sum += weight * (target - p) * (target - p);
  }
  out.value = sum / static_cast<double>(records.size());
  return out;
}

/// (1/q) * trapezoid integral of values over grid, grid[0] = 0, grid.back() = q.
inline double normalized_trapezoid(const std::vector<double>& grid, const std::vector<double>& values) {
  if (grid.size() != values.size() || grid.size() < 2) throw InputError("trapezoid needs >= 2 points");
  double acc = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) acc += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
  const double span = grid.back() - grid.front();
  if (!(span > 0.0)) throw InputError("trapezoid needs a positive span");
  return acc / span;
}

/// Integration grid on [0, q]: 0, q, every event time <= q, refined with a
/// uniform 50-point grid when fewer than 50 points result.
inline std::vector<double> ibs_grid(const std::vector<double>& event_times, double q) {
  std::vector<double> g{0.0, q};
  for (double t : event_times)
    if (t > 0.0 && t <= q) g.push_back(t);
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  if (g.size() < 50) {
    for (int i = 1; i < 49; ++i) g.push_back(q * i / 49.0);
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
  }
  return g;
}

struct EvalResult {
  std::array<double, 3> quartile_times{};
  std::array<double, 3> ibs{};          // integral to each quartile, normalized by it
  std::array<double, 3> brier_at{};     // pointwise Brier at each quartile
  std::vector<std::pair<double, double>> series;  // (tau, BS(tau))
  std::size_t n_events = 0;
  std::size_t dropped = 0;
  std::size_t extrapolated = 0;  // filled by callers whose predictors extrapolate
};

/// Lower empirical quartiles (order statistic ceil(q n)) of the uncensored times.
inline std::array<double, 3> event_quartiles(const std::vector<SurvivalRecord>& records) {
  std::vector<double> ev;
  for (const auto& r : records)
    if (r.event()) ev.push_back(r.exit);
  if (ev.size() < 4) throw DataError("IBS needs at least 4 uncensored test events");
  std::sort(ev.begin(), ev.end());
  std::array<double, 3> q{};
  const std::size_t n = ev.size();
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t idx = ((i + 1) * n + 3) / 4;  // ceil((i+1) n / 4)
    q[i] = ev[idx - 1];
  }
  return q;
}

template <class Predictor>
EvalResult ibs_at_quartiles(const std::vector<SurvivalRecord>& records, Predictor&& predict, int cause = 0) {
  EvalResult out;
  out.quartile_times = event_quartiles(records);
  std::vector<double> ev;
  for (const auto& r : records)
    if (r.event()) ev.push_back(r.exit);
  out.n_events = ev.size();
  const StepFunction G = censoring_km(records);

  std::map<double, double> memo;
  auto bs = [&](double tau) {
    auto it = memo.find(tau);
    if (it != memo.end()) return it->second;
    const BrierResult b = brier(records, predict, tau, G, cause);
    out.dropped += b.dropped;
    memo.emplace(tau, b.value);
    return b.value;
  };
  for (std::size_t i = 0; i < 3; ++i) {
    const double q = out.quartile_times[i];
    const std::vector<double> grid = ibs_grid(ev, q);
    std::vector<double> vals;
    vals.reserve(grid.size());
    for (double t : grid) vals.push_back(bs(t));
    out.ibs[i] = normalized_trapezoid(grid, vals);
    out.brier_at[i] = bs(q);
  }
  for (const auto& [t, v] : memo) out.series.emplace_back(t, v);
  return out;
}

}  // namespace pamm
