#pragma once

// Replicated simulation study: simulate, fit KM / PAMM / DeepPAMM, score all
// of them and the ground-truth oracle by IBS at the test event quartiles.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pamm/error.hpp"
#include "pamm/evaluate.hpp"
#include "pamm/io.hpp"
#include "pamm/simulator.hpp"
#include "pamm/trainer.hpp"

namespace pamm {

enum class Method { km, pamm, deep, optimal };
inline constexpr std::array<Method, 4> kMethods{Method::km, Method::pamm, Method::deep, Method::optimal};

inline std::string to_string(Method m) {
  switch (m) {
    case Method::km: return "KM";
    case Method::pamm: return "PAMM";
    case Method::deep: return "DeepPAMM";
    case Method::optimal: return "Optimal";
  }
  return "?";
}

inline TrainConfig default_benchmark_train_config() {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.max_epochs = 400;
  c.patience = 30;
  c.penalty.weight_decay = 1e-3;
  c.grid.psi_scales = {0.1, 1.0, 10.0, 100.0};
  c.grid.lambda_re = {0.1, 1.0, 10.0};
  return c;
}

struct BenchmarkConfig {
  std::string scenario = "cr_v1";
  std::size_t n_reps = 25;
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  bool pamm_only = false;  // skip the deep model
  std::size_t n_intervals = 20;
  int n_basis = 10;
  std::vector<int> widths{64, 32, 8};
  TrainConfig train = default_benchmark_train_config();
  double max_failure_fraction = 0.2;
};

struct ReplicateResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::array<double, 3> quartile_times{};
  std::array<std::array<double, 3>, 4> ibs{};  // [method][quartile]
  double re_correlation_pamm = std::numeric_limits<double>::quiet_NaN();
  double re_correlation_deep = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

struct BenchmarkResult {
  BenchmarkConfig config;
  std::vector<ReplicateResult> replicates;
  std::array<std::array<double, 3>, 4> mean{};
  std::array<std::array<double, 3>, 4> sd{};
  std::size_t n_failed = 0;

  bool has(Method m) const { return !(m == Method::deep && config.pamm_only); }
  bool quota_exceeded() const {
    return static_cast<double>(n_failed) > config.max_failure_fraction * static_cast<double>(replicates.size());
  }
};

/// Structured terms used for a simulated scenario. Latent group codes are
/// only visible to the deep head.
inline ModelSpec benchmark_model_spec(const Scenario& sc, const std::vector<std::string>& features, bool deep,
                                      std::size_t n_intervals, int n_basis, const std::vector<int>& widths) {
  ModelSpec s;
  s.cuts = CutStrategy::quantiles(n_intervals);
  s.n_causes = static_cast<int>(sc.causes.size());
  TermSpec icpt;
  icpt.kind = TermKind::intercept;
  s.terms.push_back(icpt);
  TermSpec time;
  time.kind = TermKind::smooth_time;
  time.n_basis = {n_basis};
  s.terms.push_back(time);
  std::vector<std::string> deep_inputs;
  for (const auto& f : features) {
    deep_inputs.push_back(f);
    if (f == "group") continue;
    TermSpec t;
    t.kind = TermKind::smooth;
    t.features = {f};
    t.n_basis = {n_basis};
    s.terms.push_back(t);
  }
  if (sc.n_clusters > 0) {
    TermSpec re;
    re.kind = TermKind::random_effect;
    s.terms.push_back(re);
  }
  if (deep) {
    DeepSpec d;
    d.inputs = deep_inputs;
    d.widths = widths;
    s.deep = d;
  }
  return s;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  if (a.size() != b.size() || a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Correlation between fitted cluster coefficients (cause 1) and the
/// simulated cluster effects.
inline double random_effect_correlation(const HazardModel& m, const ScenarioDataset& ds) {
  for (const auto& t : m.terms) {
    if (t.kind != TermKind::random_effect) continue;
    std::vector<double> est, truth;
    for (std::size_t v = 0; v < t.levels.size(); ++v) {
      const std::string& lv = t.levels[v];
      if (lv.size() < 2 || lv[0] != 'c') continue;
      const auto idx = static_cast<std::size_t>(std::stoul(lv.substr(1))) - 1;
      if (idx >= ds.cluster_effects.size()) continue;
      est.push_back(m.weights(static_cast<Eigen::Index>(t.offset + v), 0));
      truth.push_back(ds.cluster_effects[idx]);
    }
    return pearson(est, truth);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline std::uint64_t replicate_seed(std::uint64_t master, std::size_t index) {
  Rng r = make_stream(master, index, 7);
  return r();
}

inline ReplicateResult run_replicate(const BenchmarkConfig& cfg, std::size_t index) {
  ReplicateResult out;
  out.index = index;
  out.seed = replicate_seed(cfg.seed, index);
  Scenario sc = named_scenario(cfg.scenario);
  if (cfg.n_train > 0) sc.n_subjects = cfg.n_train + cfg.n_test;
  const std::size_t n_train = cfg.n_train > 0 ? cfg.n_train : sc.n_subjects / 2;
  const ScenarioDataset ds = make_scenario_dataset(sc, out.seed);

  SurvivalData train, test;
  train.feature_names = test.feature_names = ds.data.feature_names;
  train.has_clusters = test.has_clusters = ds.data.has_clusters;
  train.records.assign(ds.data.records.begin(), ds.data.records.begin() + static_cast<std::ptrdiff_t>(n_train));
  test.records.assign(ds.data.records.begin() + static_cast<std::ptrdiff_t>(n_train), ds.data.records.end());

  const int K = static_cast<int>(sc.causes.size());
  const int cause = K >= 2 ? 1 : 0;

  const auto copy_ibs = [&](Method m, const EvalResult& e) {
    out.ibs[static_cast<std::size_t>(m)] = e.ibs;
    out.quartile_times = e.quartile_times;
  };
  copy_ibs(Method::km, evaluate_km(train, test, cause));

  TrainConfig tc = cfg.train;
  tc.seed = out.seed;
  const ModelSpec pamm_spec = benchmark_model_spec(sc, ds.data.feature_names, false, cfg.n_intervals, cfg.n_basis, cfg.widths);
  const CutPoints cuts = make_cut_points(train.records, pamm_spec.cuts, pamm_spec.max_intervals);
  const PedFrame ped = prepare_ped(train, cuts, K);

  const TuneResult pamm = tune(ped, pamm_spec, tc);
  copy_ibs(Method::pamm, evaluate_model(pamm.best.model, test, cause));
  out.re_correlation_pamm = random_effect_correlation(pamm.best.model, ds);

  if (!cfg.pamm_only) {
    const ModelSpec deep_spec = benchmark_model_spec(sc, ds.data.feature_names, true, cfg.n_intervals, cfg.n_basis, cfg.widths);
    TrainConfig dc = tc;
    dc.penalty = pamm.config.penalty;  // PAMM pre-fit penalties as warm start
    dc.grid.psi_scales.clear();
    dc.grid.lambda_re.clear();
    const TuneResult deep = tune(ped, deep_spec, dc);
    copy_ibs(Method::deep, evaluate_model(deep.best.model, test, cause));
    out.re_correlation_deep = random_effect_correlation(deep.best.model, ds);
  }

  std::vector<CifSet> truth;
  for (std::size_t i = n_train; i < ds.data.records.size(); ++i) truth.push_back(ds.oracle(i));
  copy_ibs(Method::optimal,
           ibs_at_quartiles(
               test.records, [&](std::size_t i, double tau) { return event_free(truth[i], cause, tau); }, cause));
  out.ok = true;
  return out;
}

namespace detail {

inline void summarize(BenchmarkResult& r) {
  for (Method m : kMethods)
    for (std::size_t q = 0; q < 3; ++q) {
      const auto mi = static_cast<std::size_t>(m);
      double sum = 0, n = 0;
      for (const auto& rep : r.replicates)
        if (rep.ok) {
          sum += rep.ibs[mi][q];
          n += 1;
        }
      const double mean = n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
      double ss = 0;
      for (const auto& rep : r.replicates)
        if (rep.ok) ss += (rep.ibs[mi][q] - mean) * (rep.ibs[mi][q] - mean);
      r.mean[mi][q] = mean;
      r.sd[mi][q] = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    }
}

}  // namespace detail

/// Runs all replicates on a pool of `cfg.threads` workers. Results are
/// stored by replicate index, so the summary does not depend on scheduling.
inline BenchmarkResult run_benchmark(const BenchmarkConfig& cfg) {
  if (cfg.n_reps == 0) throw InputError("benchmark needs at least one replicate");
  named_scenario(cfg.scenario);
  BenchmarkResult res;
  res.config = cfg;
  res.replicates.resize(cfg.n_reps);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.n_reps; i = next++) {
      const auto start = std::chrono::steady_clock::now();
      try {
        res.replicates[i] = run_replicate(cfg, i);
      } catch (const std::exception& e) {
        res.replicates[i].index = i;
        res.replicates[i].seed = replicate_seed(cfg.seed, i);
        res.replicates[i].ok = false;
        res.replicates[i].error = e.what();
      }
      res.replicates[i].seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(cfg.threads, 1, cfg.n_reps);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& r : res.replicates) res.n_failed += r.ok ? 0 : 1;
  detail::summarize(res);
  return res;
}

/// Table of mean (sd) IBS x 100 with one row per quartile.
inline void write_summary_csv(std::ostream& out, const BenchmarkResult& r) {
  out << "quartile";
  for (Method m : kMethods)
    if (r.has(m)) out << ',' << to_string(m);
  out << '\n';
  const char* names[3] = {"Q25", "Q50", "Q75"};
  for (std::size_t q = 0; q < 3; ++q) {
    out << names[q];
    for (Method m : kMethods) {
      if (!r.has(m)) continue;
      const auto mi = static_cast<std::size_t>(m);
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(1) << 100.0 * r.mean[mi][q] << " (" << 100.0 * r.sd[mi][q] << ")";
      out << ',' << cell.str();
    }
    out << '\n';
  }
}

/// Full-precision per-replicate IBS values (not scaled).
inline void write_replicates_csv(std::ostream& out, const BenchmarkResult& r) {
  out << "replicate,seed,ok,method,q25,q50,q75,re_correlation\n";
  for (const auto& rep : r.replicates)
    for (Method m : kMethods) {
      if (!r.has(m)) continue;
      const auto mi = static_cast<std::size_t>(m);
      out << rep.index << ',' << rep.seed << ',' << (rep.ok ? 1 : 0) << ',' << to_string(m);
      for (std::size_t q = 0; q < 3; ++q) out << ',' << (rep.ok ? format_double(rep.ibs[mi][q]) : "");
      const double rc = m == Method::pamm ? rep.re_correlation_pamm
                        : m == Method::deep ? rep.re_correlation_deep
                                            : std::numeric_limits<double>::quiet_NaN();
      out << ',' << (std::isnan(rc) ? "" : format_double(rc)) << '\n';
    }
}

}  // namespace pamm
