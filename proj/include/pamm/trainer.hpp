#pragma once

// Penalized Poisson likelihood on PED rows and its optimization.
//
//   NLL = sum_r  h_r t_r - delta_r log h_r
//   objective = NLL + sum_k sum_l psi_l theta_kl' P_l theta_kl + lambda_re sum b^2
//               + decay * ||deep weights||^2
//
// Structured-only models are fitted by damped Newton steps on each cause's
// coefficient block (exact penalized GLM solution). With a deep head the
// structured block is warm-started at that solution, all parameters are then
// trained jointly with Adam under early stopping, and the structured block is
// finally re-solved conditional on the selected deep part.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pamm/error.hpp"
#include "pamm/model.hpp"
#include "pamm/ped.hpp"

namespace pamm {

struct TuneGrid {
  std::vector<double> psi_scales;
  std::vector<double> lambda_re;
  std::vector<double> learning_rates;
  bool pamm_warm_start = true;  // deep models reuse the PAMM pre-fit's penalties
};

struct TrainConfig {
  double learning_rate = 1e-2;  // deep parameters
  std::optional<double> structured_learning_rate;
  std::size_t batch_size = 0;   // subjects per mini-batch; 0 = automatic
  int max_epochs = 500;
  int patience = 25;
  double validation_fraction = 0.2;
  PenaltyStrengths penalty;
  TuneGrid grid;
  std::uint64_t seed = 1;
  bool polish_structured = true;
  int newton_max_iter = 100;

  void validate() const {
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw InputError("validation fraction must lie in (0, 1)");
    if (!(penalty.psi_scale >= 0.0) || !(penalty.lambda_re >= 0.0) || !(penalty.weight_decay >= 0.0))
      throw InputError("penalty strengths must be >= 0");
    if (!(learning_rate >= 0.0)) throw InputError("learning rate must be >= 0");
    if (max_epochs < 0 || patience < 1) throw InputError("invalid epoch settings");
  }
};

// ---------------------------------------------------------------------------
// Problem: the design and bookkeeping for one PED frame under one model.

struct Problem {
  Design design;
  Eigen::VectorXd status;
  std::vector<std::size_t> cause;    // 0-based cause slot per row
  std::vector<std::size_t> subject;  // index into subject_ids per row
  std::vector<std::string> subject_ids;
  DeepUnits units;
  std::vector<std::vector<Eigen::Index>> rows_of_cause;

  Eigen::Index n_rows() const { return design.X.rows(); }
};

inline Problem make_problem(const HazardModel& model, const PedFrame& ped) {
  if (model.n_causes >= 2 && !ped.expanded)
    throw InputError("competing risks model needs an expanded PED frame");
  Problem p;
  p.design = build_design(model, ped);
  const auto n = ped.rows.size();
  p.status.resize(static_cast<Eigen::Index>(n));
  p.cause.resize(n);
  p.subject.resize(n);
  p.rows_of_cause.assign(static_cast<std::size_t>(model.n_causes), {});
  std::map<std::string, std::size_t> ids;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = ped.rows[r];
    p.status(static_cast<Eigen::Index>(r)) = row.status;
    const std::size_t k = cause_slot(row, model.n_causes);
    if (k >= static_cast<std::size_t>(model.n_causes)) throw InputError("row cause exceeds model K");
    p.cause[r] = k;
    p.rows_of_cause[k].push_back(static_cast<Eigen::Index>(r));
    auto [it, inserted] = ids.try_emplace(row.id, p.subject_ids.size());
    if (inserted) p.subject_ids.push_back(row.id);
    p.subject[r] = it->second;
  }
  if (model.deep) p.units = deep_units(*model.deep, ped);
  return p;
}

// ---------------------------------------------------------------------------
// Forward evaluation

namespace detail {

struct Forward {
  Eigen::VectorXd eta;  // log mu per row
  Eigen::VectorXd deep;  // deep contribution per row
  std::vector<ForwardCache> caches;  // per trunk, over units
};

inline Forward forward(const Problem& p, const HazardModel& m) {
  Forward f;
  const Eigen::Index n = p.n_rows();
  const Eigen::MatrixXd lin = p.design.X * m.weights;  // rows x K
  f.eta.resize(n);
  f.deep = Eigen::VectorXd::Zero(n);
  if (m.deep) {
    const auto& d = *m.deep;
    for (std::size_t t = 0; t < d.trunks.size(); ++t) f.caches.push_back(forward_cached(d, p.units.inputs, t));
    // units x K deep contributions
    Eigen::MatrixXd contrib(p.units.inputs.rows(), m.n_causes);
    for (Eigen::Index k = 0; k < m.n_causes; ++k)
      contrib.col(k) = f.caches[d.trunk_of(static_cast<std::size_t>(k))].post.back() * d.gamma.col(k);
    for (Eigen::Index r = 0; r < n; ++r)
      f.deep(r) = contrib(static_cast<Eigen::Index>(p.units.unit_of_row[static_cast<std::size_t>(r)]),
                          static_cast<Eigen::Index>(p.cause[static_cast<std::size_t>(r)]));
  }
  for (Eigen::Index r = 0; r < n; ++r)
    f.eta(r) = lin(r, static_cast<Eigen::Index>(p.cause[static_cast<std::size_t>(r)])) +
               p.design.offset(r) + f.deep(r);
  return f;
}

inline double nll_from_eta(const Problem& p, const Eigen::VectorXd& eta) {
  double nll = 0.0;
  for (Eigen::Index r = 0; r < eta.size(); ++r) {
    const double mu = std::exp(eta(r));
    if (!std::isfinite(mu) || !std::isfinite(eta(r)))
      throw NumericalError("non-finite hazard at PED row " + std::to_string(r));
    nll += mu - p.status(r) * (eta(r) - p.design.offset(r));
  }
  return nll;
}

}  // namespace detail

/// -sum (delta log h - h t) over all PED rows (and causes).
inline double poisson_nll(const Problem& p, const HazardModel& m) {
  return detail::nll_from_eta(p, detail::forward(p, m).eta);
}

inline double poisson_nll(const PedFrame& ped, const HazardModel& m) {
  return poisson_nll(make_problem(m, ped), m);
}

inline double penalty_value(const HazardModel& m, const std::vector<PenaltyBlock>& blocks,
                            const PenaltyStrengths& pen) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < m.weights.cols(); ++k) {
    for (const auto& b : blocks) {
      const Eigen::VectorXd theta =
          m.weights.col(k).segment(static_cast<Eigen::Index>(b.offset), static_cast<Eigen::Index>(b.size));
      if (b.ridge)
        total += pen.lambda_re * theta.squaredNorm();
      else
        total += pen.psi_scale * b.strength * b.matrix->quadratic(theta);
    }
  }
  if (m.deep && pen.weight_decay > 0.0) {
    const Eigen::VectorXd theta = get_parameters(m);
    const Eigen::VectorXd mask = decay_mask(m);
    total += pen.weight_decay * (theta.array().square() * mask.array()).sum();
  }
  return total;
}

inline double penalized_objective(const Problem& p, const HazardModel& m, const PenaltyStrengths& pen) {
  return poisson_nll(p, m) + penalty_value(m, p.design.penalties, pen);
}

inline double penalized_objective(const PedFrame& ped, const HazardModel& m, const TrainConfig& cfg) {
  return penalized_objective(make_problem(m, ped), m, cfg.penalty);
}

/// Poisson deviance 2 sum (mu - delta - delta log mu), the tuning criterion.
inline double poisson_deviance(const Problem& p, const HazardModel& m) {
  const Eigen::VectorXd eta = detail::forward(p, m).eta;
  double dev = 0.0;
  for (Eigen::Index r = 0; r < eta.size(); ++r) {
    const double mu = std::exp(eta(r));
    if (!std::isfinite(mu)) throw NumericalError("non-finite hazard at PED row " + std::to_string(r));
    dev += mu - p.status(r) - p.status(r) * eta(r);
  }
  return 2.0 * dev;
}

// ---------------------------------------------------------------------------
// Gradient

struct ObjectiveAndGradient {
  double objective = 0.0;
  Eigen::VectorXd gradient;
};

/// Exact gradient of the penalized objective w.r.t. the flat parameter
/// vector (layout as get_parameters). `nll_scale` multiplies the likelihood
/// part, used for mini-batches.
inline ObjectiveAndGradient objective_and_gradient(const Problem& p, const HazardModel& m,
                                                   const PenaltyStrengths& pen, double nll_scale = 1.0) {
  const auto f = detail::forward(p, m);
  ObjectiveAndGradient out;
  out.objective = nll_scale * detail::nll_from_eta(p, f.eta) + penalty_value(m, p.design.penalties, pen);

  const Eigen::Index n = p.n_rows();
  const Eigen::Index K = m.n_causes;
  // residual e_r = mu_r - delta_r placed in its cause column
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n, K);
  for (Eigen::Index r = 0; r < n; ++r)
    E(r, static_cast<Eigen::Index>(p.cause[static_cast<std::size_t>(r)])) =
        nll_scale * (std::exp(f.eta(r)) - p.status(r));

  out.gradient.resize(static_cast<Eigen::Index>(n_parameters(m)));
  Eigen::MatrixXd gW = p.design.X.transpose() * E;
  for (Eigen::Index k = 0; k < K; ++k) {
    for (const auto& b : p.design.penalties) {
      const auto off = static_cast<Eigen::Index>(b.offset), sz = static_cast<Eigen::Index>(b.size);
      const Eigen::VectorXd theta = m.weights.col(k).segment(off, sz);
      if (b.ridge)
        gW.col(k).segment(off, sz) += 2.0 * pen.lambda_re * theta;
      else
        gW.col(k).segment(off, sz) += 2.0 * pen.psi_scale * b.strength * (b.matrix->matrix * theta);
    }
  }
  out.gradient.head(gW.size()) = Eigen::Map<const Eigen::VectorXd>(gW.data(), gW.size());
  if (!m.deep) return out;

  const auto& d = *m.deep;
  const Eigen::Index n_units = p.units.inputs.rows();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_units, K);  // summed residuals per unit and cause
  for (Eigen::Index r = 0; r < n; ++r)
    A(static_cast<Eigen::Index>(p.units.unit_of_row[static_cast<std::size_t>(r)]),
      static_cast<Eigen::Index>(p.cause[static_cast<std::size_t>(r)])) +=
        E(r, static_cast<Eigen::Index>(p.cause[static_cast<std::size_t>(r)]));

  Eigen::Index pos = gW.size();
  Eigen::MatrixXd g_gamma(d.gamma.rows(), d.gamma.cols());
  for (Eigen::Index k = 0; k < K; ++k)
    g_gamma.col(k) = f.caches[d.trunk_of(static_cast<std::size_t>(k))].post.back().transpose() * A.col(k) +
                     2.0 * pen.weight_decay * d.gamma.col(k);

  for (std::size_t t = 0; t < d.trunks.size(); ++t) {
    const auto& cache = f.caches[t];
    const auto& trunk = d.trunks[t];
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n_units, d.gamma.rows());
    for (Eigen::Index k = 0; k < K; ++k)
      if (d.trunk_of(static_cast<std::size_t>(k)) == t) G += A.col(k) * d.gamma.col(k).transpose();
    std::vector<Eigen::MatrixXd> gw(trunk.size());
    std::vector<Eigen::VectorXd> gb(trunk.size());
    for (std::size_t l = trunk.size(); l-- > 0;) {
      Eigen::MatrixXd delta(G.rows(), G.cols());
      if (d.activation == Activation::relu)
        delta = G.array() * (cache.pre[l].array() > 0.0).cast<double>();
      else
        delta = G.array() * (1.0 - cache.post[l + 1].array().square());
      gw[l] = delta.transpose() * cache.post[l] + 2.0 * pen.weight_decay * trunk[l].weight;
      gb[l] = delta.colwise().sum().transpose();
      if (l > 0) G = delta * trunk[l].weight;
    }
    for (std::size_t l = 0; l < trunk.size(); ++l) {
      out.gradient.segment(pos, gw[l].size()) = Eigen::Map<const Eigen::VectorXd>(gw[l].data(), gw[l].size());
      pos += gw[l].size();
      out.gradient.segment(pos, gb[l].size()) = gb[l];
      pos += gb[l].size();
    }
  }
  out.gradient.segment(pos, g_gamma.size()) = Eigen::Map<const Eigen::VectorXd>(g_gamma.data(), g_gamma.size());
  return out;
}

inline Eigen::VectorXd gradient(const Problem& p, const HazardModel& m, const PenaltyStrengths& pen) {
  return objective_and_gradient(p, m, pen).gradient;
}

inline Eigen::VectorXd gradient(const PedFrame& ped, const HazardModel& m, const TrainConfig& cfg) {
  return gradient(make_problem(m, ped), m, cfg.penalty);
}

// ---------------------------------------------------------------------------
// Structured block: damped Newton with backtracking, deep part held fixed.

struct NewtonResult {
  int iterations = 0;
  bool converged = false;
};

inline NewtonResult newton_structured(const Problem& p, HazardModel& m, const PenaltyStrengths& pen,
                                      int max_iter = 100) {
  const auto f = detail::forward(p, m);
  const auto Q = static_cast<Eigen::Index>(m.n_columns());
  NewtonResult res;
  res.converged = true;
  if (Q == 0) return res;

  // Hessian of the quadratic penalty, identical for every cause
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(Q, Q);
  for (const auto& b : p.design.penalties) {
    const auto off = static_cast<Eigen::Index>(b.offset), sz = static_cast<Eigen::Index>(b.size);
    if (b.ridge)
      S.block(off, off, sz, sz).diagonal().array() += 2.0 * pen.lambda_re;
    else
      S.block(off, off, sz, sz) += 2.0 * pen.psi_scale * b.strength * b.matrix->matrix;
  }

  for (Eigen::Index k = 0; k < m.n_causes; ++k) {
    const auto& rows = p.rows_of_cause[static_cast<std::size_t>(k)];
    if (rows.empty()) continue;
    const Eigen::MatrixXd X = p.design.X(rows, Eigen::all);
    Eigen::VectorXd base(static_cast<Eigen::Index>(rows.size())), y(base.size()), off(base.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = rows[i];
      base(static_cast<Eigen::Index>(i)) = p.design.offset(r) + f.deep(r);
      y(static_cast<Eigen::Index>(i)) = p.status(r);
      off(static_cast<Eigen::Index>(i)) = p.design.offset(r);
    }
    auto objective = [&](const Eigen::VectorXd& w, Eigen::VectorXd* mu_out) {
      const Eigen::VectorXd eta = X * w + base;
      const Eigen::VectorXd mu = eta.array().exp();
      double v = mu.sum() - y.dot(eta - off) + 0.5 * w.dot(S * w);
      if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
      if (mu_out) *mu_out = mu;
      return v;
    };
    Eigen::VectorXd w = m.weights.col(k);
    Eigen::VectorXd mu;
    double obj = objective(w, &mu);
    if (!std::isfinite(obj)) throw NumericalError("non-finite objective at Newton start");
    bool converged = false;
    int it = 0;
    for (; it < max_iter; ++it) {
      const Eigen::VectorXd g = X.transpose() * (mu - y) + S * w;
      Eigen::MatrixXd H = S;
      H.selfadjointView<Eigen::Lower>().rankUpdate((X.array().colwise() * mu.array().sqrt()).matrix().transpose());
      H = H.selfadjointView<Eigen::Lower>();
      const double tau = 1e-10 * std::max(1.0, H.diagonal().maxCoeff());
      H.diagonal().array() += tau;
      const Eigen::VectorXd step = -H.ldlt().solve(g);
      const double decrement = -g.dot(step);
      if (!(decrement > 1e-13 * (1.0 + std::abs(obj)))) {
        converged = true;
        break;
      }
      double alpha = 1.0;
      Eigen::VectorXd mu_new;
      double obj_new = objective(w + step, &mu_new);
      while (obj_new > obj - 1e-4 * alpha * decrement && alpha > 1e-12) {
        alpha *= 0.5;
        obj_new = objective(w + alpha * step, &mu_new);
      }
      if (!(obj_new <= obj)) {
        converged = true;  // no further progress at machine precision
        break;
      }
      w += alpha * step;
      mu = std::move(mu_new);
      obj = obj_new;
    }
    res.iterations = std::max(res.iterations, it);
    res.converged = res.converged && converged;
    m.weights.col(k) = w;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Adam

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Eigen::VectorXd m1, m2;
  long t = 0;

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& g, const Eigen::VectorXd& lr) {
    if (m1.size() != theta.size()) {
      m1 = Eigen::VectorXd::Zero(theta.size());
      m2 = Eigen::VectorXd::Zero(theta.size());
    }
    ++t;
    m1 = beta1 * m1 + (1.0 - beta1) * g;
    m2 = beta2 * m2 + (1.0 - beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    theta.array() -= lr.array() * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
  }
};

// ---------------------------------------------------------------------------
// fit / tune

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // penalized objective on the training split
  double val_loss = 0.0;    // NLL on the validation split
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double train_objective = 0.0;
  double val_loss = 0.0;
  double val_deviance = 0.0;
  bool converged = false;
  int newton_iterations = 0;
  std::size_t n_train_subjects = 0, n_val_subjects = 0;
  PenaltyStrengths penalty;
  double learning_rate = 0.0;
  std::size_t unseen_clusters = 0;
};

struct FitResult {
  HazardModel model;
  TrainReport report;
};

/// Deterministic subject-level split: returns (train frame, validation frame).
inline std::pair<PedFrame, PedFrame> split_by_subject(const PedFrame& ped, double val_fraction,
                                                      std::uint64_t seed) {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& r : ped.rows)
    if (seen.insert(r.id).second) ids.push_back(r.id);
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(ids.size())));
  if (n_val == 0 || n_val >= ids.size()) throw DataError("empty validation or training split");
  std::set<std::string> val(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  PedFrame train = ped, valid = ped;
  train.rows.clear();
  valid.rows.clear();
  for (const auto& r : ped.rows) (val.count(r.id) ? valid : train).rows.push_back(r);
  return {std::move(train), std::move(valid)};
}

namespace detail {

inline void init_intercepts(const Problem& p, HazardModel& m) {
  for (const auto& t : m.terms) {
    if (t.kind != TermKind::intercept) continue;
    for (Eigen::Index k = 0; k < m.n_causes; ++k) {
      double d = 0.0, e = 0.0;
      for (auto r : p.rows_of_cause[static_cast<std::size_t>(k)]) {
        d += p.status(r);
        e += std::exp(p.design.offset(r));
      }
      if (d > 0 && e > 0) m.weights(static_cast<Eigen::Index>(t.offset), k) = std::log(d / e);
    }
  }
}

// Rows of the selected subjects as a standalone problem.
inline Problem slice(const Problem& p, const std::vector<char>& keep_subject, std::size_t K) {
  Problem s;
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < p.n_rows(); ++r)
    if (keep_subject[p.subject[static_cast<std::size_t>(r)]]) rows.push_back(r);
  s.design.X = p.design.X(rows, Eigen::all);
  s.design.offset = p.design.offset(rows);
  s.design.penalties = p.design.penalties;
  s.status = p.status(rows);
  s.subject_ids = p.subject_ids;
  s.rows_of_cause.assign(K, {});
  std::map<std::size_t, std::size_t> unit_map;
  std::vector<Eigen::Index> units;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<std::size_t>(rows[i]);
    s.cause.push_back(p.cause[r]);
    s.subject.push_back(p.subject[r]);
    s.rows_of_cause[p.cause[r]].push_back(static_cast<Eigen::Index>(i));
    if (p.units.inputs.rows() > 0) {
      auto [it, ins] = unit_map.try_emplace(p.units.unit_of_row[r], units.size());
      if (ins) units.push_back(static_cast<Eigen::Index>(p.units.unit_of_row[r]));
      s.units.unit_of_row.push_back(it->second);
    }
  }
  if (p.units.inputs.rows() > 0) s.units.inputs = p.units.inputs(units, Eigen::all);
  return s;
}

}  // namespace detail

inline FitResult fit(const PedFrame& ped, const ModelSpec& spec, const TrainConfig& cfg) {
  cfg.validate();
  FitResult out;
  HazardModel& model = out.model;
  model = initialize_model(spec, ped, cfg.seed);
  model.penalty = cfg.penalty;
  auto [train_ped, val_ped] = split_by_subject(ped, cfg.validation_fraction, cfg.seed);
  const Problem train = make_problem(model, train_ped);
  const Problem val = make_problem(model, val_ped);
  auto& rep = out.report;
  rep.n_train_subjects = train.subject_ids.size();
  rep.n_val_subjects = val.subject_ids.size();
  rep.penalty = cfg.penalty;
  rep.learning_rate = cfg.learning_rate;
  rep.unseen_clusters = val.design.unseen_clusters;

  detail::init_intercepts(train, model);
  auto nr = newton_structured(train, model, cfg.penalty, cfg.newton_max_iter);
  rep.newton_iterations = nr.iterations;
  rep.converged = nr.converged;

  if (model.deep) {
    const auto n_struct = static_cast<Eigen::Index>(n_structured_parameters(model));
    Eigen::VectorXd theta = get_parameters(model);
    Eigen::VectorXd lr(theta.size());
    lr.head(n_struct).setConstant(cfg.structured_learning_rate.value_or(cfg.learning_rate));
    lr.tail(theta.size() - n_struct).setConstant(cfg.learning_rate);

    const std::size_t n_subjects = train.subject_ids.size();
    std::size_t batch = cfg.batch_size;
    if (batch == 0) batch = train.n_rows() <= 65536 ? n_subjects : 4096;
    batch = std::clamp<std::size_t>(batch, 1, n_subjects);
    const bool full_batch = batch >= n_subjects;
    std::mt19937_64 rng(cfg.seed + 0x51ed2701ULL);
    std::vector<std::size_t> order(n_subjects);
    std::iota(order.begin(), order.end(), std::size_t{0});

    Adam adam;
    Eigen::VectorXd best = theta;
    double best_val = poisson_nll(val, model);
    rep.epochs.push_back({0, penalized_objective(train, model, cfg.penalty), best_val});
    int since_best = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      double train_loss = 0.0;
      if (full_batch) {
        auto og = objective_and_gradient(train, model, cfg.penalty);
        train_loss = og.objective;
        if (!std::isfinite(train_loss) || !og.gradient.allFinite())
          throw NumericalError("training diverged at epoch " + std::to_string(epoch));
        adam.step(theta, og.gradient, lr);
        set_parameters(model, theta);
      } else {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n_subjects; start += batch) {
          std::vector<char> keep(n_subjects, 0);
          const std::size_t stop = std::min(n_subjects, start + batch);
          for (std::size_t i = start; i < stop; ++i) keep[order[i]] = 1;
          const Problem b = detail::slice(train, keep, static_cast<std::size_t>(model.n_causes));
          const double scale = static_cast<double>(n_subjects) / static_cast<double>(stop - start);
          auto og = objective_and_gradient(b, model, cfg.penalty, scale);
          if (!std::isfinite(og.objective) || !og.gradient.allFinite())
            throw NumericalError("training diverged at epoch " + std::to_string(epoch));
          adam.step(theta, og.gradient, lr);
          set_parameters(model, theta);
        }
        train_loss = penalized_objective(train, model, cfg.penalty);
      }
      double v;
      try {
        v = poisson_nll(val, model);
      } catch (const NumericalError&) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch));
      }
      rep.epochs.push_back({epoch, train_loss, v});
      if (v < best_val) {
        best_val = v;
        best = theta;
        rep.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        rep.converged = true;
        break;
      }
    }
    set_parameters(model, best);
    if (cfg.polish_structured) {
      auto pr = newton_structured(train, model, cfg.penalty, cfg.newton_max_iter);
      rep.newton_iterations += pr.iterations;
    }
  }
  rep.train_objective = penalized_objective(train, model, cfg.penalty);
  rep.val_loss = poisson_nll(val, model);
  rep.val_deviance = poisson_deviance(val, model);
  return out;
}

struct TuneResult {
  FitResult best;
  TrainConfig config;  // winning configuration
  struct Entry {
    double psi_scale, lambda_re, learning_rate, val_deviance;
    bool diverged;
  };
  std::vector<Entry> evaluated;
  std::optional<FitResult> pamm_prefit;
};

namespace detail {

inline std::vector<double> axis(const std::vector<double>& grid, double fallback) {
  std::vector<double> v = grid.empty() ? std::vector<double>{fallback} : grid;
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline bool has_kind(const ModelSpec& s, bool smooth) {
  for (const auto& t : s.terms) {
    if (smooth && (t.kind == TermKind::smooth || t.kind == TermKind::smooth_time || t.kind == TermKind::tensor))
      return true;
    if (!smooth && t.kind == TermKind::random_effect) return true;
  }
  return false;
}

}  // namespace detail

/// Grid search over (psi scale, lambda_re, learning rate) by validation
/// deviance. Deep models first tune the structured-only model and keep its
/// penalties as warm start (structured weights are re-solved from them).
inline TuneResult tune(const PedFrame& ped, const ModelSpec& spec, const TrainConfig& cfg) {
  cfg.validate();
  TuneResult out;
  std::vector<double> psi = detail::axis(cfg.grid.psi_scales, cfg.penalty.psi_scale);
  std::vector<double> lam = detail::axis(cfg.grid.lambda_re, cfg.penalty.lambda_re);
  std::vector<double> lrs = detail::axis(cfg.grid.learning_rates, cfg.learning_rate);
  if (!detail::has_kind(spec, true)) psi = {cfg.penalty.psi_scale};
  if (!detail::has_kind(spec, false)) lam = {cfg.penalty.lambda_re};
  if (!spec.deep) lrs = {cfg.learning_rate};

  if (spec.deep && cfg.grid.pamm_warm_start && (psi.size() > 1 || lam.size() > 1)) {
    ModelSpec pamm = spec;
    pamm.deep.reset();
    TuneResult pre = tune(ped, pamm, cfg);
    psi = {pre.config.penalty.psi_scale};
    lam = {pre.config.penalty.lambda_re};
    out.pamm_prefit = std::move(pre.best);
  }

  bool have = false;
  double best_dev = std::numeric_limits<double>::infinity();
  for (double p : psi)
    for (double l : lam)
      for (double lr : lrs) {
        TrainConfig c = cfg;
        c.penalty.psi_scale = p;
        c.penalty.lambda_re = l;
        c.learning_rate = lr;
        try {
          FitResult r = fit(ped, spec, c);
          const double dev = r.report.val_deviance;
          out.evaluated.push_back({p, l, lr, dev, false});
          if (!have || dev < best_dev) {
            have = true;
            best_dev = dev;
            out.best = std::move(r);
            out.config = c;
          }
        } catch (const NumericalError&) {
          out.evaluated.push_back({p, l, lr, std::numeric_limits<double>::quiet_NaN(), true});
        }
      }
  if (!have) throw NumericalError("every tuning configuration diverged");
  return out;
}

}  // namespace pamm
