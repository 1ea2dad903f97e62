#pragma once

// Log-hazard predictor: structured additive part B_ij w_k plus an optional
// multilayer head whose last hidden layer (the latent representation zeta)
// enters linearly through cause-specific weights gamma_k.
//
//   log h_ijk = B_ij w_k + sum_u zeta_ij,u gamma_k,u
//
// Without a deep head the model is a plain penalized piecewise exponential
// additive (mixed) model.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pamm/error.hpp"
#include "pamm/ped.hpp"
#include "pamm/spline.hpp"

namespace pamm {

enum class TermKind { intercept, linear, smooth, smooth_time, tensor, random_effect, interval };

inline std::string to_string(TermKind k) {
  switch (k) {
    case TermKind::intercept: return "intercept";
    case TermKind::linear: return "linear";
    case TermKind::smooth: return "smooth";
    case TermKind::smooth_time: return "smooth_time";
    case TermKind::tensor: return "tensor";
    case TermKind::random_effect: return "random_effect";
    case TermKind::interval: return "interval";
  }
  return "?";
}

inline TermKind term_kind_from_string(const std::string& s) {
  for (auto k : {TermKind::intercept, TermKind::linear, TermKind::smooth, TermKind::smooth_time,
                 TermKind::tensor, TermKind::random_effect, TermKind::interval})
    if (to_string(k) == s) return k;
  throw InputError("unknown term kind '" + s + "'");
}

enum class Activation { relu, tanh };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw InputError("unknown activation '" + s + "'");
}

// ---------------------------------------------------------------------------
// Unresolved model description (what the user asks for)

struct TermSpec {
  TermKind kind = TermKind::intercept;
  std::vector<std::string> features;
  BasisKind basis = BasisKind::bspline;
  std::vector<int> n_basis{10};  // one entry per margin
  int degree = 3;
  int penalty_order = 2;
  std::optional<double> lo, hi;    // first margin domain, data range if absent
  std::optional<double> lo2, hi2;  // second tensor margin
  double penalty = 1.0;            // relative smoothing strength
};

struct DeepSpec {
  std::vector<std::string> inputs;
  std::vector<int> widths{64, 32, 8};
  Activation activation = Activation::relu;
  bool time_input = false;    // non-proportional hazards: feed t_j to the head
  bool shared_trunk = true;   // one trunk with K output maps, or one trunk per cause
};

struct ModelSpec {
  std::vector<TermSpec> terms;
  std::optional<DeepSpec> deep;
  CutStrategy cuts = CutStrategy::quantiles(20);
  std::size_t max_intervals = 0;
  int n_causes = 0;  // 0: take from data
};

// ---------------------------------------------------------------------------
// Resolved model

struct StructuredTerm {
  TermKind kind = TermKind::intercept;
  std::vector<std::string> features;
  BasisSpec basis;
  BasisSpec basis2;
  double strength = 1.0;
  std::vector<std::string> levels;  // random effect levels seen at fit time
  std::size_t n_intervals = 0;      // interval term
  std::size_t offset = 0;           // first design column
  PenaltyMatrix penalty;            // empty for unpenalized terms

  std::size_t n_columns() const {
    switch (kind) {
      case TermKind::intercept:
      case TermKind::linear: return 1;
      case TermKind::smooth:
      case TermKind::smooth_time: return static_cast<std::size_t>(basis.n_basis);
      case TermKind::tensor:
        return static_cast<std::size_t>(basis.n_basis) * static_cast<std::size_t>(basis2.n_basis);
      case TermKind::random_effect: return levels.size();
      case TermKind::interval: return n_intervals;
    }
    return 0;
  }

  bool smooth_penalized() const {
    return kind == TermKind::smooth || kind == TermKind::smooth_time || kind == TermKind::tensor;
  }

  void build_penalty() {
    if (kind == TermKind::smooth || kind == TermKind::smooth_time)
      penalty = basis_penalty(basis);
    else if (kind == TermKind::tensor)
      penalty = tensor_penalty(basis_penalty(basis), basis_penalty(basis2));
  }
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

using Trunk = std::vector<DenseLayer>;

struct DeepHead {
  std::vector<std::string> inputs;
  std::vector<int> widths;
  Activation activation = Activation::relu;
  bool time_input = false;
  bool shared_trunk = true;
  Eigen::VectorXd center;  // input standardization
  Eigen::VectorXd scale;
  std::vector<Trunk> trunks;
  Eigen::MatrixXd gamma;  // U x K

  std::size_t input_dim() const { return inputs.size() + (time_input ? 1 : 0); }
  std::size_t latent_dim() const { return static_cast<std::size_t>(widths.back()); }
  std::size_t trunk_of(std::size_t cause) const { return shared_trunk ? 0 : cause; }
};

struct PenaltyStrengths {
  double psi_scale = 1.0;     // multiplies every smooth term's relative strength
  double lambda_re = 1.0;     // ridge on random effects
  double weight_decay = 1e-4; // on deep weights (not biases)
};

struct HazardModel {
  CutPoints cuts;
  int n_causes = 1;
  std::vector<std::string> feature_names;
  std::vector<StructuredTerm> terms;
  Eigen::MatrixXd weights;  // n_columns x K
  std::optional<DeepHead> deep;
  PenaltyStrengths penalty;

  std::size_t n_columns() const {
    std::size_t q = 0;
    for (const auto& t : terms) q += t.n_columns();
    return q;
  }
};

inline double activate(Activation a, double x) {
  return a == Activation::relu ? (x > 0.0 ? x : 0.0) : std::tanh(x);
}

// ---------------------------------------------------------------------------
// Resolution: fixes domains, levels and column offsets against training data.

namespace detail {

inline std::size_t feature_index(const std::vector<std::string>& names, const std::string& f) {
  auto it = std::find(names.begin(), names.end(), f);
  if (it == names.end()) throw InputError("unknown feature '" + f + "'");
  return static_cast<std::size_t>(it - names.begin());
}

inline std::pair<double, double> feature_range(const PedFrame& ped, std::size_t idx) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : ped.rows) {
    lo = std::min(lo, r.features[idx]);
    hi = std::max(hi, r.features[idx]);
  }
  if (!(lo < hi)) hi = lo + 1.0;
  return {lo, hi};
}

}  // namespace detail

inline void assign_offsets(HazardModel& model) {
  std::size_t off = 0;
  for (auto& t : model.terms) {
    t.offset = off;
    off += t.n_columns();
  }
}

/// Glorot-uniform hidden layers, zero biases, zero gamma.
inline void init_deep_weights(DeepHead& deep, int n_causes, std::mt19937_64& rng) {
  const std::size_t n_trunks = deep.shared_trunk ? 1 : static_cast<std::size_t>(n_causes);
  deep.trunks.assign(n_trunks, {});
  for (auto& trunk : deep.trunks) {
    std::size_t in = deep.input_dim();
    for (int w : deep.widths) {
      const auto out = static_cast<std::size_t>(w);
      DenseLayer layer;
      layer.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
      layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
      const double a = std::sqrt(6.0 / static_cast<double>(in + out));
      std::uniform_real_distribution<double> U(-a, a);
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = U(rng);
      trunk.push_back(std::move(layer));
      in = out;
    }
  }
  deep.gamma = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(deep.latent_dim()), n_causes);
}

/// Builds an initialized (untrained) model for the given training frame.
inline HazardModel initialize_model(const ModelSpec& spec, const PedFrame& ped, std::uint64_t seed) {
  HazardModel m;
  m.cuts = ped.cuts;
  m.n_causes = std::max(spec.n_causes, ped.n_causes);
  if (m.n_causes >= 2 && !ped.expanded)
    throw InputError("competing risks model needs an expanded PED frame");
  m.feature_names = ped.feature_names;
  if (spec.terms.empty() && !spec.deep) throw InputError("model has no terms");

  int n_re = 0;
  for (const auto& ts : spec.terms) {
    StructuredTerm t;
    t.kind = ts.kind;
    t.features = ts.features;
    t.strength = ts.penalty;
    if (!(ts.penalty >= 0.0)) throw InputError("penalty strength must be >= 0");
    auto need_features = [&](std::size_t n) {
      if (t.features.size() != n)
        throw InputError(to_string(t.kind) + " term needs " + std::to_string(n) + " feature(s)");
      for (const auto& f : t.features) detail::feature_index(m.feature_names, f);
    };
    auto margin = [&](std::size_t which, std::optional<double> lo, std::optional<double> hi) {
      const auto idx = detail::feature_index(m.feature_names, t.features[which]);
      auto [dlo, dhi] = detail::feature_range(ped, idx);
      const int nb = ts.n_basis.size() > which ? ts.n_basis[which] : ts.n_basis.front();
      const BasisKind kind = (t.kind == TermKind::tensor) ? BasisKind::bspline : ts.basis;
      return make_basis(kind, lo.value_or(dlo), hi.value_or(dhi), nb, ts.degree, ts.penalty_order);
    };
    switch (ts.kind) {
      case TermKind::intercept: need_features(0); break;
      case TermKind::linear: need_features(1); break;
      case TermKind::smooth:
        need_features(1);
        t.basis = margin(0, ts.lo, ts.hi);
        break;
      case TermKind::smooth_time:
        need_features(0);
        t.basis = make_basis(ts.basis, ts.lo.value_or(0.0), ts.hi.value_or(m.cuts.horizon()),
                             ts.n_basis.front(), ts.degree, ts.penalty_order);
        break;
      case TermKind::tensor:
        need_features(2);
        if (ts.basis != BasisKind::bspline)
          throw InputError("tensor product margins must be open B-splines");
        t.basis = margin(0, ts.lo, ts.hi);
        t.basis2 = margin(1, ts.lo2, ts.hi2);
        break;
      case TermKind::random_effect: {
        need_features(0);
        if (!ped.has_clusters) throw InputError("random effect term needs a cluster column");
        std::vector<std::string> lv;
        for (const auto& r : ped.rows) lv.push_back(r.cluster);
        std::sort(lv.begin(), lv.end());
        lv.erase(std::unique(lv.begin(), lv.end()), lv.end());
        t.levels = std::move(lv);
        if (++n_re > 1) throw InputError("at most one random effect term");
        break;
      }
      case TermKind::interval:
        need_features(0);
        t.n_intervals = m.cuts.n_intervals();
        break;
    }
    t.build_penalty();
    m.terms.push_back(std::move(t));
  }
  assign_offsets(m);
  m.weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.n_columns()), m.n_causes);

  if (spec.deep) {
    const auto& ds = *spec.deep;
    if (ds.widths.empty()) throw InputError("deep head needs at least one hidden layer");
    for (int w : ds.widths)
      if (w < 1) throw InputError("deep layer widths must be >= 1");
    if (ds.inputs.empty() && !ds.time_input) throw InputError("deep head has no inputs");
    DeepHead d;
    d.inputs = ds.inputs;
    d.widths = ds.widths;
    d.activation = ds.activation;
    d.time_input = ds.time_input;
    d.shared_trunk = ds.shared_trunk;
    std::vector<std::size_t> idx;
    for (const auto& f : d.inputs) idx.push_back(detail::feature_index(m.feature_names, f));
    // standardization over rows (row weighting keeps this cheap and stable)
    const auto dim = static_cast<Eigen::Index>(d.input_dim());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim), sq = Eigen::VectorXd::Zero(dim);
    double n = 0;
    for (const auto& r : ped.rows) {
      for (std::size_t c = 0; c < idx.size(); ++c) {
        sum(static_cast<Eigen::Index>(c)) += r.features[idx[c]];
        sq(static_cast<Eigen::Index>(c)) += r.features[idx[c]] * r.features[idx[c]];
      }
      if (d.time_input) {
        sum(dim - 1) += r.tj;
        sq(dim - 1) += r.tj * r.tj;
      }
      n += 1;
    }
    d.center = sum / std::max(n, 1.0);
    d.scale.resize(dim);
    for (Eigen::Index c = 0; c < dim; ++c) {
      const double var = sq(c) / std::max(n, 1.0) - d.center(c) * d.center(c);
      d.scale(c) = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    std::mt19937_64 rng(seed);
    init_deep_weights(d, m.n_causes, rng);
    m.deep = std::move(d);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Design

struct PenaltyBlock {
  std::size_t offset = 0;
  std::size_t size = 0;
  const PenaltyMatrix* matrix = nullptr;  // null for ridge blocks
  double strength = 0.0;                  // relative; scaled by psi_scale or lambda_re
  bool ridge = false;
};

struct Design {
  Eigen::MatrixXd X;       // rows x columns
  Eigen::VectorXd offset;  // log exposure
  std::vector<PenaltyBlock> penalties;
  std::size_t unseen_clusters = 0;
  std::size_t clamped = 0;
};

inline std::vector<PenaltyBlock> penalty_blocks(const HazardModel& model) {
  std::vector<PenaltyBlock> out;
  for (const auto& t : model.terms) {
    if (t.smooth_penalized())
      out.push_back({t.offset, t.n_columns(), &t.penalty, t.strength, false});
    else if (t.kind == TermKind::random_effect)
      out.push_back({t.offset, t.n_columns(), nullptr, 1.0, true});
  }
  return out;
}

namespace detail {

struct RowContext {
  std::vector<std::vector<std::size_t>> feature_idx;  // per term
  std::vector<std::map<std::string, std::size_t>> level_idx;
};

inline RowContext row_context(const HazardModel& model, const std::vector<std::string>& names) {
  RowContext ctx;
  for (const auto& t : model.terms) {
    std::vector<std::size_t> idx;
    for (const auto& f : t.features) idx.push_back(feature_index(names, f));
    ctx.feature_idx.push_back(std::move(idx));
    std::map<std::string, std::size_t> lv;
    for (std::size_t i = 0; i < t.levels.size(); ++i) lv[t.levels[i]] = i;
    ctx.level_idx.push_back(std::move(lv));
  }
  return ctx;
}

// Fills one design row; returns (unseen cluster, clamp count).
inline std::pair<bool, std::size_t> fill_row(const HazardModel& model, const RowContext& ctx,
                                             const PedRow& row, double* out) {
  bool unseen = false;
  std::size_t clamped = 0;
  for (std::size_t ti = 0; ti < model.terms.size(); ++ti) {
    const auto& t = model.terms[ti];
    double* dst = out + t.offset;
    const auto& fi = ctx.feature_idx[ti];
    switch (t.kind) {
      case TermKind::intercept: dst[0] = 1.0; break;
      case TermKind::linear: dst[0] = row.features[fi[0]]; break;
      case TermKind::smooth:
        clamped += evaluate_basis_into(t.basis, row.features[fi[0]],
                                       {dst, static_cast<std::size_t>(t.basis.n_basis)});
        break;
      case TermKind::smooth_time:
        clamped += evaluate_basis_into(t.basis, row.tj, {dst, static_cast<std::size_t>(t.basis.n_basis)});
        break;
      case TermKind::tensor: {
        const auto m1 = static_cast<std::size_t>(t.basis.n_basis);
        const auto m2 = static_cast<std::size_t>(t.basis2.n_basis);
        double b1[64], b2[64];
        if (m1 > 64 || m2 > 64) throw InputError("tensor margin too large");
        clamped += evaluate_basis_into(t.basis, row.features[fi[0]], {b1, m1});
        clamped += evaluate_basis_into(t.basis2, row.features[fi[1]], {b2, m2});
        for (std::size_t a = 0; a < m1; ++a)
          for (std::size_t b = 0; b < m2; ++b) dst[a * m2 + b] = b1[a] * b2[b];
        break;
      }
      case TermKind::random_effect: {
        std::fill(dst, dst + t.levels.size(), 0.0);
        auto it = ctx.level_idx[ti].find(row.cluster);
        if (it == ctx.level_idx[ti].end())
          unseen = true;  // prior mean: no contribution
        else
          dst[it->second] = 1.0;
        break;
      }
      case TermKind::interval:
        std::fill(dst, dst + t.n_intervals, 0.0);
        if (row.interval < 1 || row.interval > t.n_intervals)
          throw InputError("interval index outside the model's cut points");
        dst[row.interval - 1] = 1.0;
        break;
    }
  }
  return {unseen, clamped};
}

}  // namespace detail

/// Structured design: one row per PED row, offset log(t_ij), penalty blocks
/// aligned with the coefficient blocks of every cause.
inline Design build_design(const HazardModel& model, const PedFrame& ped) {
  Design d;
  const auto n = static_cast<Eigen::Index>(ped.rows.size());
  const auto q = static_cast<Eigen::Index>(model.n_columns());
  d.X = Eigen::MatrixXd::Zero(n, q);
  d.offset.resize(n);
  const auto ctx = detail::row_context(model, ped.feature_names);
  // row-major scratch keeps fill_row contiguous
  std::vector<double> buf(static_cast<std::size_t>(q));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = ped.rows[static_cast<std::size_t>(i)];
    std::fill(buf.begin(), buf.end(), 0.0);
    auto [unseen, clamped] = detail::fill_row(model, ctx, row, buf.data());
    d.unseen_clusters += unseen ? 1 : 0;
    d.clamped += clamped;
    for (Eigen::Index c = 0; c < q; ++c) d.X(i, c) = buf[static_cast<std::size_t>(c)];
    d.offset(i) = row.offset;
  }
  d.penalties = penalty_blocks(model);
  return d;
}

// ---------------------------------------------------------------------------
// Deep head

/// Activations of every layer for a batch of raw inputs (n x input_dim).
struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // per layer, n x width
  std::vector<Eigen::MatrixXd> post;  // post[0] = standardized input
};

inline Eigen::MatrixXd standardize(const DeepHead& deep, const Eigen::MatrixXd& raw) {
  if (static_cast<std::size_t>(raw.cols()) != deep.input_dim())
    throw InputError("deep head input has wrong number of columns");
  Eigen::MatrixXd z = raw.rowwise() - deep.center.transpose();
  return z.array().rowwise() / deep.scale.transpose().array();
}

inline ForwardCache forward_cached(const DeepHead& deep, const Eigen::MatrixXd& raw,
                                   std::size_t trunk) {
  ForwardCache c;
  c.post.push_back(standardize(deep, raw));
  for (const auto& layer : deep.trunks.at(trunk)) {
    Eigen::MatrixXd a = c.post.back() * layer.weight.transpose();
    a.rowwise() += layer.bias.transpose();
    Eigen::MatrixXd h = a.unaryExpr([&](double v) { return activate(deep.activation, v); });
    c.pre.push_back(std::move(a));
    c.post.push_back(std::move(h));
  }
  return c;
}

/// Latent representation (n x U) of a batch of raw deep inputs.
inline Eigen::MatrixXd forward_latent(const DeepHead& deep, const Eigen::MatrixXd& raw,
                                      std::size_t trunk = 0) {
  return forward_cached(deep, raw, trunk).post.back();
}

/// Deep inputs grouped into units: one unit per source record in PH mode
/// (latents shared by all of the record's intervals and causes), one per
/// (record, interval) when t_j is an input.
struct DeepUnits {
  Eigen::MatrixXd inputs;              // units x input_dim, raw scale
  std::vector<std::size_t> unit_of_row;
};

inline DeepUnits deep_units(const DeepHead& deep, const PedFrame& ped) {
  DeepUnits u;
  std::vector<std::size_t> idx;
  for (const auto& f : deep.inputs) idx.push_back(detail::feature_index(ped.feature_names, f));
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> key_to_unit;
  std::vector<const PedRow*> first_row;
  u.unit_of_row.reserve(ped.rows.size());
  for (const auto& row : ped.rows) {
    const auto key = std::make_pair(row.record, deep.time_input ? row.interval : std::size_t{0});
    auto [it, inserted] = key_to_unit.try_emplace(key, first_row.size());
    if (inserted) first_row.push_back(&row);
    u.unit_of_row.push_back(it->second);
  }
  u.inputs.resize(static_cast<Eigen::Index>(first_row.size()),
                  static_cast<Eigen::Index>(deep.input_dim()));
  for (std::size_t k = 0; k < first_row.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    for (std::size_t c = 0; c < idx.size(); ++c)
      u.inputs(r, static_cast<Eigen::Index>(c)) = first_row[k]->features[idx[c]];
    if (deep.time_input) u.inputs(r, u.inputs.cols() - 1) = first_row[k]->tj;
  }
  return u;
}

/// Row-level latent matrix (rows x U) for trunk `trunk`, broadcast from units.
inline Eigen::MatrixXd latent_rows(const DeepHead& deep, const PedFrame& ped, std::size_t trunk = 0) {
  const DeepUnits u = deep_units(deep, ped);
  const Eigen::MatrixXd lat = forward_latent(deep, u.inputs, trunk);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ped.rows.size()), lat.cols());
  for (std::size_t r = 0; r < u.unit_of_row.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = lat.row(static_cast<Eigen::Index>(u.unit_of_row[r]));
  return out;
}

/// log h for one design row and cause slot k (0-based). `deep_input` holds the
/// raw deep inputs for the row (ignored without a deep head).
inline double log_hazard(const HazardModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& design_row,
                         const Eigen::Ref<const Eigen::RowVectorXd>& deep_input, std::size_t k) {
  if (k >= static_cast<std::size_t>(model.n_causes)) throw InputError("cause index exceeds K");
  if (static_cast<std::size_t>(design_row.size()) != model.n_columns())
    throw InputError("design row has wrong length");
  double eta = design_row.dot(model.weights.col(static_cast<Eigen::Index>(k)));
  if (model.deep) {
    const auto& d = *model.deep;
    const Eigen::MatrixXd lat = forward_latent(d, Eigen::MatrixXd(deep_input), d.trunk_of(k));
    eta += lat.row(0).dot(d.gamma.col(static_cast<Eigen::Index>(k)));
  }
  return eta;
}

// ---------------------------------------------------------------------------
// Flat parameter vector: structured weights (column-major, cause blocks),
// then per trunk and layer the weight matrix (column-major) and bias, then gamma.

inline std::size_t n_structured_parameters(const HazardModel& m) {
  return static_cast<std::size_t>(m.weights.size());
}

inline std::size_t n_parameters(const HazardModel& m) {
  std::size_t n = n_structured_parameters(m);
  if (m.deep) {
    for (const auto& trunk : m.deep->trunks)
      for (const auto& l : trunk) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    n += static_cast<std::size_t>(m.deep->gamma.size());
  }
  return n;
}

namespace detail {

template <class Visit>
void visit_blocks(HazardModel& m, Visit&& visit) {
  visit(m.weights.data(), m.weights.size(), false);
  if (m.deep) {
    for (auto& trunk : m.deep->trunks)
      for (auto& l : trunk) {
        visit(l.weight.data(), l.weight.size(), true);
        visit(l.bias.data(), l.bias.size(), false);
      }
    visit(m.deep->gamma.data(), m.deep->gamma.size(), true);
  }
}

}  // namespace detail

inline Eigen::VectorXd get_parameters(const HazardModel& m) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(n_parameters(m)));
  Eigen::Index pos = 0;
  detail::visit_blocks(const_cast<HazardModel&>(m), [&](double* p, Eigen::Index n, bool) {
    out.segment(pos, n) = Eigen::Map<const Eigen::VectorXd>(p, n);
    pos += n;
  });
  return out;
}

inline void set_parameters(HazardModel& m, const Eigen::VectorXd& theta) {
  if (static_cast<std::size_t>(theta.size()) != n_parameters(m))
    throw InputError("parameter vector has wrong length");
  Eigen::Index pos = 0;
  detail::visit_blocks(m, [&](double* p, Eigen::Index n, bool) {
    Eigen::Map<Eigen::VectorXd>(p, n) = theta.segment(pos, n);
    pos += n;
  });
}

/// 1 for parameters under deep weight decay (hidden weights and gamma), else 0.
inline Eigen::VectorXd decay_mask(const HazardModel& m) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(n_parameters(m)));
  Eigen::Index pos = 0;
  detail::visit_blocks(const_cast<HazardModel&>(m), [&](double*, Eigen::Index n, bool decayed) {
    out.segment(pos, n).setConstant(decayed ? 1.0 : 0.0);
    pos += n;
  });
  return out;
}

}  // namespace pamm
