#pragma once

// Survival curves and cumulative incidence functions from piecewise constant
// hazards. Integration is exact on the interval grid; queries past the last
// cut extrapolate the last interval's hazard.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "pamm/error.hpp"
#include "pamm/model.hpp"
#include "pamm/ped.hpp"
#include "pamm/trainer.hpp"

namespace pamm {

namespace detail {

// Locates t: returns 1-based interval j(t) (J+1 beyond the horizon, 0 for t <= 0).
inline std::size_t locate(const CutPoints& cuts, double t) {
  if (t <= 0.0) return 0;
  if (t > cuts.horizon()) return cuts.n_intervals() + 1;
  return cuts.interval_of(t);
}

}  // namespace detail

class SurvivalCurve {
 public:
  SurvivalCurve(CutPoints cuts, Eigen::VectorXd hazards) : cuts_(std::move(cuts)), h_(std::move(hazards)) {
    if (static_cast<std::size_t>(h_.size()) != cuts_.n_intervals())
      throw InputError("hazard vector length must equal the number of intervals");
    for (Eigen::Index j = 0; j < h_.size(); ++j)
      if (!(h_(j) >= 0.0) || !std::isfinite(h_(j))) throw InputError("hazards must be finite and >= 0");
    cum_.assign(cuts_.n_intervals() + 1, 0.0);
    for (std::size_t j = 1; j <= cuts_.n_intervals(); ++j)
      cum_[j] = cum_[j - 1] + h_(static_cast<Eigen::Index>(j - 1)) * cuts_.width(j);
  }

  double cumulative_hazard(double t) const {
    const std::size_t j = detail::locate(cuts_, t);
    if (j == 0) return 0.0;
    const std::size_t J = cuts_.n_intervals();
    if (j > J) return cum_[J] + h_(static_cast<Eigen::Index>(J - 1)) * (t - cuts_.horizon());
    return cum_[j - 1] + h_(static_cast<Eigen::Index>(j - 1)) * (t - cuts_[j - 1]);
  }

  double operator()(double t) const { return std::exp(-cumulative_hazard(t)); }
  bool extrapolates(double t) const { return t > cuts_.horizon(); }
  const CutPoints& cuts() const { return cuts_; }
  const Eigen::VectorXd& hazards() const { return h_; }

 private:
  CutPoints cuts_;
  Eigen::VectorXd h_;
  std::vector<double> cum_;
};

inline SurvivalCurve survival_curve(const Eigen::VectorXd& hazards, const CutPoints& cuts) {
  return SurvivalCurve(cuts, hazards);
}

/// Cause-specific CIFs from a J x K hazard matrix:
///   CIF_k(kappa_j) = sum_{m<=j} S(kappa_{m-1}) h_mk / h_m. (1 - exp(-h_m. Delta_m))
class CifSet {
 public:
  CifSet(CutPoints cuts, Eigen::MatrixXd hazards)
      : cuts_(std::move(cuts)), h_(std::move(hazards)), total_(cuts_, row_sums(h_, cuts_)) {
    const std::size_t J = cuts_.n_intervals();
    const auto K = h_.cols();
    at_cut_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(J + 1), K);
    for (std::size_t j = 1; j <= J; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      at_cut_.row(jj) = at_cut_.row(jj - 1) + increment(j, cuts_.width(j));
    }
  }

  std::size_t n_causes() const { return static_cast<std::size_t>(h_.cols()); }
  double survival(double t) const { return total_(t); }
  const SurvivalCurve& all_cause() const { return total_; }
  const CutPoints& cuts() const { return cuts_; }

  /// CIF of 0-based cause k at time t.
  double cif(std::size_t k, double t) const {
    if (k >= n_causes()) throw InputError("cause index exceeds K");
    const std::size_t j = detail::locate(cuts_, t);
    const auto kk = static_cast<Eigen::Index>(k);
    if (j == 0) return 0.0;
    const std::size_t J = cuts_.n_intervals();
    if (j > J) {
      // past the horizon: last interval's hazards continue
      return at_cut_(static_cast<Eigen::Index>(J), kk) + partial(J, t - cuts_.horizon(), cuts_.horizon())(kk);
    }
    return at_cut_(static_cast<Eigen::Index>(j - 1), kk) + increment(j, t - cuts_[j - 1])(kk);
  }

 private:
  static Eigen::VectorXd row_sums(const Eigen::MatrixXd& h, const CutPoints& cuts) {
    if (static_cast<std::size_t>(h.rows()) != cuts.n_intervals())
      throw InputError("hazard matrix needs one row per interval");
    if (h.cols() < 1) throw InputError("hazard matrix has no causes");
    if (!h.allFinite() || (h.array() < 0.0).any()) throw InputError("hazards must be finite and >= 0");
    return h.rowwise().sum();
  }

  // contribution of interval j over a duration `dt` starting at kappa_{j-1}
  Eigen::RowVectorXd increment(std::size_t j, double dt) const {
    return partial(j, dt, cuts_[j - 1]);
  }

  Eigen::RowVectorXd partial(std::size_t hazard_row, double dt, double start) const {
    const auto r = static_cast<Eigen::Index>(hazard_row - 1);
    const double hsum = h_.row(r).sum();
    if (hsum <= 0.0) return Eigen::RowVectorXd::Zero(h_.cols());
    const double s0 = total_(start);
    return h_.row(r) * (s0 * (-std::expm1(-hsum * dt)) / hsum);
  }

  CutPoints cuts_;
  Eigen::MatrixXd h_;
  SurvivalCurve total_;
  Eigen::MatrixXd at_cut_;
};

inline CifSet cifs(const Eigen::MatrixXd& cause_hazards, const CutPoints& cuts) {
  if (cause_hazards.cols() < 2) throw InputError("cifs needs K >= 2 hazard vectors");
  return CifSet(cuts, cause_hazards);
}

// ---------------------------------------------------------------------------
// Model predictions

/// Prediction frame: every record gets a row for every interval 1..J (and
/// every cause), with full interval exposure.
inline PedFrame prediction_frame(const HazardModel& model, const SurvivalData& data) {
  PedFrame f;
  f.cuts = model.cuts;
  f.n_causes = model.n_causes;
  f.feature_names = data.feature_names;
  f.has_clusters = data.has_clusters;
  f.expanded = model.n_causes >= 2;
  f.n_records = data.records.size();
  const std::size_t J = model.cuts.n_intervals();
  for (std::size_t r = 0; r < data.records.size(); ++r) {
    const auto& rec = data.records[r];
    if (rec.features.size() != data.feature_names.size())
      throw InputError("record '" + rec.id + "': feature count does not match schema");
    for (std::size_t j = 1; j <= J; ++j)
      for (int k = 1; k <= model.n_causes; ++k) {
        PedRow row;
        row.id = rec.id;
        row.record = r;
        row.interval = j;
        row.exposure = model.cuts.width(j);
        row.offset = 0.0;  // predictions want log h, not log mu
        row.tj = model.cuts[j];
        row.cause = k;
        row.features = rec.features;
        row.cluster = rec.cluster;
        f.rows.push_back(std::move(row));
      }
  }
  return f;
}

struct HazardPrediction {
  std::vector<Eigen::MatrixXd> hazards;  // per record, J x K
  std::size_t unseen_clusters = 0;       // rows whose cluster was not seen in training
};

inline HazardPrediction predict_hazards(const HazardModel& model, const SurvivalData& data) {
  const PedFrame f = prediction_frame(model, data);
  const Problem p = make_problem(model, f);
  const Eigen::VectorXd eta = detail::forward(p, model).eta;
  HazardPrediction out;
  out.unseen_clusters = p.design.unseen_clusters;
  const std::size_t J = model.cuts.n_intervals();
  const auto K = static_cast<std::size_t>(model.n_causes);
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    Eigen::MatrixXd h(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(K));
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = 0; k < K; ++k) {
        const double v = std::exp(eta(r++));
        if (!std::isfinite(v)) throw NumericalError("non-finite predicted hazard");
        h(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = v;
      }
    out.hazards.push_back(std::move(h));
  }
  return out;
}

/// Per-interval (J x K) hazards for a single record.
inline Eigen::MatrixXd predict_hazard(const HazardModel& model, const SurvivalRecord& record,
                                      const std::vector<std::string>& feature_names) {
  SurvivalData d;
  d.feature_names = feature_names;
  d.has_clusters = !record.cluster.empty();
  d.records.push_back(record);
  return predict_hazards(model, d).hazards.front();
}

/// Contribution f(x) of a smooth or smooth_time term for every cause.
inline Eigen::RowVectorXd smooth_effect(const HazardModel& model, std::size_t term, double x) {
  const auto& t = model.terms.at(term);
  if (t.kind != TermKind::smooth && t.kind != TermKind::smooth_time)
    throw InputError("term " + std::to_string(term) + " is not a univariate smooth");
  const Eigen::VectorXd b = evaluate_basis(t.basis, x);
  return b.transpose() *
         model.weights.block(static_cast<Eigen::Index>(t.offset), 0, b.size(), model.weights.cols());
}

/// Contribution f(x1, x2) of a tensor term for every cause.
inline Eigen::RowVectorXd tensor_effect(const HazardModel& model, std::size_t term, double x1, double x2) {
  const auto& t = model.terms.at(term);
  if (t.kind != TermKind::tensor) throw InputError("term " + std::to_string(term) + " is not a tensor smooth");
  const Eigen::VectorXd b = tensor_basis(t.basis, t.basis2, x1, x2);
  return b.transpose() *
         model.weights.block(static_cast<Eigen::Index>(t.offset), 0, b.size(), model.weights.cols());
}

}  // namespace pamm
