#pragma once

// IBS evaluation of fitted models and of the covariate-free baseline.

#include <vector>

#include "pamm/error.hpp"
#include "pamm/inference.hpp"
#include "pamm/metrics.hpp"
#include "pamm/model.hpp"
#include "pamm/ped.hpp"

namespace pamm {

/// Curves of every record under `model`.
inline std::vector<CifSet> predict_curves(const HazardModel& model, const SurvivalData& data,
                                          std::size_t* unseen_clusters = nullptr) {
  const HazardPrediction pred = predict_hazards(model, data);
  if (unseen_clusters) *unseen_clusters = pred.unseen_clusters;
  std::vector<CifSet> out;
  out.reserve(pred.hazards.size());
  for (const auto& h : pred.hazards) out.emplace_back(model.cuts, h);
  return out;
}

/// Probability of being free of the event of interest: all-cause survival
/// for cause 0, 1 - CIF_k otherwise.
inline double event_free(const CifSet& c, int cause, double t) {
  if (cause == 0 || c.n_causes() == 1) return c.survival(t);
  return 1.0 - c.cif(static_cast<std::size_t>(cause - 1), t);
}

inline void check_cause(int cause, int n_causes) {
  if (cause < 0) throw InputError("cause must be >= 0");
  if (cause > 0 && n_causes >= 2 && cause > n_causes) throw InputError("cause exceeds the model's K");
  if (cause > 1 && n_causes == 1) throw InputError("single-risk model cannot evaluate cause " + std::to_string(cause));
}

inline EvalResult evaluate_model(const HazardModel& model, const SurvivalData& test, int cause = 0) {
  check_cause(cause, model.n_causes);
  const auto curves = predict_curves(model, test);
  // a single-risk model scores every event
  const int scored = model.n_causes == 1 ? 0 : cause;
  EvalResult r = ibs_at_quartiles(
      test.records, [&](std::size_t i, double tau) { return event_free(curves[i], scored, tau); }, scored);
  for (const auto& [t, v] : r.series)
    if (t > model.cuts.horizon()) ++r.extrapolated;
  return r;
}

/// Kaplan-Meier (or Aalen-Johansen for a specific cause) fitted on
/// `reference` and scored on `test`.
inline EvalResult evaluate_km(const SurvivalData& reference, const SurvivalData& test, int cause = 0) {
  if (reference.records.empty()) throw InputError("no reference records for the baseline");
  const int K = std::max(reference.n_causes(), test.n_causes());
  if (cause > 0 && K >= 2) {
    const auto aj = aalen_johansen(reference.records, K);
    if (cause > K) throw InputError("cause exceeds K");
    const auto& f = aj[static_cast<std::size_t>(cause - 1)];
    return ibs_at_quartiles(test.records, [&](std::size_t, double tau) { return 1.0 - f(tau); }, cause);
  }
  const StepFunction km = kaplan_meier(reference.records);
  return ibs_at_quartiles(test.records, [&](std::size_t, double tau) { return km(tau); }, 0);
}

}  // namespace pamm
