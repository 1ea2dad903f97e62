#pragma once

// Piecewise exponential data (PED): one row per subject and interval at risk.
//
// Intervals are half-open, (kappa_{j-1}, kappa_j], j = 1..J. A record
// contributes rows for every interval overlapping (entry, exit]; the status
// flag is set only in the interval containing exit, and only for events.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "pamm/error.hpp"

namespace pamm {

struct SurvivalRecord {
  std::string id;
  double entry = 0.0;
  double exit = 0.0;
  int cause = 0;  // 0 = censored, k >= 1 = event of cause k
  std::vector<double> features;
  std::string cluster;  // empty when the dataset has no clusters

  bool event() const { return cause > 0; }
};

struct SurvivalData {
  std::vector<std::string> feature_names;
  std::vector<SurvivalRecord> records;
  bool has_clusters = false;

  /// Number of competing risks: the largest observed cause, at least 1.
  int n_causes() const {
    int k = 1;
    for (const auto& r : records) k = std::max(k, r.cause);
    return k;
  }
};

inline void validate(const SurvivalRecord& r) {
  if (!(r.entry >= 0.0) || !std::isfinite(r.entry))
    throw InputError("record '" + r.id + "': entry must be finite and >= 0");
  if (!(r.exit > r.entry) || !std::isfinite(r.exit))
    throw InputError("record '" + r.id + "': exit must be finite and > entry");
  if (r.cause < 0) throw InputError("record '" + r.id + "': negative cause");
}

class CutPoints {
 public:
  CutPoints() = default;

  explicit CutPoints(std::vector<double> kappa) : kappa_(std::move(kappa)) {
    if (kappa_.size() < 2) throw InputError("cut points need at least one interval");
    if (kappa_.front() != 0.0) throw InputError("first cut point must be 0");
    for (std::size_t j = 1; j < kappa_.size(); ++j) {
      if (!(kappa_[j] > kappa_[j - 1]) || !std::isfinite(kappa_[j]))
        throw InputError("cut points must be finite and strictly increasing");
    }
  }

  const std::vector<double>& values() const { return kappa_; }
  bool empty() const { return kappa_.empty(); }
  std::size_t n_intervals() const { return kappa_.empty() ? 0 : kappa_.size() - 1; }
  double operator[](std::size_t j) const { return kappa_[j]; }
  double horizon() const { return kappa_.back(); }
  double width(std::size_t j) const { return kappa_[j] - kappa_[j - 1]; }

  /// 1-based index j with t in (kappa_{j-1}, kappa_j]; t beyond the horizon
  /// maps to J, t <= 0 maps to 1.
  std::size_t interval_of(double t) const {
    auto it = std::lower_bound(kappa_.begin() + 1, kappa_.end(), t);
    if (it == kappa_.end()) return n_intervals();
    return static_cast<std::size_t>(it - kappa_.begin());
  }

  friend bool operator==(const CutPoints&, const CutPoints&) = default;

 private:
  std::vector<double> kappa_;
};

struct CutStrategy {
  enum class Kind { event_times, quantiles };
  Kind kind = Kind::quantiles;
  std::size_t n_intervals = 20;  // used by quantiles

  static CutStrategy event_times() { return {Kind::event_times, 0}; }
  static CutStrategy quantiles(std::size_t j) { return {Kind::quantiles, j}; }
};

namespace detail {

// Lower empirical quantiles of sorted values at levels i/J, i = 1..J:
// the order statistic at 1-based index ceil(i * n / J).
inline std::vector<double> lower_quantiles(const std::vector<double>& sorted, std::size_t J) {
  std::vector<double> out;
  const std::size_t n = sorted.size();
  for (std::size_t i = 1; i <= J; ++i) {
    std::size_t idx = (i * n + J - 1) / J;
    idx = std::clamp<std::size_t>(idx, 1, n);
    double v = sorted[idx - 1];
    if (out.empty() || v > out.back()) out.push_back(v);
  }
  return out;
}

}  // namespace detail

/// Cut points from the uncensored exit times. `max_intervals` = 0 disables
/// the cap; otherwise event-time cuts beyond the cap are thinned to quantiles.
inline CutPoints make_cut_points(const std::vector<SurvivalRecord>& records, CutStrategy strategy,
                                 std::size_t max_intervals = 0) {
  if (records.empty()) throw InputError("no records");
  std::vector<double> times;
  for (const auto& r : records)
    if (r.event()) times.push_back(r.exit);
  if (times.empty()) throw DataError("no events");
  std::sort(times.begin(), times.end());

  std::vector<double> inner;
  if (strategy.kind == CutStrategy::Kind::event_times) {
    inner = times;
    inner.erase(std::unique(inner.begin(), inner.end()), inner.end());
    if (max_intervals > 0 && inner.size() > max_intervals)
      inner = detail::lower_quantiles(times, max_intervals);
  } else {
    if (strategy.n_intervals == 0) throw InputError("quantile cut strategy needs J >= 1");
    std::size_t J = strategy.n_intervals;
    if (max_intervals > 0) J = std::min(J, max_intervals);
    inner = detail::lower_quantiles(times, J);
  }
  std::vector<double> kappa{0.0};
  kappa.insert(kappa.end(), inner.begin(), inner.end());
  return CutPoints(std::move(kappa));
}

struct PedRow {
  std::string id;
  std::size_t record = 0;    // index of the source record
  std::size_t interval = 0;  // 1-based j
  int status = 0;
  double exposure = 0.0;
  double offset = 0.0;  // log(exposure)
  double tj = 0.0;      // interval representative time, kappa_j
  int cause = 0;        // source cause, or k in expanded frames
  std::vector<double> features;
  std::string cluster;
};

struct PedFrame {
  std::vector<PedRow> rows;
  CutPoints cuts;
  int n_causes = 1;
  std::vector<std::string> feature_names;
  bool has_clusters = false;
  bool expanded = false;           // true after expand_competing_risks
  std::size_t n_records = 0;
  std::size_t admin_censored = 0;  // records censored at the last cut
};

/// Splits every record into its at-risk intervals. Exits beyond the last cut
/// are censored there and counted in `admin_censored`.
inline PedFrame to_ped(const SurvivalData& data, const CutPoints& cuts) {
  if (cuts.empty() || cuts.n_intervals() == 0) throw InputError("empty cut points");
  PedFrame out;
  out.cuts = cuts;
  out.n_causes = data.n_causes();
  out.feature_names = data.feature_names;
  out.has_clusters = data.has_clusters;
  out.n_records = data.records.size();

  const auto& kappa = cuts.values();
  const double horizon = cuts.horizon();
  for (std::size_t r = 0; r < data.records.size(); ++r) {
    const auto& rec = data.records[r];
    validate(rec);
    if (rec.features.size() != data.feature_names.size())
      throw InputError("record '" + rec.id + "': feature count does not match schema");
    double exit = rec.exit;
    int cause = rec.cause;
    if (exit > horizon) {
      exit = horizon;
      cause = 0;
      ++out.admin_censored;
      if (rec.entry >= horizon) continue;
    }
    // First interval with kappa_j > entry: an entry on a cut starts in the next interval.
    std::size_t a = static_cast<std::size_t>(
        std::upper_bound(kappa.begin() + 1, kappa.end(), rec.entry) - kappa.begin());
    std::size_t b = cuts.interval_of(exit);
    for (std::size_t j = a; j <= b; ++j) {
      PedRow row;
      row.id = rec.id;
      row.record = r;
      row.interval = j;
      row.exposure = std::min(exit, kappa[j]) - std::max(rec.entry, kappa[j - 1]);
      row.offset = std::log(row.exposure);
      row.tj = kappa[j];
      row.status = (j == b && cause > 0) ? 1 : 0;
      row.cause = cause;
      row.features = rec.features;
      row.cluster = rec.cluster;
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

/// Replicates every row once per cause with a cause-specific status.
inline PedFrame expand_competing_risks(const PedFrame& ped, int K) {
  if (K < 2) throw InputError("competing risks expansion needs K >= 2");
  if (ped.expanded) throw InputError("frame is already expanded");
  PedFrame out = ped;
  out.rows.clear();
  out.rows.reserve(ped.rows.size() * static_cast<std::size_t>(K));
  out.n_causes = K;
  out.expanded = true;
  for (const auto& row : ped.rows) {
    if (row.cause > K) throw InputError("row cause exceeds K");
    for (int k = 1; k <= K; ++k) {
      PedRow copy = row;
      copy.cause = k;
      copy.status = (row.status == 1 && row.cause == k) ? 1 : 0;
      out.rows.push_back(std::move(copy));
    }
  }
  return out;
}

/// Frame ready for modelling: expanded when the data has competing risks.
inline PedFrame prepare_ped(const SurvivalData& data, const CutPoints& cuts, int n_causes = 0) {
  PedFrame ped = to_ped(data, cuts);
  int K = std::max(n_causes, ped.n_causes);
  if (K >= 2) return expand_competing_risks(ped, K);
  return ped;
}

/// 0-based cause slot of a row in a model with K causes.
inline std::size_t cause_slot(const PedRow& row, int K) {
  return K == 1 ? 0 : static_cast<std::size_t>(row.cause - 1);
}

}  // namespace pamm
