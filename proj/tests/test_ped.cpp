#include <gtest/gtest.h>

#include <map>
#include <random>

#include "pamm/error.hpp"
#include "pamm/ped.hpp"

using namespace pamm;

namespace {

SurvivalRecord rec(std::string id, double entry, double exit, int cause) {
  SurvivalRecord r;
  r.id = std::move(id);
  r.entry = entry;
  r.exit = exit;
  r.cause = cause;
  return r;
}

SurvivalData data_of(std::vector<SurvivalRecord> rs) {
  SurvivalData d;
  d.records = std::move(rs);
  return d;
}

}  // namespace

TEST(CutPoints, EventTimesAreUniqueSortedEventExits) {
  std::vector<SurvivalRecord> rs{rec("a", 0, 2, 1), rec("b", 0, 1, 1), rec("c", 0, 2, 2), rec("d", 0, 3, 1),
                                 rec("e", 0, 2.5, 0)};
  const auto k = make_cut_points(rs, CutStrategy::event_times());
  EXPECT_EQ(k.values(), (std::vector<double>{0, 1, 2, 3}));
}

TEST(CutPoints, DegenerateQuantilesDeduplicate) {
  const auto k = make_cut_points({rec("a", 0, 5, 1)}, CutStrategy::quantiles(2));
  EXPECT_EQ(k.values(), (std::vector<double>{0, 5}));
}

TEST(CutPoints, QuartilesOfOneToHundred) {
  std::vector<SurvivalRecord> rs;
  for (int i = 1; i <= 100; ++i) rs.push_back(rec(std::to_string(i), 0, i, 1));
  const auto k = make_cut_points(rs, CutStrategy::quantiles(4));
  EXPECT_EQ(k.values(), (std::vector<double>{0, 25, 50, 75, 100}));
}

TEST(CutPoints, QuantilesMatchBruteForceOrderStatistic) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.1, 10.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<SurvivalRecord> rs;
    std::vector<double> ev;
    const int n = 5 + rep;
    for (int i = 0; i < n; ++i) {
      const double t = U(rng);
      const int c = (i % 3 == 0) ? 0 : 1;
      rs.push_back(rec(std::to_string(i), 0, t, c));
      if (c) ev.push_back(t);
    }
    std::sort(ev.begin(), ev.end());
    const std::size_t J = 1 + static_cast<std::size_t>(rep % 7);
    std::vector<double> expect{0.0};
    for (std::size_t q = 1; q <= J; ++q) {
      const double level = static_cast<double>(q) / static_cast<double>(J);
      std::size_t idx = static_cast<std::size_t>(std::ceil(level * static_cast<double>(ev.size()) - 1e-12));
      idx = std::max<std::size_t>(idx, 1);
      if (ev[idx - 1] > expect.back()) expect.push_back(ev[idx - 1]);
    }
    EXPECT_EQ(make_cut_points(rs, CutStrategy::quantiles(J)).values(), expect);
  }
}

TEST(CutPoints, NoEventsIsDataError) {
  EXPECT_THROW(make_cut_points({rec("a", 0, 1, 0)}, CutStrategy::event_times()), DataError);
}

TEST(CutPoints, CapThinsEventTimes) {
  std::vector<SurvivalRecord> rs;
  for (int i = 1; i <= 100; ++i) rs.push_back(rec(std::to_string(i), 0, i, 1));
  const auto k = make_cut_points(rs, CutStrategy::event_times(), 4);
  EXPECT_EQ(k.values(), (std::vector<double>{0, 25, 50, 75, 100}));
}

TEST(CutPoints, RejectsInvalid) {
  EXPECT_THROW(CutPoints({0.0}), InputError);
  EXPECT_THROW(CutPoints({0.5, 1.0}), InputError);
  EXPECT_THROW(CutPoints({0.0, 1.0, 1.0}), InputError);
}

TEST(ToPed, SplitsEventAcrossIntervals) {
  const auto f = to_ped(data_of({rec("a", 0, 1.3, 1)}), CutPoints({0, 0.5, 1.0, 1.5}));
  ASSERT_EQ(f.rows.size(), 3u);
  EXPECT_EQ(f.rows[0].interval, 1u);
  EXPECT_EQ(f.rows[2].interval, 3u);
  EXPECT_EQ(f.rows[0].status, 0);
  EXPECT_EQ(f.rows[1].status, 0);
  EXPECT_EQ(f.rows[2].status, 1);
  EXPECT_NEAR(f.rows[0].exposure, 0.5, 1e-15);
  EXPECT_NEAR(f.rows[1].exposure, 0.5, 1e-15);
  EXPECT_NEAR(f.rows[2].exposure, 0.3, 1e-15);
  EXPECT_DOUBLE_EQ(f.rows[2].offset, std::log(f.rows[2].exposure));
  EXPECT_DOUBLE_EQ(f.rows[1].tj, 1.0);
}

TEST(ToPed, CensoredSingleInterval) {
  const auto f = to_ped(data_of({rec("a", 0, 0.4, 0)}), CutPoints({0, 0.5}));
  ASSERT_EQ(f.rows.size(), 1u);
  EXPECT_EQ(f.rows[0].status, 0);
  EXPECT_DOUBLE_EQ(f.rows[0].exposure, 0.4);
}

TEST(ToPed, LeftTruncationOverlap) {
  const auto f = to_ped(data_of({rec("a", 0.6, 1.3, 1)}), CutPoints({0, 0.5, 1.0, 1.5}));
  ASSERT_EQ(f.rows.size(), 2u);
  EXPECT_EQ(f.rows[0].interval, 2u);
  EXPECT_NEAR(f.rows[0].exposure, 0.4, 1e-15);
  EXPECT_EQ(f.rows[0].status, 0);
  EXPECT_EQ(f.rows[1].interval, 3u);
  EXPECT_NEAR(f.rows[1].exposure, 0.3, 1e-15);
  EXPECT_EQ(f.rows[1].status, 1);
}

TEST(ToPed, EntryOnCutStartsInNextInterval) {
  const auto f = to_ped(data_of({rec("a", 0.5, 1.2, 0)}), CutPoints({0, 0.5, 1.0, 1.5}));
  ASSERT_EQ(f.rows.size(), 2u);
  EXPECT_EQ(f.rows[0].interval, 2u);
  EXPECT_DOUBLE_EQ(f.rows[0].exposure, 0.5);
}

TEST(ToPed, EventOnCutBelongsToThatInterval) {
  const auto f = to_ped(data_of({rec("a", 0, 1.0, 1)}), CutPoints({0, 0.5, 1.0, 1.5}));
  ASSERT_EQ(f.rows.size(), 2u);
  EXPECT_EQ(f.rows.back().interval, 2u);
  EXPECT_EQ(f.rows.back().status, 1);
}

TEST(ToPed, ExitBeyondHorizonIsAdminCensored) {
  const auto f = to_ped(data_of({rec("a", 0, 3.0, 1), rec("b", 0, 0.7, 1)}), CutPoints({0, 1, 2}));
  EXPECT_EQ(f.admin_censored, 1u);
  int events = 0;
  double exposure_a = 0;
  for (const auto& r : f.rows) {
    events += r.status;
    if (r.id == "a") exposure_a += r.exposure;
  }
  EXPECT_EQ(events, 1);
  EXPECT_DOUBLE_EQ(exposure_a, 2.0);
}

TEST(ToPed, Errors) {
  EXPECT_THROW(to_ped(data_of({rec("a", 1, 1, 1)}), CutPoints({0, 1, 2})), InputError);
  EXPECT_THROW(to_ped(data_of({rec("a", 0, 1, 1)}), CutPoints()), InputError);
}

TEST(ToPed, ConservationProperties) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 5.0);
  const CutPoints cuts({0, 0.3, 0.9, 1.7, 2.2, 3.1, 4.0, 6.0});
  std::vector<SurvivalRecord> rs;
  for (int i = 0; i < 500; ++i) {
    double a = U(rng), b = U(rng);
    if (a > b) std::swap(a, b);
    if (i % 2 == 0) a = 0.0;
    if (b - a < 1e-6) b = a + 0.1;
    rs.push_back(rec("s" + std::to_string(i), a, b, i % 3));
  }
  const auto f = to_ped(data_of(rs), cuts);
  std::map<std::string, double> exposure;
  std::map<std::string, int> events;
  std::map<std::string, std::size_t> last_j;
  for (const auto& r : f.rows) {
    EXPECT_GT(r.exposure, 0.0);
    EXPECT_LE(r.exposure, cuts.width(r.interval) + 1e-15);
    if (last_j.count(r.id)) {
      EXPECT_EQ(r.interval, last_j[r.id] + 1);  // contiguous
    }
    last_j[r.id] = r.interval;
    exposure[r.id] += r.exposure;
    events[r.id] += r.status;
  }
  for (const auto& r : rs) {
    EXPECT_NEAR(exposure[r.id], r.exit - r.entry, 1e-12);
    EXPECT_EQ(events[r.id], r.event() ? 1 : 0);
    // round trip: last row's interval contains the exit time
    EXPECT_EQ(last_j[r.id], cuts.interval_of(r.exit));
  }
}

TEST(ExpandCompetingRisks, ReplicatesWithCauseSpecificStatus) {
  const auto f = to_ped(data_of({rec("a", 0, 0.4, 2)}), CutPoints({0, 0.5}));
  const auto e = expand_competing_risks(f, 2);
  ASSERT_EQ(e.rows.size(), 2u);
  EXPECT_EQ(e.rows[0].cause, 1);
  EXPECT_EQ(e.rows[0].status, 0);
  EXPECT_EQ(e.rows[1].cause, 2);
  EXPECT_EQ(e.rows[1].status, 1);
  EXPECT_DOUBLE_EQ(e.rows[0].offset, e.rows[1].offset);
}

TEST(ExpandCompetingRisks, CensoredRowAllZero) {
  const auto f = to_ped(data_of({rec("a", 0, 0.4, 0)}), CutPoints({0, 0.5}));
  const auto e = expand_competing_risks(f, 3);
  ASSERT_EQ(e.rows.size(), 3u);
  for (const auto& r : e.rows) EXPECT_EQ(r.status, 0);
}

TEST(ExpandCompetingRisks, RowCountAndEventsPreserved) {
  const auto f = to_ped(data_of({rec("a", 0, 1.3, 1), rec("b", 0, 0.9, 2)}), CutPoints({0, 0.5, 1.0, 1.5}));
  ASSERT_EQ(f.rows.size(), 5u);
  const auto e = expand_competing_risks(f, 2);
  EXPECT_EQ(e.rows.size(), 10u);
  int before = 0, after = 0;
  for (const auto& r : f.rows) before += r.status;
  for (const auto& r : e.rows) after += r.status;
  EXPECT_EQ(before, after);
  EXPECT_THROW(expand_competing_risks(f, 1), InputError);
  EXPECT_THROW(expand_competing_risks(e, 2), InputError);
}
