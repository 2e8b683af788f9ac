// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "lidal/experiments.hpp"

using namespace lidal;
using namespace lidal::sim;

namespace {

// Small, fast experiment configuration shared by the behavioural tests.
ScenarioConfig quick_config(ScenarioId scenario, SystemKind system, Distinguisher disting,
                            std::vector<int> counts, int iterations) {
  ScenarioConfig cfg;
  cfg.scenario = scenario;
  cfg.system = system;
  cfg.distinguisher = disting;
  cfg.target_counts = std::move(counts);
  cfg.iterations = iterations;
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("counting error metric") {
  const std::vector<int> a1{2, 2}, e1{2, 2};
  CHECK(mape(a1, e1) == doctest::Approx(0.0));

  const std::vector<int> a2{4}, e2{3};
  CHECK(mape(a2, e2) == doctest::Approx(25.0));

  const std::vector<int> a3{2, 4}, e3{1, 5};
  CHECK(mape(a3, e3) == doctest::Approx(37.5));

  // Overcounting is charged the same as undercounting.
  const std::vector<int> a4{4}, e4{5};
  CHECK(mape(a4, e4) == doctest::Approx(25.0));

  const std::vector<int> shorter{1};
  CHECK_THROWS_AS(mape(a1, shorter), std::invalid_argument);
  CHECK_THROWS_AS(mape(std::vector<int>{}, std::vector<int>{}), std::invalid_argument);
  const std::vector<int> zero{0}, one{1};
  CHECK_THROWS_AS(mape(zero, one), std::invalid_argument);
}

TEST_CASE("localization error metric") {
  const std::vector<Vec2> truth{Vec2(1.0, 2.0), Vec2(3.0, 4.0)};
  CHECK(drmse(truth, truth) == doctest::Approx(0.0));

  // A constant offset is fully charged: no mean removal.
  std::vector<Vec2> offset;
  for (const auto& p : truth) offset.push_back(p + Vec2(0.3, 0.4));
  CHECK(drmse(truth, offset) == doctest::Approx(0.5));

  const std::vector<Vec2> a{Vec2(0.0, 0.0)}, e{Vec2(1.0, 0.0)};
  CHECK(drmse(a, e) == doctest::Approx(1.0));

  // Mixed per-axis errors: dx^2 averages 0.5, dy contributes nothing.
  const std::vector<Vec2> t2{Vec2(0.0, 0.0), Vec2(1.0, 1.0)};
  const std::vector<Vec2> e2{Vec2(1.0, 0.0), Vec2(1.0, 1.0)};
  CHECK(drmse(t2, e2) == doctest::Approx(std::sqrt(0.5)));

  CHECK_THROWS_AS(drmse(truth, a), std::invalid_argument);
  CHECK_THROWS_AS(drmse(std::vector<Vec2>{}, std::vector<Vec2>{}), std::invalid_argument);
}

TEST_CASE("greedy pairing") {
  // Well-separated points pair up one to one.
  const std::vector<Vec2> truth{Vec2(0.0, 0.0), Vec2(3.0, 0.0), Vec2(0.0, 5.0)};
  const std::vector<Vec2> est{Vec2(0.1, 0.0), Vec2(3.1, 0.0), Vec2(0.0, 5.2)};
  auto pairs = associate(truth, est);
  REQUIRE(pairs.size() == 3);
  std::sort(pairs.begin(), pairs.end());
  for (int i = 0; i < 3; ++i) {
    CHECK(pairs[static_cast<std::size_t>(i)].first == i);
    CHECK(pairs[static_cast<std::size_t>(i)].second == i);
  }

  // Surplus estimates stay unmatched.
  const std::vector<Vec2> est_extra{Vec2(0.1, 0.0), Vec2(9.0, 9.0)};
  const std::vector<Vec2> truth_one{Vec2(0.0, 0.0)};
  pairs = associate(truth_one, est_extra);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0] == std::pair<int, int>(0, 0));

  // Surplus truths stay unmatched (they count against MAPE, not DRMSE).
  pairs = associate(truth, est_extra);
  CHECK(pairs.size() == 2);

  // Greedy order: the globally closest pair is taken first even when a
  // different assignment would lower the total distance.
  const std::vector<Vec2> t2{Vec2(0.0, 0.0), Vec2(4.0, 0.0)};
  const std::vector<Vec2> e2{Vec2(3.0, 0.0), Vec2(5.0, 0.0)};
  pairs = associate(t2, e2);
  std::sort(pairs.begin(), pairs.end());
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0] == std::pair<int, int>(0, 1));  // leftover pairing
  CHECK(pairs[1] == std::pair<int, int>(1, 0));  // closest pair, taken first

  CHECK(associate({}, est).empty());
  CHECK(associate(truth, {}).empty());
}

TEST_CASE("empirical distribution") {
  auto cdf = empirical_cdf({1.0, 1.0, 1.0});
  REQUIRE(cdf.size() == 1);
  CHECK(cdf[0].value == doctest::Approx(1.0));
  CHECK(cdf[0].fraction == doctest::Approx(1.0));

  cdf = empirical_cdf({2.0, 1.0});  // unsorted input
  REQUIRE(cdf.size() == 2);
  CHECK(cdf[0].value == doctest::Approx(1.0));
  CHECK(cdf[0].fraction == doctest::Approx(0.5));
  CHECK(cdf[1].value == doctest::Approx(2.0));
  CHECK(cdf[1].fraction == doctest::Approx(1.0));

  cdf = empirical_cdf({5.0, 3.0, 3.0, 7.0});
  REQUIRE(cdf.size() == 3);
  CHECK(cdf[0].value == doctest::Approx(3.0));
  CHECK(cdf[0].fraction == doctest::Approx(0.5));
  CHECK(cdf.back().fraction == doctest::Approx(1.0));
  for (std::size_t i = 1; i < cdf.size(); ++i) {
    CHECK(cdf[i].value > cdf[i - 1].value);
    CHECK(cdf[i].fraction > cdf[i - 1].fraction);
  }

  CHECK_THROWS_AS(empirical_cdf({}), std::invalid_argument);
  CHECK_THROWS_AS(empirical_cdf({std::nan("")}), std::invalid_argument);
}

TEST_CASE("truth oracle plumbing") {
  // Replacing the localizer with the ground truth must zero both metrics:
  // anything else means the harness itself injects error.
  auto cfg = quick_config(ScenarioId::one, SystemKind::oracle, Distinguisher::ccm, {1, 4}, 3);
  cfg.warmup_snapshots = 1;
  cfg.measure_snapshots = 2;
  const MetricsReport rep = run_scenario(cfg);

  REQUIRE(rep.per_count.size() == 2);
  REQUIRE(rep.rows.size() == 6);
  for (const auto& row : rep.rows) {
    CHECK(row.estimated == row.actual);
    CHECK(row.count_error == doctest::Approx(0.0));
    REQUIRE(row.drmse_m.has_value());
    CHECK(*row.drmse_m == doctest::Approx(0.0));
  }
  CHECK(rep.mape_avg_pct == doctest::Approx(0.0));
  REQUIRE(rep.drmse_avg_m.has_value());
  CHECK(*rep.drmse_avg_m == doctest::Approx(0.0));
  REQUIRE(rep.mape_cdf.size() == 1);
  CHECK(rep.mape_cdf[0].value == doctest::Approx(0.0));
  CHECK(rep.mape_cdf[0].fraction == doctest::Approx(1.0));

  // The duty-cycled nomadic scenario keeps the invariant: pauses do not
  // confuse a truth reader.
  auto cfg3 = quick_config(ScenarioId::three, SystemKind::oracle, Distinguisher::ccm, {3}, 2);
  cfg3.warmup_snapshots = 1;
  cfg3.measure_snapshots = 3;
  cfg3.mobility_factor = 0.4;
  const MetricsReport rep3 = run_scenario(cfg3);
  CHECK(rep3.mape_avg_pct == doctest::Approx(0.0));
  REQUIRE(rep3.drmse_avg_m.has_value());
  CHECK(*rep3.drmse_avg_m == doctest::Approx(0.0));
}

TEST_CASE("scenario reproducibility and threading") {
  auto cfg = quick_config(ScenarioId::one, SystemKind::img, Distinguisher::ccm, {2}, 4);

  const MetricsReport a = run_scenario(cfg);
  const MetricsReport b = run_scenario(cfg);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].estimated == b.rows[i].estimated);
    CHECK(a.rows[i].count_error == b.rows[i].count_error);
    CHECK(a.rows[i].drmse_m.has_value() == b.rows[i].drmse_m.has_value());
    if (a.rows[i].drmse_m) CHECK(*a.rows[i].drmse_m == *b.rows[i].drmse_m);
  }
  CHECK(a.mape_avg_pct == b.mape_avg_pct);

  // The thread count partitions work but must not change any result.
  cfg.threads = 3;
  const MetricsReport c = run_scenario(cfg);
  REQUIRE(c.rows.size() == a.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(c.rows[i].estimated == a.rows[i].estimated);
    CHECK(c.rows[i].count_error == a.rows[i].count_error);
    if (a.rows[i].drmse_m) CHECK(*c.rows[i].drmse_m == *a.rows[i].drmse_m);
  }

  // A different seed re-rolls placements and noise.
  cfg.threads = 1;
  cfg.seed = 1234;
  const MetricsReport d = run_scenario(cfg);
  bool any_different = d.mape_avg_pct != a.mape_avg_pct;
  for (std::size_t i = 0; !any_different && i < a.rows.size(); ++i) {
    if (a.rows[i].drmse_m && d.rows[i].drmse_m && *a.rows[i].drmse_m != *d.rows[i].drmse_m)
      any_different = true;
  }
  CHECK(any_different);
}

TEST_CASE("pedestrian counting in the empty room") {
  // One walker, imaging system: pixel crossings every couple of snapshots
  // make single-target counting near-perfect.
  auto cfg = quick_config(ScenarioId::one, SystemKind::img, Distinguisher::ccm, {1}, 8);
  const MetricsReport rep = run_scenario(cfg);
  REQUIRE(rep.per_count.size() == 1);
  CHECK(rep.per_count[0].mape_pct <= 13.0);  // at most one missed iteration
  REQUIRE(rep.per_count[0].drmse_m.has_value());
  CHECK(*rep.per_count[0].drmse_m <= 0.40);  // pixel-grid quantization scale

  // Waveform system with the history-correlation gate.
  auto mcfg = quick_config(ScenarioId::one, SystemKind::mimo, Distinguisher::ccm, {1}, 8);
  const MetricsReport mrep = run_scenario(mcfg);
  CHECK(mrep.per_count[0].mape_pct <= 25.0);
  REQUIRE(mrep.per_count[0].drmse_m.has_value());
  CHECK(*mrep.per_count[0].drmse_m <= 0.5);

  // Two-frame subtraction gate also sees a moving target.
  auto bcfg = quick_config(ScenarioId::one, SystemKind::mimo, Distinguisher::bsm, {1}, 8);
  const MetricsReport brep = run_scenario(bcfg);
  CHECK(brep.per_count[0].mape_pct <= 25.0);
}

TEST_CASE("distinguisher family aliases") {
  // In the pixel domain the subtraction family is the history-subtraction
  // gate and the correlation family is the correlation gate, whichever
  // spelling the configuration uses.
  auto base = quick_config(ScenarioId::one, SystemKind::img, Distinguisher::bsm, {2}, 3);
  const MetricsReport bsm_rep = run_scenario(base);
  base.distinguisher = Distinguisher::psm;
  const MetricsReport psm_rep = run_scenario(base);
  REQUIRE(bsm_rep.rows.size() == psm_rep.rows.size());
  for (std::size_t i = 0; i < bsm_rep.rows.size(); ++i) {
    CHECK(bsm_rep.rows[i].estimated == psm_rep.rows[i].estimated);
    if (bsm_rep.rows[i].drmse_m)
      CHECK(*bsm_rep.rows[i].drmse_m == *psm_rep.rows[i].drmse_m);
  }

  base.distinguisher = Distinguisher::ccm;
  const MetricsReport ccm_rep = run_scenario(base);
  base.distinguisher = Distinguisher::pccm;
  const MetricsReport pccm_rep = run_scenario(base);
  REQUIRE(ccm_rep.rows.size() == pccm_rep.rows.size());
  for (std::size_t i = 0; i < ccm_rep.rows.size(); ++i)
    CHECK(ccm_rep.rows[i].estimated == pccm_rep.rows[i].estimated);
}

TEST_CASE("mobility factor sweep") {
  // Scenario 3: the less time targets spend moving, the more of them the
  // movement-gated detector misses.
  auto cfg = quick_config(ScenarioId::three, SystemKind::img, Distinguisher::ccm, {3}, 6);
  cfg.measure_snapshots = 5;

  std::vector<double> mape_by_mf;
  for (double mf : {0.15, 0.6, 1.0}) {
    cfg.mobility_factor = mf;
    mape_by_mf.push_back(run_scenario(cfg).mape_avg_pct);
  }
  CHECK(mape_by_mf[0] >= mape_by_mf[1] - 2.0);
  CHECK(mape_by_mf[1] >= mape_by_mf[2] - 2.0);
  // Nearly immobile targets are mostly invisible; fully mobile ones are not.
  CHECK(mape_by_mf[0] >= 40.0);
  CHECK(mape_by_mf[2] <= 25.0);
}

TEST_CASE("experiment configuration validation") {
  auto good = quick_config(ScenarioId::one, SystemKind::oracle, Distinguisher::ccm, {1}, 1);
  CHECK_NOTHROW(run_scenario(good));

  auto bad = good;
  bad.scenario = ScenarioId::case_study;
  CHECK_THROWS_AS(run_scenario(bad), std::invalid_argument);

  bad = good;
  bad.iterations = 0;
  CHECK_THROWS_AS(run_scenario(bad), std::invalid_argument);

  bad = good;
  bad.threads = 0;
  CHECK_THROWS_AS(run_scenario(bad), std::invalid_argument);

  bad = good;
  bad.target_counts = {0};
  CHECK_THROWS_AS(run_scenario(bad), std::invalid_argument);

  bad = good;
  bad.target_counts.clear();
  bad.max_targets = 0;
  CHECK_THROWS_AS(run_scenario(bad), std::invalid_argument);

  bad = good;
  bad.measure_snapshots = 0;
  CHECK_THROWS_AS(run_scenario(bad), std::invalid_argument);

  bad = good;
  bad.scenario = ScenarioId::three;
  bad.mobility_factor = 1.5;
  CHECK_THROWS_AS(run_scenario(bad), std::invalid_argument);

  // Case-study preconditions.
  auto cs = good;
  cs.scenario = ScenarioId::case_study;
  cs.lambda_per_h = 14.0;
  cs.gamma_per_h = 12.0;  // arrivals would outpace departures
  CHECK_THROWS_AS(run_case_study(cs), std::invalid_argument);

  cs.lambda_per_h = 12.0;
  cs.gamma_per_h = 14.0;
  cs.scenario = ScenarioId::one;
  CHECK_THROWS_AS(run_case_study(cs), std::invalid_argument);
}

TEST_CASE("occupancy case study") {
  ScenarioConfig cfg;
  cfg.scenario = ScenarioId::case_study;
  cfg.system = SystemKind::img;
  cfg.distinguisher = Distinguisher::ccm;
  cfg.seed = 7;
  // Short, busy window so the test stays fast: expected occupancy 2.
  cfg.observation_window_s = 240.0;
  cfg.buffer_snapshots = 300;
  cfg.lambda_per_h = 120.0;
  cfg.gamma_per_h = 180.0;
  cfg.pathway_mode = true;
  cfg.nomadic = false;

  const CaseStudyReport rep = run_case_study(cfg);
  CHECK(rep.snapshots == 1200);
  REQUIRE(rep.buffers.size() == 4);
  CHECK(rep.expected_occupancy == doctest::Approx(2.0));
  for (std::size_t b = 0; b < rep.buffers.size(); ++b) {
    CHECK(rep.buffers[b].buffer == static_cast<int>(b));
    CHECK(rep.buffers[b].t_end_s > rep.buffers[b].t_start_s);
    CHECK(rep.buffers[b].actual_mean >= 0.0);
    CHECK(rep.buffers[b].estimated >= 0);
  }
  CHECK(rep.buffers.back().t_end_s == doctest::Approx(240.0));

  // Visitors walked the room, so at least one buffer saw someone.
  double total_actual = 0.0;
  int total_estimated = 0;
  for (const auto& b : rep.buffers) {
    total_actual += b.actual_mean;
    total_estimated += b.estimated;
  }
  if (total_actual >= 1.0) CHECK(total_estimated > 0);
  if (!rep.mape_cdf.empty()) {
    CHECK(rep.mape_cdf.back().fraction == doctest::Approx(1.0));
    CHECK(rep.mape_pct >= 0.0);
  }

  // Bit-identical reruns.
  const CaseStudyReport rep2 = run_case_study(cfg);
  REQUIRE(rep2.buffers.size() == rep.buffers.size());
  for (std::size_t b = 0; b < rep.buffers.size(); ++b) {
    CHECK(rep2.buffers[b].estimated == rep.buffers[b].estimated);
    CHECK(rep2.buffers[b].actual_mean == doctest::Approx(rep.buffers[b].actual_mean));
  }
  CHECK(rep2.mape_pct == doctest::Approx(rep.mape_pct));

  // The obstacle-aware random-walk variant also runs end to end.
  cfg.pathway_mode = false;
  cfg.nomadic = true;
  cfg.observation_window_s = 120.0;
  cfg.buffer_snapshots = 300;
  const CaseStudyReport walk = run_case_study(cfg);
  CHECK(walk.snapshots == 600);
  CHECK(walk.buffers.size() == 2);
}
