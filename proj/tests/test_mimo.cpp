// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "doctest.h"
#include "lidal/env.hpp"
#include "lidal/mimo.hpp"
#include "lidal/rng.hpp"
#include "lidal/scan.hpp"

using namespace lidal;
using namespace lidal::mimo;

namespace {

env::Environment standard_room() { return env::build_environment({}); }

env::Environment empty_room() {
  env::EnvironmentConfig cfg;
  cfg.furniture_override = std::vector<env::Cuboid>{};
  return env::build_environment(cfg);
}

// Link-budget arithmetic typed out independently of the channel module:
// Lambertian emitter lobe onto a horizontal patch, diffuse re-emission,
// concentrator and filter at the receiver.
double closed_form_power(double r_tx, double r_rx, double rho) {
  const double n = 0.5, pt = 18.0, ar = 20e-6, tf = 1.0, da = 0.29, u = 1.3;
  const double gc = 1.7 * 1.7 / std::pow(std::sin(deg2rad(43.8)), 2.0);
  const double r1 = std::hypot(r_tx, u);
  const double r2 = std::hypot(r_rx, u);
  const double lobe = std::pow(u / r1, n) * (u / r1);            // emitter cos^n x patch cos
  const double reemit = (u / r2) * (u / r2);                     // patch cos x receiver cos
  return (n + 1.0) * 2.0 * pt * da * ar * tf * gc * rho * lobe * reemit /
         (4.0 * kPi * kPi * r1 * r1 * r2 * r2);
}

double fix_error(const ScanCycleResult& out, const Vec2& truth) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : out.positions) best = std::min(best, (p.position - truth).norm());
  return best;
}

}  // namespace

TEST_CASE("trip-time ranging") {
  SUBCASE("round-trip halves the trip distance") {
    CHECK(near_rel(range_monostatic(20e-9), 2.99792458, 1e-12));
    CHECK(range_monostatic(0.0) == 0.0);
    CHECK(near_rel(range_monostatic(2.0 * 1.3 / kSpeedOfLight), 1.3, 1e-12));
    CHECK_THROWS_AS(range_monostatic(-1e-12), std::invalid_argument);
  }

  SUBCASE("anchor leg subtracts the resolved leg") {
    const double t = (2.0 + 3.0) / kSpeedOfLight;
    CHECK(near_rel(range_bistatic(t, 2.0), 3.0, 1e-12));
    CHECK(range_bistatic(2.0 / kSpeedOfLight, 2.0) == 0.0);
    CHECK_THROWS_AS(range_bistatic(1.9 / kSpeedOfLight, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(range_bistatic(-1e-12, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(range_bistatic(1e-9, -1.0), std::invalid_argument);
  }

  SUBCASE("slant to floor projection") {
    CHECK(near_rel(horizontal_range(5.0, 3.0), 4.0, 1e-12));
    CHECK(horizontal_range(1.0, 2.0) == 0.0);  // slant shorter than the drop
    CHECK(near_rel(horizontal_range(2.5, 0.0), 2.5, 1e-12));
    CHECK_THROWS_AS(horizontal_range(-0.1, 1.0), std::invalid_argument);
  }
}

TEST_CASE("least-squares trilateration") {
  SUBCASE("exact ranges recover the position") {
    const std::vector<Vec2> anchors{{0.0, 0.0}, {4.0, 0.0}, {0.0, 8.0}};
    const std::vector<double> ranges{std::sqrt(2.0), std::sqrt(10.0), std::sqrt(50.0)};
    const auto est = least_squares_position(anchors, ranges);
    CHECK(std::abs(est.position.x() - 1.0) < 1e-9);
    CHECK(std::abs(est.position.y() - 1.0) < 1e-9);
    CHECK(est.anchors_used == 3);
    CHECK(est.residual_m < 1e-9);
  }

  SUBCASE("exactness at an interior point") {
    const std::vector<Vec2> anchors{{1.0, 1.0}, {3.0, 1.0}, {1.0, 3.0}};
    const Vec2 truth(1.7, 2.2);
    std::vector<double> ranges;
    for (const auto& a : anchors) ranges.push_back((a - truth).norm());
    const auto est = least_squares_position(anchors, ranges);
    CHECK((est.position - truth).norm() < 1e-9);
  }

  SUBCASE("degenerate geometry and bad arity throw") {
    CHECK_THROWS_AS(least_squares_position({{0.0, 0.0}, {2.0, 0.0}, {4.0, 0.0}},
                                           {1.0, 1.0, 1.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(least_squares_position({{0.0, 0.0}, {2.0, 0.0}}, {1.0, 1.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(least_squares_position({{0.0, 0.0}, {2.0, 0.0}, {0.0, 2.0}}, {1.0, 1.0}),
                    std::invalid_argument);
  }

  SUBCASE("bounded error under range perturbation") {
    const std::vector<Vec2> anchors{{1.0, 1.0}, {3.0, 1.0}, {1.0, 3.0}};
    auto rng = RandomStream::derive(404, 1);
    double sum = 0.0, worst = 0.0;
    const int trials = 500;
    for (int t = 0; t < trials; ++t) {
      const Vec2 truth(rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0));
      std::vector<double> ranges;
      for (const auto& a : anchors)
        ranges.push_back(std::max(0.0, (a - truth).norm() + rng.uniform(-0.15, 0.15)));
      const auto est = least_squares_position(anchors, ranges);
      const double err = (est.position - truth).norm();
      sum += err;
      worst = std::max(worst, err);
    }
    CHECK(sum / trials < 0.3);
    CHECK(worst < 1.2);
  }
}

TEST_CASE("duplicate sighting elimination") {
  auto at = [](double x, double y, double resid) {
    PositionEstimate e;
    e.position = Vec2(x, y);
    e.residual_m = resid;
    return e;
  };

  SUBCASE("keeps the better fix of a close pair") {
    auto kept = eliminate_duplicates({at(1.0, 1.0, 0.3), at(1.1, 1.0, 0.1)}, 0.3);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].residual_m == 0.1);
  }

  SUBCASE("distant fixes both survive") {
    auto kept = eliminate_duplicates({at(1.0, 1.0, 0.3), at(1.4, 1.0, 0.1)}, 0.3);
    CHECK(kept.size() == 2);
  }

  SUBCASE("chains collapse toward the best fix only") {
    // B is near A, C is near B but not near A: only B is a duplicate.
    auto kept = eliminate_duplicates(
        {at(0.0, 0.0, 0.1), at(0.25, 0.0, 0.2), at(0.5, 0.0, 0.3)}, 0.3);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].position.x() == 0.0);
    CHECK(kept[1].position.x() == 0.5);
  }

  SUBCASE("idempotent") {
    auto once = eliminate_duplicates(
        {at(1.0, 1.0, 0.3), at(1.1, 1.0, 0.1), at(3.0, 3.0, 0.2)}, 0.3);
    auto twice = eliminate_duplicates(once, 0.3);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i)
      CHECK((once[i].position - twice[i].position).norm() == 0.0);
  }

  SUBCASE("negative separation throws") {
    CHECK_THROWS_AS(eliminate_duplicates({}, -0.1), std::invalid_argument);
  }
}

TEST_CASE("zone-edge echo power moments") {
  const chan::TransceiverConfig cfg;  // reference design defaults
  const double mu_rho = 0.6687, sigma_rho = 0.225923, r = 1.25;

  SUBCASE("collocated unit matches the closed form") {
    const auto pm = edge_power_monostatic(cfg, r, 0.29, mu_rho, sigma_rho);
    CHECK(near_rel(pm.mean_w, closed_form_power(r, r, mu_rho), 1e-12));
    CHECK(near_rel(pm.std_w, closed_form_power(r, r, sigma_rho), 1e-12));
  }

  SUBCASE("distant anchor matches the closed form") {
    const auto pm = edge_power_bistatic(cfg, r, 0.29, mu_rho, sigma_rho);
    CHECK(near_rel(pm.mean_w, closed_form_power(3.0 * r, r, mu_rho), 1e-12));
    CHECK(near_rel(pm.std_w, closed_form_power(3.0 * r, r, sigma_rho), 1e-12));
  }

  SUBCASE("moment ratio follows the reflectivity ensemble") {
    const auto pm = edge_power_monostatic(cfg, r, 0.29, mu_rho, sigma_rho);
    CHECK(near_rel(pm.std_w / pm.mean_w, sigma_rho / mu_rho, 1e-12));
    const auto sure = edge_power_monostatic(cfg, r, 0.29, mu_rho, 0.0);
    CHECK(sure.std_w == 0.0);
  }

  SUBCASE("anchor echo is weaker and power falls with range") {
    const auto mono = edge_power_monostatic(cfg, r, 0.29, mu_rho, sigma_rho);
    const auto bi = edge_power_bistatic(cfg, r, 0.29, mu_rho, sigma_rho);
    CHECK(bi.mean_w < mono.mean_w);
    const auto nearer = edge_power_monostatic(cfg, 1.0, 0.29, mu_rho, sigma_rho);
    CHECK(nearer.mean_w > mono.mean_w);
  }

  SUBCASE("degenerate geometry throws") {
    CHECK_THROWS_AS(edge_power_monostatic(cfg, 0.0, 0.29, mu_rho, sigma_rho),
                    std::invalid_argument);
    CHECK_THROWS_AS(edge_power_monostatic(cfg, 1.0, 0.0, mu_rho, sigma_rho),
                    std::invalid_argument);
  }
}

TEST_CASE("system design analysis") {
  MimoDesign d;  // reference defaults

  SUBCASE("echo spread window and cycle time") {
    const auto a = analyze_system(d);
    const double u = 1.3, r = 1.25;
    const double t_w = (std::sqrt(9.0 * r * r + u * u) + r / std::sin(deg2rad(43.8)) -
                        2.0 * u) /
                       kSpeedOfLight;
    CHECK(near_rel(a.t_w_s, t_w, 1e-12));
    CHECK(a.t_w_s > 10.5e-9);
    CHECK(a.t_w_s < 10.7e-9);
    CHECK(near_rel(a.t_cm, t_w / 2e-9 * 8.0, 1e-12));
  }

  SUBCASE("thresholds sit at the design fractions of the edge means") {
    const auto a = analyze_system(d);
    CHECK(near_rel(a.d_th_mono_w, 0.32 * a.mono.mean_w, 1e-12));
    CHECK(near_rel(a.d_th_bi_w, 0.35 * a.bistatic.mean_w, 1e-12));
  }

  SUBCASE("medium-access overhead") {
    CHECK(near_rel(mac_overhead(44e-9, 24, 0.1), 1.056e-5, 1e-9));
    MimoDesign o = d;
    o.observation_window_s = 44e-9;
    CHECK(near_rel(analyze_system(o).oh_ml, 1.056e-5, 1e-9));
    CHECK_THROWS_AS(mac_overhead(1.0, 10, 0.0), std::invalid_argument);
  }

  SUBCASE("miss and localization probabilities respond to the thresholds") {
    const auto a = analyze_system(d);
    CHECK(a.p_miss_detect >= 0.0);
    CHECK(a.p_miss_detect <= 1.0);
    CHECK(a.p_localize >= 0.0);
    CHECK(a.p_localize <= 1.0);
    CHECK(a.p_miss_detect + a.p_localize <= 1.0 + 1e-12);
    MimoDesign lax = d;
    lax.threshold_factor_mono = 0.1;
    lax.threshold_factor_bi = 0.1;
    const auto b = analyze_system(lax);
    CHECK(b.p_miss_detect < a.p_miss_detect);
    CHECK(b.p_localize > a.p_localize);
  }

  SUBCASE("localization product") {
    CHECK(near_rel(localization_probability(0.92, {0.7, 0.7}), 0.92 * 0.49, 1e-12));
    CHECK(localization_probability(1.0, {}) == 1.0);
    CHECK_THROWS_AS(localization_probability(1.2, {}), std::invalid_argument);
    CHECK_THROWS_AS(localization_probability(0.5, {-0.1}), std::invalid_argument);
  }

  SUBCASE("invalid designs throw") {
    MimoDesign bad = d;
    bad.r_max_m = 0.0;
    CHECK_THROWS_AS(analyze_system(bad), std::invalid_argument);
    bad = d;
    bad.neighbor_count = 0;
    CHECK_THROWS_AS(analyze_system(bad), std::invalid_argument);
  }
}

TEST_CASE("transceiver grid and zones") {
  const auto room = standard_room();
  const auto sys = MimoSystem::standard(room);

  SUBCASE("eight ceiling units on the lighting grid") {
    REQUIRE(sys.units.size() == 8);
    const std::vector<Vec2> want{{1, 1}, {3, 1}, {1, 3}, {3, 3},
                                 {1, 5}, {3, 5}, {1, 7}, {3, 7}};
    for (int i = 0; i < 8; ++i) {
      CHECK(sys.units[static_cast<std::size_t>(i)].id == i);
      const Vec3& p = sys.units[static_cast<std::size_t>(i)].position;
      CHECK(p.x() == want[static_cast<std::size_t>(i)].x());
      CHECK(p.y() == want[static_cast<std::size_t>(i)].y());
      CHECK(p.z() == room.height_m);
    }
    CHECK(sys.zone_count() == 8);
    CHECK(sys.frames_per_cycle() == 24);
    CHECK(near_rel(sys.zone_radius_m, 1.3 * std::tan(deg2rad(43.8)), 1e-12));
  }

  SUBCASE("anchor sets are the two nearest covering units") {
    CHECK(sys.neighbors(0) == std::vector<int>{1, 2});
    CHECK(sys.neighbors(3) == std::vector<int>{1, 2});
    CHECK(sys.neighbors(7) == std::vector<int>{5, 6});
    CHECK_THROWS_AS(sys.neighbors(-1), std::out_of_range);
    CHECK_THROWS_AS(sys.neighbors(8), std::out_of_range);
  }

  SUBCASE("zone assignment is nearest-unit with low-id ties") {
    CHECK(sys.zone_of(Vec2(0.5, 0.5)) == 0);
    CHECK(sys.zone_of(Vec2(3.2, 5.1)) == 5);
    CHECK(sys.zone_of(Vec2(2.0, 4.0)) == 2);  // four-way tie
    MimoSystem none;
    CHECK_THROWS_AS(none.zone_of(Vec2(0.0, 0.0)), std::runtime_error);
  }
}

TEST_CASE("scan frame synthesis") {
  const auto room = empty_room();
  const auto sys = MimoSystem::standard(room);

  sim::ScanOptions quiet;
  quiet.include_clutter = false;
  quiet.distinguish = false;
  quiet.sigma_slot_a = 0.0;

  SUBCASE("slot windows cover the zone trips") {
    sim::ScanEngine eng(room, sys, quiet);
    const auto& spec = eng.frame_spec(0, 0);
    CHECK(spec.slot_lo >= 0);
    CHECK(spec.slot_hi > spec.slot_lo);
    CHECK(spec.n_slots == spec.slot_hi + 2);
    // The nadir echo (trip 2*1.3/c = 8.67 ns, slot 4) must be in the window.
    CHECK(spec.slot_lo <= 4);
    CHECK(spec.slot_hi >= 4);
    CHECK_THROWS_AS(eng.frame_spec(0, 99), std::out_of_range);
  }

  SUBCASE("a slot-aligned echo fills exactly one slot at the link budget") {
    sim::ScanEngine eng(room, sys, quiet);
    // Horizontal offset chosen so the round trip starts exactly at slot 5.
    const double slant = kSpeedOfLight * 10e-9 / 2.0;
    const double off = std::sqrt(slant * slant - 1.69);
    env::TargetState t;
    t.position = Vec2(1.0 + off, 1.0);
    auto rng = RandomStream::derive(11, 0);
    const auto snap = eng.scan_frame(0, 0, std::vector<env::TargetState>{t}, rng);
    const auto& spec = eng.frame_spec(0, 0);
    const auto obs = det::orthonormal_expand(snap, spec.n_slots);

    const auto geom = chan::LinkGeometry::from_horizontal(off, off);
    const double da = env::target_cross_section(t, sys.units[0].position);
    const double amp = 0.4 * chan::received_power_bistatic_max(eng.options().design.transceiver,
                                                               geom, t.reflection_factor, da);
    CHECK(near_rel(obs.z[5], amp, 1e-6));
    CHECK(std::abs(obs.z[4]) < amp * 1e-9);
    CHECK(std::abs(obs.z[6]) < amp * 1e-9);
  }

  SUBCASE("no targets and no clutter gives a silent frame") {
    sim::ScanEngine eng(room, sys, quiet);
    auto rng = RandomStream::derive(11, 1);
    const auto snap = eng.scan_frame(0, 0, {}, rng);
    for (double v : snap.samples) CHECK(v == 0.0);
  }

  SUBCASE("targets beyond the receiver reach do not contribute") {
    sim::ScanEngine eng(room, sys, quiet);
    env::TargetState t;
    t.position = Vec2(1.0, 3.5);  // 2.5 m from unit 0
    auto rng = RandomStream::derive(11, 2);
    const auto snap = eng.scan_frame(0, 0, std::vector<env::TargetState>{t}, rng);
    for (double v : snap.samples) CHECK(v == 0.0);
  }

  SUBCASE("a full-height pillar blocks the anchor sight line") {
    env::EnvironmentConfig cfg;
    cfg.furniture_override = std::vector<env::Cuboid>{
        {Vec3(2.7, 1.95, 0.0), Vec3(0.2, 0.2, 3.0), 0.5, 1.0, "pillar"}};
    const auto blocked_room = env::build_environment(cfg);
    const auto bsys = MimoSystem::standard(blocked_room);
    sim::ScanEngine eng(blocked_room, bsys, quiet);
    env::TargetState t;
    t.position = Vec2(2.6, 3.1);
    auto rng = RandomStream::derive(11, 3);
    // Anchor 1 -> target -> unit 3 passes through the pillar: silent frame.
    const auto bi = eng.scan_frame(1, 3, std::vector<env::TargetState>{t}, rng);
    for (double v : bi.samples) CHECK(v == 0.0);
    // The collocated frame of unit 3 sees the target unobstructed.
    const auto mono = eng.scan_frame(3, 3, std::vector<env::TargetState>{t}, rng);
    double peak = 0.0;
    for (double v : mono.samples) peak = std::max(peak, v);
    CHECK(peak > eng.slot_threshold_mono_a());
  }

  SUBCASE("noise is calibrated per slot") {
    sim::ScanOptions noisy = quiet;
    noisy.sigma_slot_a = 4.667e-8;
    sim::ScanEngine eng(room, sys, noisy);
    auto rng = RandomStream::derive(11, 4);
    double sum = 0.0, sq = 0.0;
    int n = 0;
    for (int f = 0; f < 300; ++f) {
      const auto snap = eng.scan_frame(0, 0, {}, rng);
      const auto obs = det::orthonormal_expand(snap, eng.frame_spec(0, 0).n_slots);
      for (double z : obs.z) {
        sum += z;
        sq += z * z;
        ++n;
      }
    }
    const double var = sq / n - (sum / n) * (sum / n);
    CHECK(std::abs(std::sqrt(var) - 4.667e-8) < 0.05 * 4.667e-8);
  }

  SUBCASE("detection thresholds follow the design operating points") {
    sim::ScanEngine eng(room, sys, quiet);
    const auto& d = eng.options().design;
    const auto mono = edge_power_monostatic(d.transceiver, d.r_max_m, d.cross_section_m2,
                                            d.mu_rho, d.sigma_rho);
    const auto bi = edge_power_bistatic(d.transceiver, d.r_max_m, d.cross_section_m2,
                                        d.mu_rho, d.sigma_rho);
    CHECK(near_rel(eng.slot_threshold_mono_a(), 0.32 * 0.4 * mono.mean_w, 1e-12));
    CHECK(near_rel(eng.slot_threshold_bi_a(), 0.35 * 0.4 * bi.mean_w, 1e-12));
  }

  SUBCASE("history bookkeeping") {
    sim::ScanEngine eng(room, sys, quiet);
    auto rng = RandomStream::derive(11, 5);
    CHECK_THROWS_AS(eng.history(0, 0), std::runtime_error);
    for (int f = 0; f < 7; ++f) {
      CHECK(eng.history_ready(0, 0) == (f >= 5));
      const auto snap = eng.scan_frame(0, 0, {}, rng);
      CHECK(snap.index == f);
    }
    CHECK(eng.history(0, 0).size() == 5);  // depth 4 plus the latest
    CHECK(eng.history(0, 0).latest().index == 6);
    eng.reset_history();
    CHECK_FALSE(eng.history_ready(0, 0));
    const auto snap = eng.scan_frame(0, 0, {}, rng);
    CHECK(snap.index == 7);  // frame numbering survives a history reset
  }

  SUBCASE("clutter cache is reused") {
    const auto furnished = standard_room();
    const auto fsys = MimoSystem::standard(furnished);
    sim::ScanOptions opts = quiet;
    opts.include_clutter = true;
    sim::ScanEngine eng(furnished, fsys, opts);
    const auto& first = eng.clutter_waveform(0, 0);
    const auto& again = eng.clutter_waveform(0, 0);
    CHECK(&first == &again);
    double peak = 0.0;
    for (double v : first) peak = std::max(peak, v);
    CHECK(peak > 0.0);
  }
}

TEST_CASE("full-cycle scan and localization") {
  const auto room = empty_room();
  const auto sys = MimoSystem::standard(room);

  sim::ScanOptions clean;
  clean.include_clutter = false;
  clean.distinguish = false;
  clean.sigma_slot_a = 0.0;

  SUBCASE("an empty room counts nobody") {
    sim::ScanEngine eng(room, sys, clean);
    auto rng = RandomStream::derive(21, 0);
    const auto out = run_scan_cycle(eng, {}, rng);
    CHECK(out.n_e == 0);
    CHECK(out.positions.empty());
    REQUIRE(out.zones.size() == 8);
    for (const auto& z : out.zones) {
      CHECK(z.mono_slots.empty());
      CHECK(z.counted == 0);
    }
  }

  SUBCASE("a single mid-zone target is counted and ranged") {
    sim::ScanEngine eng(room, sys, clean);
    env::TargetState t;
    t.position = Vec2(1.0, 1.4);
    auto rng = RandomStream::derive(21, 1);
    const auto out = run_scan_cycle(eng, std::vector<env::TargetState>{t}, rng);
    REQUIRE(out.n_e == 1);
    CHECK(fix_error(out, t.position) < 0.8);
    CHECK(out.zones[0].counted == 1);
    CHECK(out.positions[0].target_id == 0);
    REQUIRE_FALSE(out.zones[0].ranges.empty());
    CHECK(out.zones[0].ranges[0].mode == RangeMode::monostatic);
    // Slot-centre ranging is quantized to half a slot of trip distance.
    const double slant = std::sqrt(0.4 * 0.4 + 1.69);
    CHECK(std::abs(out.zones[0].ranges[0].range_m - slant) <
          kSpeedOfLight * 2e-9 / 2.0);
  }

  SUBCASE("overlap-strip sightings collapse to one count") {
    sim::ScanEngine eng(room, sys, clean);
    env::TargetState t;
    t.position = Vec2(2.0, 1.0);  // equidistant from units 0 and 1
    auto rng = RandomStream::derive(21, 2);
    const auto out = run_scan_cycle(eng, std::vector<env::TargetState>{t}, rng);
    CHECK(out.n_e == 1);
    CHECK(fix_error(out, t.position) < 0.8);
    int counted = 0;
    for (const auto& z : out.zones) counted += z.counted;
    CHECK(counted == 1);
  }

  SUBCASE("range-quantized localization error stays in band") {
    sim::ScanEngine eng(room, sys, clean);
    auto rng = RandomStream::derive(21, 3);
    double sq = 0.0;
    int hits = 0, trials = 0;
    for (int k = 0; k < 150; ++k) {
      env::TargetState t;
      // Uniform over the zone-0 service disc, kept inside the room.
      const double r = 1.1 * std::sqrt(rng.uniform());
      const double a = rng.uniform(0.0, 2.0 * kPi);
      t.position = Vec2(1.0 + r * std::cos(a), 1.0 + r * std::sin(a));
      if (t.position.x() < 0.1 || t.position.y() < 0.1 || t.position.x() > 3.9) continue;
      ++trials;
      const auto out = run_scan_cycle(eng, std::vector<env::TargetState>{t}, rng);
      if (out.n_e == 0) continue;
      ++hits;
      const double e = fix_error(out, t.position);
      sq += e * e;
    }
    REQUIRE(trials > 100);
    CHECK(hits > trials * 9 / 10);  // noiseless in-zone echoes are never missed
    const double drmse = std::sqrt(sq / hits);
    CHECK(drmse > 0.1);
    CHECK(drmse < 0.45);
  }

  SUBCASE("noisy frames still localize the target") {
    sim::ScanOptions noisy = clean;
    noisy.sigma_slot_a = 4.667e-8;
    sim::ScanEngine eng(room, sys, noisy);
    env::TargetState t;
    t.position = Vec2(1.0, 1.4);
    auto rng = RandomStream::derive(21, 4);
    const auto out = run_scan_cycle(eng, std::vector<env::TargetState>{t}, rng);
    CHECK(out.n_e >= 1);
    CHECK(out.n_e <= 3);
    CHECK(fix_error(out, t.position) < 0.8);
  }

  SUBCASE("every cycle scans one frame per zone and per anchor") {
    sim::ScanEngine eng(room, sys, clean);
    auto rng = RandomStream::derive(21, 5);
    for (int c = 0; c < 3; ++c) run_scan_cycle(eng, {}, rng);
    for (int z = 0; z < sys.zone_count(); ++z) {
      CHECK(eng.history(z, z).size() == 3);
      CHECK(eng.history(z, z).latest().index == 2);
      for (int k : sys.neighbors(z)) CHECK(eng.history(k, z).size() == 3);
    }
  }

  SUBCASE("the movement gate drops a static body and keeps a walker") {
    sim::ScanOptions gated = clean;
    gated.distinguish = true;
    gated.sigma_slot_a = 1e-8;
    sim::ScanEngine eng(room, sys, gated);
    auto rng = RandomStream::derive(21, 6);

    env::TargetState still;
    still.position = Vec2(3.0, 5.0);  // parked under unit 5
    still.id = 1;

    int walker_seen = 0;
    for (int c = 0; c < 12; ++c) {
      env::TargetState walker;
      walker.position = Vec2(1.0, 0.8 + 0.15 * c);
      walker.id = 0;
      const std::vector<env::TargetState> targets{walker, still};
      const auto out = run_scan_cycle(eng, targets, rng);
      if (c == 0) {
        // Before any history exists both bodies are detected.
        CHECK(out.n_e == 2);
        CHECK(fix_error(out, still.position) < 0.8);
      }
      if (c >= 6) {
        // With full histories the static body looks like furniture.
        CHECK(out.zones[5].mono_slots.empty());
        CHECK(fix_error(out, still.position) > 1.0);
        if (fix_error(out, walker.position) < 1.0) ++walker_seen;
      }
    }
    CHECK(walker_seen >= 5);
  }
}
