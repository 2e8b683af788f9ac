// SPDX-License-Identifier: Apache-2.0
#include "lidal/mimo.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "lidal/detect.hpp"
#include "lidal/disting.hpp"
#include "lidal/scan.hpp"

namespace lidal::mimo {

MimoSystem MimoSystem::standard(const env::Environment& room) {
  MimoSystem s;
  // Two columns by four rows of ceiling units at the conventional VLC
  // lighting positions (2 m spacing for the 4 m x 8 m reference room).
  const int cols = 2, rows = 4;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      TransceiverUnit u;
      u.id = static_cast<int>(s.units.size());
      u.position = Vec3(room.width_m * (2.0 * c + 1.0) / (2.0 * cols),
                        room.length_m * (2.0 * r + 1.0) / (2.0 * rows), room.height_m);
      s.units.push_back(u);
    }
  s.zone_radius_m = (room.height_m - s.target_height_m) * std::tan(deg2rad(s.rx_fov_deg));

  // Anchor map: the K nearest other units whose transmitter footprint covers
  // the zone centre; ties broken toward the lower unit id.
  s.neighbor_map.resize(s.units.size());
  for (const auto& u : s.units) {
    std::vector<std::pair<double, int>> order;
    for (const auto& v : s.units) {
      if (v.id == u.id) continue;
      const double d = (Vec2(v.position.x(), v.position.y()) -
                        Vec2(u.position.x(), u.position.y()))
                           .norm();
      if (d <= s.tx_coverage_radius_m + s.zone_radius_m) order.emplace_back(d, v.id);
    }
    std::sort(order.begin(), order.end());
    if (static_cast<int>(order.size()) < s.anchors_per_zone)
      throw std::runtime_error("MimoSystem: not enough covering neighbours");
    for (int k = 0; k < s.anchors_per_zone; ++k)
      s.neighbor_map[static_cast<std::size_t>(u.id)].push_back(order[static_cast<std::size_t>(k)].second);
  }
  return s;
}

int MimoSystem::zone_of(const Vec2& p) const {
  if (units.empty()) throw std::runtime_error("MimoSystem: no units");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& u : units) {
    const double d = (Vec2(u.position.x(), u.position.y()) - p).norm();
    if (d < best_d - 1e-12) {
      best_d = d;
      best = u.id;
    }
  }
  return best;
}

const std::vector<int>& MimoSystem::neighbors(int unit) const {
  if (unit < 0 || unit >= static_cast<int>(neighbor_map.size()))
    throw std::out_of_range("MimoSystem: unit id out of range");
  return neighbor_map[static_cast<std::size_t>(unit)];
}

double range_monostatic(double t_trip_s) {
  if (t_trip_s < 0.0) throw std::invalid_argument("range_monostatic: negative trip time");
  return kSpeedOfLight * t_trip_s / 2.0;
}

double range_bistatic(double t_trip_s, double r1_m) {
  if (t_trip_s < 0.0 || r1_m < 0.0)
    throw std::invalid_argument("range_bistatic: negative input");
  const double trip = kSpeedOfLight * t_trip_s;
  if (trip < r1_m - 1e-12)
    throw std::invalid_argument("range_bistatic: trip distance shorter than the resolved leg");
  return std::max(0.0, trip - r1_m);
}

double horizontal_range(double slant_m, double height_gap_m) {
  if (slant_m < 0.0) throw std::invalid_argument("horizontal_range: negative slant");
  const double d2 = slant_m * slant_m - height_gap_m * height_gap_m;
  return d2 > 0.0 ? std::sqrt(d2) : 0.0;
}

PositionEstimate least_squares_position(const std::vector<Vec2>& anchors,
                                        const std::vector<double>& ranges_m) {
  if (anchors.size() != ranges_m.size())
    throw std::invalid_argument("least_squares_position: anchors/ranges size mismatch");
  if (anchors.size() < 3)
    throw std::invalid_argument("least_squares_position: need at least 3 anchors");

  const auto k = static_cast<Eigen::Index>(anchors.size()) - 1;
  Eigen::MatrixXd a(k, 2);
  Eigen::VectorXd b(k);
  const Vec2& a1 = anchors[0];
  const double r1 = ranges_m[0];
  for (Eigen::Index i = 0; i < k; ++i) {
    const Vec2& ak = anchors[static_cast<std::size_t>(i) + 1];
    const double rk = ranges_m[static_cast<std::size_t>(i) + 1];
    a(i, 0) = ak.x() - a1.x();
    a(i, 1) = ak.y() - a1.y();
    b(i) = 0.5 * (r1 * r1 - rk * rk + ak.squaredNorm() - a1.squaredNorm());
  }
  const Eigen::Matrix2d ata = a.transpose() * a;
  if (std::abs(ata.determinant()) < 1e-9)
    throw std::invalid_argument("least_squares_position: collinear anchors");
  const Eigen::Vector2d x = ata.ldlt().solve(a.transpose() * b);

  PositionEstimate est;
  est.position = Vec2(x(0), x(1));
  est.anchors_used = static_cast<int>(anchors.size());
  double resid = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i)
    resid += std::abs(ranges_m[i] - (anchors[i] - est.position).norm());
  est.residual_m = resid / static_cast<double>(anchors.size());
  return est;
}

std::vector<PositionEstimate> eliminate_duplicates(std::vector<PositionEstimate> estimates,
                                                   double min_separation_m) {
  if (min_separation_m < 0.0)
    throw std::invalid_argument("eliminate_duplicates: negative separation");
  std::sort(estimates.begin(), estimates.end(),
            [](const PositionEstimate& a, const PositionEstimate& b) {
              return a.residual_m < b.residual_m;
            });
  std::vector<PositionEstimate> kept;
  for (const auto& e : estimates) {
    bool dup = false;
    for (const auto& k : kept)
      if ((e.position - k.position).norm() < min_separation_m) {
        dup = true;
        break;
      }
    if (!dup) kept.push_back(e);
  }
  return kept;
}

namespace {

PowerMoments edge_power(const chan::TransceiverConfig& cfg, double r_tx_m, double r_rx_m,
                        double cross_section_m2, double mu_rho, double sigma_rho,
                        double ceiling_m, double target_height_m) {
  if (r_rx_m <= 0.0 || cross_section_m2 <= 0.0)
    throw std::invalid_argument("edge power: geometry must be positive");
  const auto geom =
      chan::LinkGeometry::from_horizontal(r_tx_m, r_rx_m, ceiling_m, target_height_m);
  PowerMoments pm;
  pm.mean_w = chan::received_power_bistatic_max(cfg, geom, mu_rho, cross_section_m2);
  pm.std_w = chan::received_power_bistatic_max(cfg, geom, sigma_rho, cross_section_m2);
  return pm;
}

}  // namespace

PowerMoments edge_power_monostatic(const chan::TransceiverConfig& cfg, double r_max_m,
                                   double cross_section_m2, double mu_rho, double sigma_rho,
                                   double ceiling_m, double target_height_m) {
  return edge_power(cfg, r_max_m, r_max_m, cross_section_m2, mu_rho, sigma_rho, ceiling_m,
                    target_height_m);
}

PowerMoments edge_power_bistatic(const chan::TransceiverConfig& cfg, double r_max_m,
                                 double cross_section_m2, double mu_rho, double sigma_rho,
                                 double ceiling_m, double target_height_m) {
  return edge_power(cfg, 3.0 * r_max_m, r_max_m, cross_section_m2, mu_rho, sigma_rho,
                    ceiling_m, target_height_m);
}

double localization_probability(double p_d_mono, const std::vector<double>& p_d_bistatic) {
  if (p_d_mono < 0.0 || p_d_mono > 1.0)
    throw std::invalid_argument("localization_probability: probability outside [0,1]");
  double p = p_d_mono;
  for (double q : p_d_bistatic) {
    if (q < 0.0 || q > 1.0)
      throw std::invalid_argument("localization_probability: probability outside [0,1]");
    p *= q;
  }
  return p;
}

double mac_overhead(double window_s, int frames, double mac_frame_s) {
  if (window_s < 0.0 || frames < 0 || mac_frame_s <= 0.0)
    throw std::invalid_argument("mac_overhead: invalid inputs");
  return window_s * static_cast<double>(frames) / mac_frame_s;
}

SystemAnalysis analyze_system(const MimoDesign& d) {
  if (d.r_max_m <= 0.0 || d.slot_width_s <= 0.0 || d.neighbor_count < 1 || d.zone_count < 1)
    throw std::invalid_argument("analyze_system: invalid design");
  SystemAnalysis out;
  out.mono = edge_power_monostatic(d.transceiver, d.r_max_m, d.cross_section_m2, d.mu_rho,
                                   d.sigma_rho, d.ceiling_m, d.target_height_m);
  out.bistatic = edge_power_bistatic(d.transceiver, d.r_max_m, d.cross_section_m2, d.mu_rho,
                                     d.sigma_rho, d.ceiling_m, d.target_height_m);
  out.d_th_mono_w = d.threshold_factor_mono * out.mono.mean_w;
  out.d_th_bi_w = d.threshold_factor_bi * out.bistatic.mean_w;

  // Per-link one-sided tail arguments over the clothing ensemble.
  const double am = (out.d_th_mono_w - out.mono.mean_w) / (out.mono.std_w * std::sqrt(2.0));
  const double ab =
      (out.d_th_bi_w - out.bistatic.mean_w) / (out.bistatic.std_w * std::sqrt(2.0));

  // All anchors miss: product of per-link below-threshold probabilities.
  double miss = std::pow(0.5, d.neighbor_count + 1) * (1.0 + std::erf(am));
  for (int k = 0; k < d.neighbor_count; ++k) miss *= 1.0 + std::erf(ab);
  out.p_miss_detect = miss;

  // All anchors detect: product of per-link above-threshold probabilities.
  double loc = std::pow(0.5, d.neighbor_count + 1) * std::erfc(am);
  for (int k = 0; k < d.neighbor_count; ++k) loc *= std::erfc(ab);
  out.p_localize = loc;

  // Echo spread window of one zone: difference between the longest trip
  // (distant anchor at 3 r_max plus the FOV slant) and the shortest
  // (directly underneath, there and back).
  const double u = d.ceiling_m - d.target_height_m;
  const double fov = deg2rad(d.transceiver.rx_fov_deg);
  out.t_w_s = (std::sqrt(9.0 * d.r_max_m * d.r_max_m + u * u) + d.r_max_m / std::sin(fov) -
               2.0 * u) /
              kSpeedOfLight;
  out.t_cm = out.t_w_s / d.slot_width_s * static_cast<double>(d.zone_count);
  const int frames = d.zone_count * (d.neighbor_count + 1);
  out.oh_ml = mac_overhead(d.observation_window_s.value_or(out.t_w_s), frames, d.mac_frame_s);
  return out;
}

namespace {

/// Candidate bistatic observation: flagged slot centre converted to the
/// anchor-side slant leg given a resolved monostatic slant. The slot
/// coefficient is kept because association ranks triples by echo strength:
/// the body return inside the feasible trip window is markedly stronger than
/// standing wall returns, which are longer paths off darker surfaces.
struct BistaticCandidate {
  int anchor = 0;
  int slot = 0;
  double t_trip_s = 0.0;
  double amp = 0.0;
};

}  // namespace

ScanCycleResult run_scan_cycle(sim::ScanEngine& engine,
                               std::span<const env::TargetState> targets,
                               RandomStream& rng) {
  const auto& sys = engine.system();
  const auto& opt = engine.options();
  const double tau = opt.design.slot_width_s;
  const double delta_r = kSpeedOfLight * tau / 2.0;  // slot range quantization
  const auto& room = engine.environment();

  ScanCycleResult out;
  std::vector<PositionEstimate> fixes;

  // Matched-filter template for trip-time refinement: ranging at the sample
  // period instead of the slot width keeps the fixes that adjacent zones
  // compute for one body within the duplicate-elimination radius.
  const std::vector<double> pulse =
      dst::rectangular_template(opt.ccm.pulse_width_s, opt.sample_period_s);

  for (int z = 0; z < sys.zone_count(); ++z) {
    ZoneReport rep;
    rep.zone = z;
    const Vec3 rx_pos = sys.units[static_cast<std::size_t>(z)].position;
    const double gap_rx = rx_pos.z() - sys.target_height_m;

    // Detector-flagged slots of one link. The movement gate applies to the
    // collocated detection frame only: anchor frames serve ranging, and a
    // target moving along a bistatic ellipse holds its trip-time sum nearly
    // constant, which would wrongly read as static there. (Movement marks on
    // anchor slots were tried and discarded: ellipse-tangential motion reads
    // static on the very slots that matter, while noise flips mark standing
    // wall slots as moving, so the marks steer association the wrong way.)
    auto flagged_slots = [&](int tx, int rx, double threshold_a, bool gate) {
      const fe::Snapshot snap = engine.scan_frame(tx, rx, targets, rng);
      const auto& spec = engine.frame_spec(tx, rx);
      det::SlotObservation slots = det::orthonormal_expand(snap, spec.n_slots);
      if (gate && opt.distinguish) {
        if (opt.movement_test == sim::MovementTest::correlation &&
            engine.history_ready(tx, rx)) {
          std::vector<int> weights(slots.z.size(), 0);
          for (int j = spec.slot_lo; j <= spec.slot_hi; ++j) {
            const auto r = dst::slow_xcorr(engine.history(tx, rx), j, opt.ccm);
            weights[static_cast<std::size_t>(j)] = r.weight;
          }
          slots = dst::gate_slots(slots, weights);
        } else if (opt.movement_test == sim::MovementTest::subtraction &&
                   engine.history(tx, rx).size() >= 2) {
          const auto& cube = engine.history(tx, rx);
          const auto& prev = cube.snapshots[cube.snapshots.size() - 2];
          const fe::Snapshot diff = dst::bsm_subtract(cube.latest(), prev);
          const det::SlotObservation dz = det::orthonormal_expand(diff, spec.n_slots);
          // Two-frame slot difference carries twice the slot noise variance.
          const double floor_a = opt.ccm.kappa * std::sqrt(2.0) * opt.sigma_slot_a;
          std::vector<int> weights(slots.z.size(), 0);
          for (int j = spec.slot_lo; j <= spec.slot_hi; ++j)
            weights[static_cast<std::size_t>(j)] =
                std::abs(dz.z[static_cast<std::size_t>(j)]) > floor_a ? 1 : 0;
          slots = dst::gate_slots(slots, weights);
        }
      }
      det::SlotObservation window;
      window.slot_width_s = tau;
      for (int j = spec.slot_lo; j <= spec.slot_hi; ++j)
        window.z.push_back(slots.z[static_cast<std::size_t>(j)]);
      const auto decision = det::sor_decide(window, threshold_a, threshold_a);
      std::vector<std::pair<int, double>> flagged;  // global slot, coefficient
      for (int local : decision.occupied_slots)
        flagged.emplace_back(local + spec.slot_lo,
                             window.z[static_cast<std::size_t>(local)]);
      return flagged;
    };

    // Sub-slot trip times for the flagged slots of the link scanned last.
    auto refine_trips = [&](int tx, int rx,
                            const std::vector<std::pair<int, double>>& flagged) {
      const auto& spec = engine.frame_spec(tx, rx);
      std::vector<int> w(static_cast<std::size_t>(spec.n_slots), 0);
      for (const auto& [j, zval] : flagged) w[static_cast<std::size_t>(j)] = 1;
      return dst::toa_estimate(engine.history(tx, rx), w, pulse, opt.ccm);
    };

    // A straddling pulse spans at most two adjacent slots, so a run of
    // consecutive flagged slots is one unresolved echo; range it at the slot
    // holding the most energy.
    auto run_peaks = [](const std::vector<std::pair<int, double>>& flagged) {
      std::vector<std::pair<int, double>> peaks;
      for (std::size_t i = 0; i < flagged.size();) {
        std::size_t best = i, j = i;
        while (j + 1 < flagged.size() && flagged[j + 1].first == flagged[j].first + 1) {
          ++j;
          if (flagged[j].second > flagged[best].second) best = j;
        }
        peaks.push_back(flagged[best]);
        i = j + 1;
      }
      return peaks;
    };

    // 1) Monostatic frame: candidate slant ranges at slot centres. A target
    // echo can only originate inside the receiver's reach disc, so the slant
    // is capped at the disc edge plus straddle-quantization slack; longer
    // flagged returns are wall reflections (reachable by light, not by a
    // counted body) and must not seed a fix.
    const double reach = sys.zone_radius_m + opt.rx_margin_m;
    const double r1_cap = std::hypot(gap_rx, reach) + 1.5 * delta_r;
    const auto mono_flagged = flagged_slots(z, z, engine.slot_threshold_mono_a(), true);
    const auto mono_toa = refine_trips(z, z, mono_flagged);
    for (const auto& [j, zval] : mono_flagged) rep.mono_slots.push_back(j);
    struct MonoCandidate {
      int slot;
      double r1_slant;
      double r1_floor;
    };
    std::vector<MonoCandidate> mono;
    for (const auto& [j, zval] : run_peaks(mono_flagged)) {
      const auto& toa = mono_toa[static_cast<std::size_t>(j)];
      const double t = toa ? *toa : (static_cast<double>(j) + 0.5) * tau;
      const double r1 = range_monostatic(t);
      if (r1 < gap_rx) continue;  // shorter than the ceiling-to-head distance
      if (r1 > r1_cap) continue;  // beyond the covered disc: standing clutter
      mono.push_back({j, r1, horizontal_range(r1, gap_rx)});
    }

    // 2) Bistatic frames from the neighbour anchors.
    std::vector<BistaticCandidate> bistatic;
    for (int k : sys.neighbors(z)) {
      const auto bi_flagged = flagged_slots(k, z, engine.slot_threshold_bi_a(), false);
      const auto bi_toa = refine_trips(k, z, bi_flagged);
      for (const auto& [j, zval] : run_peaks(bi_flagged)) {
        const auto& toa = bi_toa[static_cast<std::size_t>(j)];
        const double t = toa ? *toa : (static_cast<double>(j) + 0.5) * tau;
        bistatic.push_back({k, j, t, zval});
      }
    }

    // 3) Association: try every (mono, anchor-slot, anchor-slot) triple and
    // consume slots greedily. The trilateration residual is a feasibility
    // cap, not the ranking: wall echoes are real reflections, so a wrong
    // triple of standing returns can trilaterate almost as consistently as
    // the body. Among feasible triples the strongest anchor echoes win.
    const auto& anchors = sys.neighbors(z);
    struct Fix {
      double amp_score;
      double residual;
      std::size_t mono_idx;
      std::vector<std::size_t> bi_idx;
      PositionEstimate est;
    };
    std::vector<Fix> trial;
    if (anchors.size() >= 2 && !mono.empty()) {
      // Candidate lists per anchor.
      std::vector<std::vector<std::size_t>> per_anchor(anchors.size());
      for (std::size_t i = 0; i < bistatic.size(); ++i)
        for (std::size_t a = 0; a < anchors.size(); ++a)
          if (bistatic[i].anchor == anchors[a]) per_anchor[a].push_back(i);

      for (std::size_t m = 0; m < mono.size(); ++m) {
        // The reflector lies on a floor circle of radius r1_floor around this
        // receiver, which bounds each anchor's horizontal leg to
        // |d_ra - r1_floor| .. d_ra + r1_floor. Anchor slots whose trip time
        // falls outside that window (with one slot of quantization slack each
        // way) cannot be the same reflector, so they are pruned before the
        // triple enumeration ever sees them.
        std::vector<std::pair<double, double>> trip_window(anchors.size());
        for (std::size_t a = 0; a < anchors.size(); ++a) {
          const Vec3 tx_pos =
              sys.units[static_cast<std::size_t>(anchors[a])].position;
          const double gap_tx = tx_pos.z() - sys.target_height_m;
          const double d_ra = (Vec2(tx_pos.x(), tx_pos.y()) -
                               Vec2(rx_pos.x(), rx_pos.y()))
                                  .norm();
          const double leg_lo =
              std::hypot(gap_tx, std::max(0.0, d_ra - mono[m].r1_floor));
          const double leg_hi = std::hypot(gap_tx, d_ra + mono[m].r1_floor);
          trip_window[a] = {
              (mono[m].r1_slant + leg_lo) / kSpeedOfLight - tau,
              (mono[m].r1_slant + leg_hi) / kSpeedOfLight + tau};
        }
        std::vector<std::size_t> chosen(anchors.size());
        // Depth-first enumeration over one candidate per anchor.
        std::function<void(std::size_t)> enumerate = [&](std::size_t a) {
          if (a == anchors.size()) {
            std::vector<Vec2> pts{Vec2(rx_pos.x(), rx_pos.y())};
            std::vector<double> rng_m{mono[m].r1_floor};
            double amp_score = 1.0;
            for (std::size_t q = 0; q < anchors.size(); ++q) {
              const auto& cand = bistatic[chosen[q]];
              const Vec3 tx_pos = sys.units[static_cast<std::size_t>(cand.anchor)].position;
              double leg;
              try {
                leg = range_bistatic(cand.t_trip_s, mono[m].r1_slant);
              } catch (const std::invalid_argument&) {
                return;  // inconsistent trip time for this pairing
              }
              const double gap_tx = tx_pos.z() - sys.target_height_m;
              if (leg < gap_tx) return;
              pts.emplace_back(tx_pos.x(), tx_pos.y());
              rng_m.push_back(horizontal_range(leg, gap_tx));
              amp_score *= cand.amp;
            }
            PositionEstimate est;
            try {
              est = least_squares_position(pts, rng_m);
            } catch (const std::invalid_argument&) {
              return;
            }
            if (est.residual_m > opt.max_fix_residual_m) return;
            trial.push_back({amp_score, est.residual_m, m, chosen, est});
            return;
          }
          for (std::size_t i : per_anchor[a]) {
            if (bistatic[i].t_trip_s < trip_window[a].first ||
                bistatic[i].t_trip_s > trip_window[a].second)
              continue;
            chosen[a] = i;
            enumerate(a + 1);
          }
        };
        enumerate(0);
      }
    }
    std::sort(trial.begin(), trial.end(), [](const Fix& a, const Fix& b) {
      if (a.amp_score != b.amp_score) return a.amp_score > b.amp_score;
      return a.residual < b.residual;
    });

    std::vector<char> mono_used(mono.size(), 0), bi_used(bistatic.size(), 0);
    for (const auto& f : trial) {
      if (mono_used[f.mono_idx]) continue;
      bool clash = false;
      for (std::size_t i : f.bi_idx)
        if (bi_used[i]) clash = true;
      if (clash) continue;
      mono_used[f.mono_idx] = 1;
      for (std::size_t i : f.bi_idx) bi_used[i] = 1;

      PositionEstimate est = f.est;
      // Keep fixes inside the room; out-of-bounds solutions are localization
      // errors, not crashes.
      const double x = std::clamp(est.position.x(), 0.0, room.width_m);
      const double y = std::clamp(est.position.y(), 0.0, room.length_m);
      est.clamped = (x != est.position.x()) || (y != est.position.y());
      est.position = Vec2(x, y);

      const auto& mc = mono[f.mono_idx];
      rep.ranges.push_back(
          {z, 2.0 * mc.r1_slant / kSpeedOfLight, mc.r1_slant, RangeMode::monostatic});
      for (std::size_t i : f.bi_idx) {
        const auto& bc = bistatic[i];
        rep.ranges.push_back({bc.anchor, bc.t_trip_s,
                              range_bistatic(bc.t_trip_s, mc.r1_slant),
                              RangeMode::bistatic});
      }
      fixes.push_back(est);
    }
    out.zones.push_back(std::move(rep));
  }

  // 4) Overlap-strip duplicates collapse to the best fix.
  out.positions = eliminate_duplicates(std::move(fixes), delta_r);
  for (std::size_t i = 0; i < out.positions.size(); ++i) {
    out.positions[i].target_id = static_cast<int>(i);
    const int z = sys.zone_of(out.positions[i].position);
    out.zones[static_cast<std::size_t>(z)].counted += 1;
  }
  out.n_e = static_cast<int>(out.positions.size());
  return out;
}

}  // namespace lidal::mimo
