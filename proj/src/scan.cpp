// SPDX-License-Identifier: Apache-2.0
#include "lidal/scan.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lidal::sim {

ScanEngine::ScanEngine(const env::Environment& room, mimo::MimoSystem system,
                       ScanOptions options)
    : room_(&room), system_(std::move(system)), options_(std::move(options)) {
  if (system_.units.empty()) throw std::invalid_argument("ScanEngine: no transceivers");
  const double tau = options_.design.slot_width_s;
  if (tau <= 0.0 || options_.sample_period_s <= 0.0)
    throw std::invalid_argument("ScanEngine: slot and sample periods must be > 0");
  const double ratio = tau / options_.sample_period_s;
  if (std::abs(ratio - std::lround(ratio)) > 1e-6)
    throw std::invalid_argument("ScanEngine: slot width must be a sample multiple");

  const auto& d = options_.design;
  const double resp = d.transceiver.responsivity_a_per_w;
  const auto mono = mimo::edge_power_monostatic(d.transceiver, d.r_max_m, d.cross_section_m2,
                                                d.mu_rho, d.sigma_rho, d.ceiling_m,
                                                d.target_height_m);
  const auto bi = mimo::edge_power_bistatic(d.transceiver, d.r_max_m, d.cross_section_m2,
                                            d.mu_rho, d.sigma_rho, d.ceiling_m,
                                            d.target_height_m);
  // Design operating points, floored at the noise-significance level so a
  // threshold below the receiver noise cannot flood the decoder with false
  // slots (the design fractions assume the analysis noise, not ours).
  const double noise_floor = options_.ccm.kappa * options_.sigma_slot_a;
  d_mono_a_ = std::max(d.threshold_factor_mono * mono.mean_w * resp, noise_floor);
  d_bi_a_ = std::max(d.threshold_factor_bi * bi.mean_w * resp, noise_floor);

  // The movement distinguisher works on samples; its noise scale follows from
  // the per-slot calibration (slot mean of k samples has 1/sqrt(k) the spread).
  options_.ccm.sigma_t_a = options_.sigma_slot_a * std::sqrt(samples_per_slot());
  options_.ccm.pulse_width_s = tau;
}

int ScanEngine::samples_per_slot() const {
  return static_cast<int>(std::lround(options_.design.slot_width_s / options_.sample_period_s));
}

void ScanEngine::validate_link(int tx_unit, int rx_unit) const {
  const int n = system_.zone_count();
  if (tx_unit < 0 || tx_unit >= n || rx_unit < 0 || rx_unit >= n)
    throw std::out_of_range("ScanEngine: unit id out of range");
}

const FrameSpec& ScanEngine::frame_spec(int tx_unit, int rx_unit) {
  validate_link(tx_unit, rx_unit);
  const LinkKey key{tx_unit, rx_unit};
  if (auto it = specs_.find(key); it != specs_.end()) return it->second;

  const Vec3 tx = system_.units[static_cast<std::size_t>(tx_unit)].position;
  const Vec3 rx = system_.units[static_cast<std::size_t>(rx_unit)].position;
  const double h = system_.target_height_m;
  const double reach = system_.zone_radius_m + options_.rx_margin_m;
  const double tau = options_.design.slot_width_s;

  // Trip-time extremes over the receiver's reach disc (clipped to the room).
  double t_min = std::numeric_limits<double>::infinity(), t_max = 0.0;
  auto consider = [&](double x, double y) {
    x = std::clamp(x, 0.0, room_->width_m);
    y = std::clamp(y, 0.0, room_->length_m);
    const Vec3 p(x, y, h);
    const double t = ((tx - p).norm() + (p - rx).norm()) / kSpeedOfLight;
    t_min = std::min(t_min, t);
    t_max = std::max(t_max, t);
  };
  consider(rx.x(), rx.y());
  for (int k = 0; k < 64; ++k) {
    const double a = 2.0 * kPi * k / 64.0;
    consider(rx.x() + reach * std::cos(a), rx.y() + reach * std::sin(a));
  }

  FrameSpec spec;
  spec.slot_lo = std::max(0, static_cast<int>(std::floor(t_min / tau)) - options_.guard_slots);
  spec.slot_hi = static_cast<int>(std::floor(t_max / tau)) + options_.guard_slots + 1;
  spec.n_slots = spec.slot_hi + 2;  // room for the trailing pulse edge
  return specs_.emplace(key, spec).first->second;
}

const std::vector<double>& ScanEngine::clutter_waveform(int tx_unit, int rx_unit) {
  validate_link(tx_unit, rx_unit);
  const LinkKey key{tx_unit, rx_unit};
  if (auto it = clutter_.find(key); it != clutter_.end()) return it->second;

  const auto& spec = frame_spec(tx_unit, rx_unit);
  const auto n_samples =
      static_cast<std::size_t>(spec.n_slots) * static_cast<std::size_t>(samples_per_slot());
  std::vector<double> wave(n_samples, 0.0);
  if (options_.include_clutter) {
    chan::TransceiverConfig cfg = options_.design.transceiver;
    cfg.tx_position = system_.units[static_cast<std::size_t>(tx_unit)].position;
    cfg.rx_position = system_.units[static_cast<std::size_t>(rx_unit)].position;
    chan::TraceOptions topt = options_.clutter_trace;
    topt.window_s = static_cast<double>(spec.n_slots) * options_.design.slot_width_s;
    topt.pulse_width_s = options_.design.slot_width_s;
    const auto ir = chan::impulse_response(*room_, cfg, {}, topt);
    fe::NoiseModel quiet;
    quiet.thermal_density = 0.0;
    quiet.background_current_a = 0.0;
    quiet.responsivity_a_per_w = cfg.responsivity_a_per_w;
    RandomStream unused = RandomStream::derive(0, 0);
    const auto snap = fe::simulate_snapshot(ir, topt.pulse_width_s, quiet, unused);
    const std::size_t n = std::min(wave.size(), snap.samples.size());
    std::copy(snap.samples.begin(), snap.samples.begin() + static_cast<std::ptrdiff_t>(n),
              wave.begin());
  }
  return clutter_.emplace(key, std::move(wave)).first->second;
}

fe::Snapshot ScanEngine::scan_frame(int tx_unit, int rx_unit,
                                    std::span<const env::TargetState> targets,
                                    RandomStream& rng) {
  validate_link(tx_unit, rx_unit);
  const auto& spec = frame_spec(tx_unit, rx_unit);
  const int sps = samples_per_slot();
  const double t_sa = options_.sample_period_s;
  const double tau = options_.design.slot_width_s;
  const auto n_samples = static_cast<std::size_t>(spec.n_slots) * static_cast<std::size_t>(sps);

  const Vec3 tx = system_.units[static_cast<std::size_t>(tx_unit)].position;
  const Vec3 rx = system_.units[static_cast<std::size_t>(rx_unit)].position;
  chan::TransceiverConfig cfg = options_.design.transceiver;
  cfg.tx_position = tx;
  cfg.rx_position = rx;

  fe::Snapshot s;
  s.sample_period_s = t_sa;
  s.slot_width_s = tau;
  s.frame_length_s = static_cast<double>(n_samples) * t_sa;
  s.origin_txrx = "T" + std::to_string(tx_unit) + "R" + std::to_string(rx_unit);

  if (options_.fidelity == Fidelity::slot) {
    s.samples = clutter_waveform(tx_unit, rx_unit);

    // First-order echo per in-reach target, dropped when the sight line to
    // either end of the link is blocked by furniture or another body.
    const double reach = system_.zone_radius_m + options_.rx_margin_m;
    std::vector<chan::BoxOccluder> blockers;
    for (const auto& f : room_->furniture) blockers.push_back(chan::BoxOccluder::from_cuboid(f));
    for (const auto& t : targets) {
      const Vec2 pos = t.position;
      const Vec2 rx_xy(rx.x(), rx.y());
      const Vec2 tx_xy(tx.x(), tx.y());
      if ((pos - rx_xy).norm() > reach) continue;
      if ((pos - tx_xy).norm() > system_.tx_coverage_radius_m) continue;
      const Vec3 p(pos.x(), pos.y(), t.height_m);
      bool blocked = false;
      for (const auto& b : blockers)
        if (b.blocks(tx, p) || b.blocks(p, rx)) {
          blocked = true;
          break;
        }
      for (const auto& other : targets) {
        if (&other == &t) continue;
        const auto body = chan::BoxOccluder::from_target(other);
        if (body.blocks(tx, p) || body.blocks(p, rx)) {
          blocked = true;
          break;
        }
      }
      if (blocked) continue;

      const auto geom = chan::LinkGeometry::from_positions(tx, rx, pos, t.height_m);
      const double d_a = env::target_cross_section(t, tx);
      const double power =
          chan::received_power_bistatic_max(cfg, geom, t.reflection_factor, d_a);
      const double amp = cfg.responsivity_a_per_w * power;
      const double trip = ((tx - p).norm() + (p - rx).norm()) / kSpeedOfLight;
      const auto first = static_cast<std::ptrdiff_t>(std::ceil(trip / t_sa));
      const auto last = static_cast<std::ptrdiff_t>(std::floor((trip + tau) / t_sa));
      for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(first, 0);
           k < std::min<std::ptrdiff_t>(last, static_cast<std::ptrdiff_t>(n_samples)); ++k)
        s.samples[static_cast<std::size_t>(k)] += amp;
    }
  } else {
    chan::TraceOptions topt = options_.clutter_trace;
    topt.room_surfaces = options_.include_clutter;
    topt.target_surfaces = true;
    topt.window_s = static_cast<double>(spec.n_slots) * tau;
    topt.pulse_width_s = tau;
    const std::vector<env::TargetState> tvec(targets.begin(), targets.end());
    const auto ir = chan::impulse_response(*room_, cfg, tvec, topt);
    fe::NoiseModel quiet;
    quiet.thermal_density = 0.0;
    quiet.background_current_a = 0.0;
    quiet.responsivity_a_per_w = cfg.responsivity_a_per_w;
    RandomStream unused = RandomStream::derive(0, 0);
    const auto snap = fe::simulate_snapshot(ir, tau, quiet, unused);
    s.samples.assign(n_samples, 0.0);
    const std::size_t n = std::min(n_samples, snap.samples.size());
    std::copy(snap.samples.begin(), snap.samples.begin() + static_cast<std::ptrdiff_t>(n),
              s.samples.begin());
  }

  // Slot-calibrated sample noise.
  const double sigma = options_.sigma_slot_a * std::sqrt(static_cast<double>(sps));
  if (sigma > 0.0)
    for (auto& v : s.samples) v += rng.gaussian(0.0, sigma);

  auto& link = links_[LinkKey{tx_unit, rx_unit}];
  s.index = static_cast<int>(link.frame_counter++);
  if (link.cube.snapshots.empty()) {
    link.cube.history_depth = options_.history_depth;
    link.cube.n_slots = spec.n_slots;
    link.cube.slot_width_s = tau;
  }
  link.cube.append(s);
  while (link.cube.snapshots.size() >
         static_cast<std::size_t>(options_.history_depth) + 1)
    link.cube.snapshots.erase(link.cube.snapshots.begin());
  return s;
}

const dst::SnapshotCube& ScanEngine::history(int tx_unit, int rx_unit) const {
  validate_link(tx_unit, rx_unit);
  const auto it = links_.find(LinkKey{tx_unit, rx_unit});
  if (it == links_.end()) throw std::runtime_error("ScanEngine: link has no history");
  return it->second.cube;
}

bool ScanEngine::history_ready(int tx_unit, int rx_unit) const {
  validate_link(tx_unit, rx_unit);
  const auto it = links_.find(LinkKey{tx_unit, rx_unit});
  return it != links_.end() &&
         it->second.cube.snapshots.size() >=
             static_cast<std::size_t>(options_.history_depth) + 1;
}

void ScanEngine::reset_history() {
  for (auto& [key, link] : links_) link.cube.snapshots.clear();
}

}  // namespace lidal::sim
