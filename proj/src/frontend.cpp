// SPDX-License-Identifier: Apache-2.0

#include "lidal/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace lidal::fe {

double noise_variance(const NoiseModel& m, double received_power_w) {
  const double thermal = m.thermal_density * m.thermal_density * m.bandwidth_hz;
  double current = m.background_current_a;
  if (m.include_signal_shot) current += m.responsivity_a_per_w * received_power_w;
  const double shot = 2.0 * kElementaryCharge * m.bandwidth_hz * current;
  return thermal + shot;
}

Snapshot simulate_snapshot(const chan::ImpulseResponse& ir, double pulse_width_s,
                           const NoiseModel& model, RandomStream& rng,
                           const std::string& origin, int index) {
  if (!(ir.bin_width_s < 0.1e-9 + 1e-15))
    throw std::invalid_argument("simulate_snapshot: response bins must be finer than T_sa");
  Snapshot s;
  s.origin_txrx = origin;
  s.index = index;
  const double t_sa = s.sample_period_s;
  const double span = ir.t0_s + static_cast<double>(ir.power_bins.size()) * ir.bin_width_s +
                      pulse_width_s;
  const auto n_samples = static_cast<std::size_t>(std::ceil(span / t_sa));
  s.frame_length_s = static_cast<double>(n_samples) * t_sa;
  s.samples.assign(n_samples, 0.0);

  // Received power at time t is the sum of bin energy densities within the
  // trailing pulse window (bin value * bin_width / tau = path power).
  const double to_power = ir.bin_width_s / pulse_width_s;
  const double resp = model.responsivity_a_per_w;
  std::vector<double> prefix(ir.power_bins.size() + 1, 0.0);
  for (std::size_t i = 0; i < ir.power_bins.size(); ++i)
    prefix[i + 1] = prefix[i] + ir.power_bins[i];
  const auto pulse_bins = static_cast<std::ptrdiff_t>(std::lround(pulse_width_s / ir.bin_width_s));
  for (std::size_t k = 0; k < n_samples; ++k) {
    const double t = static_cast<double>(k) * t_sa - ir.t0_s;
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(t / ir.bin_width_s)) + 1;
    const auto lo = hi - pulse_bins;
    const auto a = std::clamp<std::ptrdiff_t>(lo, 0, static_cast<std::ptrdiff_t>(prefix.size()) - 1);
    const auto b = std::clamp<std::ptrdiff_t>(hi, 0, static_cast<std::ptrdiff_t>(prefix.size()) - 1);
    const double power = (prefix[b] - prefix[a]) * to_power;
    s.samples[k] = resp * power;
  }

  const double sigma = std::sqrt(noise_variance(model));
  if (sigma > 0.0)
    for (auto& v : s.samples) v += rng.gaussian(0.0, sigma);
  return s;
}

ZfeTaps design_zfe(const std::vector<double>& f, int num_taps) {
  if (num_taps < 1) throw std::invalid_argument("design_zfe: need at least one tap");
  if (f.empty()) throw std::invalid_argument("design_zfe: empty channel");
  const int n = num_taps;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j <= k; ++j) {
      const int idx = k - j;
      if (idx < static_cast<int>(f.size())) a(k, j) = f[static_cast<std::size_t>(idx)];
    }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(0) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible())
    throw std::invalid_argument("design_zfe: singular forcing system (degenerate channel)");
  const Eigen::VectorXd c = lu.solve(rhs);
  ZfeTaps taps;
  taps.weights.assign(c.data(), c.data() + n);
  taps.noise_enhancement = c.squaredNorm();
  return taps;
}

Snapshot equalize(const Snapshot& s, const ZfeTaps& taps) {
  Snapshot out = s;
  const auto stride = static_cast<std::ptrdiff_t>(
      std::lround(taps.tap_spacing_s / s.sample_period_s));
  const auto n = static_cast<std::ptrdiff_t>(s.samples.size());
  for (std::ptrdiff_t m = 0; m < n; ++m) {
    double acc = 0.0;
    for (std::size_t t = 0; t < taps.weights.size(); ++t) {
      const std::ptrdiff_t idx = m - static_cast<std::ptrdiff_t>(t) * stride;
      if (idx >= 0) acc += taps.weights[t] * s.samples[static_cast<std::size_t>(idx)];
    }
    out.samples[static_cast<std::size_t>(m)] = acc;
  }
  return out;
}

WorstCaseChannel worst_case_slot_channel(const env::Environment& environment,
                                         const chan::TransceiverConfig& cfg,
                                         double grid_step_m, const chan::TraceOptions& trace) {
  const double d_o = cfg.rx_position.z();
  env::TargetState probe;
  const double radius = chan::max_range(cfg.rx_fov_deg, d_o, probe.height_m);
  WorstCaseChannel best;

  for (double dx = -radius; dx <= radius + 1e-9; dx += grid_step_m)
    for (double dy = -radius; dy <= radius + 1e-9; dy += grid_step_m) {
      if (std::hypot(dx, dy) > radius) continue;
      env::TargetState t = probe;
      t.position = Vec2(cfg.rx_position.x() + dx, cfg.rx_position.y() + dy);
      if (t.position.x() < 0.3 || t.position.x() > environment.width_m - 0.3 ||
          t.position.y() < 0.3 || t.position.y() > environment.length_m - 0.3)
        continue;
      const auto paths = chan::trace_paths(environment, cfg, {t}, trace);
      double e = 0.0, m1 = 0.0, m2 = 0.0;
      for (const auto& p : paths) {
        e += p.power_w;
        m1 += p.power_w * p.delay_s;
        m2 += p.power_w * p.delay_s * p.delay_s;
      }
      if (e <= 0.0) continue;
      m1 /= e;
      const double spread = std::sqrt(std::max(m2 / e - m1 * m1, 0.0));
      if (spread > best.rms_delay_spread_s) {
        best.rms_delay_spread_s = spread;
        best.target_position = t.position;
        // Slot-integrate path energies starting at the first arrival, then
        // anchor on the strongest slot: the detector assigns the echo to the
        // slot holding the energy peak, so that slot is the decode cursor and
        // only the trailing slots act as intersymbol interference the
        // equalizer must cancel.
        double t0 = paths.front().delay_s;
        for (const auto& p : paths) t0 = std::min(t0, p.delay_s);
        std::vector<double> slots;
        for (const auto& p : paths) {
          const auto k = static_cast<std::size_t>((p.delay_s - t0) / 2e-9);
          if (k >= slots.size()) slots.resize(k + 1, 0.0);
          slots[k] += p.power_w;
        }
        std::size_t anchor = 0;
        for (std::size_t i = 1; i < slots.size(); ++i)
          if (slots[i] > slots[anchor]) anchor = i;
        slots.erase(slots.begin(), slots.begin() + anchor);
        const double main = slots.empty() ? 1.0 : slots[0];
        if (main > 0.0)
          for (auto& v : slots) v /= main;
        best.slot_taps = std::move(slots);
      }
    }
  if (best.slot_taps.empty())
    throw std::runtime_error("worst_case_slot_channel: no valid in-FOV position found");
  return best;
}

}  // namespace lidal::fe
