// SPDX-License-Identifier: Apache-2.0

#include "lidal/channel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lidal::chan {

LinkGeometry LinkGeometry::from_horizontal(double r_tx, double r_rx, double d_o, double h) {
  if (!(d_o > h)) throw std::invalid_argument("LinkGeometry: mount height must exceed target");
  LinkGeometry g;
  g.d_o = d_o;
  g.h = h;
  const double u = d_o - h;
  g.R1 = std::hypot(r_tx, u);
  g.R2 = std::hypot(r_rx, u);
  g.theta = std::atan2(r_tx, u);
  g.phi = g.theta;           // horizontal patch: incidence equals irradiance
  g.psi = std::atan2(r_rx, u);
  g.phi1 = g.psi;            // emission toward receiver mirrors its incidence
  return g;
}

LinkGeometry LinkGeometry::from_positions(const Vec3& tx, const Vec3& rx, const Vec2& xy,
                                          double h) {
  const double r_tx = std::hypot(tx.x() - xy.x(), tx.y() - xy.y());
  const double r_rx = std::hypot(rx.x() - xy.x(), rx.y() - xy.y());
  return from_horizontal(r_tx, r_rx, tx.z(), h);
}

double max_range(double fov_deg, double d_o, double h) {
  if (!(d_o > h)) throw std::invalid_argument("max_range: mount must be above target height");
  if (!(fov_deg > 0.0 && fov_deg < 90.0))
    throw std::invalid_argument("max_range: FOV must be in (0, 90) degrees");
  return std::tan(deg2rad(fov_deg)) * (d_o - h);
}

double lambertian_order(double half_angle_deg) {
  if (!(half_angle_deg > 0.0 && half_angle_deg < 90.0))
    throw std::invalid_argument("lambertian_order: half-power angle must be in (0, 90)");
  return -std::log(2.0) / std::log(std::cos(deg2rad(half_angle_deg)));
}

double concentrator_gain(double refractive_index, double fov_deg) {
  if (!(fov_deg > 0.0 && fov_deg <= 90.0))
    throw std::invalid_argument("concentrator_gain: FOV must be in (0, 90] degrees");
  const double s = std::sin(deg2rad(fov_deg));
  return refractive_index * refractive_index / (s * s);
}

double received_power_bistatic_max(const TransceiverConfig& cfg, const LinkGeometry& g,
                                   double rho, double d_A) {
  // Emitter Lambertian lobe onto the patch, diffuse re-emission toward the
  // receiver, concentrator gain and filter at the receiver. The patch is the
  // target's effective horizontal cross-section d_A.
  const double n = cfg.tx_lambertian;
  const double n_ele = 1.0;
  const double gc = concentrator_gain(cfg.concentrator_index, cfg.rx_fov_deg);
  const double c0 = (n + 1.0) * (n_ele + 1.0) * cfg.tx_power_w * d_A * cfg.rx_area_m2 *
                    cfg.filter_transmission * gc * rho;
  const double geom = std::pow(std::cos(g.theta), n) * std::cos(g.phi) *
                      std::pow(std::cos(g.phi1), n_ele) * std::cos(g.psi) /
                      (4.0 * kPi * kPi * g.R1 * g.R1 * g.R2 * g.R2);
  return c0 * geom;
}

double received_power_monostatic_max(const TransceiverConfig& cfg, const LinkGeometry& g,
                                     double rho, double d_A) {
  LinkGeometry m = g;
  m.R2 = m.R1;
  m.psi = m.theta;
  m.phi1 = m.phi;
  return received_power_bistatic_max(cfg, m, rho, d_A);
}

BoxOccluder BoxOccluder::from_cuboid(const env::Cuboid& c) {
  BoxOccluder b;
  b.center = c.min_corner + 0.5 * c.dims;
  b.half_dims = 0.5 * c.dims;
  return b;
}

BoxOccluder BoxOccluder::from_target(const env::TargetState& t) {
  BoxOccluder b;
  b.center = Vec3(t.position.x(), t.position.y(), 0.5 * t.height_m);
  b.half_dims = Vec3(0.5 * t.depth_m, 0.5 * t.width_m, 0.5 * t.height_m);
  const double th = deg2rad(t.heading_deg);
  b.cos_h = std::cos(th);
  b.sin_h = std::sin(th);
  return b;
}

bool BoxOccluder::blocks(const Vec3& a, const Vec3& b, double min_chord) const {
  // Transform into the box frame (rotate by -heading about z), then run the
  // slab test; require an interior chord so rays that merely start or end on
  // a face of this box are not self-blocked.
  auto to_local = [this](const Vec3& p) {
    const Vec3 d = p - center;
    return Vec3(cos_h * d.x() + sin_h * d.y(), -sin_h * d.x() + cos_h * d.y(), d.z());
  };
  const Vec3 o = to_local(a);
  const Vec3 e = to_local(b);
  const Vec3 dir = e - o;
  double t_enter = 0.0, t_exit = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double lo = -half_dims[k], hi = half_dims[k];
    if (std::abs(dir[k]) < 1e-12) {
      if (o[k] < lo || o[k] > hi) return false;
      continue;
    }
    double t1 = (lo - o[k]) / dir[k];
    double t2 = (hi - o[k]) / dir[k];
    if (t1 > t2) std::swap(t1, t2);
    t_enter = std::max(t_enter, t1);
    t_exit = std::min(t_exit, t2);
    if (t_enter >= t_exit) return false;
  }
  const double chord = (t_exit - t_enter) * dir.norm();
  return chord > min_chord;
}

namespace {

struct TraceContext {
  const TransceiverConfig* cfg;
  std::vector<BoxOccluder> occluders;
  double cos_fov;
  double gain_at_rx;  // A_R * T_f * G_c
  bool occlusion_on = true;

  bool clear(const Vec3& a, const Vec3& b) const {
    for (const auto& o : occluders)
      if (o.blocks(a, b)) return false;
    return true;
  }
};

/// Power delivered from the emitter onto one element [W].
double emitter_to_element(const TraceContext& ctx, const env::SurfaceElement& e, double& r1) {
  const TransceiverConfig& c = *ctx.cfg;
  const Vec3 d = e.center - c.tx_position;
  r1 = d.norm();
  if (r1 < 1e-9) return 0.0;
  const double cos_theta = -d.z() / r1;  // emitter boresight points down
  if (cos_theta <= 0.0) return 0.0;
  const double cos_in = -d.dot(e.normal) / r1;
  if (cos_in <= 0.0) return 0.0;
  if (ctx.occlusion_on && !ctx.clear(c.tx_position, e.center)) return 0.0;
  const double n = c.tx_lambertian;
  return c.tx_power_w * (n + 1.0) / (2.0 * kPi) * std::pow(cos_theta, n) * cos_in * e.area /
         (r1 * r1);
}

/// Fraction of an element's re-emitted power collected by the receiver [1].
double element_to_receiver(const TraceContext& ctx, const env::SurfaceElement& e, double& r2) {
  const TransceiverConfig& c = *ctx.cfg;
  const Vec3 d = c.rx_position - e.center;
  r2 = d.norm();
  if (r2 < 1e-9) return 0.0;
  const double cos_out = d.dot(e.normal) / r2;
  if (cos_out <= 0.0) return 0.0;
  const double cos_psi = d.z() / r2;  // receiver boresight points down
  if (cos_psi < ctx.cos_fov) return 0.0;
  if (ctx.occlusion_on && !ctx.clear(e.center, c.rx_position)) return 0.0;
  const double ne = e.lambertian_order;
  return e.reflectivity * (ne + 1.0) / (2.0 * kPi) * std::pow(cos_out, ne) * cos_psi *
         ctx.gain_at_rx / (r2 * r2);
}

}  // namespace

std::vector<PathContribution> trace_paths(const env::Environment& environment,
                                          const TransceiverConfig& cfg,
                                          const std::vector<env::TargetState>& targets,
                                          const TraceOptions& opt) {
  TraceContext ctx;
  ctx.cfg = &cfg;
  ctx.cos_fov = std::cos(deg2rad(cfg.rx_fov_deg));
  ctx.gain_at_rx = cfg.rx_area_m2 * cfg.filter_transmission *
                   concentrator_gain(cfg.concentrator_index, cfg.rx_fov_deg);
  ctx.occlusion_on = opt.occlusion;
  if (opt.occlusion) {
    for (const auto& f : environment.furniture)
      ctx.occluders.push_back(BoxOccluder::from_cuboid(f));
    for (const auto& t : targets) ctx.occluders.push_back(BoxOccluder::from_target(t));
  }

  auto elements = [&](double size) {
    std::vector<env::SurfaceElement> els;
    if (opt.room_surfaces) {
      els = env::discretize_surfaces(environment, size);
    }
    if (opt.target_surfaces)
      for (const auto& t : targets) env::discretize_target(t, size, els);
    return els;
  };

  std::vector<PathContribution> paths;
  const double c_light = kSpeedOfLight;

  // Single bounce: emitter -> element -> receiver.
  {
    const auto els = elements(opt.elem_first_m);
    for (const auto& e : els) {
      double r1 = 0.0, r2 = 0.0;
      const double p_hit = emitter_to_element(ctx, e, r1);
      if (p_hit <= 0.0) continue;
      const double frac = element_to_receiver(ctx, e, r2);
      if (frac <= 0.0) continue;
      const double delay = (r1 + r2) / c_light;
      if (delay > opt.window_s) continue;
      paths.push_back({delay, p_hit * frac});
    }
  }

  // Double bounce: emitter -> element -> element -> receiver.
  if (opt.max_order >= 2) {
    const auto els = elements(opt.elem_second_m);
    const std::size_t m = els.size();
    std::vector<double> p_in(m, 0.0), r_tx(m, 0.0), coll(m, 0.0), r_rx(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      p_in[i] = emitter_to_element(ctx, els[i], r_tx[i]);
      coll[i] = element_to_receiver(ctx, els[i], r_rx[i]);
    }
    for (std::size_t i = 0; i < m; ++i) {
      if (p_in[i] <= 0.0) continue;
      const auto& a = els[i];
      const double na = a.lambertian_order;
      const double emit_a = p_in[i] * a.reflectivity * (na + 1.0) / (2.0 * kPi);
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j || coll[j] <= 0.0) continue;
        const auto& b = els[j];
        const Vec3 d = b.center - a.center;
        const double r12 = d.norm();
        if (r12 < 1e-6) continue;
        const double cos_out = d.dot(a.normal) / r12;
        if (cos_out <= 0.0) continue;
        const double cos_in = -d.dot(b.normal) / r12;
        if (cos_in <= 0.0) continue;
        const double delay = (r_tx[i] + r12 + r_rx[j]) / c_light;
        if (delay > opt.window_s) continue;
        if (ctx.occlusion_on && !ctx.clear(a.center, b.center)) continue;
        const double p = emit_a * std::pow(cos_out, na) * cos_in * b.area / (r12 * r12) *
                         coll[j];
        if (p > 0.0) paths.push_back({delay, p});
      }
    }
  }
  return paths;
}

ImpulseResponse impulse_response(const env::Environment& environment,
                                 const TransceiverConfig& cfg,
                                 const std::vector<env::TargetState>& targets,
                                 const TraceOptions& opt) {
  const auto paths = trace_paths(environment, cfg, targets, opt);
  ImpulseResponse ir;
  ir.bin_width_s = 0.01e-9;
  ir.t0_s = 0.0;
  const std::size_t n_bins = static_cast<std::size_t>(std::ceil(opt.window_s / ir.bin_width_s));
  ir.power_bins.assign(n_bins, 0.0);
  // Bin values are energy densities: value * bin_width = energy deposited by
  // one tau-wide pulse via the paths landing in that bin.
  const double scale = opt.pulse_width_s / ir.bin_width_s;
  for (const auto& p : paths) {
    const auto k = static_cast<std::size_t>(p.delay_s / ir.bin_width_s);
    if (k < n_bins) ir.power_bins[k] += p.power_w * scale;
  }
  return ir;
}

ImpulseResponse impulse_response(const env::Environment& environment,
                                 const TransceiverConfig& cfg,
                                 const std::vector<env::TargetState>& targets, int max_order) {
  TraceOptions opt;
  opt.max_order = max_order;
  return impulse_response(environment, cfg, targets, opt);
}

double channel_bandwidth(const ImpulseResponse& ir) {
  double dc = 0.0;
  for (double v : ir.power_bins) dc += v;
  if (!(dc > 0.0)) throw std::invalid_argument("channel_bandwidth: all-zero response");

  // Sweep the transform magnitude upward from DC on a zero-padded grid to
  // bracket the 3 dB crossing, then bisect the continuous-frequency
  // magnitude inside the bracket.
  const auto magnitude_at = [&ir](double f_hz) {
    const double w = 2.0 * kPi * f_hz * ir.bin_width_s;
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < ir.power_bins.size(); ++i) {
      const double v = ir.power_bins[i];
      if (v == 0.0) continue;
      re += v * std::cos(w * static_cast<double>(i));
      im -= v * std::sin(w * static_cast<double>(i));
    }
    return std::hypot(re, im);
  };

  std::size_t padded = 1;
  while (padded < 4 * ir.power_bins.size()) padded <<= 1;
  const double df = 1.0 / (static_cast<double>(padded) * ir.bin_width_s);
  const double nyquist = 0.5 / ir.bin_width_s;
  const double target = dc / std::sqrt(2.0);

  for (std::size_t k = 1; k * df <= nyquist; ++k) {
    if (magnitude_at(static_cast<double>(k) * df) <= target) {
      double lo = static_cast<double>(k - 1) * df, hi = static_cast<double>(k) * df;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (magnitude_at(mid) > target ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }
  }
  return nyquist;
}

}  // namespace lidal::chan
