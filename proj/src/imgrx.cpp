// SPDX-License-Identifier: Apache-2.0
#include "lidal/imgrx.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lidal::img {

namespace {

/// Receiver config for the imaging lens: entrance-pupil collection with unit
/// concentrator gain (the angle-dependent lens transmission is applied by the
/// caller on top of the geometric closed form).
chan::TransceiverConfig lens_config(const chan::TransceiverConfig& tx_cfg,
                                    const ImagingReceiver& rx) {
  chan::TransceiverConfig cfg = tx_cfg;
  cfg.rx_position = rx.position;
  cfg.rx_area_m2 = rx.lens_entrance_area_m2;
  cfg.concentrator_index = 1.0;
  cfg.rx_fov_deg = 90.0;
  cfg.filter_transmission = 1.0;
  return cfg;
}

void validate_receiver(const ImagingReceiver& rx) {
  if (rx.rows < 1 || rx.cols < 1) throw std::invalid_argument("pixel grid must be non-empty");
  if (!(rx.fov_deg > 0.0) || !(rx.fov_deg < 90.0))
    throw std::invalid_argument("lens FOV must lie in (0, 90) degrees");
  if (!(rx.lens_entrance_area_m2 > 0.0) || !(rx.refractive_index >= 1.0))
    throw std::invalid_argument("lens entrance area / index out of range");
  if (!(rx.spatial_resolution_m > 0.0))
    throw std::invalid_argument("spatial resolution must be positive");
}

}  // namespace

double ImagingReceiver::max_range_m(double target_height_m) const {
  validate_receiver(*this);
  const double drop = position.z() - target_height_m;
  if (!(drop > 0.0)) throw std::invalid_argument("receiver must sit above the target plane");
  return std::tan(deg2rad(fov_deg)) * drop;
}

double ImagingReceiver::zoom_ratio(double target_height_m) const {
  if (!(array_length_m > 0.0)) throw std::invalid_argument("detector length must be positive");
  return 2.0 * max_range_m(target_height_m) / array_length_m;
}

double ImagingReceiver::pixel_pitch_m(double target_height_m) const {
  return spatial_resolution_m / zoom_ratio(target_height_m);
}

double ImagingReceiver::exit_area_m2() const {
  validate_receiver(*this);
  const double s = std::sin(deg2rad(fov_deg));
  return lens_entrance_area_m2 * s * s / (refractive_index * refractive_index);
}

int PixelMap::index(int row, int col) const {
  if (row < 0 || row >= rows || col < 0 || col >= cols)
    throw std::out_of_range("pixel row/col outside the grid");
  return row * cols + col;
}

int PixelMap::pixel_at(const Vec2& p) const {
  const double x0 = origin.x() - 0.5 * cols * cell_m;
  const double y0 = origin.y() - 0.5 * rows * cell_m;
  const int col = static_cast<int>(std::floor((p.x() - x0) / cell_m));
  const int row = static_cast<int>(std::floor((p.y() - y0) / cell_m));
  if (row < 0 || row >= rows || col < 0 || col >= cols) return -1;
  return row * cols + col;
}

int PixelMap::group_of(int pixel) const {
  if (pixel < 0 || pixel >= static_cast<int>(pixels.size()))
    throw std::out_of_range("pixel index outside the grid");
  // Scan groups are the 2 m x 2 m floor blocks of the ceiling grid, numbered
  // column-fast from the room origin like the transceiver units.
  const Vec2& c = pixels[static_cast<size_t>(pixel)].center;
  const int cb = static_cast<int>(std::floor(c.x() / 2.0));
  const int rb = static_cast<int>(std::floor(c.y() / 2.0));
  return rb * 2 + cb;
}

PixelMap build_pixel_map(const ImagingReceiver& rx, const env::Environment& room,
                         double target_height_m) {
  validate_receiver(rx);
  if (!(rx.position.z() > target_height_m))
    throw std::invalid_argument("receiver must sit above the target plane");
  PixelMap map;
  map.rows = rx.rows;
  map.cols = rx.cols;
  map.cell_m = rx.spatial_resolution_m;
  map.origin = Vec2{rx.position.x(), rx.position.y()};

  const double width = map.cols * map.cell_m;
  const double length = map.rows * map.cell_m;
  const double x0 = map.origin.x() - 0.5 * width;
  const double y0 = map.origin.y() - 0.5 * length;
  constexpr double kTol = 1e-9;
  if (x0 < -kTol || y0 < -kTol || x0 + width > room.width_m + kTol ||
      y0 + length > room.length_m + kTol)
    throw std::invalid_argument("pixel footprints do not fit inside the floor");

  const double drop = rx.position.z() - target_height_m;
  map.pixels.reserve(static_cast<size_t>(map.rows * map.cols));
  for (int row = 0; row < map.rows; ++row) {
    for (int col = 0; col < map.cols; ++col) {
      PixelPatch p;
      p.row = row;
      p.col = col;
      p.center = Vec2{x0 + (col + 0.5) * map.cell_m, y0 + (row + 0.5) * map.cell_m};
      const double dx = p.center.x() - map.origin.x();
      const double dy = p.center.y() - map.origin.y();
      p.r_ground_m = std::hypot(dx, dy);
      p.elevation_rad = std::atan(p.r_ground_m / drop);
      p.azimuth_rad = std::atan2(dy, dx);
      map.pixels.push_back(p);
    }
  }
  return map;
}

double lens_transmission(double delta_rad) {
  // Quadratic fit to the lens transmission over the acceptance cone; the
  // lens is rotationally symmetric, so only the magnitude matters.
  const double d = std::abs(delta_rad);
  return -0.198 * d * d + 0.0425 * d + 0.8778;
}

mimo::PositionEstimate pixel_localize(int pixel, const PixelMap& map) {
  if (pixel < 0 || pixel >= static_cast<int>(map.pixels.size()))
    throw std::out_of_range("pixel index outside the grid");
  mimo::PositionEstimate e;
  e.position = map.pixels[static_cast<size_t>(pixel)].center;
  e.anchors_used = 1;
  e.residual_m = 0.0;
  e.clamped = false;
  return e;
}

mimo::PowerMoments pixel_power(const chan::TransceiverConfig& tx_cfg, const ImagingReceiver& rx,
                               const Vec2& reflector_xy, double mu_rho, double sigma_rho,
                               double cross_section_m2, double target_height_m) {
  if (mu_rho < 0.0 || mu_rho > 1.0 || sigma_rho < 0.0)
    throw std::invalid_argument("reflectivity moments out of range");
  if (!(cross_section_m2 > 0.0)) throw std::invalid_argument("cross-section must be positive");
  const auto geom = chan::LinkGeometry::from_positions(tx_cfg.tx_position, rx.position,
                                                       reflector_xy, target_height_m);
  const double base = chan::received_power_bistatic_max(lens_config(tx_cfg, rx), geom, 1.0,
                                                        cross_section_m2) *
                      lens_transmission(geom.psi);
  return {base * mu_rho, base * sigma_rho};
}

void PixelCube::append(PixelObservation obs) {
  if (obs.rows < 1 || obs.cols < 1 ||
      obs.z.size() != static_cast<size_t>(obs.rows) * static_cast<size_t>(obs.cols))
    throw std::invalid_argument("pixel observation length does not match its grid");
  if (!frames.empty() && (obs.rows != frames.front().rows || obs.cols != frames.front().cols))
    throw std::invalid_argument("pixel observation grid changed mid-history");
  if (history_depth < 1) throw std::invalid_argument("history depth must be at least 1");
  frames.push_back(std::move(obs));
  while (frames.size() > static_cast<size_t>(history_depth) + 1) frames.erase(frames.begin());
}

const PixelObservation& PixelCube::latest() const {
  if (frames.empty()) throw std::runtime_error("pixel cube holds no frames");
  return frames.back();
}

namespace {

/// Latest frame minus the mean of all stored prior frames.
std::vector<double> history_residual(const PixelCube& cube, int min_priors) {
  const int priors = cube.size() - 1;
  if (priors < min_priors)
    throw std::invalid_argument("pixel cube holds too few history frames");
  const auto& latest = cube.latest();
  std::vector<double> r(latest.z.size(), 0.0);
  for (int f = 0; f < priors; ++f) {
    const auto& z = cube.frames[static_cast<size_t>(f)].z;
    for (size_t i = 0; i < r.size(); ++i) r[i] += z[i];
  }
  for (size_t i = 0; i < r.size(); ++i) r[i] = latest.z[i] - r[i] / priors;
  return r;
}

}  // namespace

PccmResult pccm(const PixelCube& cube, const PixelMotionOptions& opts) {
  if (!(opts.kappa > 0.0) || opts.sigma_pixel_a < 0.0)
    throw std::invalid_argument("motion-test significance settings out of range");
  const auto diff = history_residual(cube, 2);
  const int s = cube.size() - 1;
  const double sigma_res = opts.sigma_pixel_a * std::sqrt(1.0 + 1.0 / s);
  const double thr = opts.kappa * sigma_res;

  PccmResult out;
  out.weights.assign(diff.size(), 0);
  int arrive = -1, depart = -1;
  double arrive_mag = 0.0, depart_mag = 0.0;
  for (size_t i = 0; i < diff.size(); ++i) {
    if (std::abs(diff[i]) <= thr) continue;
    // Only energy arrivals open the gate: a vacated footprint still holds
    // its static clutter, which must not pass to the marker.
    if (diff[i] > thr) out.weights[i] = 1;
    if (diff[i] > arrive_mag) {
      arrive_mag = diff[i];
      arrive = static_cast<int>(i);
    }
    if (-diff[i] > depart_mag) {
      depart_mag = -diff[i];
      depart = static_cast<int>(i);
    }
  }
  if (arrive >= 0 && depart >= 0) {
    out.displacement = arrive - depart;  // index shift of the dominant move
  } else if (arrive >= 0 || depart >= 0) {
    out.displacement = static_cast<int>(diff.size());  // entered or left the map
  }
  return out;
}

std::vector<double> psm(const PixelCube& cube) { return history_residual(cube, 1); }

std::set<int> soimr_decide(const PixelObservation& obs, double d_th_low, double d_th_high) {
  if (obs.rows < 1 || obs.cols < 1 ||
      obs.z.size() != static_cast<size_t>(obs.rows) * static_cast<size_t>(obs.cols))
    throw std::invalid_argument("pixel observation length does not match its grid");
  if (!(d_th_low >= 0.0) || d_th_low > d_th_high)
    throw std::invalid_argument("thresholds must satisfy 0 <= low <= high");

  std::set<int> marked;
  for (int row = 0; row < obs.rows; ++row) {
    for (int col = 0; col < obs.cols; ++col) {
      const int i = row * obs.cols + col;
      const double z = obs.z[static_cast<size_t>(i)];
      if (z <= d_th_low) continue;
      if (z > d_th_high) {
        marked.insert(i);
        continue;
      }
      // Straddle zone: the echo may be split among adjacent footprints, so
      // only the locally strongest of the above-floor neighbours is marked.
      bool strongest = true;
      for (int dr = -1; dr <= 1 && strongest; ++dr) {
        for (int dc = -1; dc <= 1 && strongest; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int r2 = row + dr, c2 = col + dc;
          if (r2 < 0 || r2 >= obs.rows || c2 < 0 || c2 >= obs.cols) continue;
          const int j = r2 * obs.cols + c2;
          const double zj = obs.z[static_cast<size_t>(j)];
          if (zj <= d_th_low) continue;
          if (zj > z || (zj == z && j < i)) strongest = false;
        }
      }
      if (strongest) marked.insert(i);
    }
  }
  return marked;
}

ImagingScanner::ImagingScanner(env::Environment room, mimo::MimoSystem transmitters,
                               ImagingReceiver receiver, ImagingOptions options)
    : room_(std::move(room)),
      grid_(std::move(transmitters)),
      rx_(receiver),
      options_(std::move(options)),
      map_(build_pixel_map(receiver, room_, options_.target_height_m)) {
  if (grid_.units.empty()) throw std::invalid_argument("transmitter grid is empty");
  if (options_.sigma_pixel_a < 0.0 || !(options_.kappa > 0.0))
    throw std::invalid_argument("noise-significance settings out of range");
  if (!(options_.threshold_factor > 0.0) || !(options_.straddle_divisor >= 1.0))
    throw std::invalid_argument("threshold settings out of range");
  if (options_.history_depth < 1 ||
      (options_.gate == PixelGate::pccm && options_.history_depth < 2))
    throw std::invalid_argument("history depth too small for the configured gate");
  cube_.history_depth = options_.history_depth;

  // Every pixel block needs a transmitter of the same id above it.
  for (int p = 0; p < static_cast<int>(map_.pixels.size()); ++p) {
    const int g = map_.group_of(p);
    const bool found = std::any_of(grid_.units.begin(), grid_.units.end(),
                                   [g](const mimo::TransceiverUnit& u) { return u.id == g; });
    if (!found) throw std::invalid_argument("pixel block has no transmitter above it");
  }

  // Detection design point: the weakest in-group echo mean over the pixel
  // map sets the high threshold; the low threshold admits a corner-straddled
  // echo split across footprints. Both are floored at the noise-significance
  // level so no threshold sits inside the noise. The square tiling lets the
  // outermost corner footprints poke slightly past the lens acceptance
  // radius; they stay scannable but do not set the design point.
  double worst_mean_a = std::numeric_limits<double>::infinity();
  const double resp = options_.transmitter.responsivity_a_per_w;
  const double fov_radius = rx_.max_range_m(options_.target_height_m);
  for (int p = 0; p < static_cast<int>(map_.pixels.size()); ++p) {
    const auto& patch = map_.pixels[static_cast<size_t>(p)];
    if (patch.r_ground_m > fov_radius) continue;
    chan::TransceiverConfig cfg = options_.transmitter;
    cfg.tx_position = unit_position(map_.group_of(p));
    const auto m = pixel_power(cfg, rx_, patch.center, options_.mu_rho, options_.sigma_rho,
                               options_.cross_section_m2, options_.target_height_m);
    worst_mean_a = std::min(worst_mean_a, resp * m.mean_w);
  }
  if (!std::isfinite(worst_mean_a))
    throw std::invalid_argument("no pixel footprint lies inside the lens acceptance cone");
  const double noise_floor = options_.kappa * options_.sigma_pixel_a;
  d_hi_a_ = std::max(options_.threshold_factor * worst_mean_a, noise_floor);
  d_lo_a_ = std::max(d_hi_a_ / options_.straddle_divisor, noise_floor);
}

Vec3 ImagingScanner::unit_position(int group) const {
  for (const auto& u : grid_.units)
    if (u.id == group) return u.position;
  throw std::invalid_argument("no transmitter for the requested scan group");
}

PixelObservation ImagingScanner::scan_cycle_raw(std::span<const env::TargetState> targets,
                                                RandomStream& rng) {
  const int n_px = static_cast<int>(map_.pixels.size());
  PixelObservation obs;
  obs.rows = map_.rows;
  obs.cols = map_.cols;
  obs.z.assign(static_cast<size_t>(n_px), 0.0);

  std::vector<chan::BoxOccluder> furniture;
  furniture.reserve(room_.furniture.size());
  for (const auto& c : room_.furniture) furniture.push_back(chan::BoxOccluder::from_cuboid(c));
  std::vector<chan::BoxOccluder> bodies;
  bodies.reserve(targets.size());
  for (const auto& t : targets) bodies.push_back(chan::BoxOccluder::from_target(t));

  const double resp = options_.transmitter.responsivity_a_per_w;
  const double d_o = rx_.position.z();
  const double h = options_.target_height_m;

  for (const auto& unit : grid_.units) {
    const Vec3 tx = unit.position;
    const Vec2 tx_xy{tx.x(), tx.y()};
    chan::TransceiverConfig cfg = lens_config(options_.transmitter, rx_);
    cfg.tx_position = tx;

    if (options_.include_clutter) {
      // Static room return per listening pixel: the footprint cone continued
      // to the first horizontal surface underneath (floor, or a furniture
      // top), reflecting diffusely back into the lens.
      for (int p = 0; p < n_px; ++p) {
        if (map_.group_of(p) != unit.id) continue;
        const Vec2& center = map_.pixels[static_cast<size_t>(p)].center;
        double z_surf = 0.0, rho = room_.floor_reflectivity;
        for (const auto& c : room_.furniture) {
          const double top = c.min_corner.z() + c.dims.z();
          if (center.x() >= c.min_corner.x() && center.x() <= c.min_corner.x() + c.dims.x() &&
              center.y() >= c.min_corner.y() && center.y() <= c.min_corner.y() + c.dims.y() &&
              top > z_surf && top < d_o - 0.05) {
            z_surf = top;
            rho = c.reflectivity;
          }
        }
        const double scale = (d_o - z_surf) / (d_o - h);
        const double patch_area = map_.cell_m * map_.cell_m * scale * scale;
        const auto geom = chan::LinkGeometry::from_positions(tx, rx_.position, center, z_surf);
        const double power = chan::received_power_bistatic_max(cfg, geom, rho, patch_area) *
                             lens_transmission(geom.psi);
        obs.z[static_cast<size_t>(p)] += resp * power;
      }
    }

    for (size_t ti = 0; ti < targets.size(); ++ti) {
      const auto& t = targets[ti];
      // Point-image model: the lens focuses the body's reflection onto the
      // pixel whose footprint holds the body center, during that pixel
      // block's own frame. (Spreading the echo over partially covered
      // footprints would double-mark off-center bodies under the global
      // double threshold; the straddle rule handles the knife-edge cases.)
      const int p = map_.pixel_at(t.position);
      if (p < 0 || map_.group_of(p) != unit.id) continue;
      if ((t.position - tx_xy).norm() > grid_.tx_coverage_radius_m) continue;
      const Vec3 head{t.position.x(), t.position.y(), t.height_m};
      bool blocked = false;
      for (const auto& b : furniture)
        if (b.blocks(tx, head) || b.blocks(head, rx_.position)) blocked = true;
      for (size_t tj = 0; tj < targets.size() && !blocked; ++tj)
        if (tj != ti && (bodies[tj].blocks(tx, head) || bodies[tj].blocks(head, rx_.position)))
          blocked = true;
      if (blocked) continue;
      const auto geom = chan::LinkGeometry::from_positions(tx, rx_.position, t.position,
                                                           t.height_m);
      const double d_a = env::target_cross_section(t, tx);
      obs.z[static_cast<size_t>(p)] +=
          resp * chan::received_power_bistatic_max(cfg, geom, t.reflection_factor, d_a) *
          lens_transmission(geom.psi);
    }
  }

  // Each pixel integrates during exactly one frame of the sweep.
  if (options_.sigma_pixel_a > 0.0)
    for (auto& z : obs.z) z += rng.gaussian(0.0, options_.sigma_pixel_a);
  return obs;
}

GrpScanReport ImagingScanner::run_grp_scan(std::span<const env::TargetState> targets,
                                           RandomStream& rng) {
  GrpScanReport rep;
  rep.aggregate = scan_cycle_raw(targets, rng);
  cube_.append(rep.aggregate);

  // Gate the map with the configured motion test once enough history exists;
  // until then the raw energies are thresholded directly.
  rep.gated = rep.aggregate.z;
  if (history_ready()) {
    if (options_.gate == PixelGate::psm) {
      rep.gated = psm(cube_);
    } else if (options_.gate == PixelGate::pccm) {
      const auto motion = pccm(cube_, {options_.kappa, options_.sigma_pixel_a});
      for (size_t i = 0; i < rep.gated.size(); ++i)
        if (!motion.weights[i]) rep.gated[i] = 0.0;
    }
  }

  // Marking is per pixel index, so a target seen from two transmitter frames
  // can only ever occupy one entry per pixel: repeat sightings collapse here.
  PixelObservation gated_obs;
  gated_obs.rows = rep.aggregate.rows;
  gated_obs.cols = rep.aggregate.cols;
  gated_obs.z = rep.gated;
  rep.marked = soimr_decide(gated_obs, d_lo_a_, d_hi_a_);

  int label = 0;
  for (int p : rep.marked) {
    auto e = pixel_localize(p, map_);
    e.target_id = label++;
    rep.positions.push_back(e);
  }
  rep.n_e = static_cast<int>(rep.marked.size());
  rep.frames_used = grid_.zone_count();
  return rep;
}

}  // namespace lidal::img
