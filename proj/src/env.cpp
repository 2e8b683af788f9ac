// SPDX-License-Identifier: Apache-2.0

#include "lidal/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lidal::env {
namespace {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }

/// Mean and variance of a N(mu0, s0^2) variable truncated to [0,1].
void truncated_moments(double mu0, double s0, double& mean, double& var) {
  const double a = (0.0 - mu0) / s0;
  const double b = (1.0 - mu0) / s0;
  const double z = normal_cdf(b) - normal_cdf(a);
  const double pa = normal_pdf(a), pb = normal_pdf(b);
  const double lambda = (pa - pb) / z;
  mean = mu0 + s0 * lambda;
  var = s0 * s0 * (1.0 + (a * pa - b * pb) / z - lambda * lambda);
}

/// Solves pre-truncation (mu0, s0) so the [0,1]-truncated law has the target
/// moments. Newton iteration with a finite-difference Jacobian.
void solve_truncation_params(double target_mean, double target_sd, double& mu0, double& s0) {
  mu0 = target_mean;
  s0 = target_sd;
  const double h = 1e-7;
  for (int it = 0; it < 60; ++it) {
    double m, v;
    truncated_moments(mu0, s0, m, v);
    const double f1 = m - target_mean;
    const double f2 = std::sqrt(std::max(v, 0.0)) - target_sd;
    if (std::abs(f1) < 1e-12 && std::abs(f2) < 1e-12) break;
    double m1, v1, m2, v2;
    truncated_moments(mu0 + h, s0, m1, v1);
    truncated_moments(mu0, s0 + h, m2, v2);
    const double j11 = (m1 - m) / h, j12 = (m2 - m) / h;
    const double sd = std::sqrt(std::max(v, 1e-300));
    const double j21 = (std::sqrt(std::max(v1, 0.0)) - sd) / h;
    const double j22 = (std::sqrt(std::max(v2, 0.0)) - sd) / h;
    const double det = j11 * j22 - j12 * j21;
    if (std::abs(det) < 1e-14) break;
    mu0 -= (j22 * f1 - j12 * f2) / det;
    s0 -= (-j21 * f1 + j11 * f2) / det;
    s0 = std::max(s0, 1e-6);
  }
}

}  // namespace

std::vector<ReflectivityModel::ColourRow> ReflectivityModel::default_colour_table() {
  return {{"black", 0.07, 0.0},  {"yellow", 0.03, 0.5},  {"white", 0.04, 1.0},
          {"red", 0.08, 0.9},    {"purple", 0.14, 0.78}, {"orange", 0.05, 0.4},
          {"green", 0.14, 0.6},  {"brown", 0.03, 0.45},  {"blue", 0.42, 0.75}};
}

ReflectivityModel::ReflectivityModel(std::vector<ColourRow> table,
                                     std::optional<double> mu_override,
                                     std::optional<double> sigma_override)
    : table_(std::move(table)) {
  double wsum = 0.0, m1 = 0.0, m2 = 0.0;
  for (const auto& row : table_) {
    wsum += row.weight;
    m1 += row.weight * row.reflectivity;
    m2 += row.weight * row.reflectivity * row.reflectivity;
  }
  if (std::abs(wsum - 1.0) > 0.01)
    throw std::invalid_argument("ReflectivityModel: colour weights must sum to 1");
  mu_ = mu_override.value_or(m1 / wsum);
  sigma_ = sigma_override.value_or(std::sqrt(std::max(m2 / wsum - mu_ * mu_, 0.0)));
  if (!(mu_ > 0.0 && mu_ < 1.0))
    throw std::invalid_argument("ReflectivityModel: mean reflectivity outside (0,1)");
  if (sigma_ > 0.0) {
    solve_truncation_params(mu_, sigma_, mu0_, sigma0_);
  } else {
    mu0_ = mu_;
    sigma0_ = 0.0;
  }
}

double ReflectivityModel::sample(RandomStream& rng) const {
  if (sigma0_ <= 0.0) return mu_;
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.gaussian(mu0_, sigma0_);
    if (x >= 0.0 && x <= 1.0) return x;
  }
  return mu_;  // unreachable for sane parameters
}

Environment build_environment(const EnvironmentConfig& config) {
  auto check_rho = [](double r, const char* what) {
    if (!(r >= 0.0 && r <= 1.0))
      throw std::invalid_argument(std::string("build_environment: ") + what +
                                  " reflectivity outside [0,1]");
  };
  if (!(config.width_m > 0 && config.length_m > 0 && config.height_m > 0))
    throw std::invalid_argument("build_environment: room dimensions must be positive");
  check_rho(config.wall_reflectivity, "wall");
  check_rho(config.ceiling_reflectivity, "ceiling");
  check_rho(config.floor_reflectivity, "floor");
  check_rho(config.wood_reflectivity, "wood");

  Environment e;
  e.width_m = config.width_m;
  e.length_m = config.length_m;
  e.height_m = config.height_m;
  e.wall_reflectivity = config.wall_reflectivity;
  e.ceiling_reflectivity = config.ceiling_reflectivity;
  e.floor_reflectivity = config.floor_reflectivity;

  if (config.furniture_override) {
    e.furniture = *config.furniture_override;
  } else if (config.preset == "B") {
    const double rho = config.wood_reflectivity;
    // Two clusters of four desks (each desk 1.54 x 0.76 x 0.75 m, 2x2 layout)
    // and one bookshelf (3 x 0.8 x 2 m) against the far side wall.
    auto desk_group = [&](double cx, double cy, const std::string& tag) {
      std::vector<Cuboid> g;
      int k = 0;
      for (int ix : {-1, 1})
        for (int iy : {-1, 1}) {
          Cuboid d;
          d.dims = Vec3(0.76, 1.54, 0.75);
          d.min_corner = Vec3(cx + (ix < 0 ? -0.76 : 0.0), cy + (iy < 0 ? -1.54 : 0.0), 0.0);
          d.reflectivity = rho;
          d.name = tag + "-desk" + std::to_string(k++);
          g.push_back(d);
        }
      return g;
    };
    for (auto& d : desk_group(1.0, 2.0, "g1")) e.furniture.push_back(d);
    for (auto& d : desk_group(3.0, 6.0, "g2")) e.furniture.push_back(d);
    Cuboid shelf;
    shelf.dims = Vec3(0.8, 3.0, 2.0);
    shelf.min_corner = Vec3(config.width_m - 0.8, 2.5, 0.0);
    shelf.reflectivity = rho;
    shelf.name = "bookshelf";
    e.furniture.push_back(shelf);
    // One desk lamp per cluster; background current matches a measured desk
    // lamp scaled to the photodetector area.
    e.lamps.push_back({Vec3(1.0, 2.0, 0.75), 2.07e-6});
    e.lamps.push_back({Vec3(3.0, 6.0, 0.75), 2.07e-6});
  } else if (config.preset != "A") {
    throw std::invalid_argument("build_environment: unknown preset '" + config.preset + "'");
  }

  for (const auto& f : e.furniture) {
    check_rho(f.reflectivity, "furniture");
    const Vec3 hi = f.min_corner + f.dims;
    if (!e.contains(f.min_corner, 1e-9) || !e.contains(hi, 1e-9))
      throw std::invalid_argument("build_environment: furniture '" + f.name +
                                  "' extends outside the room");
  }
  return e;
}

namespace {

/// Tiles the rectangle spanned by (origin, u*u_len, v*v_len) into a grid of
/// elements no larger than `size` per side (rounded count, min 1).
void tile_rect(const Vec3& origin, const Vec3& u_dir, double u_len, const Vec3& v_dir,
               double v_len, const Vec3& normal, double size, double rho, double n_ele,
               std::vector<SurfaceElement>& out) {
  if (u_len <= 0.0 || v_len <= 0.0) return;
  const int nu = std::max(1, static_cast<int>(std::lround(u_len / size)));
  const int nv = std::max(1, static_cast<int>(std::lround(v_len / size)));
  const double du = u_len / nu, dv = v_len / nv;
  const double area = du * dv;
  out.reserve(out.size() + static_cast<std::size_t>(nu) * nv);
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      SurfaceElement e;
      e.center = origin + u_dir * ((i + 0.5) * du) + v_dir * ((j + 0.5) * dv);
      e.normal = normal;
      e.area = area;
      e.reflectivity = rho;
      e.lambertian_order = n_ele;
      out.push_back(e);
    }
}

}  // namespace

void discretize_cuboid(const Vec3& c, const Vec3& d, double size, double rho, double n_ele,
                       std::vector<SurfaceElement>& out) {
  const Vec3 ex(1, 0, 0), ey(0, 1, 0), ez(0, 0, 1);
  // -x / +x faces
  tile_rect(c, ey, d.y(), ez, d.z(), -ex, size, rho, n_ele, out);
  tile_rect(c + ex * d.x(), ey, d.y(), ez, d.z(), ex, size, rho, n_ele, out);
  // -y / +y faces
  tile_rect(c, ex, d.x(), ez, d.z(), -ey, size, rho, n_ele, out);
  tile_rect(c + ey * d.y(), ex, d.x(), ez, d.z(), ey, size, rho, n_ele, out);
  // -z / +z faces
  tile_rect(c, ex, d.x(), ey, d.y(), -ez, size, rho, n_ele, out);
  tile_rect(c + ez * d.z(), ex, d.x(), ey, d.y(), ez, size, rho, n_ele, out);
}

std::array<Vec2, 4> target_footprint(const TargetState& t) {
  const double th = deg2rad(t.heading_deg);
  const Vec2 f(std::cos(th), std::sin(th));   // facing direction
  const Vec2 s(-std::sin(th), std::cos(th));  // lateral direction
  const Vec2 hd = f * (0.5 * t.depth_m), hw = s * (0.5 * t.width_m);
  return {t.position + hd + hw, t.position + hd - hw, t.position - hd - hw,
          t.position - hd + hw};
}

void discretize_target(const TargetState& t, double size, std::vector<SurfaceElement>& out) {
  const double th = deg2rad(t.heading_deg);
  const Vec3 f(std::cos(th), std::sin(th), 0.0);
  const Vec3 s(-std::sin(th), std::cos(th), 0.0);
  const Vec3 up(0, 0, 1);
  const Vec3 base(t.position.x(), t.position.y(), 0.0);
  const double rho = t.reflection_factor;
  // Four vertical faces around the body box.
  const Vec3 front_org = base + f * (0.5 * t.depth_m) - s * (0.5 * t.width_m);
  tile_rect(front_org, s, t.width_m, up, t.height_m, f, size, rho, 1.0, out);
  const Vec3 back_org = base - f * (0.5 * t.depth_m) - s * (0.5 * t.width_m);
  tile_rect(back_org, s, t.width_m, up, t.height_m, -f, size, rho, 1.0, out);
  const Vec3 left_org = base - s * (0.5 * t.width_m) - f * (0.5 * t.depth_m);
  tile_rect(left_org, f, t.depth_m, up, t.height_m, -s, size, rho, 1.0, out);
  const Vec3 right_org = base + s * (0.5 * t.width_m) - f * (0.5 * t.depth_m);
  tile_rect(right_org, f, t.depth_m, up, t.height_m, s, size, rho, 1.0, out);
  // Top face (head/shoulder plane).
  const Vec3 top_org = base + up * t.height_m - f * (0.5 * t.depth_m) - s * (0.5 * t.width_m);
  tile_rect(top_org, f, t.depth_m, s, t.width_m, up, size, rho, 1.0, out);
}

std::vector<SurfaceElement> discretize_surfaces(const Environment& env, double size,
                                                const std::vector<TargetState>& targets) {
  if (!(size > 0.0)) throw std::invalid_argument("discretize_surfaces: element size must be > 0");
  std::vector<SurfaceElement> out;
  const Vec3 ex(1, 0, 0), ey(0, 1, 0), ez(0, 0, 1);
  const double W = env.width_m, L = env.length_m, H = env.height_m;
  // Walls (normals point into the room).
  tile_rect(Vec3(0, 0, 0), ey, L, ez, H, ex, size, env.wall_reflectivity, 1.0, out);
  tile_rect(Vec3(W, 0, 0), ey, L, ez, H, -ex, size, env.wall_reflectivity, 1.0, out);
  tile_rect(Vec3(0, 0, 0), ex, W, ez, H, ey, size, env.wall_reflectivity, 1.0, out);
  tile_rect(Vec3(0, L, 0), ex, W, ez, H, -ey, size, env.wall_reflectivity, 1.0, out);
  // Ceiling and floor.
  tile_rect(Vec3(0, 0, H), ex, W, ey, L, -ez, size, env.ceiling_reflectivity, 1.0, out);
  tile_rect(Vec3(0, 0, 0), ex, W, ey, L, ez, size, env.floor_reflectivity, 1.0, out);
  // Furniture: all faces except those flush against a room boundary.
  for (const auto& fc : env.furniture) {
    std::vector<SurfaceElement> faces;
    discretize_cuboid(fc.min_corner, fc.dims, size, fc.reflectivity, fc.lambertian_order, faces);
    for (const auto& e : faces) {
      const Vec3 p = e.center;
      const bool flush = (std::abs(p.x()) < 1e-6 && e.normal.x() < -0.5) ||
                         (std::abs(p.x() - W) < 1e-6 && e.normal.x() > 0.5) ||
                         (std::abs(p.y()) < 1e-6 && e.normal.y() < -0.5) ||
                         (std::abs(p.y() - L) < 1e-6 && e.normal.y() > 0.5) ||
                         (std::abs(p.z()) < 1e-6 && e.normal.z() < -0.5) ||
                         (std::abs(p.z() - H) < 1e-6 && e.normal.z() > 0.5);
      if (!flush) out.push_back(e);
    }
  }
  for (const auto& t : targets) discretize_target(t, size, out);
  return out;
}

double target_cross_section(const TargetState& target, const Vec3& observer_pos,
                            double min_vertical_m2) {
  if (!(observer_pos.z() > 0.0))
    throw std::invalid_argument("target_cross_section: observer must be above the floor");
  const Vec3 center(target.position.x(), target.position.y(), 0.5 * target.height_m);
  const Vec3 d = observer_pos - center;
  const double horiz = std::hypot(d.x(), d.y());
  const double elevation = std::atan2(d.z(), horiz);  // 0 = level, pi/2 = overhead
  double vertical = min_vertical_m2;
  if (horiz > 1e-12) {
    const double az = std::atan2(d.y(), d.x()) - deg2rad(target.heading_deg);
    const double front = std::abs(std::cos(az)) * target.width_m * target.height_m;
    const double side = std::abs(std::sin(az)) * target.depth_m * target.height_m;
    vertical = std::max(front + side, min_vertical_m2);
  }
  const double top = target.depth_m * target.width_m;
  return std::abs(std::cos(elevation)) * vertical + std::abs(std::sin(elevation)) * top;
}

}  // namespace lidal::env
