// SPDX-License-Identifier: Apache-2.0
#include "lidal/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace lidal::mob {

namespace {

constexpr int kOffsets[8][2] = {{1, 0},  {1, 1},   {0, 1},  {-1, 1},
                                {-1, 0}, {-1, -1}, {0, -1}, {1, -1}};

double heading_of(int dx, int dy) {
  return rad2deg(std::atan2(static_cast<double>(dy), static_cast<double>(dx)));
}

/// 2D segment-rectangle overlap (rectangle given by [x0,x1]x[y0,y1]).
bool segment_hits_rect(const Vec2& a, const Vec2& b, double x0, double x1, double y0,
                       double y1) {
  // Slab clipping of the parametric segment.
  double t0 = 0.0, t1 = 1.0;
  const double d[2] = {b.x() - a.x(), b.y() - a.y()};
  const double lo[2] = {x0, y0}, hi[2] = {x1, y1}, o[2] = {a.x(), a.y()};
  for (int k = 0; k < 2; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (o[k] < lo[k] || o[k] > hi[k]) return false;
      continue;
    }
    double u0 = (lo[k] - o[k]) / d[k];
    double u1 = (hi[k] - o[k]) / d[k];
    if (u0 > u1) std::swap(u0, u1);
    t0 = std::max(t0, u0);
    t1 = std::min(t1, u1);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

int MobilityGrid::cell_at(const Vec2& p) const {
  const int ix = static_cast<int>(std::floor(p.x() / cell_size_m));
  const int iy = static_cast<int>(std::floor(p.y() / cell_size_m));
  if (!in_bounds(ix, iy)) return -1;
  return index(ix, iy);
}

MobilityGrid build_grid(const env::Environment& environment, double cell_size_m) {
  if (cell_size_m <= 0.0) throw std::invalid_argument("build_grid: cell size must be > 0");
  MobilityGrid g;
  g.cell_size_m = cell_size_m;
  g.nx = static_cast<int>(std::floor(environment.width_m / cell_size_m));
  g.ny = static_cast<int>(std::floor(environment.length_m / cell_size_m));
  g.blocked.assign(static_cast<std::size_t>(g.cell_count()), 0);

  // Grazing contact along a shared edge is not an overlap; the tolerance
  // absorbs floating-point noise in abutting footprints.
  constexpr double kEdge = 1e-9;
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      const double x0 = ix * cell_size_m, x1 = x0 + cell_size_m;
      const double y0 = iy * cell_size_m, y1 = y0 + cell_size_m;
      for (const auto& f : environment.furniture) {
        const double fx0 = f.min_corner.x(), fx1 = fx0 + f.dims.x();
        const double fy0 = f.min_corner.y(), fy1 = fy0 + f.dims.y();
        if (x0 < fx1 - kEdge && x1 > fx0 + kEdge && y0 < fy1 - kEdge && y1 > fy0 + kEdge) {
          g.blocked[g.index(ix, iy)] = 1;
          break;
        }
      }
    }

  g.n_allowed.assign(static_cast<std::size_t>(g.cell_count()), 0);
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      const int c = g.index(ix, iy);
      if (g.blocked[c]) continue;
      int n = 0;
      for (const auto& o : kOffsets) {
        const int jx = ix + o[0], jy = iy + o[1];
        if (g.in_bounds(jx, jy) && !g.blocked[g.index(jx, jy)]) ++n;
      }
      g.n_allowed[c] = n;
    }
  return g;
}

double suf(const MobilityGrid& grid) {
  // Utilization counts furniture blockage only: a neighbour direction is
  // "lost" when the neighbouring cell exists and is blocked. Room walls do
  // not count as obstacles, so an empty room scores exactly 1.
  double total = 0.0;
  int counted = 0, isolated = 0;
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix) {
      const int c = grid.index(ix, iy);
      if (grid.blocked[c]) continue;
      if (grid.n_allowed[c] == 0) {
        ++isolated;
        continue;
      }
      int nb_blocked = 0;
      for (const auto& o : kOffsets) {
        const int jx = ix + o[0], jy = iy + o[1];
        if (grid.in_bounds(jx, jy) && grid.blocked[grid.index(jx, jy)]) ++nb_blocked;
      }
      total += static_cast<double>(8 - nb_blocked) / 8.0;
      ++counted;
    }
  if (isolated > 0)
    std::cerr << "suf: excluded " << isolated << " isolated cell(s) from the average\n";
  if (counted == 0) throw std::runtime_error("suf: no walkable cells");
  return total / static_cast<double>(counted);
}

TransitionModel TransitionModel::uniform(const MobilityGrid& grid, double p_stay) {
  if (p_stay < 0.0 || p_stay > 1.0)
    throw std::invalid_argument("TransitionModel: stay probability outside [0,1]");
  TransitionModel m;
  m.stay.assign(static_cast<std::size_t>(grid.cell_count()), p_stay);
  // Trapped cells can only stay.
  for (int c = 0; c < grid.cell_count(); ++c)
    if (grid.n_allowed[c] == 0) m.stay[c] = 1.0;
  return m;
}

TransitionModel TransitionModel::nomadic(const MobilityGrid& grid, std::vector<int> interest) {
  if (interest.empty()) throw std::invalid_argument("TransitionModel: no interest cells");
  TransitionModel m;
  m.stay.assign(static_cast<std::size_t>(grid.cell_count()), 0.0);
  const double p = 1.0 / static_cast<double>(interest.size());
  for (int c : interest) {
    if (c < 0 || c >= grid.cell_count() || grid.blocked[c])
      throw std::invalid_argument("TransitionModel: interest cell blocked or out of range");
    m.stay[c] = p;
  }
  for (int c = 0; c < grid.cell_count(); ++c)
    if (grid.n_allowed[c] == 0) m.stay[c] = 1.0;
  m.interest_cells = std::move(interest);
  return m;
}

double p_mobility_detection(const MobilityGrid& grid, const TransitionModel& model,
                            bool empty_room) {
  if (model.stay.size() != static_cast<std::size_t>(grid.cell_count()))
    throw std::invalid_argument("p_mobility_detection: model/grid size mismatch");
  double total = 0.0;
  int counted = 0;
  for (int c = 0; c < grid.cell_count(); ++c) {
    if (grid.blocked[c] || grid.n_allowed[c] == 0) continue;
    total += 1.0 - model.stay[c];
    ++counted;
  }
  if (counted == 0) return 0.0;
  const double p_move = total / static_cast<double>(counted);
  return empty_room ? p_move : p_move * suf(grid);
}

MobilityTrace simulate_walk(const MobilityGrid& grid, const TransitionModel& model,
                            double speed_m_s, double duration_s, RandomStream& rng,
                            int start_cell, Behaviour behaviour) {
  if (speed_m_s <= 0.0 || duration_s <= 0.0)
    throw std::invalid_argument("simulate_walk: speed and duration must be > 0");
  if (model.stay.size() != static_cast<std::size_t>(grid.cell_count()))
    throw std::invalid_argument("simulate_walk: model/grid size mismatch");

  if (start_cell < 0) {
    // Draw an unblocked start.
    for (int tries = 0; tries < 10000; ++tries) {
      const int c = rng.uniform_int(0, grid.cell_count() - 1);
      if (!grid.blocked[c]) {
        start_cell = c;
        break;
      }
    }
  }
  if (start_cell < 0 || start_cell >= grid.cell_count() || grid.blocked[start_cell])
    throw std::invalid_argument("simulate_walk: start cell blocked");

  MobilityTrace trace;
  trace.behaviour = behaviour;
  trace.speed_m_s = speed_m_s;

  int cell = start_cell;
  double heading = 0.0;
  double t = 0.0;
  double leg_speed = speed_m_s;
  double dwell_accum = 0.0;
  bool dwelling = false;

  trace.points.push_back({t, grid.cell_center(cell), cell, heading});
  while (true) {
    const double step_period = grid.cell_size_m / leg_speed;
    t += step_period;
    if (t > duration_s + 1e-12) break;

    const bool stays = rng.uniform() < model.stay[cell];
    if (stays) {
      if (behaviour == Behaviour::nomadic) {
        dwell_accum += step_period;
        dwelling = true;
      }
    } else {
      if (behaviour == Behaviour::nomadic && dwelling) {
        trace.interest_dwell_s.push_back(dwell_accum);
        dwell_accum = 0.0;
        dwelling = false;
        leg_speed = rng.uniform(0.5, 2.0);  // new transit, new pace
      }
      // Uniform draw over the allowed neighbours.
      const int ix = cell % grid.nx, iy = cell / grid.nx;
      int allowed[8], n = 0;
      for (int k = 0; k < 8; ++k) {
        const int jx = ix + kOffsets[k][0], jy = iy + kOffsets[k][1];
        if (grid.in_bounds(jx, jy) && !grid.blocked[grid.index(jx, jy)]) allowed[n++] = k;
      }
      if (n > 0) {
        const int k = allowed[rng.uniform_int(0, n - 1)];
        heading = heading_of(kOffsets[k][0], kOffsets[k][1]);
        cell = grid.index(ix + kOffsets[k][0], iy + kOffsets[k][1]);
      }
    }
    trace.points.push_back({t, grid.cell_center(cell), cell, heading});
  }
  if (dwelling) trace.interest_dwell_s.push_back(dwell_accum);
  return trace;
}

MobilityTrace simulate_pathways(const env::Environment& environment,
                                const std::vector<Pathway>& paths, double speed_m_s,
                                double duration_s, RandomStream& rng,
                                const PathwayOptions& options) {
  if (paths.empty()) throw std::invalid_argument("simulate_pathways: no pathways");
  if (speed_m_s <= 0.0 || duration_s <= 0.0)
    throw std::invalid_argument("simulate_pathways: speed and duration must be > 0");

  const Pathway& path = paths[rng.uniform_int(0, static_cast<int>(paths.size()) - 1)];
  const auto& wp = path.waypoints;
  if (wp.size() < 2) throw std::invalid_argument("simulate_pathways: need >= 2 waypoints");

  for (std::size_t i = 0; i + 1 < wp.size(); ++i) {
    if ((wp[i + 1] - wp[i]).norm() < 1e-12)
      throw std::invalid_argument("simulate_pathways: zero-length path segment");
    for (const auto& f : environment.furniture) {
      constexpr double kEdge = 1e-9;  // walking along a face is not a crossing
      const double x0 = f.min_corner.x() + kEdge, x1 = f.min_corner.x() + f.dims.x() - kEdge;
      const double y0 = f.min_corner.y() + kEdge, y1 = f.min_corner.y() + f.dims.y() - kEdge;
      if (segment_hits_rect(wp[i], wp[i + 1], x0, x1, y0, y1))
        throw std::invalid_argument("simulate_pathways: path crosses furniture");
    }
  }

  const bool closed = (wp.front() - wp.back()).norm() < 1e-9;
  MobilityTrace trace;
  trace.behaviour = Behaviour::pathway;
  trace.speed_m_s = speed_m_s;

  // March along the polyline (wrapping when closed, reversing otherwise),
  // emitting one point per sample period, pausing at interest waypoints.
  std::size_t seg = 0;
  int dir = 1;
  double along = 0.0;
  double pause_left = 0.0;
  auto interest_at = [&](std::size_t idx) {
    return options.nomadic && idx < path.interest.size() && path.interest[idx] != 0;
  };

  for (double t = 0.0; t <= duration_s + 1e-12; t += options.sample_period_s) {
    const Vec2 a = wp[seg];
    const Vec2 b = wp[seg + 1];
    const double seg_len = (b - a).norm();
    // `along` measures distance travelled on the current segment in the
    // current direction: from a when heading forward, from b when reversed.
    const Vec2 pos = dir > 0 ? Vec2(a + (b - a) * (along / seg_len))
                             : Vec2(b + (a - b) * (along / seg_len));
    const double heading = rad2deg(std::atan2((b - a).y() * dir, (b - a).x() * dir));
    trace.points.push_back({t, pos, -1, heading});

    if (pause_left > 0.0) {
      pause_left -= options.sample_period_s;
      continue;
    }
    along += speed_m_s * options.sample_period_s;
    while (along >= (wp[seg + 1] - wp[seg]).norm() - 1e-12) {
      along -= (wp[seg + 1] - wp[seg]).norm();
      std::size_t arrived;
      if (dir > 0) {
        if (seg + 2 < wp.size()) {
          ++seg;
          arrived = seg;
        } else if (closed) {
          seg = 0;
          arrived = 0;
        } else {
          dir = -1;
          arrived = seg + 1;
        }
      } else {
        if (seg > 0) {
          --seg;
          arrived = seg + 1;
        } else {
          dir = 1;
          arrived = 0;
        }
      }
      if (interest_at(arrived)) {
        const double dwell = rng.uniform(options.dwell_min_s, options.dwell_max_s);
        // Only the part of the pause inside the window counts as dwell.
        trace.interest_dwell_s.push_back(std::max(0.0, std::min(dwell, duration_s - t)));
        pause_left += dwell;
        break;
      }
    }
  }
  return trace;
}

std::vector<PresenceEvent> population_events(const PopulationProcess& process,
                                             RandomStream& rng) {
  if (process.lambda_per_h >= process.gamma_per_h)
    throw std::invalid_argument("population_events: need lambda < gamma for stability");
  if (process.lambda_per_h <= 0.0 || process.t_ob_s <= 0.0)
    throw std::invalid_argument("population_events: rates and window must be > 0");

  const double lam = process.lambda_per_h / 3600.0;  // per second
  const double gam = process.gamma_per_h / 3600.0;

  std::vector<PresenceEvent> events;
  // Poisson arrivals; one departure in progress at a time (single exit),
  // first-come first-served.
  double t = 0.0;
  while (true) {
    t += rng.exponential(lam);
    if (t > process.t_ob_s) break;
    PresenceEvent e;
    e.t_arrive_s = t;
    events.push_back(e);
  }
  double exit_free_at = 0.0;
  for (auto& e : events) {
    const double start = std::max(e.t_arrive_s, exit_free_at);
    e.service_s = rng.exponential(gam);
    e.t_depart_s = start + e.service_s;
    exit_free_at = e.t_depart_s;
  }
  return events;
}

int max_concurrent_targets(const PopulationProcess& process) {
  if (process.lambda_per_h >= process.gamma_per_h)
    throw std::invalid_argument("max_concurrent_targets: need lambda < gamma");
  const double rho = process.lambda_per_h / process.gamma_per_h;
  return static_cast<int>(std::llround(rho / (1.0 - rho)));
}

double mobility_factor(double t_ob_s, const std::vector<double>& dwell_times_s) {
  if (t_ob_s <= 0.0) throw std::invalid_argument("mobility_factor: window must be > 0");
  double total = 0.0;
  for (double d : dwell_times_s) {
    if (d < 0.0) throw std::invalid_argument("mobility_factor: negative dwell");
    total += d;
  }
  if (total > t_ob_s + 1e-9)
    throw std::invalid_argument("mobility_factor: dwell exceeds the window");
  return std::clamp((t_ob_s - total) / t_ob_s, 0.0, 1.0);
}

double mobility_factor(const MobilityTrace& trace, double t_ob_s) {
  return mobility_factor(t_ob_s, trace.interest_dwell_s);
}

std::vector<int> default_interest_cells(const MobilityGrid& grid, int count) {
  std::vector<int> candidates;
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix) {
      const int c = grid.index(ix, iy);
      if (grid.blocked[c] || grid.n_allowed[c] == 0) continue;
      bool near_furniture = false;
      for (const auto& o : kOffsets) {
        const int jx = ix + o[0], jy = iy + o[1];
        if (grid.in_bounds(jx, jy) && grid.blocked[grid.index(jx, jy)]) near_furniture = true;
      }
      if (near_furniture) candidates.push_back(c);
    }
  if (candidates.empty())  // empty room: spread over all walkable cells
    for (int c = 0; c < grid.cell_count(); ++c)
      if (!grid.blocked[c] && grid.n_allowed[c] > 0) candidates.push_back(c);
  if (candidates.empty()) throw std::runtime_error("default_interest_cells: no walkable cells");

  std::vector<int> picked;
  const int n = static_cast<int>(candidates.size());
  const int want = std::min(count, n);
  for (int k = 0; k < want; ++k)
    picked.push_back(candidates[static_cast<std::size_t>(k) * n / want + n / (2 * want)]);
  return picked;
}

}  // namespace lidal::mob
