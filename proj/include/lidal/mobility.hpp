// SPDX-License-Identifier: Apache-2.0
//
// Target mobility: obstacle-aware random walks on a resolution-matched grid,
// pathway traversal, room population dynamics, and movement-detectability
// analytics.
#pragma once

#include <vector>

#include "lidal/common.hpp"
#include "lidal/env.hpp"
#include "lidal/rng.hpp"

namespace lidal::mob {

/// Walkable-floor grid with the cell pitch matched to the ranging resolution.
struct MobilityGrid {
  double cell_size_m = 0.3;
  int nx = 0;                    ///< cells along the room width (x)
  int ny = 0;                    ///< cells along the room length (y)
  std::vector<char> blocked;     ///< 1 if the cell overlaps a furniture footprint
  std::vector<int> n_allowed;    ///< unblocked in-bounds neighbours (of 8)

  int cell_count() const { return nx * ny; }
  int index(int ix, int iy) const { return iy * nx + ix; }
  bool in_bounds(int ix, int iy) const { return ix >= 0 && ix < nx && iy >= 0 && iy < ny; }
  Vec2 cell_center(int cell) const {
    return Vec2((cell % nx + 0.5) * cell_size_m, (cell / nx + 0.5) * cell_size_m);
  }
  int cell_at(const Vec2& p) const;  ///< -1 if outside the gridded area
};

/// Markov stepping model over the grid: per-cell stay probability, with the
/// move mass spread uniformly over the allowed neighbours.
struct TransitionModel {
  std::vector<double> stay;        ///< p_s per cell
  std::vector<int> interest_cells; ///< destinations of interest (nomadic rule)

  /// Uniform stay probability everywhere.
  static TransitionModel uniform(const MobilityGrid& grid, double p_stay);
  /// Nomadic rule: p_s = 1/|interest| at interest cells, 0 elsewhere.
  static TransitionModel nomadic(const MobilityGrid& grid, std::vector<int> interest);
};

enum class Behaviour { pedestrian, nomadic, pathway };

struct TracePoint {
  double t_s = 0.0;
  Vec2 position{0.0, 0.0};
  int cell = -1;             ///< grid cell for walk traces, -1 for pathways
  double heading_deg = 0.0;  ///< one of the 8 step directions
};

struct MobilityTrace {
  std::vector<TracePoint> points;
  Behaviour behaviour = Behaviour::pedestrian;
  double speed_m_s = 1.0;
  std::vector<double> interest_dwell_s;  ///< pauses spent at interest locations
};

/// Room population model: Poisson arrivals, single-exit departures.
struct PopulationProcess {
  double lambda_per_h = 12.0;  ///< arrival rate
  double gamma_per_h = 14.0;   ///< departure (exit-door service) rate
  double t_ob_s = 3600.0;      ///< observation window
};

/// One target's presence interval.
struct PresenceEvent {
  double t_arrive_s = 0.0;
  double t_depart_s = 0.0;
  double service_s = 0.0;  ///< exit-door holding time drawn at rate gamma
};

/// Grids the floor by floor division of the room extents; cells overlapping
/// any furniture footprint are blocked; neighbour counts use 8-connectivity.
MobilityGrid build_grid(const env::Environment& environment, double cell_size_m = 0.3);

/// Space utilization factor: mean fraction of the 8 neighbour directions not
/// lost to furniture, averaged over walkable cells. Walls do not count as
/// obstacles, so an empty room scores exactly 1. Isolated cells (no reachable
/// neighbour) are excluded from the average.
double suf(const MobilityGrid& grid);

/// Probability that a step is a move (location-averaged 1 - p_s). With
/// `empty_room` false the value is de-rated by the space utilization factor.
double p_mobility_detection(const MobilityGrid& grid, const TransitionModel& model,
                            bool empty_room);

/// Discrete-time Markov walk at a step cadence of speed/cell_size steps per
/// second. Nomadic behaviour re-draws the leg speed in [0.5, 2] m/s after
/// each interest-cell pause. Throws if the start cell is blocked.
MobilityTrace simulate_walk(const MobilityGrid& grid, const TransitionModel& model,
                            double speed_m_s, double duration_s, RandomStream& rng,
                            int start_cell = -1,
                            Behaviour behaviour = Behaviour::pedestrian);

/// One waypoint polyline; interest waypoints make nomadic traversals pause.
struct Pathway {
  std::vector<Vec2> waypoints;
  std::vector<char> interest;  ///< same length as waypoints (empty = none)
};

struct PathwayOptions {
  double sample_period_s = 0.2;  ///< trace emission cadence
  double dwell_min_s = 120.0;    ///< nomadic pause bounds at interest waypoints
  double dwell_max_s = 600.0;
  bool nomadic = false;
};

/// Constant-speed traversal of one pathway (cyclic when closed, ping-pong
/// otherwise). Throws if a segment crosses a furniture footprint.
MobilityTrace simulate_pathways(const env::Environment& environment,
                                const std::vector<Pathway>& paths, double speed_m_s,
                                double duration_s, RandomStream& rng,
                                const PathwayOptions& options = {});

/// Poisson arrivals over the window with one-at-a-time departures at the
/// service rate, so the long-run average population is lambda/(gamma-lambda).
/// Throws unless lambda < gamma.
std::vector<PresenceEvent> population_events(const PopulationProcess& process,
                                             RandomStream& rng);

/// Design population bound: round(rho/(1-rho)) with rho = lambda/gamma.
int max_concurrent_targets(const PopulationProcess& process);

/// Mobility factor (T_ob - sum dwell)/T_ob in [0,1]. Throws if the total
/// dwell exceeds the window.
double mobility_factor(double t_ob_s, const std::vector<double>& dwell_times_s);
double mobility_factor(const MobilityTrace& trace, double t_ob_s);

/// Destinations of interest: unblocked cells adjacent to furniture, spread
/// evenly; falls back to an even grid spread in an empty room.
std::vector<int> default_interest_cells(const MobilityGrid& grid, int count = 9);

}  // namespace lidal::mob
