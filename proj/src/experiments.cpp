// SPDX-License-Identifier: Apache-2.0
#include "lidal/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <optional>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace lidal::sim {

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

double mape(std::span<const int> actual, std::span<const int> estimated) {
  if (actual.size() != estimated.size())
    throw std::invalid_argument("mape: actual/estimated size mismatch");
  if (actual.empty()) throw std::invalid_argument("mape: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] == 0) throw std::invalid_argument("mape: zero actual count");
    sum += std::abs(actual[i] - estimated[i]) / static_cast<double>(actual[i]);
  }
  return 100.0 * sum / static_cast<double>(actual.size());
}

double drmse(std::span<const Vec2> actual, std::span<const Vec2> estimated) {
  if (actual.size() != estimated.size())
    throw std::invalid_argument("drmse: actual/estimated size mismatch");
  if (actual.empty()) throw std::invalid_argument("drmse: empty input");
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const Vec2 d = estimated[i] - actual[i];
    sx += d.x() * d.x();
    sy += d.y() * d.y();
  }
  const double n = static_cast<double>(actual.size());
  return std::sqrt(sx / n + sy / n);
}

std::vector<std::pair<int, int>> associate(std::span<const Vec2> truth,
                                           std::span<const Vec2> estimates) {
  struct Candidate {
    double d2;
    int t, e;
  };
  std::vector<Candidate> all;
  all.reserve(truth.size() * estimates.size());
  for (int t = 0; t < static_cast<int>(truth.size()); ++t)
    for (int e = 0; e < static_cast<int>(estimates.size()); ++e)
      all.push_back({(truth[static_cast<std::size_t>(t)] -
                      estimates[static_cast<std::size_t>(e)])
                         .squaredNorm(),
                     t, e});
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.d2, a.t, a.e) < std::tie(b.d2, b.t, b.e);
  });
  std::vector<char> t_used(truth.size(), 0), e_used(estimates.size(), 0);
  std::vector<std::pair<int, int>> pairs;
  for (const auto& c : all) {
    if (t_used[static_cast<std::size_t>(c.t)] || e_used[static_cast<std::size_t>(c.e)]) continue;
    t_used[static_cast<std::size_t>(c.t)] = 1;
    e_used[static_cast<std::size_t>(c.e)] = 1;
    pairs.emplace_back(c.t, c.e);
  }
  return pairs;
}

std::vector<CdfPoint> empirical_cdf(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("empirical_cdf: empty input");
  for (double v : samples)
    if (!std::isfinite(v)) throw std::invalid_argument("empirical_cdf: non-finite sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  std::vector<CdfPoint> cdf;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    // Duplicates collapse into the last occurrence's cumulative fraction.
    if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
    cdf.push_back({samples[i], static_cast<double>(i + 1) / n});
  }
  return cdf;
}

// ---------------------------------------------------------------------------
// Walkers and rooms
// ---------------------------------------------------------------------------

namespace {

constexpr double kWallMarginM = 0.2;   // body centres keep clear of the walls
constexpr double kLegMinS = 5.0;       // nomadic walking-leg duration bounds
constexpr double kLegMaxS = 15.0;
constexpr int kSpawnAttempts = 20000;

/// A target body plus its walking state.
struct Walker {
  env::TargetState body;
  double heading_rad = 0.0;
  double phase_s = 0.0;     ///< offset into the scenario-3 duty cycle
  double leg_speed = 1.0;   ///< speed of the current walking leg
  bool was_moving = false;
};

bool position_free(const mob::MobilityGrid& grid, const env::Environment& room, const Vec2& p) {
  if (p.x() < kWallMarginM || p.x() > room.width_m - kWallMarginM) return false;
  if (p.y() < kWallMarginM || p.y() > room.length_m - kWallMarginM) return false;
  const int cell = grid.cell_at(p);
  return cell >= 0 && grid.blocked[static_cast<std::size_t>(cell)] == 0;
}

Vec2 spawn_position(const mob::MobilityGrid& grid, const env::Environment& room,
                    std::span<const Vec2> placed, double min_separation_m,
                    RandomStream& rng) {
  for (int attempt = 0; attempt < kSpawnAttempts; ++attempt) {
    const Vec2 p(rng.uniform(kWallMarginM, room.width_m - kWallMarginM),
                 rng.uniform(kWallMarginM, room.length_m - kWallMarginM));
    if (!position_free(grid, room, p)) continue;
    bool clear = true;
    for (const Vec2& q : placed)
      if ((p - q).norm() < min_separation_m) {
        clear = false;
        break;
      }
    if (clear) return p;
  }
  throw std::runtime_error("spawn_position: no free spot satisfies the separation rule");
}

/// One walking step with obstacle avoidance: keep the heading (with an
/// occasional random turn), redraw it when the step would leave the walkable
/// floor, and stay put when boxed in.
void step_walker(Walker& w, const mob::MobilityGrid& grid, const env::Environment& room,
                 double dist_m, RandomStream& rng) {
  if (rng.uniform() < 0.25) w.heading_rad = rng.uniform(0.0, 2.0 * kPi);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const Vec2 cand =
        w.body.position + dist_m * Vec2(std::cos(w.heading_rad), std::sin(w.heading_rad));
    if (position_free(grid, room, cand)) {
      w.body.position = cand;
      w.body.heading_deg = rad2deg(w.heading_rad);
      return;
    }
    w.heading_rad = rng.uniform(0.0, 2.0 * kPi);
  }
}

env::Environment scenario_room(const ScenarioConfig& cfg) {
  if (cfg.room) return env::build_environment(*cfg.room);
  env::EnvironmentConfig ec;
  ec.preset = cfg.scenario == ScenarioId::one ? "A" : "B";
  return env::build_environment(ec);
}

/// Built-in loop threading the furnished office's free corridors: up the
/// central aisle, across the mid-room gap, up the left aisle, and along the
/// far wall. Every waypoint is a location of interest for nomadic dwells.
std::vector<mob::Pathway> default_pathways() {
  mob::Pathway p;
  p.waypoints = {Vec2(2.5, 0.9), Vec2(2.5, 2.4), Vec2(2.5, 4.0),
                 Vec2(1.75, 4.0), Vec2(1.0, 4.0), Vec2(1.0, 5.8),
                 Vec2(1.0, 7.7), Vec2(2.2, 7.7), Vec2(3.5, 7.7)};
  p.interest.assign(p.waypoints.size(), 1);
  return {p};
}

MovementTest movement_test_of(Distinguisher d) {
  return d == Distinguisher::bsm || d == Distinguisher::psm ? MovementTest::subtraction
                                                            : MovementTest::correlation;
}

img::PixelGate pixel_gate_of(Distinguisher d) {
  return d == Distinguisher::bsm || d == Distinguisher::psm ? img::PixelGate::psm
                                                            : img::PixelGate::pccm;
}

// ---------------------------------------------------------------------------
// System harness: one snapshot of whichever localizer is under test
// ---------------------------------------------------------------------------

struct SystemRun {
  int n_e = 0;
  std::vector<Vec2> positions;
};

class SystemHarness {
 public:
  SystemHarness(const ScenarioConfig& cfg, const env::Environment& room) : kind_(cfg.system) {
    if (kind_ == SystemKind::mimo) {
      ScanOptions o = cfg.mimo_options;
      o.fidelity = cfg.fidelity;
      o.movement_test = movement_test_of(cfg.distinguisher);
      engine_.emplace(room, mimo::MimoSystem::standard(room), std::move(o));
    } else if (kind_ == SystemKind::img) {
      img::ImagingOptions o = cfg.img_options;
      o.gate = pixel_gate_of(cfg.distinguisher);
      scanner_.emplace(room, mimo::MimoSystem::standard(room), img::ImagingReceiver{},
                       std::move(o));
    }
  }

  void reset() {
    if (engine_) engine_->reset_history();
    if (scanner_) scanner_->reset_history();
  }

  SystemRun snapshot(std::span<const env::TargetState> targets, RandomStream& rng) {
    SystemRun run;
    if (kind_ == SystemKind::mimo) {
      const auto cycle = mimo::run_scan_cycle(*engine_, targets, rng);
      run.n_e = cycle.n_e;
      for (const auto& fix : cycle.positions) run.positions.push_back(fix.position);
    } else if (kind_ == SystemKind::img) {
      const auto cycle = scanner_->run_grp_scan(targets, rng);
      run.n_e = cycle.n_e;
      for (const auto& fix : cycle.positions) run.positions.push_back(fix.position);
    } else {  // oracle: report the ground truth
      run.n_e = static_cast<int>(targets.size());
      for (const auto& t : targets) run.positions.push_back(t.position);
    }
    return run;
  }

 private:
  SystemKind kind_;
  std::optional<ScanEngine> engine_;
  std::optional<img::ImagingScanner> scanner_;
};

// ---------------------------------------------------------------------------
// Scenario iterations
// ---------------------------------------------------------------------------

struct IterationOutcome {
  IterationRow row;
  double sq_sum = 0.0;  ///< summed squared position errors of matched pairs
  int pairs = 0;
};

void advance_scenario_walker(Walker& w, const ScenarioConfig& cfg,
                             const mob::MobilityGrid& grid, const env::Environment& room,
                             double t_s, RandomStream& rng) {
  bool moving = true;
  double speed = cfg.pedestrian_speed_m_s;
  if (cfg.scenario == ScenarioId::three) {
    const double into = std::fmod(t_s + w.phase_s, cfg.nomadic_cycle_s);
    moving = into < cfg.mobility_factor * cfg.nomadic_cycle_s;
    if (moving && !w.was_moving)
      w.leg_speed = rng.uniform(cfg.nomadic_speed_min_m_s, cfg.nomadic_speed_max_m_s);
    speed = w.leg_speed;
  }
  w.was_moving = moving;
  if (!moving) return;
  step_walker(w, grid, room, speed * cfg.snapshot_period_s, rng);
}

IterationOutcome run_iteration(const ScenarioConfig& cfg, const env::Environment& room,
                               const mob::MobilityGrid& grid, SystemHarness& sys,
                               std::span<const double> rho, int n_targets, int iteration) {
  RandomStream rng = RandomStream::derive(cfg.seed, static_cast<std::uint64_t>(n_targets),
                                          static_cast<std::uint64_t>(iteration));
  sys.reset();

  std::vector<Walker> walkers;
  walkers.reserve(static_cast<std::size_t>(n_targets));
  std::vector<Vec2> placed;
  for (int k = 0; k < n_targets; ++k) {
    Walker w;
    w.body.position = spawn_position(grid, room, placed, cfg.min_separation_m, rng);
    placed.push_back(w.body.position);
    w.body.id = k;
    w.body.reflection_factor = rho[static_cast<std::size_t>(k)];
    w.heading_rad = rng.uniform(0.0, 2.0 * kPi);
    w.phase_s = rng.uniform(0.0, cfg.nomadic_cycle_s);
    w.leg_speed = cfg.pedestrian_speed_m_s;
    walkers.push_back(w);
  }

  const int total = cfg.warmup_snapshots + cfg.measure_snapshots;
  std::vector<env::TargetState> targets(static_cast<std::size_t>(n_targets));
  std::vector<Vec2> truth(static_cast<std::size_t>(n_targets));
  int best_ne = 0;
  double sq_sum = 0.0;
  int pairs = 0;

  for (int t = 0; t < total; ++t) {
    if (t > 0) {
      const double t_s = t * cfg.snapshot_period_s;
      for (auto& w : walkers) advance_scenario_walker(w, cfg, grid, room, t_s, rng);
    }
    for (int k = 0; k < n_targets; ++k) {
      targets[static_cast<std::size_t>(k)] = walkers[static_cast<std::size_t>(k)].body;
      truth[static_cast<std::size_t>(k)] = walkers[static_cast<std::size_t>(k)].body.position;
    }
    const SystemRun run = sys.snapshot(targets, rng);
    if (t < cfg.warmup_snapshots) continue;
    best_ne = std::max(best_ne, run.n_e);
    for (const auto& [ti, ei] : associate(truth, run.positions)) {
      sq_sum += (truth[static_cast<std::size_t>(ti)] -
                 run.positions[static_cast<std::size_t>(ei)])
                    .squaredNorm();
      ++pairs;
    }
  }

  IterationOutcome out;
  out.row.n_targets = n_targets;
  out.row.iteration = iteration;
  out.row.actual = n_targets;
  out.row.estimated = best_ne;
  out.row.count_error = std::abs(n_targets - best_ne) / static_cast<double>(n_targets);
  if (pairs > 0) out.row.drmse_m = std::sqrt(sq_sum / pairs);
  out.sq_sum = sq_sum;
  out.pairs = pairs;
  return out;
}

void validate_common(const ScenarioConfig& cfg) {
  if (cfg.iterations < 1) throw std::invalid_argument("experiments: iterations must be >= 1");
  if (cfg.threads < 1) throw std::invalid_argument("experiments: threads must be >= 1");
  if (cfg.snapshot_period_s <= 0.0)
    throw std::invalid_argument("experiments: snapshot period must be > 0");
  if (cfg.warmup_snapshots < 0 || cfg.measure_snapshots < 1)
    throw std::invalid_argument("experiments: need >= 0 warmup and >= 1 measured snapshots");
  if (cfg.pedestrian_speed_m_s <= 0.0)
    throw std::invalid_argument("experiments: pedestrian speed must be > 0");
  if (cfg.nomadic_speed_min_m_s <= 0.0 ||
      cfg.nomadic_speed_max_m_s < cfg.nomadic_speed_min_m_s)
    throw std::invalid_argument("experiments: bad nomadic speed bounds");
  if (cfg.min_separation_m < 0.0)
    throw std::invalid_argument("experiments: separation must be >= 0");
}

}  // namespace

// ---------------------------------------------------------------------------
// Scenario sweeps
// ---------------------------------------------------------------------------

MetricsReport run_scenario(const ScenarioConfig& cfg) {
  if (cfg.scenario == ScenarioId::case_study)
    throw std::invalid_argument("run_scenario: use run_case_study for the occupancy study");
  validate_common(cfg);
  if (cfg.mobility_factor < 0.0 || cfg.mobility_factor > 1.0)
    throw std::invalid_argument("run_scenario: mobility factor must be in [0, 1]");
  if (cfg.nomadic_cycle_s <= 0.0)
    throw std::invalid_argument("run_scenario: nomadic cycle must be > 0");

  std::vector<int> counts = cfg.target_counts;
  if (counts.empty()) {
    if (cfg.max_targets < 1)
      throw std::invalid_argument("run_scenario: max_targets must be >= 1");
    for (int n = 1; n <= cfg.max_targets; ++n) counts.push_back(n);
  }
  for (int n : counts)
    if (n < 1) throw std::invalid_argument("run_scenario: target counts must be >= 1");

  const env::Environment room = scenario_room(cfg);
  const mob::MobilityGrid grid = mob::build_grid(room);

  // Per-target reflection factors are drawn once per target count and held
  // fixed across iterations, from a substream independent of the iterations'.
  const env::ReflectivityModel refl;
  std::vector<std::vector<double>> rho(counts.size());
  for (std::size_t ci = 0; ci < counts.size(); ++ci) {
    RandomStream r =
        RandomStream::derive(cfg.seed, static_cast<std::uint64_t>(counts[ci]), 0);
    for (int k = 0; k < counts[ci]; ++k) rho[ci].push_back(refl.sample(r));
  }

  // Every (count, iteration) cell is an independent task with its own derived
  // random stream, so the merged results do not depend on the thread count.
  const int n_tasks = static_cast<int>(counts.size()) * cfg.iterations;
  std::vector<IterationOutcome> outcomes(static_cast<std::size_t>(n_tasks));
  auto run_block = [&](int lo, int hi) {
    SystemHarness sys(cfg, room);
    for (int idx = lo; idx < hi; ++idx) {
      const std::size_t ci = static_cast<std::size_t>(idx / cfg.iterations);
      const int j = idx % cfg.iterations + 1;
      outcomes[static_cast<std::size_t>(idx)] =
          run_iteration(cfg, room, grid, sys, rho[ci], counts[ci], j);
    }
  };

  const int n_threads = std::min(cfg.threads, n_tasks);
  if (n_threads <= 1) {
    run_block(0, n_tasks);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_threads));
    const int per = (n_tasks + n_threads - 1) / n_threads;
    for (int w = 0; w < n_threads; ++w) {
      const int lo = w * per;
      const int hi = std::min(n_tasks, lo + per);
      pool.emplace_back([&, w, lo, hi] {
        try {
          run_block(lo, hi);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& err : errors)
      if (err) std::rethrow_exception(err);
  }

  MetricsReport rep;
  rep.config = cfg;
  std::vector<double> all_err_pct;
  std::vector<double> all_drmse;
  double mape_sum = 0.0;
  double drmse_sum = 0.0;
  int drmse_defined = 0;
  for (std::size_t ci = 0; ci < counts.size(); ++ci) {
    double err_sum = 0.0, sq = 0.0;
    int pr = 0;
    for (int j = 0; j < cfg.iterations; ++j) {
      const auto& o = outcomes[ci * static_cast<std::size_t>(cfg.iterations) +
                               static_cast<std::size_t>(j)];
      rep.rows.push_back(o.row);
      err_sum += o.row.count_error;
      all_err_pct.push_back(100.0 * o.row.count_error);
      if (o.row.drmse_m) all_drmse.push_back(*o.row.drmse_m);
      sq += o.sq_sum;
      pr += o.pairs;
    }
    CountSummary cs;
    cs.n_targets = counts[ci];
    cs.mape_pct = 100.0 * err_sum / cfg.iterations;
    if (pr > 0) cs.drmse_m = std::sqrt(sq / pr);
    mape_sum += cs.mape_pct;
    if (cs.drmse_m) {
      drmse_sum += *cs.drmse_m;
      ++drmse_defined;
    }
    rep.per_count.push_back(cs);
  }
  rep.mape_avg_pct = mape_sum / static_cast<double>(counts.size());
  if (drmse_defined > 0) rep.drmse_avg_m = drmse_sum / drmse_defined;
  rep.mape_cdf = empirical_cdf(all_err_pct);
  if (!all_drmse.empty()) rep.drmse_cdf = empirical_cdf(all_drmse);
  return rep;
}

// ---------------------------------------------------------------------------
// Occupancy case study
// ---------------------------------------------------------------------------

namespace {

/// One visitor's presence interval and trajectory source.
struct Agent {
  int first_snap = 0;
  int last_snap = 0;  ///< exclusive
  std::vector<Vec2> path;           ///< pathway-mode positions per snapshot
  std::vector<double> path_heading;
  Walker w;
  RandomStream rng = RandomStream::derive(0, 0);
  bool moving = true;
  double state_left_s = 0.0;
};

void advance_case_walker(Agent& a, const ScenarioConfig& cfg, const mob::MobilityGrid& grid,
                         const env::Environment& room) {
  const double dt = cfg.snapshot_period_s;
  if (cfg.nomadic) {
    a.state_left_s -= dt;
    if (a.state_left_s <= 0.0) {
      a.moving = !a.moving;
      if (a.moving) {
        a.state_left_s = a.rng.uniform(kLegMinS, kLegMaxS);
        a.w.leg_speed = a.rng.uniform(cfg.nomadic_speed_min_m_s, cfg.nomadic_speed_max_m_s);
      } else {
        a.state_left_s = a.rng.uniform(cfg.dwell_min_s, cfg.dwell_max_s);
      }
    }
    if (!a.moving) return;
    step_walker(a.w, grid, room, a.w.leg_speed * dt, a.rng);
  } else {
    step_walker(a.w, grid, room, cfg.pedestrian_speed_m_s * dt, a.rng);
  }
}

/// Within-buffer track: a target keeps its last sighted position while it is
/// stationary (and therefore invisible to the movement-gated detectors).
struct Track {
  Vec2 last;
  int last_seen = 0;
};

}  // namespace

CaseStudyReport run_case_study(const ScenarioConfig& cfg) {
  if (cfg.scenario != ScenarioId::case_study)
    throw std::invalid_argument("run_case_study: scenario id must be case_study");
  validate_common(cfg);
  if (cfg.lambda_per_h <= 0.0 || cfg.gamma_per_h <= cfg.lambda_per_h)
    throw std::invalid_argument(
        "run_case_study: need 0 < arrival rate < departure service rate");
  if (cfg.observation_window_s <= 0.0)
    throw std::invalid_argument("run_case_study: observation window must be > 0");
  if (cfg.buffer_snapshots < 1)
    throw std::invalid_argument("run_case_study: buffer must hold >= 1 snapshot");
  if (cfg.dwell_min_s < 0.0 || cfg.dwell_max_s < cfg.dwell_min_s)
    throw std::invalid_argument("run_case_study: bad dwell bounds");
  if (cfg.track_gate_m <= 0.0)
    throw std::invalid_argument("run_case_study: track gate must be > 0");

  const env::Environment room = scenario_room(cfg);
  const mob::MobilityGrid grid = mob::build_grid(room);
  const std::vector<mob::Pathway> paths =
      cfg.pathways.empty() ? default_pathways() : cfg.pathways;
  const env::ReflectivityModel refl;
  const double dt = cfg.snapshot_period_s;
  const int snapshots = static_cast<int>(std::llround(cfg.observation_window_s / dt));

  // Visitors: Poisson arrivals, one-at-a-time departures through the exit.
  mob::PopulationProcess process;
  process.lambda_per_h = cfg.lambda_per_h;
  process.gamma_per_h = cfg.gamma_per_h;
  process.t_ob_s = cfg.observation_window_s;
  RandomStream pop_rng = RandomStream::derive(cfg.seed, 101);
  const auto events = mob::population_events(process, pop_rng);

  std::vector<Agent> agents;
  for (std::size_t idx = 0; idx < events.size(); ++idx) {
    Agent a;
    a.first_snap = static_cast<int>(std::ceil(events[idx].t_arrive_s / dt));
    a.last_snap =
        std::min(snapshots, static_cast<int>(std::ceil(events[idx].t_depart_s / dt)));
    if (a.first_snap >= a.last_snap) continue;
    a.rng = RandomStream::derive(cfg.seed, 201, idx);
    a.w.body.id = static_cast<int>(idx);
    a.w.body.reflection_factor = refl.sample(a.rng);
    if (cfg.pathway_mode) {
      const double speed =
          cfg.nomadic ? a.rng.uniform(cfg.nomadic_speed_min_m_s, cfg.nomadic_speed_max_m_s)
                      : cfg.pedestrian_speed_m_s;
      mob::PathwayOptions po;
      po.sample_period_s = dt;
      po.dwell_min_s = cfg.dwell_min_s;
      po.dwell_max_s = cfg.dwell_max_s;
      po.nomadic = cfg.nomadic;
      const double duration = (a.last_snap - a.first_snap) * dt;
      const auto trace = mob::simulate_pathways(room, paths, speed, duration, a.rng, po);
      a.path.reserve(trace.points.size());
      for (const auto& tp : trace.points) {
        a.path.push_back(tp.position);
        a.path_heading.push_back(tp.heading_deg);
      }
    } else {
      a.w.body.position = spawn_position(grid, room, {}, 0.0, a.rng);
      a.w.heading_rad = a.rng.uniform(0.0, 2.0 * kPi);
      a.moving = true;
      if (cfg.nomadic) {
        a.state_left_s = a.rng.uniform(kLegMinS, kLegMaxS);
        a.w.leg_speed = a.rng.uniform(cfg.nomadic_speed_min_m_s, cfg.nomadic_speed_max_m_s);
      }
    }
    agents.push_back(std::move(a));
  }

  SystemHarness sys(cfg, room);
  RandomStream scan_rng = RandomStream::derive(cfg.seed, 301);

  CaseStudyReport rep;
  rep.config = cfg;
  rep.snapshots = snapshots;
  rep.expected_occupancy = cfg.lambda_per_h / (cfg.gamma_per_h - cfg.lambda_per_h);

  const double max_speed = std::max(cfg.pedestrian_speed_m_s, cfg.nomadic_speed_max_m_s);
  std::vector<Track> tracks;
  double actual_sum = 0.0;
  int buffer_start = 0;
  double sq_sum = 0.0;
  long pairs = 0;
  std::vector<env::TargetState> targets;
  std::vector<Vec2> truth;

  auto flush_buffer = [&](int t_end) {
    BufferRow row;
    row.buffer = static_cast<int>(rep.buffers.size());
    row.t_start_s = buffer_start * dt;
    row.t_end_s = t_end * dt;
    const int len = t_end - buffer_start;
    row.actual_mean = len > 0 ? actual_sum / len : 0.0;
    row.estimated = static_cast<int>(tracks.size());
    if (row.actual_mean > 0.0)
      row.count_error = std::abs(row.actual_mean - row.estimated) / row.actual_mean;
    rep.buffers.push_back(row);
    tracks.clear();
    actual_sum = 0.0;
    buffer_start = t_end;
  };

  for (int t = 0; t < snapshots; ++t) {
    targets.clear();
    truth.clear();
    for (auto& a : agents) {
      if (t < a.first_snap || t >= a.last_snap) continue;
      if (cfg.pathway_mode) {
        const std::size_t k = std::min(static_cast<std::size_t>(t - a.first_snap),
                                       a.path.size() - 1);
        a.w.body.position = a.path[k];
        a.w.body.heading_deg = a.path_heading[k];
      } else if (t > a.first_snap) {
        advance_case_walker(a, cfg, grid, room);
      }
      targets.push_back(a.w.body);
      truth.push_back(a.w.body.position);
    }

    const SystemRun run = sys.snapshot(targets, scan_rng);
    actual_sum += static_cast<double>(targets.size());

    // Localization error against the instantaneous truth.
    for (const auto& [ti, ei] : associate(truth, run.positions)) {
      sq_sum += (truth[static_cast<std::size_t>(ti)] -
                 run.positions[static_cast<std::size_t>(ei)])
                    .squaredNorm();
      ++pairs;
    }

    // Batch tracker: greedy sighting-to-track association with a gate that
    // widens with the track's sighting age (a missed mover drifts away at
    // walking speed; a paused target reappears where it halted).
    std::vector<char> est_used(run.positions.size(), 0);
    struct Cand {
      double d;
      int tr, e;
    };
    std::vector<Cand> cands;
    for (int tr = 0; tr < static_cast<int>(tracks.size()); ++tr)
      for (int e = 0; e < static_cast<int>(run.positions.size()); ++e) {
        const double d = (tracks[static_cast<std::size_t>(tr)].last -
                          run.positions[static_cast<std::size_t>(e)])
                             .norm();
        const int age = t - tracks[static_cast<std::size_t>(tr)].last_seen;
        const double gate =
            std::min(cfg.track_gate_m + max_speed * dt * age, 3.0 * cfg.track_gate_m);
        if (d <= gate) cands.push_back({d, tr, e});
      }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return std::tie(a.d, a.tr, a.e) < std::tie(b.d, b.tr, b.e);
    });
    std::vector<char> tr_used(tracks.size(), 0);
    for (const auto& c : cands) {
      if (tr_used[static_cast<std::size_t>(c.tr)] || est_used[static_cast<std::size_t>(c.e)])
        continue;
      tr_used[static_cast<std::size_t>(c.tr)] = 1;
      est_used[static_cast<std::size_t>(c.e)] = 1;
      tracks[static_cast<std::size_t>(c.tr)].last = run.positions[static_cast<std::size_t>(c.e)];
      tracks[static_cast<std::size_t>(c.tr)].last_seen = t;
    }
    for (std::size_t e = 0; e < run.positions.size(); ++e)
      if (!est_used[e]) tracks.push_back({run.positions[e], t});

    if ((t + 1) % cfg.buffer_snapshots == 0 || t + 1 == snapshots) flush_buffer(t + 1);
  }

  std::vector<double> buffer_errors;
  for (const auto& row : rep.buffers)
    if (row.count_error) buffer_errors.push_back(100.0 * *row.count_error);
  if (!buffer_errors.empty()) {
    double s = 0.0;
    for (double e : buffer_errors) s += e;
    rep.mape_pct = s / static_cast<double>(buffer_errors.size());
    rep.mape_cdf = empirical_cdf(buffer_errors);
  }
  if (pairs > 0) rep.drmse_m = std::sqrt(sq_sum / static_cast<double>(pairs));
  return rep;
}

}  // namespace lidal::sim
