// SPDX-License-Identifier: Apache-2.0
//
// Monte-Carlo experiment harness: counting and localization error metrics,
// scripted indoor scenarios swept over concurrent target counts, and the
// long-run occupancy case study with buffered batch counting.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "lidal/common.hpp"
#include "lidal/env.hpp"
#include "lidal/imgrx.hpp"
#include "lidal/mimo.hpp"
#include "lidal/mobility.hpp"
#include "lidal/rng.hpp"
#include "lidal/scan.hpp"

namespace lidal::sim {

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

/// Mean absolute percentage error between actual and estimated target counts,
/// in percent. Throws on size mismatch, empty input, or a zero actual count.
double mape(std::span<const int> actual, std::span<const int> estimated);

/// Distance root-mean-square error sqrt(E[dx^2] + E[dy^2]) over paired
/// positions, in metres. The expectation is taken over the raw coordinate
/// errors (no mean removal), so a constant offset is fully charged.
/// Throws on size mismatch or empty input.
double drmse(std::span<const Vec2> actual, std::span<const Vec2> estimated);

/// Greedy nearest-neighbour pairing: repeatedly matches the globally closest
/// remaining (truth, estimate) pair. Surplus entries on either side stay
/// unmatched. Returns (truth index, estimate index) pairs.
std::vector<std::pair<int, int>> associate(std::span<const Vec2> truth,
                                           std::span<const Vec2> estimates);

/// One step of an empirical distribution function.
struct CdfPoint {
  double value = 0.0;
  double fraction = 0.0;  ///< P(X <= value), right-continuous
};

/// Empirical CDF of a sample: sorted unique values with cumulative fractions
/// (duplicates collapse into one step). Throws on empty input.
std::vector<CdfPoint> empirical_cdf(std::vector<double> samples);

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class ScenarioId { one, two, three, case_study };

/// Localization system under test. `oracle` bypasses the physics and reports
/// the ground truth; it exists to verify the metric plumbing end to end.
enum class SystemKind { mimo, img, oracle };

/// Movement-distinguisher family. `bsm`/`ccm` name the waveform-domain tests
/// (two-frame subtraction / history correlation); `psm`/`pccm` are the same
/// two families in the pixel domain. Either spelling is accepted: the runner
/// maps the family onto whichever domain the selected system works in.
enum class Distinguisher { bsm, ccm, psm, pccm };

struct ScenarioConfig {
  ScenarioId scenario = ScenarioId::one;
  SystemKind system = SystemKind::mimo;
  Distinguisher distinguisher = Distinguisher::ccm;

  int max_targets = 15;   ///< sweep 1..max_targets concurrent targets
  int iterations = 50;    ///< Monte-Carlo iterations per target count
  std::uint64_t seed = 1;
  Fidelity fidelity = Fidelity::slot;  ///< echo-synthesis tier (waveform system)
  int threads = 1;        ///< worker threads over scenario iterations

  /// Explicit target counts to sweep; empty means 1..max_targets.
  std::vector<int> target_counts;

  // --- sampling cadence and per-iteration observation -----------------------
  double snapshot_period_s = 0.2;  ///< five scan snapshots per second
  int warmup_snapshots = 5;        ///< history fill before counting starts
  int measure_snapshots = 5;       ///< counted snapshots per iteration

  // --- mobility --------------------------------------------------------------
  double pedestrian_speed_m_s = 1.0;
  double min_separation_m = 0.5;   ///< spawn spacing between target centres
  /// Scenario 3: fraction of time a nomadic target spends moving. Each target
  /// runs a move/pause duty cycle of this period at a random phase.
  double mobility_factor = 1.0;
  double nomadic_cycle_s = 8.0;
  double nomadic_speed_min_m_s = 0.5;  ///< leg-speed bounds for nomadic targets
  double nomadic_speed_max_m_s = 2.0;

  // --- case study -------------------------------------------------------------
  double observation_window_s = 3600.0;
  int buffer_snapshots = 1000;     ///< batch length for the counting tracker
  double lambda_per_h = 12.0;      ///< Poisson arrival rate
  double gamma_per_h = 14.0;       ///< exit-door service rate
  bool pathway_mode = true;        ///< false: obstacle-aware random walk
  bool nomadic = false;            ///< dwell at interest points, 0.5-2 m/s legs
  double dwell_min_s = 120.0;      ///< nomadic pause bounds
  double dwell_max_s = 280.0;
  double track_gate_m = 0.75;      ///< batch-tracker association radius
  /// Pathway set for pathway mode; empty selects a built-in loop that
  /// threads the furnished room's free corridors.
  std::vector<mob::Pathway> pathways;

  // --- room and engines -------------------------------------------------------
  /// Room preset override; empty selects by scenario (1 = empty room,
  /// 2/3/case study = furnished office).
  std::optional<env::EnvironmentConfig> room;
  /// Waveform-engine tunables. `fidelity` and the distinguisher wiring above
  /// override the corresponding fields at run time.
  ScanOptions mimo_options;
  /// Pixel-engine tunables; the distinguisher wiring overrides `gate`.
  img::ImagingOptions img_options;
};

// ---------------------------------------------------------------------------
// Scenario sweeps (concurrent-count accuracy)
// ---------------------------------------------------------------------------

/// One Monte-Carlo iteration's outcome.
struct IterationRow {
  int n_targets = 0;   ///< configured concurrent targets (the sweep variable)
  int iteration = 0;   ///< 1-based iteration index
  int actual = 0;      ///< ground-truth count
  int estimated = 0;   ///< system count for the iteration
  double count_error = 0.0;          ///< |actual - estimated| / actual
  std::optional<double> drmse_m;     ///< localization error, absent if no matches
};

/// Aggregates for one concurrent-target count.
struct CountSummary {
  int n_targets = 0;
  double mape_pct = 0.0;             ///< mean count error over iterations, percent
  std::optional<double> drmse_m;     ///< pooled over all matched pairs
};

struct MetricsReport {
  ScenarioConfig config;
  std::vector<CountSummary> per_count;
  std::vector<IterationRow> rows;    ///< ordered by (n_targets, iteration)
  std::vector<CdfPoint> mape_cdf;    ///< per-iteration count errors, percent
  std::vector<CdfPoint> drmse_cdf;   ///< per-iteration localization errors, m
  double mape_avg_pct = 0.0;         ///< mean of the per-count MAPE values
  std::optional<double> drmse_avg_m; ///< mean of the per-count DRMSE values
};

/// Runs a counting-accuracy scenario (1 = empty room with pedestrians,
/// 2 = furnished room with pedestrians, 3 = furnished room with duty-cycled
/// nomadic targets). For each target count the per-target reflection factors
/// are drawn once and held fixed across iterations; each iteration re-draws
/// placements, motion, and receiver noise from an independent substream, so
/// results are bit-identical for a given seed regardless of thread count.
/// Throws on a case-study scenario id or invalid configuration.
MetricsReport run_scenario(const ScenarioConfig& config);

// ---------------------------------------------------------------------------
// Occupancy case study (long-run batch counting)
// ---------------------------------------------------------------------------

/// One buffering window's outcome.
struct BufferRow {
  int buffer = 0;
  double t_start_s = 0.0;
  double t_end_s = 0.0;
  double actual_mean = 0.0;  ///< time-averaged true occupancy over the window
  int estimated = 0;         ///< distinct targets tracked within the window
  /// |actual_mean - estimated| / actual_mean; absent when the room stayed
  /// empty for the whole window.
  std::optional<double> count_error;
};

struct CaseStudyReport {
  ScenarioConfig config;
  std::vector<BufferRow> buffers;
  double mape_pct = 0.0;             ///< mean buffer count error, percent
  std::vector<CdfPoint> mape_cdf;    ///< buffer count errors, percent
  std::optional<double> drmse_m;     ///< pooled snapshot-level position error
  int snapshots = 0;
  double expected_occupancy = 0.0;   ///< lambda / (gamma - lambda)
};

/// Runs the long-run occupancy study: Poisson arrivals into a single-exit
/// room, snapshots at the scan cadence, and per-buffer batch counting that
/// keeps a target on its last sighted position while it is stationary.
/// Throws unless the arrival rate is below the service rate.
CaseStudyReport run_case_study(const ScenarioConfig& config);

}  // namespace lidal::sim
