// SPDX-License-Identifier: Apache-2.0
//
// Distinguishing mobile human targets from static clutter: background
// subtraction over consecutive snapshots and fast/slow cross-correlation
// over a buffered snapshot history.
#pragma once

#include <optional>
#include <vector>

#include "lidal/detect.hpp"
#include "lidal/frontend.hpp"

namespace lidal::dst {

/// Ordered history of measurement frames from one transceiver.
struct SnapshotCube {
  std::vector<fe::Snapshot> snapshots;
  int history_depth = 4;       ///< S: frames summed by the slow correlator
  int n_slots = 0;             ///< frame length in slots
  double slot_width_s = 2e-9;

  /// Appends a frame; throws on sampling/length mismatch or non-increasing
  /// frame index.
  void append(fe::Snapshot s);
  int size() const { return static_cast<int>(snapshots.size()); }
  const fe::Snapshot& latest() const { return snapshots.back(); }
};

/// One significant correlation peak.
struct CorrelationPeak {
  double lag_s = 0.0;
  double value = 0.0;
};

/// Outcome of the correlation-based movement analysis.
struct MovementReport {
  int tmi = 0;                                    ///< binary target movement indicator
  std::vector<int> slot_weights;                  ///< w_j in {0,1}, length n_slots
  std::vector<CorrelationPeak> correlation_peaks; ///< significant peaks (fast correlator)
  std::vector<std::optional<double>> toa_per_slot;///< seconds, only for flagged slots
};

/// Tunables for the correlation detectors.
struct CcmOptions {
  double kappa = 4.0;            ///< significance factor over the noise floor
  double sigma_t_a = 4.667e-8;   ///< per-sample receiver noise std [A]
  double pulse_width_s = 2e-9;   ///< transmit pulse width (peak merging scale)
  int zero_lag_tolerance = 2;    ///< samples within which a peak counts as lag 0
};

/// Pointwise difference (later minus earlier): a target that moved shows a
/// positive pulse at its new delay and a negative one at the old delay.
/// Residual noise variance is 2 sigma_t^2. Throws on misaligned snapshots.
fe::Snapshot bsm_subtract(const fe::Snapshot& s_i, const fe::Snapshot& s_i1);

/// Full-window cross-correlation of two consecutive snapshots. The movement
/// indicator is raised when significant correlation structure exists away
/// from zero lag that is not part of a symmetric +-lag pair (a stationary
/// target and a stationary obstacle produce a symmetric pair; appearance,
/// disappearance, or displacement produce unpaired peaks).
MovementReport fast_xcorr(const fe::Snapshot& s_i, const fe::Snapshot& s_i1,
                          const CcmOptions& opts = {});

/// Slow per-slot correlation of the latest frame against the mean of the
/// previous `history_depth` frames. Returns the dominant peak lag and the
/// slot weight: 0 for static or empty content, 1 for changed content.
struct SlowCorrResult {
  double lag_s = 0.0;
  int weight = 0;
};
SlowCorrResult slow_xcorr(const SnapshotCube& cube, int slot_j, const CcmOptions& opts = {});

/// Matched-filter time-of-arrival per flagged slot (resolution = the sample
/// period). Unflagged slots get no estimate; flagged slots whose best match
/// stays under the significance floor get an absent marker.
std::vector<std::optional<double>> toa_estimate(const SnapshotCube& cube,
                                                const std::vector<int>& slot_weights,
                                                const std::vector<double>& pulse_template,
                                                const CcmOptions& opts = {});

/// Movement gating: zeroes slot coefficients whose weight is 0, so static
/// clutter never reaches the slot decoders.
det::SlotObservation gate_slots(const det::SlotObservation& obs,
                                const std::vector<int>& slot_weights);

/// Rectangular matched-filter template of the transmit pulse at T_sa.
std::vector<double> rectangular_template(double pulse_width_s, double sample_period_s);

}  // namespace lidal::dst
