// SPDX-License-Identifier: Apache-2.0
//
// Receiver front end: noise model, noisy sampled snapshots, and the
// zero-forcing equalizer.
#pragma once

#include <string>
#include <vector>

#include "lidal/channel.hpp"
#include "lidal/common.hpp"
#include "lidal/env.hpp"
#include "lidal/rng.hpp"

namespace lidal::fe {

/// Receiver noise parameterization (thermal + ambient shot noise).
struct NoiseModel {
  double thermal_density = 2.5e-12;     ///< input-referred current density [A/sqrt(Hz)]
  double background_current_a = 2.07e-6;///< ambient-light photocurrent I_b [A]
  double bandwidth_hz = 315e6;          ///< receiver noise bandwidth
  double responsivity_a_per_w = 0.4;    ///< photodetector responsivity
  bool include_signal_shot = false;     ///< signal-induced shot noise (off: negligible)
};

/// Total noise variance [A^2]: thermal_density^2*Bw + 2q*Bw*(I_b [+ R*P_r]).
double noise_variance(const NoiseModel& model, double received_power_w = 0.0);

/// One sampled measurement frame from one transmit/receive unit.
struct Snapshot {
  std::vector<double> samples;    ///< photocurrent [A]
  double sample_period_s = 0.1e-9;
  double slot_width_s = 2e-9;
  double frame_length_s = 0.0;
  std::string origin_txrx;        ///< originating unit identifier
  int index = 0;

  int samples_per_slot() const {
    return static_cast<int>(std::lround(slot_width_s / sample_period_s));
  }
};

/// Convolves the binned channel response with a rectangular pulse of width
/// `pulse_width_s`, converts to photocurrent via the responsivity, resamples
/// at T_sa, and adds i.i.d. N(0, sigma_t^2) noise per sample.
Snapshot simulate_snapshot(const chan::ImpulseResponse& ir, double pulse_width_s,
                           const NoiseModel& model, RandomStream& rng,
                           const std::string& origin = "", int index = 0);

/// Zero-forcing equalizer taps at slot spacing.
struct ZfeTaps {
  std::vector<double> weights;    ///< c[0..num_taps), c[0] applies to the main tap
  double tap_spacing_s = 2e-9;
  double noise_enhancement = 1.0; ///< sum of squared weights

  static ZfeTaps identity() { return {{1.0}, 2e-9, 1.0}; }
};

/// Designs taps forcing the slot-spaced channel (main tap first) to a unit
/// impulse over the tap span. Throws on a singular system (zero main tap).
ZfeTaps design_zfe(const std::vector<double>& slot_channel, int num_taps);

/// Slot-spaced FIR filtering of a snapshot with the given taps.
Snapshot equalize(const Snapshot& s, const ZfeTaps& taps);

/// Result of the worst-case channel search used as the ZFE design reference.
struct WorstCaseChannel {
  Vec2 target_position{0.0, 0.0};
  double rms_delay_spread_s = 0.0;
  std::vector<double> slot_taps;  ///< slot-integrated energies, normalized to main tap
};

/// Scans in-FOV target positions on a square grid and returns the channel
/// with the largest RMS delay spread, slot-sampled for equalizer design.
WorstCaseChannel worst_case_slot_channel(const env::Environment& environment,
                                         const chan::TransceiverConfig& cfg,
                                         double grid_step_m = 0.25,
                                         const chan::TraceOptions& trace =
                                             chan::TraceOptions{});

}  // namespace lidal::fe
