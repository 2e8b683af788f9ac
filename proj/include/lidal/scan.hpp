// SPDX-License-Identifier: Apache-2.0
//
// Frame synthesis for scan cycles: per-link slot windows, cached static
// clutter, closed-form or ray-traced target echoes, slot-calibrated noise,
// and per-link frame history for the movement distinguisher.
#pragma once

#include <map>
#include <span>
#include <utility>
#include <vector>

#include "lidal/channel.hpp"
#include "lidal/common.hpp"
#include "lidal/disting.hpp"
#include "lidal/env.hpp"
#include "lidal/frontend.hpp"
#include "lidal/mimo.hpp"
#include "lidal/rng.hpp"

namespace lidal::sim {

/// Echo synthesis tier. `slot` places closed-form echo pulses on the sample
/// grid (fast; first-order target echoes, cached static clutter). `full`
/// ray-traces the impulse response with the targets present every frame.
enum class Fidelity { slot, full };

/// Movement test applied when slot gating is on. Two-frame subtraction
/// reacts after a single prior frame but passes the current content of any
/// slot whose energy changed — including slots a target just vacated, whose
/// content is now static clutter. History correlation needs a full window
/// yet recognizes vacated and unchanged slots as static.
enum class MovementTest { subtraction, correlation };

struct ScanOptions {
  Fidelity fidelity = Fidelity::slot;
  mimo::MimoDesign design;          ///< link budget and thresholds
  double sample_period_s = 0.1e-9;
  double sigma_slot_a = 4.667e-8;   ///< per-slot noise current (detection tier)
  int guard_slots = 1;              ///< extra slots on both window edges
  double rx_margin_m = 0.35;        ///< body reach beyond the zone disc
  bool include_clutter = true;      ///< static room echoes in every frame
  bool distinguish = true;          ///< movement-gate slots when history allows
  MovementTest movement_test = MovementTest::correlation;
  int history_depth = 4;            ///< frames of history kept per link
  dst::CcmOptions ccm;              ///< sigma_t_a is recalibrated per sample
  chan::TraceOptions clutter_trace{0.1, 0.25, 1};  ///< static-cache tracing
  double max_fix_residual_m = 0.5;  ///< reject fixes with larger residuals
};

/// Slot-window geometry of one transmitter/receiver link.
struct FrameSpec {
  int n_slots = 0;    ///< frame length (slots start at trip delay zero)
  int slot_lo = 0;    ///< first slot of the detection window
  int slot_hi = 0;    ///< last slot of the detection window (inclusive)
};

/// Stateful frame source for one room + transceiver system. Holds the static
/// clutter cache and the rolling per-link history used by the distinguisher.
class ScanEngine {
 public:
  ScanEngine(const env::Environment& room, mimo::MimoSystem system, ScanOptions options = {});

  const env::Environment& environment() const { return *room_; }
  const mimo::MimoSystem& system() const { return system_; }
  const ScanOptions& options() const { return options_; }

  /// Per-slot detection thresholds [A] derived from the design operating
  /// points (fractions of the zone-edge mean echo current).
  double slot_threshold_mono_a() const { return d_mono_a_; }
  double slot_threshold_bi_a() const { return d_bi_a_; }

  /// Slot-window geometry for a link (cached after first use).
  const FrameSpec& frame_spec(int tx_unit, int rx_unit);

  /// Synthesizes the next frame on a link and appends it to that link's
  /// history. Targets outside the receiver's reach do not contribute.
  fe::Snapshot scan_frame(int tx_unit, int rx_unit,
                          std::span<const env::TargetState> targets,
                          RandomStream& rng);

  /// Rolling frame history of a link; throws if the link has never scanned.
  const dst::SnapshotCube& history(int tx_unit, int rx_unit) const;

  /// True once a link has a full history window plus the latest frame.
  bool history_ready(int tx_unit, int rx_unit) const;

  /// Drops all link histories (clutter cache and frame counters survive).
  void reset_history();

  /// Noiseless static-room echo waveform for a link (cached ray trace).
  const std::vector<double>& clutter_waveform(int tx_unit, int rx_unit);

 private:
  using LinkKey = std::pair<int, int>;
  struct LinkState {
    dst::SnapshotCube cube;
    long frame_counter = 0;
  };

  void validate_link(int tx_unit, int rx_unit) const;
  int samples_per_slot() const;

  const env::Environment* room_;
  mimo::MimoSystem system_;
  ScanOptions options_;
  double d_mono_a_ = 0.0;
  double d_bi_a_ = 0.0;
  std::map<LinkKey, FrameSpec> specs_;
  std::map<LinkKey, std::vector<double>> clutter_;
  std::map<LinkKey, LinkState> links_;
};

}  // namespace lidal::sim
