// SPDX-License-Identifier: Apache-2.0
//
// Multi-transceiver operation: zone layout and scan scheduling, monostatic
// and bistatic ranging, least-squares trilateration, duplicate elimination,
// and the closed-form system design figures.
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "lidal/channel.hpp"
#include "lidal/common.hpp"
#include "lidal/env.hpp"
#include "lidal/rng.hpp"

namespace lidal::sim {
class ScanEngine;  // frame synthesis + per-link history (scan.hpp)
}

namespace lidal::mimo {

/// One ceiling transceiver (collocated transmitter and receiver).
struct TransceiverUnit {
  int id = 0;
  Vec3 position{0.0, 0.0, 3.0};  ///< [m]
};

/// The multi-unit system: ceiling grid of transceivers, detection zones
/// (nearest-unit partition of the floor), and the neighbour-anchor map.
struct MimoSystem {
  std::vector<TransceiverUnit> units;
  double rx_fov_deg = 43.8;          ///< receiver acceptance semi-angle
  double target_height_m = 1.7;      ///< ranging reference height
  double zone_radius_m = 1.25;       ///< nominal optical-footprint radius
  double zone_overlap_m = 0.5;       ///< footprint overlap between neighbours
  double tx_coverage_radius_m = 4.8; ///< illumination footprint of one unit
  int anchors_per_zone = 2;          ///< K bistatic neighbours per zone
  std::vector<std::vector<int>> neighbor_map;  ///< per unit, K anchor ids

  /// Ceiling grid layout for the given room: 2 columns x 4 rows of units for
  /// the reference 4 m x 8 m room, zone radius from the receiver FOV.
  static MimoSystem standard(const env::Environment& room);

  int zone_count() const { return static_cast<int>(units.size()); }
  int frames_per_cycle() const { return zone_count() * (anchors_per_zone + 1); }
  /// Zone owning a floor point: nearest unit, ties to the lower id.
  int zone_of(const Vec2& p) const;
  const std::vector<int>& neighbors(int unit) const;
};

enum class RangeMode { monostatic, bistatic };

/// One resolved range to an anchor.
struct RangeObservation {
  int anchor = 0;
  double t_trip_s = 0.0;
  double range_m = 0.0;
  RangeMode mode = RangeMode::monostatic;
};

/// Round-trip ranging for a collocated transmitter/receiver: c*t/2.
double range_monostatic(double t_trip_s);

/// One-way-sum ranging for a neighbour anchor: c*t - r1, where r1 is the
/// already-resolved monostatic range. Throws if c*t < r1.
double range_bistatic(double t_trip_s, double r1_m);

/// Slant-to-floor projection: sqrt(max(0, slant^2 - height_gap^2)).
double horizontal_range(double slant_m, double height_gap_m);

/// Trilateration output.
struct PositionEstimate {
  Vec2 position{0.0, 0.0};
  int target_id = -1;     ///< per-scan label
  int anchors_used = 0;
  double residual_m = 0.0;   ///< mean |range - distance-to-estimate|
  bool clamped = false;      ///< true if the raw solution left the room
};

/// Least-squares circle intersection: anchors (x,y) with floor-plane ranges.
/// Needs >= 3 non-collinear anchors; throws on degenerate geometry.
PositionEstimate least_squares_position(const std::vector<Vec2>& anchors,
                                        const std::vector<double>& ranges_m);

/// Removes repeat sightings of one target across overlapping zones: any two
/// estimates closer than min_separation_m collapse onto the one with the
/// smaller residual. Idempotent.
std::vector<PositionEstimate> eliminate_duplicates(std::vector<PositionEstimate> estimates,
                                                   double min_separation_m);

/// Mean/stddev of the received echo power over the clothing ensemble.
struct PowerMoments {
  double mean_w = 0.0;
  double std_w = 0.0;
};

/// Echo power moments for a target at the zone edge (range r_max from the
/// unit), collocated transmitter and receiver.
PowerMoments edge_power_monostatic(const chan::TransceiverConfig& cfg, double r_max_m,
                                   double cross_section_m2, double mu_rho,
                                   double sigma_rho, double ceiling_m = 3.0,
                                   double target_height_m = 1.7);

/// Echo power moments for the distant-anchor bistatic link: transmitter at
/// 3*r_max horizontal range, receiver at r_max.
PowerMoments edge_power_bistatic(const chan::TransceiverConfig& cfg, double r_max_m,
                                 double cross_section_m2, double mu_rho,
                                 double sigma_rho, double ceiling_m = 3.0,
                                 double target_height_m = 1.7);

/// Closed-form design inputs for the 8-zone system.
struct MimoDesign {
  chan::TransceiverConfig transceiver;  ///< defaults already match the design
  double r_max_m = 1.25;
  double ceiling_m = 3.0;
  double target_height_m = 1.7;
  double cross_section_m2 = 0.29;  ///< side-on worst-case body cross-section
  double mu_rho = 0.6687;
  double sigma_rho = 0.225923;
  double threshold_factor_mono = 0.32;  ///< D_th as a fraction of the mono mean
  double threshold_factor_bi = 0.35;    ///< D_th as a fraction of the bistatic mean
  int neighbor_count = 2;               ///< K
  int zone_count = 8;
  double slot_width_s = 2e-9;
  double mac_frame_s = 0.1;
  /// Per-frame observation window used for the MAC overhead; when unset the
  /// computed channel window t_w is used.
  std::optional<double> observation_window_s;
};

/// Closed-form design figures.
struct SystemAnalysis {
  PowerMoments mono;
  PowerMoments bistatic;
  double d_th_mono_w = 0.0;
  double d_th_bi_w = 0.0;
  double p_miss_detect = 0.0;  ///< all anchors miss an edge target
  double p_localize = 0.0;     ///< mono and all K bistatic anchors detect
  double t_w_s = 0.0;          ///< echo spread window of one zone
  double t_cm = 0.0;           ///< separable-target capacity over all zones
  double oh_ml = 0.0;          ///< scan time as a fraction of the MAC frame
};

SystemAnalysis analyze_system(const MimoDesign& design);

/// Product rule over independent scans: p_mono * prod(p_bistatic).
double localization_probability(double p_d_mono, const std::vector<double>& p_d_bistatic);

/// Scan-interruption fraction: window * frames / mac_frame.
double mac_overhead(double window_s, int frames, double mac_frame_s);

/// One zone's outcome within a scan cycle.
struct ZoneReport {
  int zone = 0;
  std::vector<int> mono_slots;          ///< detector-flagged slots, gated
  std::vector<RangeObservation> ranges; ///< resolved ranges used for fixes
  int counted = 0;                      ///< localized targets credited here
};

/// Full-cycle outcome: per-zone reports plus the deduplicated position list.
struct ScanCycleResult {
  std::vector<ZoneReport> zones;
  std::vector<PositionEstimate> positions;
  int n_e = 0;  ///< total targets counted
};

/// Runs one full scan cycle (per zone: one monostatic frame, then one frame
/// per neighbour anchor), gates slots with the movement distinguisher when
/// history allows, resolves ranges, trilaterates, and removes duplicate
/// sightings across overlapping zones.
ScanCycleResult run_scan_cycle(sim::ScanEngine& engine,
                               std::span<const env::TargetState> targets,
                               RandomStream& rng);

}  // namespace lidal::mimo
