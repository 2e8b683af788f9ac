// SPDX-License-Identifier: Apache-2.0
//
// Ray-traced impulse responses and closed-form link budgets for the
// ceiling-mounted pulse-reflection sensing geometry.
#pragma once

#include <vector>

#include "lidal/common.hpp"
#include "lidal/env.hpp"

namespace lidal::chan {

/// One transmit/receive unit. Monostatic iff tx_position == rx_position.
struct TransceiverConfig {
  Vec3 tx_position{2.0, 4.0, 3.0};  ///< [m]
  Vec3 rx_position{2.0, 4.0, 3.0};  ///< [m]
  double tx_power_w = 18.0;         ///< peak transmit optical power P_t
  double tx_lambertian = 0.5;       ///< emitter Lambertian order n
  double rx_area_m2 = 20e-6;        ///< photodetector area A_R
  double rx_fov_deg = 43.8;         ///< concentrator half-angle FOV
  double concentrator_index = 1.7;  ///< refractive index of the CPC
  double filter_transmission = 1.0; ///< optical filter transmission in [0,1]
  double responsivity_a_per_w = 0.4;

  bool monostatic() const { return (tx_position - rx_position).norm() < 1e-12; }
};

/// Link geometry between an emitter, a horizontal reflecting patch at target
/// height, and a receiver. All angles are referenced to the vertical.
struct LinkGeometry {
  double d_o = 3.0;   ///< mount drop: ceiling height [m]
  double h = 1.7;     ///< target patch height [m]
  double R1 = 0.0;    ///< slant emitter->patch [m]
  double R2 = 0.0;    ///< slant patch->receiver [m]
  double theta = 0.0; ///< irradiance angle at emitter [rad]
  double phi = 0.0;   ///< incidence angle on the patch [rad]
  double phi1 = 0.0;  ///< emission angle from the patch toward receiver [rad]
  double psi = 0.0;   ///< incidence angle at the receiver [rad]

  /// Geometry for a patch at given horizontal distances from emitter/receiver.
  static LinkGeometry from_horizontal(double r_tx_m, double r_rx_m, double d_o = 3.0,
                                      double h = 1.7);
  /// Geometry from actual 3-D unit positions and target footprint position.
  static LinkGeometry from_positions(const Vec3& tx, const Vec3& rx, const Vec2& target_xy,
                                     double h = 1.7);
};

/// Time-binned channel response. Bin values are energy densities [W]: bin
/// value x bin width = received energy in that bin for a single transmitted
/// pulse of duration tau at power P_t.
struct ImpulseResponse {
  double bin_width_s = 0.01e-9;
  double t0_s = 0.0;  ///< time of first bin's left edge
  std::vector<double> power_bins;

  double energy_j() const {
    double s = 0.0;
    for (double v : power_bins) s += v;
    return s * bin_width_s;
  }
};

/// One resolved propagation path.
struct PathContribution {
  double delay_s = 0.0;
  double power_w = 0.0;  ///< received power while the pulse transits this path
};

/// Ray-tracing fidelity and behavior switches.
struct TraceOptions {
  double elem_first_m = 0.05;    ///< element size for single-bounce paths
  double elem_second_m = 0.20;   ///< element size for double-bounce paths
  int max_order = 2;             ///< 1 or 2 bounces
  bool room_surfaces = true;     ///< walls/ceiling/floor/furniture reflect
  bool target_surfaces = true;   ///< target bodies reflect
  bool occlusion = true;         ///< furniture and target boxes block rays
  double window_s = 60e-9;       ///< paths later than this are dropped
  double pulse_width_s = 2e-9;   ///< transmit pulse width tau (for binning)
};

/// Horizontal sensing radius for a downward receiver: tan(FOV)*(d_o - h).
/// Throws if d_o <= h.
double max_range(double fov_deg, double d_o_m, double h_m);

/// Lambertian order from the emitter half-power semi-angle: -ln2/ln(cos phi).
/// Throws unless 0 < phi < 90 degrees.
double lambertian_order(double half_power_semi_angle_deg);

/// Ideal CPC concentrator gain N^2 / sin^2(FOV). Throws unless 0 < FOV <= 90.
double concentrator_gain(double refractive_index, double fov_deg);

/// Closed-form received power for the two-unit (bistatic) geometry with the
/// target presenting a horizontal patch of area d_A and reflectivity rho.
double received_power_bistatic_max(const TransceiverConfig& cfg, const LinkGeometry& geom,
                                   double rho, double d_A_m2);

/// Closed-form received power for the single-unit (monostatic) geometry.
double received_power_monostatic_max(const TransceiverConfig& cfg, const LinkGeometry& geom,
                                     double rho, double d_A_m2);

/// Full path enumeration: emitter -> element [-> element] -> receiver over
/// the discretized environment and target bodies.
std::vector<PathContribution> trace_paths(const env::Environment& environment,
                                          const TransceiverConfig& cfg,
                                          const std::vector<env::TargetState>& targets,
                                          const TraceOptions& options);

/// Ray-traced impulse response accumulated into 0.01 ns bins.
ImpulseResponse impulse_response(const env::Environment& environment,
                                 const TransceiverConfig& cfg,
                                 const std::vector<env::TargetState>& targets,
                                 const TraceOptions& options);
ImpulseResponse impulse_response(const env::Environment& environment,
                                 const TransceiverConfig& cfg,
                                 const std::vector<env::TargetState>& targets,
                                 int max_order = 2);

/// 3 dB magnitude bandwidth of the binned response (padded DFT + linear
/// interpolation; returns the bin-grid Nyquist if the spectrum never drops
/// 3 dB). Throws on an all-zero response.
double channel_bandwidth(const ImpulseResponse& ir);

/// Axis-aligned box occluder in a rotated local frame (heading about z).
struct BoxOccluder {
  Vec3 center;      ///< box center [m]
  Vec3 half_dims;   ///< half extents in the local frame [m]
  double cos_h = 1.0, sin_h = 0.0;  ///< heading rotation

  static BoxOccluder from_cuboid(const env::Cuboid& c);
  static BoxOccluder from_target(const env::TargetState& t);

  /// True if the open segment a->b passes through the box interior with a
  /// chord longer than `min_chord_m` (endpoints on the surface don't count).
  bool blocks(const Vec3& a, const Vec3& b, double min_chord_m = 2e-3) const;
};

}  // namespace lidal::chan
