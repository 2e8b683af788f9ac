// SPDX-License-Identifier: Apache-2.0
//
// Imaging receiver: a single ceiling-mounted lens/pixel-array sensor that
// localizes targets by which detector pixel their echo lands on. The floor
// (more precisely, the head plane at target height) is tiled into square
// pixel footprints; one frame per ceiling transmitter scans the room, each
// transmitter paired with the group of pixels covering its own floor block.
#pragma once

#include <set>
#include <span>
#include <vector>

#include "lidal/channel.hpp"
#include "lidal/common.hpp"
#include "lidal/env.hpp"
#include "lidal/mimo.hpp"

namespace lidal::img {

/// Lens + pixel-array receiver at the room center. Defaults describe a
/// 2 cm x 1 cm, 16 x 8 pixel detector behind a wide-angle lens whose zoom
/// maps 0.5 m of floor onto one 1.25 mm pixel, covering a 4 m x 8 m room.
struct ImagingReceiver {
  Vec3 position{2.0, 4.0, 3.0};          ///< lens center [m]
  double fov_deg = 72.0;                 ///< lens acceptance semi-angle
  double lens_entrance_area_m2 = 9.0 * kPi / 4.0 * 1e-4;  ///< 3 cm diameter
  double refractive_index = 1.7;         ///< lens material index
  int rows = 16;                         ///< pixels along room length (y)
  int cols = 8;                          ///< pixels along room width (x)
  double array_length_m = 0.02;          ///< detector long side, images y
  double array_width_m = 0.01;           ///< detector short side, images x
  double pixel_area_m2 = 1.56e-6;        ///< one pixel's active area
  double spatial_resolution_m = 0.5;     ///< floor cell mapped to one pixel

  int pixel_count() const { return rows * cols; }
  /// Ground radius the lens can image at the target plane: tan(FOV) * drop.
  double max_range_m(double target_height_m = 1.7) const;
  /// Optical zoom mapping the imaged disc diameter onto the array length.
  double zoom_ratio(double target_height_m = 1.7) const;
  /// Pixel pitch implied by the spatial resolution and the zoom.
  double pixel_pitch_m(double target_height_m = 1.7) const;
  /// Exit-pupil area: entrance area * sin^2(FOV) / N^2.
  double exit_area_m2() const;
};

/// One pixel's viewing geometry: the footprint center on the target plane,
/// its polar coordinates about the receiver ground point, and the elevation
/// angle (from the vertical) under which the lens sees it.
struct PixelPatch {
  int row = 0;
  int col = 0;
  Vec2 center{0.0, 0.0};       ///< absolute floor coordinates [m]
  double r_ground_m = 0.0;     ///< horizontal offset from the receiver axis
  double elevation_rad = 0.0;  ///< lens incidence angle of the footprint
  double azimuth_rad = 0.0;    ///< atan2 bearing of the footprint center
};

/// Row-major grid of pixel footprints tiling the target plane.
struct PixelMap {
  std::vector<PixelPatch> pixels;  ///< index = row * cols + col
  int rows = 16;
  int cols = 8;
  double cell_m = 0.5;             ///< footprint side
  Vec2 origin{2.0, 4.0};           ///< receiver ground point

  int index(int row, int col) const;
  /// Pixel whose footprint contains the floor point, or -1 outside the grid.
  int pixel_at(const Vec2& p) const;
  /// Scan group of a pixel: the 2 m x 2 m floor block it belongs to, numbered
  /// like the ceiling transceiver grid (column-fast from the room origin).
  int group_of(int pixel) const;
};

/// Tiles the room's target plane into the receiver's pixel footprints.
/// Throws std::invalid_argument if the grid does not fit inside the floor or
/// the receiver geometry is degenerate.
PixelMap build_pixel_map(const ImagingReceiver& rx, const env::Environment& room,
                         double target_height_m = 1.7);

/// Angle-dependent lens transmission, quadratic fit over the acceptance cone:
/// T(delta) = -0.198 delta^2 + 0.0425 delta + 0.8778, delta in radians.
double lens_transmission(double delta_rad);

/// The footprint-center position read off a marked pixel. Worst-case error is
/// half the cell diagonal for any target inside the footprint.
mimo::PositionEstimate pixel_localize(int pixel, const PixelMap& map);

/// Echo-power moments over the clothing ensemble for a reflector at the given
/// floor position, illuminated by tx_cfg's emitter and imaged by the lens
/// (entrance area and angle-dependent transmission, no concentrator).
mimo::PowerMoments pixel_power(const chan::TransceiverConfig& tx_cfg, const ImagingReceiver& rx,
                               const Vec2& reflector_xy, double mu_rho, double sigma_rho,
                               double cross_section_m2, double target_height_m = 1.7);

/// One scan cycle's integrated photocurrent per pixel [A].
struct PixelObservation {
  std::vector<double> z;  ///< row-major, length rows * cols
  int rows = 16;
  int cols = 8;
};

/// Rolling window of pixel observations: the newest frame plus the history
/// the motion tests difference against.
struct PixelCube {
  std::vector<PixelObservation> frames;  ///< oldest first
  int history_depth = 4;                 ///< prior frames kept besides latest

  /// Appends one observation; throws std::invalid_argument on a geometry
  /// mismatch with the frames already stored.
  void append(PixelObservation obs);
  int size() const { return static_cast<int>(frames.size()); }
  const PixelObservation& latest() const;
};

/// Pixel-domain motion test result: per-pixel gating weights plus the
/// dominant image displacement in pixel indices (0 when the scene is static).
struct PccmResult {
  int displacement = 0;
  std::vector<int> weights;
};

/// Significance scale for the pixel motion tests.
struct PixelMotionOptions {
  double kappa = 4.0;              ///< change threshold in residual sigmas
  double sigma_pixel_a = 1.2e-8;   ///< per-pixel frame-integrated noise std [A]
};

/// Pixel-correlation motion test: compares the newest frame against the mean
/// of the stored history. Pixels whose energy rose by more than kappa
/// residual-sigmas get weight 1 (a vacated footprint keeps weight 0 so its
/// static clutter stays gated off); the displacement is the index shift
/// between where energy left and where it arrived (the pixel count of the
/// move), or the full grid size when energy only appeared or only vanished.
/// Requires at least two history frames besides the latest; throws
/// std::invalid_argument otherwise.
PccmResult pccm(const PixelCube& cube, const PixelMotionOptions& opts = {});

/// Pixel-subtraction motion test: newest frame minus the history mean,
/// leaving only scene changes (residual noise variance (1 + 1/S) sigma^2 for
/// S history frames). Requires at least one history frame besides the latest.
std::vector<double> psm(const PixelCube& cube);

/// Marks occupied pixels with a straddle-aware double threshold: above the
/// high threshold a pixel is marked outright; between the thresholds (an echo
/// possibly split among adjacent footprints) only the locally strongest of
/// the adjacent candidates is marked. Throws std::invalid_argument on an
/// inverted threshold pair or a malformed observation.
std::set<int> soimr_decide(const PixelObservation& obs, double d_th_low, double d_th_high);

/// How scene changes gate the pixel map before marking.
enum class PixelGate {
  none,  ///< threshold the raw energies (static clutter shows up)
  psm,   ///< threshold the history-subtracted residual
  pccm,  ///< zero out pixels the correlation test calls static
};

/// Scan-cycle configuration for the imaging receiver.
struct ImagingOptions {
  PixelGate gate = PixelGate::psm;
  int history_depth = 4;
  /// Per-pixel noise std [A] after frame integration: the pixel knows the
  /// transmit instant, so its effective noise bandwidth is set by the frame
  /// window (~21 MHz), not the pulse bandwidth (2.6 pA/rtHz * sqrt(21 MHz)).
  double sigma_pixel_a = 1.2e-8;
  double kappa = 4.0;                ///< noise-significance factor
  double threshold_factor = 0.35;    ///< high threshold as a fraction of the
                                     ///< worst in-group mean echo
  double straddle_divisor = 4.0;     ///< low threshold = high / divisor
                                     ///< (corner straddle splits 4 ways)
  bool include_clutter = true;       ///< add static floor/furniture returns
  double target_height_m = 1.7;
  double cross_section_m2 = 0.29;    ///< design body cross-section
  double mu_rho = 0.6687;            ///< clothing-reflectivity ensemble mean
  double sigma_rho = 0.225923;       ///< clothing-reflectivity ensemble std
  /// Emitter parameters shared by all ceiling transmitters; the position is
  /// overridden per frame.
  chan::TransceiverConfig transmitter{};
};

/// One full scan cycle's outcome.
struct GrpScanReport {
  PixelObservation aggregate;               ///< raw integrated energies
  std::vector<double> gated;                ///< what the marker thresholded
  std::set<int> marked;                     ///< occupied pixel indices
  std::vector<mimo::PositionEstimate> positions;  ///< one per marked pixel
  int n_e = 0;                              ///< estimated target count
  int frames_used = 0;                      ///< transmitter frames spent
};

/// Drives the per-transmitter scan: each ceiling unit pulses in turn while
/// the pixels covering its floor block integrate, one frame per unit. The
/// aggregated pixel vector is gated by the configured motion test and marked
/// by the double-threshold rule; marked pixels localize to their footprint
/// centers. Keeps the rolling frame history across cycles.
class ImagingScanner {
 public:
  /// Throws std::invalid_argument on an empty transmitter grid, a pixel map
  /// that does not fit the room, or non-positive thresholds/noise settings.
  ImagingScanner(env::Environment room, mimo::MimoSystem transmitters, ImagingReceiver receiver,
                 ImagingOptions options = {});

  const PixelMap& map() const { return map_; }
  const ImagingOptions& options() const { return options_; }
  double pixel_threshold_low_a() const { return d_lo_a_; }
  double pixel_threshold_high_a() const { return d_hi_a_; }

  /// Runs the transmitter sweep and returns the aggregated (noisy) pixel
  /// photocurrents for the cycle. Does not touch the history.
  PixelObservation scan_cycle_raw(std::span<const env::TargetState> targets, RandomStream& rng);

  /// Full cycle: sweep, append to history, gate, mark, localize.
  GrpScanReport run_grp_scan(std::span<const env::TargetState> targets, RandomStream& rng);

  const PixelCube& history() const { return cube_; }
  bool history_ready() const { return cube_.size() >= cube_.history_depth + 1; }
  void reset_history() { cube_.frames.clear(); }

 private:
  Vec3 unit_position(int group) const;

  env::Environment room_;
  mimo::MimoSystem grid_;
  ImagingReceiver rx_;
  ImagingOptions options_;
  PixelMap map_;
  PixelCube cube_;
  double d_lo_a_ = 0.0;
  double d_hi_a_ = 0.0;
};

}  // namespace lidal::img
