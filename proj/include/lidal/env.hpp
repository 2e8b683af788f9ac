// SPDX-License-Identifier: Apache-2.0
//
// Room, surfaces, furniture, human-body targets, and the statistical
// clothing-reflectivity model.
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "lidal/common.hpp"
#include "lidal/rng.hpp"

namespace lidal::env {

/// Axis-aligned box obstacle (desk, bookshelf, ...).
struct Cuboid {
  Vec3 min_corner;        ///< lowest corner [m]
  Vec3 dims;              ///< extents along x,y,z [m]
  double reflectivity = 0.55;
  double lambertian_order = 1.0;  ///< diffuse by default
  std::string name;
};

/// Localized ambient light source contributing background photocurrent.
struct LampSource {
  Vec3 position;                       ///< [m]
  double background_current_a = 0.0;   ///< induced background current [A]
};

/// Rectangular diffusely reflecting patch produced by surface discretization.
struct SurfaceElement {
  Vec3 center;            ///< [m]
  Vec3 normal;            ///< unit outward normal
  double area = 0.0;      ///< [m^2]
  double reflectivity = 0.0;
  double lambertian_order = 1.0;
};

/// Human body target: axis-aligned box rotated to one of 8 discrete headings.
struct TargetState {
  Vec2 position{0.0, 0.0};   ///< body-center footprint on floor [m]
  double heading_deg = 0.0;  ///< one of {0,45,...,315}
  double depth_m = 0.15;     ///< body depth along heading
  double width_m = 0.48;     ///< shoulder width
  double height_m = 1.70;    ///< stature
  double reflection_factor = 0.6687;
  int id = 0;
};

/// The simulated room.
struct Environment {
  double width_m = 4.0;    ///< x extent
  double length_m = 8.0;   ///< y extent
  double height_m = 3.0;   ///< z extent
  double wall_reflectivity = 0.8;
  double ceiling_reflectivity = 0.8;
  double floor_reflectivity = 0.3;
  std::vector<Cuboid> furniture;
  std::vector<LampSource> lamps;

  bool contains(const Vec3& p, double margin = 0.0) const {
    return p.x() >= -margin && p.x() <= width_m + margin && p.y() >= -margin &&
           p.y() <= length_m + margin && p.z() >= -margin && p.z() <= height_m + margin;
  }
};

/// Construction parameters for build_environment().
struct EnvironmentConfig {
  std::string preset = "B";  ///< "A" = empty room, "B" = furnished office
  double width_m = 4.0;
  double length_m = 8.0;
  double height_m = 3.0;
  double wall_reflectivity = 0.8;
  double ceiling_reflectivity = 0.8;
  double floor_reflectivity = 0.3;
  double wood_reflectivity = 0.55;
  /// Optional explicit furniture; when set it replaces the preset's layout.
  std::optional<std::vector<Cuboid>> furniture_override;
};

/// Statistical model of clothing reflectivity. Draws are Gaussian truncated to
/// [0,1]; the pre-truncation parameters are solved at construction so that the
/// truncated law realizes (mu_rho, sigma_rho) exactly.
class ReflectivityModel {
 public:
  struct ColourRow {
    std::string colour;
    double weight;       ///< population fraction
    double reflectivity; ///< dyed-cotton reflection factor
  };

  /// Builds from a colour survey table (weights must sum to 1 +- 0.01);
  /// moments are the weighted table moments unless overridden.
  explicit ReflectivityModel(std::vector<ColourRow> table = default_colour_table(),
                             std::optional<double> mu_override = std::nullopt,
                             std::optional<double> sigma_override = std::nullopt);

  double mu_rho() const { return mu_; }
  double sigma_rho() const { return sigma_; }
  const std::vector<ColourRow>& colour_table() const { return table_; }

  /// One truncated-Gaussian draw in [0,1].
  double sample(RandomStream& rng) const;

  static std::vector<ColourRow> default_colour_table();

 private:
  std::vector<ColourRow> table_;
  double mu_ = 0.0, sigma_ = 0.0;    ///< realized (post-truncation) moments
  double mu0_ = 0.0, sigma0_ = 0.0;  ///< pre-truncation Gaussian parameters
};

/// Builds the room from a preset plus overrides.
/// Throws std::invalid_argument on reflectivity outside [0,1], non-positive
/// dims, or furniture extending outside the room.
Environment build_environment(const EnvironmentConfig& config);

/// Tiles walls, ceiling, floor, furniture faces and (optionally) target body
/// faces into square-ish elements of the given size. Faces flush against a
/// room boundary (e.g. a cuboid bottom on the floor) are skipped.
std::vector<SurfaceElement> discretize_surfaces(const Environment& env, double element_size_m,
                                                const std::vector<TargetState>& targets = {});

/// Tiles one cuboid's faces (all six unless `skip` returns true for a face
/// center/normal pair).
void discretize_cuboid(const Vec3& min_corner, const Vec3& dims, double element_size_m,
                       double reflectivity, double lambertian_order,
                       std::vector<SurfaceElement>& out);

/// Tiles one target's 4 vertical faces and top at the given element size.
void discretize_target(const TargetState& t, double element_size_m,
                       std::vector<SurfaceElement>& out);

/// Body-box area presented to an observer: projection of the vertical faces
/// (floored at `min_vertical_m2`, the configured side-on minimum) blended with
/// the top face by elevation. Observer must be above the floor.
double target_cross_section(const TargetState& target, const Vec3& observer_pos,
                            double min_vertical_m2 = 0.29);

/// Corner positions of the target's body box after heading rotation.
std::array<Vec2, 4> target_footprint(const TargetState& t);

}  // namespace lidal::env
