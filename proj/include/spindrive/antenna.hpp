#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace spindrive {

// Two-layer planar spiral, approximated as concentric circular filaments at
// mid-trace radii. Lengths in micrometers; the top copper plane sits at z = 0
// and the second layer at z = -layer_gap.
struct SpiralGeometry {
  double inner_diameter_um = 600.0;
  int turns = 15;
  double trace_width_um = 100.0;
  double turn_pitch_um = 110.0;
  int layers = 2;
  double layer_gap_um = 20.0;
  double aperture_diameter_um = 200.0;

  void validate() const;
  std::vector<double> loop_radii_um() const;  // r_i = inner/2 + (i + 1/2) * pitch
  std::vector<double> layer_z_um() const;
};

// On-axis evaluation point above the top layer. The published field value
// pins this effective height for the filament model; see README.
constexpr double kDefaultSampleHeightUm = 400.0;

struct FieldSample {
  Eigen::Vector3d position_um = Eigen::Vector3d::Zero();
  Eigen::Vector3d b_per_current = Eigen::Vector3d::Zero();  // Gauss per Ampere

  double magnitude() const { return b_per_current.norm(); }
  // Angle between the field and the spiral normal (z), rad.
  double tilt_from_normal() const;
};

struct NVFrame {
  Eigen::Vector3d nv_axis;  // unit vector

  void validate() const;
  // NV axis tilted 54.7 degrees from the spiral normal, in the xz-plane.
  static NVFrame default_frame();
};

struct NVProjection {
  double b_parallel = 0.0;    // along the NV axis, G/A
  double b_transverse = 0.0;  // perpendicular magnitude, G/A
  double theta_d = 0.0;       // drive tilt from the transverse plane, rad
  bool transverse_zero = false;
};

// Polygonal Biot-Savart quadrature of the filament stack, per unit current.
FieldSample biot_savart(const SpiralGeometry& geom, const Eigen::Vector3d& point_um,
                        int segments_per_turn = 256);

// Cross-section map in the y = 0 plane.
struct FieldMapSpec {
  double x_min_um = -2200.0;
  double x_max_um = 2200.0;
  int nx = 45;
  double z_min_um = 20.0;
  double z_max_um = 900.0;
  int nz = 23;
  int segments_per_turn = 256;
};

std::vector<FieldSample> field_map(const SpiralGeometry& geom, const FieldMapSpec& spec);

std::string field_map_to_csv(const std::vector<FieldSample>& samples);

NVProjection project_to_nv(const FieldSample& sample, const NVFrame& frame);

}  // namespace spindrive
