#include "spindrive/antenna.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace spindrive {

namespace {

constexpr double kMu0 = 4.0e-7 * M_PI;  // T m / A
constexpr double kTeslaToGauss = 1e4;
constexpr double kUmToM = 1e-6;

}  // namespace

void SpiralGeometry::validate() const {
  if (!(inner_diameter_um > 0.0 && trace_width_um > 0.0 && turn_pitch_um > 0.0 &&
        layer_gap_um > 0.0 && aperture_diameter_um > 0.0))
    throw std::invalid_argument("SpiralGeometry: lengths must be > 0");
  if (turns < 1) throw std::invalid_argument("SpiralGeometry: turns must be >= 1");
  if (layers != 1 && layers != 2) throw std::invalid_argument("SpiralGeometry: layers must be 1 or 2");
  if (turn_pitch_um < trace_width_um)
    throw std::invalid_argument("SpiralGeometry: turn_pitch must be >= trace_width");
}

std::vector<double> SpiralGeometry::loop_radii_um() const {
  std::vector<double> radii(static_cast<std::size_t>(turns));
  for (int i = 0; i < turns; ++i)
    radii[static_cast<std::size_t>(i)] =
        0.5 * inner_diameter_um + (static_cast<double>(i) + 0.5) * turn_pitch_um;
  return radii;
}

std::vector<double> SpiralGeometry::layer_z_um() const {
  if (layers == 1) return {0.0};
  return {0.0, -layer_gap_um};
}

double FieldSample::tilt_from_normal() const {
  const double mag = b_per_current.norm();
  if (mag == 0.0) throw std::domain_error("FieldSample: zero field has no tilt");
  return std::acos(std::clamp(std::abs(b_per_current.z()) / mag, 0.0, 1.0));
}

void NVFrame::validate() const {
  if (std::abs(nv_axis.norm() - 1.0) > 1e-12)
    throw std::invalid_argument("NVFrame: nv_axis must be a unit vector");
}

NVFrame NVFrame::default_frame() {
  const double tilt = 54.7 * M_PI / 180.0;
  return {Eigen::Vector3d{std::sin(tilt), 0.0, std::cos(tilt)}};
}

FieldSample biot_savart(const SpiralGeometry& geom, const Eigen::Vector3d& point_um,
                        int segments_per_turn) {
  geom.validate();
  if (segments_per_turn < 16)
    throw std::invalid_argument("biot_savart: segments_per_turn must be >= 16");

  const std::vector<double> radii = geom.loop_radii_um();
  const std::vector<double> zs = geom.layer_z_um();
  const double rho = std::hypot(point_um.x(), point_um.y());
  for (double z : zs) {
    for (double r : radii) {
      const double dist = std::hypot(rho - r, point_um.z() - z);
      if (dist < 0.5 * geom.trace_width_um)
        throw std::domain_error("biot_savart: evaluation point within trace_width/2 of a filament");
    }
  }

  const Eigen::Vector3d point = point_um * kUmToM;
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  const int s = segments_per_turn;
  for (double z_um : zs) {
    const double z = z_um * kUmToM;
    for (double r_um : radii) {
      const double r = r_um * kUmToM;
      for (int j = 0; j < s; ++j) {
        const double a0 = 2.0 * M_PI * static_cast<double>(j) / static_cast<double>(s);
        const double a1 = 2.0 * M_PI * static_cast<double>(j + 1) / static_cast<double>(s);
        const Eigen::Vector3d p0{r * std::cos(a0), r * std::sin(a0), z};
        const Eigen::Vector3d p1{r * std::cos(a1), r * std::sin(a1), z};
        const Eigen::Vector3d dl = p1 - p0;
        const Eigen::Vector3d rv = point - 0.5 * (p0 + p1);
        const double dist = rv.norm();
        b += dl.cross(rv) / (dist * dist * dist);
      }
    }
  }
  b *= kMu0 / (4.0 * M_PI) * kTeslaToGauss;

  FieldSample sample;
  sample.position_um = point_um;
  sample.b_per_current = b;
  return sample;
}

std::vector<FieldSample> field_map(const SpiralGeometry& geom, const FieldMapSpec& spec) {
  if (spec.nx < 1 || spec.nz < 1) throw std::invalid_argument("field_map: grid must be >= 1x1");
  std::vector<FieldSample> samples;
  samples.reserve(static_cast<std::size_t>(spec.nx) * static_cast<std::size_t>(spec.nz));
  for (int iz = 0; iz < spec.nz; ++iz) {
    const double z = spec.nz == 1 ? spec.z_min_um
                                  : spec.z_min_um + (spec.z_max_um - spec.z_min_um) *
                                        static_cast<double>(iz) / static_cast<double>(spec.nz - 1);
    for (int ix = 0; ix < spec.nx; ++ix) {
      const double x = spec.nx == 1 ? spec.x_min_um
                                    : spec.x_min_um + (spec.x_max_um - spec.x_min_um) *
                                          static_cast<double>(ix) / static_cast<double>(spec.nx - 1);
      try {
        samples.push_back(biot_savart(geom, {x, 0.0, z}, spec.segments_per_turn));
      } catch (const std::domain_error& e) {
        throw std::domain_error("field_map: singular point at x=" + std::to_string(x) +
                                " um, z=" + std::to_string(z) + " um: " + e.what());
      }
    }
  }
  return samples;
}

std::string field_map_to_csv(const std::vector<FieldSample>& samples) {
  std::ostringstream os;
  os << "# x_um,y_um,z_um,Bx_G_per_A,By_G_per_A,Bz_G_per_A\n";
  char buf[200];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.position_um.x(),
                  s.position_um.y(), s.position_um.z(), s.b_per_current.x(), s.b_per_current.y(),
                  s.b_per_current.z());
    os << buf;
  }
  return os.str();
}

NVProjection project_to_nv(const FieldSample& sample, const NVFrame& frame) {
  frame.validate();
  const double mag = sample.b_per_current.norm();
  if (mag == 0.0) throw std::domain_error("project_to_nv: zero field has no defined angle");

  NVProjection proj;
  proj.b_parallel = sample.b_per_current.dot(frame.nv_axis);
  proj.b_transverse = (sample.b_per_current - proj.b_parallel * frame.nv_axis).norm();
  if (proj.b_transverse < 1e-15 * mag) {
    proj.transverse_zero = true;
    proj.theta_d = M_PI / 2.0;
  } else {
    proj.theta_d = std::atan(std::abs(proj.b_parallel) / proj.b_transverse);
  }
  return proj;
}

}  // namespace spindrive
