#include <doctest.h>

#include <cmath>

#include "spindrive/antenna.hpp"

using namespace spindrive;

namespace {

constexpr double kMu0 = 4.0e-7 * M_PI;  // T m / A

// Single circular loop of radius r_um in the z = 0 plane.
SpiralGeometry single_loop(double r_um) {
  SpiralGeometry g;
  g.turns = 1;
  g.layers = 1;
  g.trace_width_um = 10.0;
  g.turn_pitch_um = 100.0;
  g.inner_diameter_um = 2.0 * r_um - g.turn_pitch_um;  // mid-trace radius = r_um
  return g;
}

double loop_axial_field_g_per_a(double r_um, double z_um) {
  const double r = r_um * 1e-6, z = z_um * 1e-6;
  return kMu0 * r * r / (2.0 * std::pow(r * r + z * z, 1.5)) * 1e4;
}

}  // namespace

TEST_CASE("biot_savart: single-loop analytic anchors") {
  const double r_um = 500.0;
  const SpiralGeometry g = single_loop(r_um);

  SUBCASE("center field is mu0/(2R)") {
    const FieldSample s = biot_savart(g, {0.0, 0.0, 0.0}, 8192);
    const double expected = kMu0 / (2.0 * r_um * 1e-6) * 1e4;  // G/A
    CHECK(s.magnitude() == doctest::Approx(expected).epsilon(1e-6));
    CHECK(s.b_per_current.z() > 0.0);
    CHECK(std::abs(s.b_per_current.x()) < 1e-9 * s.magnitude());
    CHECK(std::abs(s.b_per_current.y()) < 1e-9 * s.magnitude());
  }

  SUBCASE("on-axis field at height z") {
    const double z_um = 300.0;
    const FieldSample s = biot_savart(g, {0.0, 0.0, z_um}, 8192);
    CHECK(s.magnitude() == doctest::Approx(loop_axial_field_g_per_a(r_um, z_um)).epsilon(1e-6));
  }

  SUBCASE("doubling the quadrature changes a converged sample by < 1e-6") {
    const FieldSample a = biot_savart(g, {150.0, 0.0, 120.0}, 4096);
    const FieldSample b = biot_savart(g, {150.0, 0.0, 120.0}, 8192);
    CHECK((a.b_per_current - b.b_per_current).norm() < 1e-6 * b.magnitude());
  }
}

TEST_CASE("biot_savart: default spiral at the default sample point") {
  const SpiralGeometry g;
  const FieldSample s = biot_savart(g, {0.0, 0.0, kDefaultSampleHeightUm}, 512);
  CHECK(s.magnitude() > 136.0 * 0.8);
  CHECK(s.magnitude() < 136.0 * 1.2);
  CHECK(s.tilt_from_normal() < 3.0 * M_PI / 180.0);
  CHECK(std::abs(s.b_per_current.x()) < 1e-9 * s.magnitude());
  CHECK(std::abs(s.b_per_current.y()) < 1e-9 * s.magnitude());
}

TEST_CASE("biot_savart: two layers superpose the single layers") {
  SpiralGeometry two;
  two.turns = 4;
  SpiralGeometry one = two;
  one.layers = 1;

  const Eigen::Vector3d p{300.0, 150.0, 200.0};
  const FieldSample both = biot_savart(two, p, 256);
  const FieldSample top = biot_savart(one, p, 256);
  // The buried layer sits layer_gap below; shift the evaluation point instead.
  const FieldSample bottom = biot_savart(one, p + Eigen::Vector3d{0, 0, two.layer_gap_um}, 256);
  CHECK((both.b_per_current - top.b_per_current - bottom.b_per_current).norm() <
        1e-12 * both.magnitude());
}

TEST_CASE("biot_savart: singularity guard and geometry validation") {
  const SpiralGeometry g;
  const double r0 = g.loop_radii_um().front();
  CHECK_THROWS_AS(biot_savart(g, {r0, 0.0, 0.0}, 256), std::domain_error);
  CHECK_THROWS_AS(biot_savart(g, {r0 + 0.4 * g.trace_width_um, 0.0, 0.0}, 256),
                  std::domain_error);
  CHECK_THROWS_AS(biot_savart(g, {0.0, 0.0, 100.0}, 8), std::invalid_argument);

  SpiralGeometry bad = g;
  bad.turns = 0;
  CHECK_THROWS_AS(biot_savart(bad, {0.0, 0.0, 100.0}, 256), std::invalid_argument);
  bad = g;
  bad.layers = 3;
  CHECK_THROWS_AS(biot_savart(bad, {0.0, 0.0, 100.0}, 256), std::invalid_argument);
  bad = g;
  bad.turn_pitch_um = 0.5 * bad.trace_width_um;
  CHECK_THROWS_AS(biot_savart(bad, {0.0, 0.0, 100.0}, 256), std::invalid_argument);
}

TEST_CASE("field symmetry and far-field dipole falloff") {
  const SpiralGeometry g;

  SUBCASE("mirror symmetry in x") {
    const FieldSample a = biot_savart(g, {800.0, 0.0, 250.0}, 256);
    const FieldSample b = biot_savart(g, {-800.0, 0.0, 250.0}, 256);
    CHECK(std::abs(a.magnitude() - b.magnitude()) < 1e-9 * a.magnitude());
  }

  SUBCASE("1/z^3 exponent within 2%") {
    const double outer = g.loop_radii_um().back();
    const double z1 = 100.0 * outer;
    const double z2 = 2.0 * z1;
    const double b1 = biot_savart(g, {0.0, 0.0, z1}, 256).magnitude();
    const double b2 = biot_savart(g, {0.0, 0.0, z2}, 256).magnitude();
    const double exponent = std::log(b1 / b2) / std::log(2.0);
    CHECK(exponent == doctest::Approx(3.0).epsilon(0.02));
  }
}

TEST_CASE("field_map: grid evaluation and error context") {
  SpiralGeometry g;
  g.turns = 2;
  FieldMapSpec spec;
  spec.x_min_um = -300.0;
  spec.x_max_um = 300.0;
  spec.nx = 3;
  spec.z_min_um = 150.0;
  spec.z_max_um = 350.0;
  spec.nz = 2;
  spec.segments_per_turn = 64;

  const std::vector<FieldSample> samples = field_map(g, spec);
  REQUIRE(samples.size() == 6);
  CHECK(samples.front().position_um.z() == 150.0);
  CHECK(samples.back().position_um.z() == 350.0);

  const std::string csv = field_map_to_csv(samples);
  CHECK(csv.rfind("# x_um", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

  FieldMapSpec singular = spec;
  singular.z_min_um = 0.0;
  singular.nz = 1;
  singular.x_min_um = g.loop_radii_um().front();
  singular.nx = 1;
  CHECK_THROWS_WITH_AS(field_map(g, singular), doctest::Contains("singular point"),
                       std::domain_error);
}

TEST_CASE("project_to_nv: decomposition and the 35.3 degree tilt") {
  const NVFrame frame = NVFrame::default_frame();
  CHECK(frame.nv_axis.norm() == doctest::Approx(1.0).epsilon(1e-14));

  SUBCASE("field along the NV axis hits the pi/2 boundary") {
    FieldSample s;
    s.b_per_current = 2.5 * frame.nv_axis;
    const NVProjection p = project_to_nv(s, frame);
    CHECK(p.transverse_zero);
    CHECK(p.theta_d == doctest::Approx(M_PI / 2.0));
    CHECK(p.b_parallel == doctest::Approx(2.5));
  }

  SUBCASE("field perpendicular to the NV axis gives zero tilt") {
    FieldSample s;
    s.b_per_current = Eigen::Vector3d{0.0, 1.0, 0.0};  // y is transverse to the xz-plane axis
    const NVProjection p = project_to_nv(s, frame);
    CHECK(p.theta_d == doctest::Approx(0.0));
    CHECK(p.b_transverse == doctest::Approx(1.0));
  }

  SUBCASE("spiral-normal field against the 54.7 degree NV axis") {
    FieldSample s;
    s.b_per_current = Eigen::Vector3d{0.0, 0.0, 1.0};
    const NVProjection p = project_to_nv(s, frame);
    CHECK(p.theta_d == doctest::Approx(35.3 * M_PI / 180.0).epsilon(0.1 / 35.3));
  }

  SUBCASE("contract errors") {
    FieldSample zero;
    CHECK_THROWS_AS(project_to_nv(zero, frame), std::domain_error);
    NVFrame bad{Eigen::Vector3d{1.0, 1.0, 0.0}};
    FieldSample s;
    s.b_per_current = Eigen::Vector3d::UnitZ();
    CHECK_THROWS_AS(project_to_nv(s, bad), std::invalid_argument);
  }
}
