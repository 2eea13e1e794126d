#include <doctest.h>

#include <cmath>
#include <random>

#include "spindrive/oct.hpp"

using namespace spindrive;

namespace {

OCTProblem small_problem() {
  OCTProblem p;
  p.sys = DriveSystem{1.0, 1.0 / 3.0, 35.3 * M_PI / 180.0};
  p.t_pi = pi_duration(p.sys, M_PI / 10.0);
  p.spectral_cutoff = 10.7;
  p.energy_weight = 1e-3;
  return p;
}

// Midpoint-sampled sine-mode coefficients; the midpoint DST is exactly
// orthogonal for modes 1..n-1.
std::vector<double> dst_coefficients(const WaveformFn& f, double T, int n) {
  std::vector<double> c(static_cast<std::size_t>(n - 1));
  for (int m = 1; m < n; ++m) {
    double s = 0.0;
    for (int k = 0; k < n; ++k) {
      const double t = (static_cast<double>(k) + 0.5) * T / static_cast<double>(n);
      s += f(t) * std::sin(static_cast<double>(m) * M_PI * t / T);
    }
    c[static_cast<std::size_t>(m - 1)] = 2.0 * s / static_cast<double>(n);
  }
  return c;
}

}  // namespace

TEST_CASE("control_gradient: matches central finite differences") {
  OCTProblem p = small_problem();
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u01(-1.0, 1.0);
  std::uniform_int_distribution<int> pick(0, 63);

  for (int iterate = 0; iterate < 3; ++iterate) {
    std::vector<double> u(64);
    for (double& v : u) v = u01(rng);
    const std::vector<double> grad = control_gradient(p, u);

    for (int probe = 0; probe < 5; ++probe) {
      const int k = pick(rng);
      const double h = 1e-6;
      std::vector<double> up = u, um = u;
      up[k] += h;
      um[k] -= h;
      const double fd = (control_objective(p, up) - control_objective(p, um)) / (2.0 * h);
      CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("solve: ascent property, convergence, constraint satisfaction") {
  OCTProblem p = small_problem();
  p.max_iters = 200;
  const OCTResult r = solve(p);

  REQUIRE(r.log.size() >= 2);
  for (std::size_t i = 1; i < r.log.size(); ++i)
    CHECK(r.log[i].objective > r.log[i - 1].objective);
  CHECK(r.fidelity > 0.99);
  CHECK(r.fidelity <= 1.0);
  CHECK(r.fidelity == r.log.back().fidelity);

  // Endpoints and analytic endpoint derivatives.
  CHECK(r.waveform.values.front() == 0.0);
  CHECK(r.waveform.values.back() == 0.0);
  CHECK(std::abs(r.deriv_start) < 1e-12);
  CHECK(std::abs(r.deriv_end) < 1e-12);

  // No spectral content above the cutoff: expand the continuous control in the
  // exactly orthogonal midpoint sine basis and compare high- vs total power.
  const int n = 1024;
  const std::vector<double> c = dst_coefficients(r.continuous(), r.t_pi, n);
  const int m_cut = static_cast<int>(std::floor(p.spectral_cutoff * r.t_pi / M_PI));
  double high = 0.0, total = 0.0;
  for (int m = 1; m < n; ++m) {
    const double sq = c[static_cast<std::size_t>(m - 1)] * c[static_cast<std::size_t>(m - 1)];
    total += sq;
    if (m > m_cut) high += sq;
  }
  CHECK(std::sqrt(high / total) < 1e-9);

  // The sampled waveform is the continuous reconstruction.
  const WaveformFn f = r.continuous();
  CHECK(r.waveform.value_at(0.37 * r.t_pi) == doctest::Approx(f(0.37 * r.t_pi)).epsilon(1e-4));

  CHECK(r.log_csv().rfind("# iteration", 0) == 0);
}

TEST_CASE("solve: zero iterations returns the initial guess") {
  OCTProblem p = small_problem();
  p.max_iters = 0;
  const OCTResult r = solve(p);
  CHECK(r.iterations == 0);
  CHECK_FALSE(r.converged);
  REQUIRE(r.log.size() == 1);
  CHECK(r.fidelity == r.log[0].fidelity);
}

TEST_CASE("solve: exact-cancellation amplitude reaches near-unit fidelity") {
  OCTProblem p;
  p.sys.omega0 = 1.0;
  p.sys.theta_d = 35.3 * M_PI / 180.0;
  p.sys.omega_d = p.sys.omega0 / (2.0 * std::tan(p.sys.theta_d));
  p.t_pi = pi_duration(p.sys, M_PI / 10.0);
  p.spectral_cutoff = 10.7;
  p.energy_weight = 1e-6;  // generous energy budget
  p.max_iters = 600;
  const OCTResult r = solve(p);
  CHECK(r.fidelity > 1.0 - 1e-6);
}

TEST_CASE("OCTProblem: validation") {
  OCTProblem p = small_problem();
  p.t_pi = 0.0;
  CHECK_THROWS_AS(solve(p), std::invalid_argument);
  p = small_problem();
  p.spectral_cutoff = 0.5;
  CHECK_THROWS_AS(solve(p), std::invalid_argument);
  p = small_problem();
  p.energy_weight = -1.0;
  CHECK_THROWS_AS(solve(p), std::invalid_argument);
}

TEST_CASE("autotune_energy_weight: lands the peak in [0.95, 1.10]") {
  OCTProblem p = small_problem();
  p.max_iters = 120;
  const double lambda = autotune_energy_weight(p);
  OCTProblem tuned = p;
  tuned.energy_weight = lambda;
  const double peak = solve(tuned).peak_amplitude;
  CHECK(peak >= 0.95);
  CHECK(peak <= 1.10);
}

TEST_CASE("fit_offset_sine: exact self-fit recovery") {
  DriveSystem sys{1.0, 0.5, 0.2};
  PulseSpec tmpl = default_pulse_template(sys);
  PulseSpec truth = tmpl;
  truth.offset_a = -0.35;
  truth.phase_phi = 0.9;
  const ControlWaveform w = offset_sine(truth, sys, 800);

  const OffsetSineFit fit = fit_offset_sine(w, sys, tmpl);
  CHECK(fit.offset_a == doctest::Approx(-0.35).epsilon(1e-6));
  CHECK(fit.phase_phi == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(fit.residual_rms < 1e-9);
  CHECK(fit.amplitude_scale == 1.0);
  CHECK(fit.fit_fidelity >= 0.0);
  CHECK(fit.to_json().find("\"offset_a\"") != std::string::npos);
}

TEST_CASE("fit_offset_sine: free amplitude scale") {
  DriveSystem sys{1.0, 0.5, 0.0};
  PulseSpec tmpl = default_pulse_template(sys);
  PulseSpec truth = tmpl;
  truth.offset_a = 0.2;
  truth.phase_phi = 1.4;
  ControlWaveform w = offset_sine(truth, sys, 800);
  for (double& v : w.values) v *= 0.8;

  const OffsetSineFit fit = fit_offset_sine(w, sys, tmpl, /*fit_scale=*/true);
  CHECK(fit.amplitude_scale == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(fit.offset_a == doctest::Approx(0.2).epsilon(1e-5));
  CHECK(fit.residual_rms < 1e-8);

  ControlWaveform empty;
  CHECK_THROWS_AS(fit_offset_sine(empty, sys, tmpl), std::invalid_argument);
}

TEST_CASE("compare_suite: weak-drive row and per-row failure capture") {
  DriveSystem base{1.0, 0.0, 35.3 * M_PI / 180.0};
  PropagatorConfig cfg;
  cfg.base_step = 1.0 / 100.0;
  cfg.convergence_tol = 1e-7;
  CompareOptions opt;
  opt.oct_max_iters = 200;
  opt.phase_n = 16;
  opt.offset_n = 11;
  opt.refine_tol = 1e-3;

  const ComparisonTable table = compare_suite({0.1, -1.0}, base, cfg, opt);
  REQUIRE(table.rows.size() == 2);

  CHECK(table.rows[0].ok);
  CHECK(table.rows[0].oct_infidelity < 1e-2);
  CHECK(table.rows[0].oct_fit_infidelity < 1e-2);
  CHECK(table.rows[0].offset_sine_infidelity < 1e-2);

  CHECK_FALSE(table.rows[1].ok);
  CHECK_FALSE(table.rows[1].error.empty());

  CHECK(table.to_csv().rfind("# omega_d", 0) == 0);
  CHECK(table.to_json().find("\"oct_infidelity\"") != std::string::npos);

  CHECK_THROWS_AS(compare_suite({}, base, cfg, opt), std::invalid_argument);
}
