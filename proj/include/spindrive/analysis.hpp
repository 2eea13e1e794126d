#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace spindrive {

// Standard reference values; configurable where a model carries its own copy.
constexpr double kZeroFieldSplittingMhz = 2870.0;
constexpr double kGyroElectronMhzPerG = 2.8025;
constexpr double kGyroProtonKhzPerG = 4.2577;

struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NV ground-state spin-1 model for ODMR level shifts:
// H = D Sz^2 + E (Sx^2 - Sy^2) + gyro_e (B . S), B = field_per_current * I * field_dir.
struct NVModel {
  double zero_field_splitting_D = kZeroFieldSplittingMhz;  // MHz
  double strain_E = 0.0;                                   // MHz
  double gyro_e = kGyroElectronMhzPerG;                    // MHz/G
  Eigen::Vector3d field_dir = Eigen::Vector3d::UnitZ();    // unit, NV frame
  double field_per_current = 0.0;                          // G/A

  void validate() const;
  // Field direction tilted from the transverse (xy) plane by theta, xz-plane.
  static Eigen::Vector3d tilted_dir(double theta_rad);
};

// Two ODMR transition frequencies (lowest eigenstate to the upper pair),
// sorted ascending, MHz. Exact 3x3 Hermitian eigendecomposition.
std::pair<double, double> odmr_transitions(const NVModel& model, double current_A);

struct OdmrPoint {
  double current_A;
  double f_minus_MHz;
  double f_plus_MHz;
};

struct OdmrFit {
  NVModel model;
  double tilt_rad = 0.0;  // field tilt from the transverse plane
  double field_per_current_stderr = 0.0;
  double tilt_stderr = 0.0;
  double strain_stderr = 0.0;
  double residual_rms = 0.0;
  int iterations = 0;

  std::string to_json() const;
};

// Nonlinear least squares over (field_per_current, tilt, strain_E) with D and
// gyro_e fixed from init.
OdmrFit fit_odmr_series(const std::vector<OdmrPoint>& data, const NVModel& init);

std::vector<OdmrPoint> odmr_series_from_csv(const std::string& text);

struct RabiTrace {
  std::vector<double> times_us;
  std::vector<double> signal;
  double current_A = 0.0;

  static RabiTrace from_csv(const std::string& text);
};

struct RabiFit {
  double rabi_frequency_khz = 0.0;
  double decay_time_us = 0.0;
  double amplitude = 0.0;
  double phase = 0.0;
  double baseline = 0.0;
  double frequency_stderr_khz = 0.0;
  double residual_rms = 0.0;

  std::string to_json() const;
};

// Least-squares fit of baseline + amplitude exp(-t/decay) sin(2 pi f t + phase);
// initial frequency from the discrete Fourier peak.
RabiFit fit_decaying_sine(const RabiTrace& trace);

struct LinearFit {
  double slope = 0.0;      // kHz/A
  double intercept = 0.0;  // kHz
  double slope_stderr = 0.0;
  bool stderr_defined = true;

  std::string to_json() const;
};

// Weighted linear regression of Rabi frequency on current, weights from the
// per-fit frequency standard errors (equal weights when absent).
LinearFit rabi_vs_current(const std::vector<std::pair<double, RabiFit>>& fits);

enum class Species { Proton, Electron };

double gyromagnetic_mhz_per_g(Species species);

// gamma/2pi * B0, MHz.
double larmor_frequency(double b0_gauss, Species species);
double larmor_frequency(double b0_gauss, double gamma_mhz_per_g);

// Converts a Rabi-frequency-to-current slope into a field-to-current ratio,
// using the convention Omega_d = (gamma/2pi) B1.
double rabi_to_field(double slope_khz_per_A, double gamma_khz_per_G = kGyroProtonKhzPerG);

namespace detail {

// Minimal Levenberg-Marquardt with forward-difference Jacobian.
struct LevMarResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;  // residual-scaled local curvature estimate
  double residual_rms = 0.0;
  int iterations = 0;
  bool converged = false;
};

LevMarResult levmar(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residuals,
                    const Eigen::VectorXd& p0, int max_iters = 200, double tol = 1e-14);

}  // namespace detail

}  // namespace spindrive
