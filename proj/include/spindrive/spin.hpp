#pragma once

#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace spindrive {

using complexd = std::complex<double>;

// Basis convention: |up> = (1,0), |down> = (0,1).
inline const Eigen::Vector2cd& spin_up() {
  static const Eigen::Vector2cd v{1.0, 0.0};
  return v;
}
inline const Eigen::Vector2cd& spin_down() {
  static const Eigen::Vector2cd v{0.0, 1.0};
  return v;
}

// Driven two-level system: H = (omega0/2) sz + omega_d f(t) (sx + tan(theta_d) sz).
// All frequencies are angular, hbar = 1.
struct DriveSystem {
  double omega0 = 1.0;   // level splitting
  double omega_d = 0.0;  // maximum drive amplitude
  double theta_d = 0.0;  // drive tilt from the transverse axis, rad

  void validate() const {
    if (!(omega0 > 0.0)) throw std::invalid_argument("DriveSystem: omega0 must be > 0");
    if (!(omega_d >= 0.0)) throw std::invalid_argument("DriveSystem: omega_d must be >= 0");
    if (!(theta_d >= 0.0 && theta_d < M_PI / 2.0))
      throw std::domain_error("DriveSystem: theta_d must lie in [0, pi/2)");
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::Vector2cd> states;
  std::vector<std::array<double, 2>> populations;  // (p_up, p_down) per sample
  double final_fidelity = 0.0;                     // |<down|psi(t_final)>|^2
};

struct PropagatorConfig {
  double base_step = 1.0 / 200.0;  // substep as fraction of the shortest dynamical period
  double convergence_tol = 1e-9;   // stop refining when successive final fidelities differ by less
  int max_refinements = 14;
  int output_samples = 1000;  // trajectory sampling grid, decoupled from integration substeps

  void validate() const {
    if (!(base_step > 0.0)) throw std::invalid_argument("PropagatorConfig: base_step must be > 0");
    if (!(convergence_tol > 0.0))
      throw std::invalid_argument("PropagatorConfig: convergence_tol must be > 0");
    if (max_refinements < 1)
      throw std::invalid_argument("PropagatorConfig: max_refinements must be >= 1");
    if (output_samples < 2)
      throw std::invalid_argument("PropagatorConfig: output_samples must be >= 2");
  }
};

struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& what, double f_prev, double f_last)
      : std::runtime_error(what), fidelity_prev(f_prev), fidelity_last(f_last) {}
  double fidelity_prev;
  double fidelity_last;
};

using WaveformFn = std::function<double(double)>;

// H(f) = (omega0/2) sz + omega_d f (sx + tan(theta_d) sz); Hermitian by construction.
Eigen::Matrix2cd hamiltonian_at(const DriveSystem& sys, double f_value);

// Exact unitary for a constant-f substep of length tau: exp(-i H(f) tau).
Eigen::Matrix2cd step_unitary(const DriveSystem& sys, double f_value, double tau);

// Final state only; cheaper than a full Trajectory. Returns the converged
// substep count through n_substeps_out if non-null.
Eigen::Vector2cd propagate_final(const DriveSystem& sys, const WaveformFn& f, double t_pulse,
                                 const Eigen::Vector2cd& state0, const PropagatorConfig& cfg,
                                 long* n_substeps_out = nullptr);

// Piecewise-constant midpoint integrator with exact 2x2 substep exponentials,
// refined by step halving until the final fidelity settles.
Trajectory propagate(const DriveSystem& sys, const WaveformFn& f, double t_pulse,
                     const Eigen::Vector2cd& state0, const PropagatorConfig& cfg);

double pulse_fidelity(const Trajectory& traj);

// Closed-form rotating-frame evolution from |up>: rotation about the
// equatorial axis set by the drive phase, at rate omega_d. Weak-drive oracle.
Trajectory rwa_reference(const DriveSystem& sys, double phase, double duration,
                         int n_samples = 1000);

}  // namespace spindrive
