#pragma once

#include <string>
#include <vector>

#include "spindrive/pulseopt.hpp"
#include "spindrive/spin.hpp"
#include "spindrive/waveform.hpp"

namespace spindrive {

// Constrained pi-pulse optimal control problem: maximize the final |down>
// occupation minus an energy penalty, with the control restricted to
// frequencies below spectral_cutoff and to zero value and zero derivative at
// both ends.
struct OCTProblem {
  DriveSystem sys;
  double t_pi = 0.0;
  double spectral_cutoff = 0.0;  // angular frequency; default 10.7 * omega0
  double energy_weight = 0.0;    // lambda in J = F - lambda * integral f^2 dt
  int max_iters = 300;
  double grad_tol = 1e-10;   // relative J change
  int n_time_samples = 0;    // control intervals; 0 = auto from the cutoff

  void validate() const;
  int time_samples() const;
};

struct IterationRecord {
  int iteration;
  double objective;
  double fidelity;
  double peak_amplitude;
};

struct OCTResult {
  ControlWaveform waveform;               // sampled control; amplitude may exceed 1
  std::vector<double> sine_coefficients;  // f(t) = sum_m c_m sin(m pi t / t_pi)
  double t_pi = 0.0;
  double fidelity = 0.0;
  int iterations = 0;
  bool converged = false;
  double peak_amplitude = 0.0;  // max |f|, in units of omega_d
  double deriv_start = 0.0;     // analytic df/dt at t = 0 and t = t_pi
  double deriv_end = 0.0;
  std::vector<IterationRecord> log;

  // Exact continuous control reconstructed from the sine coefficients.
  WaveformFn continuous() const;
  std::string log_csv() const;
};

// Discretized objective and its adjoint gradient over the per-interval control
// samples; the gradient is exact for the piecewise-constant discretization.
double control_objective(const OCTProblem& problem, const std::vector<double>& u,
                         double* fidelity_out = nullptr);
std::vector<double> control_gradient(const OCTProblem& problem, const std::vector<double>& u);

OCTResult solve(const OCTProblem& problem);

// Bisect the energy weight so the solved waveform's peak |f| lands in
// [0.95, 1.10]; returns the tuned lambda.
double autotune_energy_weight(const OCTProblem& problem);

struct OffsetSineFit {
  double offset_a = 0.0;
  double phase_phi = 0.0;
  double amplitude_scale = 1.0;
  double residual_rms = 0.0;
  double fit_fidelity = 0.0;

  std::string to_json() const;
};

// Least-squares fit of a sampled control to the offset-sine family with the
// template's envelope fixed; optionally with a free amplitude scale.
OffsetSineFit fit_offset_sine(const ControlWaveform& w, const DriveSystem& sys,
                              const PulseSpec& spec_template, bool fit_scale = false);

struct ComparisonRow {
  double omega_d = 0.0;
  double oct_infidelity = 0.0;
  double oct_fit_infidelity = 0.0;
  double offset_sine_infidelity = 0.0;
  double oct_peak_amplitude = 0.0;
  bool ok = true;
  std::string error;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::string to_csv() const;
  std::string to_json() const;
};

struct CompareOptions {
  double cutoff_factor = 10.7;  // spectral cutoff in units of omega0
  double energy_weight = 1e-3;
  int oct_max_iters = 500;
  int phase_n = 32;  // landscape grid for the optimized offset-sine
  int offset_n = 21;
  double refine_tol = 1e-4;
};

// For each drive amplitude: OCT, least-squares offset-sine fit of the OCT
// signal, and the grid-plus-refinement optimized offset-sine, all sharing
// t_pi, tilt, and bandwidth constraint. Per-row failures are recorded, not
// fatal.
ComparisonTable compare_suite(const std::vector<double>& amplitudes, const DriveSystem& sys_base,
                              const PropagatorConfig& cfg, const CompareOptions& options = {});

}  // namespace spindrive
