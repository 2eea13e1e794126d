#pragma once

#include <utility>

#include <Eigen/Dense>

#include "spindrive/spin.hpp"
#include "spindrive/waveform.hpp"

namespace spindrive {

// Infidelity map over (phase, offset) for pi-pulses of a fixed system.
struct LandscapeGrid {
  std::vector<double> phases;   // ascending, [0, 2pi)
  std::vector<double> offsets;  // ascending, [-1, 1]
  Eigen::MatrixXd infidelity;   // offsets x phases
  DriveSystem sys;
  PulseSpec spec_template;

  std::string to_csv() const;
  std::string to_json() const;
  // Gnuplot-compatible matrix (infidelity cells only, space separated).
  std::string to_matrix() const;
};

struct OptimumReport {
  double best_phase = 0.0;
  double best_offset = 0.0;
  double best_fidelity = 0.0;
  double zero_offset_best_phase = 0.0;
  double zero_offset_best_fidelity = 0.0;
  double zero_offset_worst_fidelity = 1.0;

  std::string to_json() const;
};

// t_pi = pi/omega_d + 2*dt, extrapolated from the weak-driving pi time plus
// the envelope rise and fall.
double pi_duration(const DriveSystem& sys, double dt);

// Default pi-pulse template for a system: erf envelope, rise time
// pi/(10 omega0), duration pi_duration.
PulseSpec default_pulse_template(const DriveSystem& sys);

// Fidelity of a single offset-sine pi-pulse from |up>. Shared by landscape
// cells and the refinement search (identical code path).
double offset_sine_fidelity(const DriveSystem& sys, const PulseSpec& spec,
                            const PropagatorConfig& cfg);

LandscapeGrid landscape(const DriveSystem& sys, const PulseSpec& spec_template, int phase_n,
                        int offset_n, const PropagatorConfig& cfg);

// Derivative-free pattern search over (phase, offset) from the best grid cell;
// phase wraps mod 2pi, offset clamps to [-1, 1]. Also refines the a = 0
// phase-only best and worst.
OptimumReport refine_optimum(const LandscapeGrid& grid, double tol,
                             const PropagatorConfig& cfg);

// Jointly optimized reports for a tilted system and its theta_d = 0
// counterpart sharing omega0 and omega_d.
std::pair<OptimumReport, OptimumReport> tilt_comparison(const DriveSystem& sys_tilted,
                                                        const DriveSystem& sys_flat,
                                                        const PropagatorConfig& cfg,
                                                        int phase_n = 64, int offset_n = 41,
                                                        double tol = 1e-4);

}  // namespace spindrive
