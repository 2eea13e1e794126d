#pragma once

#include <string>
#include <vector>

#include "spindrive/spin.hpp"

namespace spindrive {

enum class EnvelopeKind { ErrorFunction, Rectangular };

// Smooth flat-top envelope: error-function rise/fall over ~dt, exactly zero at
// both edges, level-symmetric about t_pi/2.
double erf_envelope(double t, double t_pi, double dt);

// Offset-sine pulse parameters: f(t) = eps(t) (a + (1 - |a|) sin(omega0 t + phi)).
struct PulseSpec {
  double offset_a = 0.0;    // DC offset, |a| <= 1
  double phase_phi = 0.0;   // drive phase, rad
  double rise_time_dt = 0.0;
  double duration_tpi = 0.0;
  EnvelopeKind envelope_kind = EnvelopeKind::ErrorFunction;

  void validate() const;
  double envelope(double t) const;
  // Continuous waveform value; |result| <= 1 for any valid spec.
  double value(double t, double omega0) const;
  WaveformFn waveform(double omega0) const;
};

// Uniformly sampled control signal on [0, duration].
struct ControlWaveform {
  std::vector<double> times;
  std::vector<double> values;
  bool lost_carrier = false;  // set by spectral_filter when the dominant tone was removed

  std::size_t size() const { return values.size(); }
  double duration() const { return times.empty() ? 0.0 : times.back(); }
  double sample_spacing() const;
  // Linear interpolation; clamps outside [0, duration].
  double value_at(double t) const;
  WaveformFn interpolant() const;

  std::string to_csv() const;
  static ControlWaveform from_csv(const std::string& text);
  std::string to_json() const;
  static ControlWaveform from_json(const std::string& text);
};

ControlWaveform offset_sine(const PulseSpec& spec, const DriveSystem& sys, int n_samples);

// Time-average diagnostic, normalized as (2/t_pulse) * integral of f(t) dt
// (trapezoidal); at t_pulse = pi/omega_d this matches the zero-frequency
// Fourier component convention of the drive analysis.
double dc_component(const ControlWaveform& w);

// Orthogonal projection onto the band-limited subspace (|omega| <= cutoff)
// intersected with the zero-endpoints subspace. Exactly idempotent.
ControlWaveform spectral_filter(const ControlWaveform& w, double cutoff);

}  // namespace spindrive
