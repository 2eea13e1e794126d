#include "spindrive/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fftw3.h>
#include <nlohmann/json.hpp>

namespace spindrive {

double erf_envelope(double t, double t_pi, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("erf_envelope: dt must be > 0");
  if (!(t_pi > 2.0 * dt)) throw std::domain_error("erf_envelope: t_pi must exceed 2*dt");
  if (t < 0.0 || t > t_pi) throw std::domain_error("erf_envelope: t outside [0, t_pi]");
  auto raw = [&](double x) {
    return std::erf(2.0 * (x - dt) / dt) + std::erf(2.0 * (t_pi - x - dt) / dt);
  };
  const double mid = raw(0.5 * t_pi);
  const double edge = raw(0.0);
  const double eps = (raw(t) - edge) / (mid - edge);
  return std::clamp(eps, 0.0, 1.0);
}

void PulseSpec::validate() const {
  if (!(std::abs(offset_a) <= 1.0)) throw std::invalid_argument("PulseSpec: |offset_a| must be <= 1");
  if (!(duration_tpi > 0.0)) throw std::invalid_argument("PulseSpec: duration_tpi must be > 0");
  if (!std::isfinite(phase_phi)) throw std::invalid_argument("PulseSpec: phase_phi not finite");
  if (envelope_kind == EnvelopeKind::ErrorFunction) {
    if (!(rise_time_dt > 0.0))
      throw std::invalid_argument("PulseSpec: rise_time_dt must be > 0 for erf envelope");
    if (!(duration_tpi > 2.0 * rise_time_dt))
      throw std::domain_error("PulseSpec: duration_tpi must exceed 2*rise_time_dt");
  }
}

double PulseSpec::envelope(double t) const {
  if (envelope_kind == EnvelopeKind::Rectangular) return 1.0;
  return erf_envelope(t, duration_tpi, rise_time_dt);
}

double PulseSpec::value(double t, double omega0) const {
  // Reduce the phase mod 2pi so F(phi) is periodic independent of libm's
  // argument reduction.
  double phi = std::fmod(phase_phi, 2.0 * M_PI);
  if (phi < 0.0) phi += 2.0 * M_PI;
  const double carrier = offset_a + (1.0 - std::abs(offset_a)) * std::sin(omega0 * t + phi);
  return envelope(t) * carrier;
}

WaveformFn PulseSpec::waveform(double omega0) const {
  validate();
  return [spec = *this, omega0](double t) { return spec.value(t, omega0); };
}

double ControlWaveform::sample_spacing() const {
  if (times.size() < 2) throw std::invalid_argument("ControlWaveform: need >= 2 samples");
  return times[1] - times[0];
}

double ControlWaveform::value_at(double t) const {
  if (times.empty()) throw std::invalid_argument("ControlWaveform: empty");
  if (t <= times.front()) return values.front();
  if (t >= times.back()) return values.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - times.begin());
  const double w = (t - times[i - 1]) / (times[i] - times[i - 1]);
  return values[i - 1] + w * (values[i] - values[i - 1]);
}

WaveformFn ControlWaveform::interpolant() const {
  return [w = *this](double t) { return w.value_at(t); };
}

ControlWaveform offset_sine(const PulseSpec& spec, const DriveSystem& sys, int n_samples) {
  spec.validate();
  sys.validate();
  if (n_samples < 2) throw std::invalid_argument("offset_sine: n_samples must be >= 2");
  ControlWaveform w;
  w.times.resize(n_samples);
  w.values.resize(n_samples);
  for (int k = 0; k < n_samples; ++k) {
    const double t = spec.duration_tpi * static_cast<double>(k) / static_cast<double>(n_samples - 1);
    w.times[k] = t;
    w.values[k] = spec.value(t, sys.omega0);
  }
  return w;
}

double dc_component(const ControlWaveform& w) {
  if (w.values.empty()) throw std::invalid_argument("dc_component: empty waveform");
  if (w.values.size() == 1) return 2.0 * w.values[0];
  const double dt = w.sample_spacing();
  double sum = 0.0;
  for (double v : w.values) sum += v;
  sum -= 0.5 * (w.values.front() + w.values.back());
  return 2.0 * sum * dt / w.duration();
}

namespace {

void check_uniform(const ControlWaveform& w) {
  const double dt = w.sample_spacing();
  for (std::size_t i = 1; i < w.times.size(); ++i) {
    if (std::abs((w.times[i] - w.times[i - 1]) - dt) > 1e-9 * std::max(dt, 1.0))
      throw std::invalid_argument("spectral_filter: non-uniform sample grid");
  }
}

// Zero all DFT bins with |omega| > cutoff; returns the band-limited signal.
// Also reports the dominant nonzero-frequency bin of the input.
std::vector<double> band_project(const std::vector<double>& x, double dt, double cutoff,
                                 double* peak_omega) {
  const int n = static_cast<int>(x.size());
  std::vector<double> in(x);
  std::vector<fftw_complex> spec(static_cast<std::size_t>(n / 2 + 1));
  fftw_plan fwd = fftw_plan_dft_r2c_1d(n, in.data(), spec.data(), FFTW_ESTIMATE);
  fftw_execute(fwd);
  fftw_destroy_plan(fwd);

  const double d_omega = 2.0 * M_PI / (static_cast<double>(n) * dt);
  double peak_mag = 0.0;
  if (peak_omega) *peak_omega = 0.0;
  for (int k = 1; k <= n / 2; ++k) {
    const double mag = std::hypot(spec[k][0], spec[k][1]);
    if (peak_omega && mag > peak_mag) {
      peak_mag = mag;
      *peak_omega = k * d_omega;
    }
  }
  for (int k = 0; k <= n / 2; ++k) {
    if (k * d_omega > cutoff) spec[k][0] = spec[k][1] = 0.0;
  }

  std::vector<double> out(static_cast<std::size_t>(n));
  fftw_plan bwd = fftw_plan_dft_c2r_1d(n, spec.data(), out.data(), FFTW_ESTIMATE);
  fftw_execute(bwd);
  fftw_destroy_plan(bwd);
  for (double& v : out) v /= static_cast<double>(n);
  return out;
}

}  // namespace

ControlWaveform spectral_filter(const ControlWaveform& w, double cutoff) {
  if (!(cutoff > 0.0)) throw std::invalid_argument("spectral_filter: cutoff must be > 0");
  if (w.values.size() < 4) throw std::invalid_argument("spectral_filter: need >= 4 samples");
  check_uniform(w);
  const std::size_t n = w.values.size();
  const double dt = w.sample_spacing();

  double peak_omega = 0.0;
  std::vector<double> x = band_project(w.values, dt, cutoff, &peak_omega);

  // Endpoint correction stays inside the band: subtract the combination of the
  // band-limited endpoint representers that zeroes the first and last samples.
  std::vector<double> e0(n, 0.0), e1(n, 0.0);
  e0[0] = 1.0;
  e1[n - 1] = 1.0;
  const std::vector<double> q0 = band_project(e0, dt, cutoff, nullptr);
  const std::vector<double> q1 = band_project(e1, dt, cutoff, nullptr);
  const double a00 = q0[0], a01 = q1[0];
  const double a10 = q0[n - 1], a11 = q1[n - 1];
  const double det = a00 * a11 - a01 * a10;
  if (std::abs(det) < 1e-15)
    throw std::runtime_error("spectral_filter: degenerate endpoint correction");
  const double alpha = (x[0] * a11 - x[n - 1] * a01) / det;
  const double beta = (x[n - 1] * a00 - x[0] * a10) / det;

  ControlWaveform out;
  out.times = w.times;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = x[i] - alpha * q0[i] - beta * q1[i];
  // The corrected endpoints are zero up to rounding; pin them exactly.
  out.values[0] = 0.0;
  out.values[n - 1] = 0.0;
  out.lost_carrier = peak_omega > cutoff;
  return out;
}

std::string ControlWaveform::to_csv() const {
  std::ostringstream os;
  os << "# time,value\n";
  char buf[80];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", times[i], values[i]);
    os << buf;
  }
  return os.str();
}

ControlWaveform ControlWaveform::from_csv(const std::string& text) {
  ControlWaveform w;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    double t, v;
    char comma;
    std::istringstream ls(line);
    if (!(ls >> t >> comma >> v) || comma != ',')
      throw std::runtime_error("ControlWaveform::from_csv: parse error at line " +
                               std::to_string(line_no));
    w.times.push_back(t);
    w.values.push_back(v);
  }
  if (w.times.empty()) throw std::runtime_error("ControlWaveform::from_csv: no data rows");
  return w;
}

std::string ControlWaveform::to_json() const {
  nlohmann::json j;
  j["times"] = times;
  j["values"] = values;
  j["lost_carrier"] = lost_carrier;
  return j.dump(2);
}

ControlWaveform ControlWaveform::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ControlWaveform w;
  w.times = j.at("times").get<std::vector<double>>();
  w.values = j.at("values").get<std::vector<double>>();
  w.lost_carrier = j.value("lost_carrier", false);
  return w;
}

}  // namespace spindrive
