#include "spindrive/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace spindrive {

namespace detail {

LevMarResult levmar(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residuals,
                    const Eigen::VectorXd& p0, int max_iters, double tol) {
  const auto jacobian = [&](const Eigen::VectorXd& p, const Eigen::VectorXd& r0) {
    Eigen::MatrixXd jac(r0.size(), p.size());
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      const double h = 1e-7 * std::max(std::abs(p[j]), 1e-4);
      Eigen::VectorXd pj = p;
      pj[j] += h;
      jac.col(j) = (residuals(pj) - r0) / h;
    }
    return jac;
  };

  Eigen::VectorXd p = p0;
  Eigen::VectorXd r = residuals(p);
  double cost = r.squaredNorm();
  double mu = 1e-3;
  int iter = 0;
  bool converged = false;
  for (; iter < max_iters; ++iter) {
    const Eigen::MatrixXd jac = jacobian(p, r);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    bool stepped = false;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::MatrixXd a = jtj;
      a.diagonal().array() += mu * jtj.diagonal().array().max(1e-12);
      const Eigen::VectorXd dp = a.ldlt().solve(-jtr);
      const Eigen::VectorXd p_try = p + dp;
      const Eigen::VectorXd r_try = residuals(p_try);
      const double cost_try = r_try.squaredNorm();
      if (cost_try < cost) {
        const double improvement = (cost - cost_try) / std::max(cost, 1e-300);
        p = p_try;
        r = r_try;
        cost = cost_try;
        mu = std::max(mu * 0.3, 1e-12);
        stepped = true;
        if (improvement < tol) converged = true;
        break;
      }
      mu *= 4.0;
    }
    if (!stepped || converged) {
      converged = true;
      break;
    }
  }

  LevMarResult result;
  result.params = p;
  result.iterations = iter;
  result.converged = converged;
  const Eigen::Index n = r.size(), np = p.size();
  result.residual_rms = std::sqrt(cost / static_cast<double>(n));
  const Eigen::MatrixXd jac = jacobian(p, r);
  const double sigma2 = (n > np) ? cost / static_cast<double>(n - np) : 0.0;
  result.covariance = sigma2 * (jac.transpose() * jac)
                                   .completeOrthogonalDecomposition()
                                   .pseudoInverse();
  return result;
}

}  // namespace detail

namespace {

Eigen::Matrix3cd spin1_sx() {
  Eigen::Matrix3cd m;
  const double s = 1.0 / std::sqrt(2.0);
  m << 0, s, 0,
       s, 0, s,
       0, s, 0;
  return m;
}

Eigen::Matrix3cd spin1_sy() {
  Eigen::Matrix3cd m;
  const std::complex<double> i{0.0, 1.0};
  const double s = 1.0 / std::sqrt(2.0);
  m << 0, -i * s, 0,
       i * s, 0, -i * s,
       0, i * s, 0;
  return m;
}

Eigen::Matrix3cd spin1_sz() {
  Eigen::Matrix3cd m;
  m << 1, 0, 0,
       0, 0, 0,
       0, 0, -1;
  return m;
}

}  // namespace

void NVModel::validate() const {
  if (!(zero_field_splitting_D > 0.0)) throw std::invalid_argument("NVModel: D must be > 0");
  if (!(gyro_e > 0.0)) throw std::invalid_argument("NVModel: gyro_e must be > 0");
  if (std::abs(field_dir.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("NVModel: field_dir must be a unit vector");
}

Eigen::Vector3d NVModel::tilted_dir(double theta_rad) {
  return {std::cos(theta_rad), 0.0, std::sin(theta_rad)};
}

std::pair<double, double> odmr_transitions(const NVModel& model, double current_A) {
  model.validate();
  static const Eigen::Matrix3cd sx = spin1_sx();
  static const Eigen::Matrix3cd sy = spin1_sy();
  static const Eigen::Matrix3cd sz = spin1_sz();

  const Eigen::Vector3d b = model.field_per_current * current_A * model.field_dir;
  const Eigen::Matrix3cd h = model.zero_field_splitting_D * sz * sz +
                             model.strain_E * (sx * sx - sy * sy) +
                             model.gyro_e * (b.x() * sx + b.y() * sy + b.z() * sz);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> solver(h);
  const Eigen::Vector3d ev = solver.eigenvalues();  // ascending
  return {ev[1] - ev[0], ev[2] - ev[0]};
}

OdmrFit fit_odmr_series(const std::vector<OdmrPoint>& data, const NVModel& init) {
  if (data.size() < 4) throw FitError("fit_odmr_series: need at least 4 data points");
  std::set<double> currents;
  for (const auto& d : data) currents.insert(d.current_A);
  if (currents.size() < 2) throw FitError("fit_odmr_series: degenerate input, all currents equal");

  // Parameters: (field_per_current, tilt from transverse plane, strain_E).
  auto residuals = [&](const Eigen::VectorXd& p) {
    NVModel m = init;
    m.field_per_current = p[0];
    m.field_dir = NVModel::tilted_dir(p[1]);
    m.strain_E = p[2];
    Eigen::VectorXd r(2 * static_cast<Eigen::Index>(data.size()));
    for (std::size_t k = 0; k < data.size(); ++k) {
      const auto [fm, fp] = odmr_transitions(m, data[k].current_A);
      r[2 * static_cast<Eigen::Index>(k)] = fm - data[k].f_minus_MHz;
      r[2 * static_cast<Eigen::Index>(k) + 1] = fp - data[k].f_plus_MHz;
    }
    return r;
  };

  Eigen::VectorXd p0(3);
  const double init_tilt = std::asin(std::clamp(init.field_dir.z(), -1.0, 1.0));
  p0 << (init.field_per_current > 0.0 ? init.field_per_current : 100.0),
      init_tilt, std::max(init.strain_E, 0.5);
  const detail::LevMarResult lm = detail::levmar(residuals, p0, 400);
  if (!lm.converged) throw FitError("fit_odmr_series: fit did not converge");

  OdmrFit fit;
  fit.model = init;
  fit.model.field_per_current = lm.params[0];
  fit.tilt_rad = lm.params[1];
  fit.model.field_dir = NVModel::tilted_dir(fit.tilt_rad);
  fit.model.strain_E = lm.params[2];
  fit.field_per_current_stderr = std::sqrt(std::max(lm.covariance(0, 0), 0.0));
  fit.tilt_stderr = std::sqrt(std::max(lm.covariance(1, 1), 0.0));
  fit.strain_stderr = std::sqrt(std::max(lm.covariance(2, 2), 0.0));
  fit.residual_rms = lm.residual_rms;
  fit.iterations = lm.iterations;
  return fit;
}

RabiFit fit_decaying_sine(const RabiTrace& trace) {
  const std::size_t n = trace.times_us.size();
  if (n < 8 || trace.signal.size() != n)
    throw FitError("fit_decaying_sine: need >= 8 samples");

  double mean = 0.0;
  for (double v : trace.signal) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : trace.signal) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double span = trace.times_us.back() - trace.times_us.front();
  if (!(span > 0.0)) throw FitError("fit_decaying_sine: zero time span");
  if (var < 1e-24) throw FitError("fit_decaying_sine: no oscillation in signal");

  // Frequency guess from the discrete Fourier peak over the natural grid.
  const std::size_t n_freq = n / 2;
  double peak_mag = 0.0, peak_freq = 0.0;
  std::complex<double> peak_comp{0.0, 0.0};
  std::vector<double> mags;
  mags.reserve(n_freq);
  for (std::size_t k = 1; k <= n_freq; ++k) {
    const double f = static_cast<double>(k) / span;  // cycles per us
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const double ph = 2.0 * M_PI * f * trace.times_us[i];
      acc += (trace.signal[i] - mean) * std::complex<double>(std::cos(ph), -std::sin(ph));
    }
    const double mag = std::abs(acc);
    mags.push_back(mag);
    if (mag > peak_mag) {
      peak_mag = mag;
      peak_freq = f;
      peak_comp = acc;
    }
  }
  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  if (!(peak_mag > 3.0 * median) || peak_freq == 0.0)
    throw FitError("fit_decaying_sine: no spectral peak above the noise floor");

  // signal ~ b + A exp(-t/tau) sin(2 pi f t + phi); params (b, A, tau, f, phi).
  auto residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const double t = trace.times_us[i];
      const double model =
          p[0] + p[1] * std::exp(-t / p[2]) * std::sin(2.0 * M_PI * p[3] * t + p[4]);
      r[static_cast<Eigen::Index>(i)] = model - trace.signal[i];
    }
    return r;
  };

  Eigen::VectorXd p0(5);
  // DFT component at the peak gives amplitude and phase starting values.
  const double amp0 = 2.0 * peak_mag / static_cast<double>(n);
  const double phase0 = std::arg(peak_comp) + M_PI / 2.0;  // sine vs complex exponential
  p0 << mean, amp0, span, peak_freq, phase0;
  const detail::LevMarResult lm = detail::levmar(residuals, p0, 400);
  if (!lm.converged) throw FitError("fit_decaying_sine: fit did not converge");

  RabiFit fit;
  fit.baseline = lm.params[0];
  fit.amplitude = lm.params[1];
  fit.decay_time_us = std::abs(lm.params[2]);
  fit.rabi_frequency_khz = std::abs(lm.params[3]) * 1e3;  // cycles/us -> kHz
  fit.phase = lm.params[4];
  fit.frequency_stderr_khz = std::sqrt(std::max(lm.covariance(3, 3), 0.0)) * 1e3;
  fit.residual_rms = lm.residual_rms;
  if (!(fit.rabi_frequency_khz > 0.0) || !(fit.decay_time_us > 0.0))
    throw FitError("fit_decaying_sine: degenerate fit result");
  return fit;
}

LinearFit rabi_vs_current(const std::vector<std::pair<double, RabiFit>>& fits) {
  std::set<double> currents;
  for (const auto& [i, f] : fits) currents.insert(i);
  if (currents.size() < 2)
    throw std::invalid_argument("rabi_vs_current: need >= 2 distinct currents");

  const std::size_t n = fits.size();
  bool have_errors = true;
  for (const auto& [i, f] : fits) {
    if (!(f.frequency_stderr_khz > 0.0) || !std::isfinite(f.frequency_stderr_khz))
      have_errors = false;
  }
  double sw = 0.0, swx = 0.0, swy = 0.0, swxx = 0.0, swxy = 0.0;
  for (const auto& [cur, fit] : fits) {
    const double w = have_errors ? 1.0 / (fit.frequency_stderr_khz * fit.frequency_stderr_khz)
                                 : 1.0;
    const double y = fit.rabi_frequency_khz;
    sw += w;
    swx += w * cur;
    swy += w * y;
    swxx += w * cur * cur;
    swxy += w * cur * y;
  }
  const double det = sw * swxx - swx * swx;
  LinearFit lf;
  lf.slope = (sw * swxy - swx * swy) / det;
  lf.intercept = (swxx * swy - swx * swxy) / det;

  if (n <= 2) {
    lf.stderr_defined = false;
    lf.slope_stderr = std::numeric_limits<double>::quiet_NaN();
    return lf;
  }
  double chi2 = 0.0;
  for (const auto& [cur, fit] : fits) {
    const double w = have_errors ? 1.0 / (fit.frequency_stderr_khz * fit.frequency_stderr_khz)
                                 : 1.0;
    const double r = fit.rabi_frequency_khz - (lf.slope * cur + lf.intercept);
    chi2 += w * r * r;
  }
  const double sxx_w = swxx - swx * swx / sw;
  const double scale = have_errors ? 1.0 : chi2 / static_cast<double>(n - 2);
  lf.slope_stderr = std::sqrt(scale / sxx_w);
  return lf;
}

double gyromagnetic_mhz_per_g(Species species) {
  switch (species) {
    case Species::Proton:
      return kGyroProtonKhzPerG * 1e-3;
    case Species::Electron:
      return kGyroElectronMhzPerG;
  }
  throw std::invalid_argument("unknown species");
}

double larmor_frequency(double b0_gauss, Species species) {
  return larmor_frequency(b0_gauss, gyromagnetic_mhz_per_g(species));
}

double larmor_frequency(double b0_gauss, double gamma_mhz_per_g) {
  if (b0_gauss < 0.0) throw std::invalid_argument("larmor_frequency: b0 must be >= 0");
  return gamma_mhz_per_g * b0_gauss;
}

double rabi_to_field(double slope_khz_per_A, double gamma_khz_per_G) {
  if (!(slope_khz_per_A > 0.0)) throw std::invalid_argument("rabi_to_field: slope must be > 0");
  return slope_khz_per_A / gamma_khz_per_G;
}

std::vector<OdmrPoint> odmr_series_from_csv(const std::string& text) {
  std::vector<OdmrPoint> points;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    OdmrPoint p;
    char c1, c2;
    std::istringstream ls(line);
    if (!(ls >> p.current_A >> c1 >> p.f_minus_MHz >> c2 >> p.f_plus_MHz) || c1 != ',' ||
        c2 != ',')
      throw std::runtime_error("odmr_series_from_csv: parse error at line " +
                               std::to_string(line_no));
    points.push_back(p);
  }
  if (points.empty()) throw std::runtime_error("odmr_series_from_csv: no data rows");
  return points;
}

RabiTrace RabiTrace::from_csv(const std::string& text) {
  RabiTrace trace;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  bool have_current = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("current_A");
      if (pos != std::string::npos) {
        const auto eq = line.find('=', pos);
        if (eq != std::string::npos) {
          trace.current_A = std::stod(line.substr(eq + 1));
          have_current = true;
        }
      }
      continue;
    }
    double t, v;
    char c;
    std::istringstream ls(line);
    if (!(ls >> t >> c >> v) || c != ',')
      throw std::runtime_error("RabiTrace::from_csv: parse error at line " +
                               std::to_string(line_no));
    trace.times_us.push_back(t);
    trace.signal.push_back(v);
  }
  if (trace.times_us.empty()) throw std::runtime_error("RabiTrace::from_csv: no data rows");
  (void)have_current;
  return trace;
}

std::string OdmrFit::to_json() const {
  nlohmann::json j;
  j["field_per_current_G_per_A"] = model.field_per_current;
  j["tilt_deg"] = tilt_rad * 180.0 / M_PI;
  j["strain_E_MHz"] = model.strain_E;
  j["field_per_current_stderr"] = field_per_current_stderr;
  j["tilt_stderr_rad"] = tilt_stderr;
  j["strain_stderr_MHz"] = strain_stderr;
  j["residual_rms_MHz"] = residual_rms;
  j["iterations"] = iterations;
  return j.dump(2);
}

std::string RabiFit::to_json() const {
  nlohmann::json j;
  j["rabi_frequency_khz"] = rabi_frequency_khz;
  j["decay_time_us"] = decay_time_us;
  j["amplitude"] = amplitude;
  j["phase"] = phase;
  j["baseline"] = baseline;
  j["frequency_stderr_khz"] = frequency_stderr_khz;
  j["residual_rms"] = residual_rms;
  return j.dump(2);
}

std::string LinearFit::to_json() const {
  nlohmann::json j;
  j["slope_khz_per_A"] = slope;
  j["intercept_khz"] = intercept;
  j["slope_stderr"] = stderr_defined ? nlohmann::json(slope_stderr) : nlohmann::json();
  j["stderr_defined"] = stderr_defined;
  return j.dump(2);
}

}  // namespace spindrive
