#include "spindrive/oct.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace spindrive {

namespace {

constexpr complexd kI{0.0, 1.0};

struct StepOp {
  double hx, hz;  // H = hx sx + hz sz, traceless
  double tau;

  Eigen::Matrix2cd unitary() const {
    const double nu = std::hypot(hx, hz);
    Eigen::Matrix2cd u;
    if (nu == 0.0) {
      u.setIdentity();
      return u;
    }
    const double c = std::cos(nu * tau);
    const double s = std::sin(nu * tau);
    u << c - kI * s * (hz / nu), -kI * s * (hx / nu),
         -kI * s * (hx / nu), c + kI * s * (hz / nu);
    return u;
  }

  // dU/du for H(u) with dH/du = B (real symmetric), via the divided-difference
  // rule in the eigenbasis of H.
  Eigen::Matrix2cd unitary_derivative(const Eigen::Matrix2d& b) const {
    const double nu = std::hypot(hx, hz);
    // Real rotation diagonalizing H: eigenvalues +nu, -nu.
    double cth, sth;  // eigenvector angle
    if (nu == 0.0) {
      cth = 1.0;
      sth = 0.0;
    } else {
      // H = nu (sin(eta) sx + cos(eta) sz); V columns are the +/- eigenvectors.
      const double eta = std::atan2(hx, hz);
      cth = std::cos(0.5 * eta);
      sth = std::sin(0.5 * eta);
    }
    Eigen::Matrix2d v;
    v << cth, -sth,
         sth, cth;
    const Eigen::Matrix2d bt = v.transpose() * b * v;

    const complexd ep = std::exp(-kI * nu * tau);
    const complexd em = std::exp(kI * nu * tau);
    const complexd d00 = -kI * tau * ep;
    const complexd d11 = -kI * tau * em;
    const complexd d01 = (nu * tau < 1e-8)
                             ? complexd(-kI * tau)  // limit of sin(nu tau)/nu * (-i)
                             : complexd(-kI * std::sin(nu * tau) / nu);
    Eigen::Matrix2cd core;
    core << bt(0, 0) * d00, bt(0, 1) * d01,
            bt(1, 0) * d01, bt(1, 1) * d11;
    return v.cast<complexd>() * core * v.transpose().cast<complexd>();
  }
};

StepOp make_step(const DriveSystem& sys, double u, double tau) {
  const double d = sys.omega_d * u;
  return {d, 0.5 * sys.omega0 + d * std::tan(sys.theta_d), tau};
}

Eigen::Matrix2d control_operator(const DriveSystem& sys) {
  // dH/du = omega_d (sx + tan(theta_d) sz)
  Eigen::Matrix2d b;
  const double tz = sys.omega_d * std::tan(sys.theta_d);
  b << tz, sys.omega_d,
       sys.omega_d, -tz;
  return b;
}

// Sine-basis machinery. The control lives in span{sin(m pi t / T)} with
// m pi / T <= cutoff, intersected with the two endpoint-derivative
// constraints sum(m c_m) = 0 and sum((-1)^m m c_m) = 0.
struct SineBasis {
  double t_pi;
  int n_modes;
  int n_samples;
  Eigen::MatrixXd sample_matrix;  // n_samples x n_modes, midpoint sampling
  Eigen::VectorXd e1, e2;         // orthonormal constraint normals

  explicit SineBasis(const OCTProblem& p) : t_pi(p.t_pi) {
    n_modes = static_cast<int>(std::floor(p.spectral_cutoff * t_pi / M_PI));
    if (n_modes < 3) throw std::invalid_argument("oct: spectral cutoff leaves too few modes");
    n_samples = p.time_samples();
    sample_matrix.resize(n_samples, n_modes);
    for (int k = 0; k < n_samples; ++k) {
      const double t = (static_cast<double>(k) + 0.5) * t_pi / static_cast<double>(n_samples);
      for (int m = 0; m < n_modes; ++m)
        sample_matrix(k, m) = std::sin(static_cast<double>(m + 1) * M_PI * t / t_pi);
    }
    Eigen::VectorXd v1(n_modes), v2(n_modes);
    for (int m = 0; m < n_modes; ++m) {
      v1[m] = static_cast<double>(m + 1);
      v2[m] = ((m + 1) % 2 == 0 ? 1.0 : -1.0) * static_cast<double>(m + 1);
    }
    e1 = v1.normalized();
    Eigen::VectorXd w = v2 - v2.dot(e1) * e1;
    e2 = w.normalized();
  }

  Eigen::VectorXd project(const Eigen::VectorXd& c) const {
    return c - c.dot(e1) * e1 - c.dot(e2) * e2;
  }

  std::vector<double> samples(const Eigen::VectorXd& c) const {
    const Eigen::VectorXd u = sample_matrix * c;
    return {u.data(), u.data() + u.size()};
  }

  // Least-squares fit of an arbitrary midpoint-sampled signal.
  Eigen::VectorXd fit(const std::vector<double>& g) const {
    const Eigen::Map<const Eigen::VectorXd> gv(g.data(), static_cast<Eigen::Index>(g.size()));
    return (sample_matrix.transpose() * sample_matrix)
        .ldlt()
        .solve(sample_matrix.transpose() * gv);
  }
};

}  // namespace

void OCTProblem::validate() const {
  sys.validate();
  if (!(t_pi > 0.0)) throw std::invalid_argument("OCTProblem: t_pi must be > 0");
  if (!(spectral_cutoff > sys.omega0))
    throw std::invalid_argument("OCTProblem: spectral_cutoff must exceed omega0");
  if (energy_weight < 0.0) throw std::invalid_argument("OCTProblem: energy_weight must be >= 0");
  if (max_iters < 0) throw std::invalid_argument("OCTProblem: max_iters must be >= 0");
}

int OCTProblem::time_samples() const {
  if (n_time_samples > 0) return n_time_samples;
  const double cutoff_cycles = spectral_cutoff * t_pi / (2.0 * M_PI);
  return std::max(512, static_cast<int>(std::ceil(48.0 * cutoff_cycles)));
}

double control_objective(const OCTProblem& problem, const std::vector<double>& u,
                         double* fidelity_out) {
  const int n = static_cast<int>(u.size());
  const double tau = problem.t_pi / static_cast<double>(n);
  Eigen::Vector2cd psi = spin_up();
  double energy = 0.0;
  for (int k = 0; k < n; ++k) {
    psi = make_step(problem.sys, u[k], tau).unitary() * psi;
    energy += u[k] * u[k] * tau;
  }
  const double fid = std::norm(psi[1]);
  if (fidelity_out) *fidelity_out = fid;
  return fid - problem.energy_weight * energy;
}

std::vector<double> control_gradient(const OCTProblem& problem, const std::vector<double>& u) {
  const int n = static_cast<int>(u.size());
  const double tau = problem.t_pi / static_cast<double>(n);
  const Eigen::Matrix2d b = control_operator(problem.sys);

  std::vector<StepOp> steps(static_cast<std::size_t>(n));
  std::vector<Eigen::Vector2cd> psi(static_cast<std::size_t>(n) + 1);
  psi[0] = spin_up();
  for (int k = 0; k < n; ++k) {
    steps[k] = make_step(problem.sys, u[k], tau);
    psi[k + 1] = steps[k].unitary() * psi[k];
  }
  const complexd overlap = psi[n][1];  // <down|psi(T)>

  std::vector<double> grad(static_cast<std::size_t>(n));
  Eigen::Vector2cd chi = spin_down();  // back-propagated costate
  for (int k = n - 1; k >= 0; --k) {
    const Eigen::Matrix2cd du = steps[k].unitary_derivative(b);
    const complexd d_overlap = chi.dot(du * psi[k]);  // Eigen dot conjugates chi
    grad[k] = 2.0 * std::real(std::conj(overlap) * d_overlap) -
              2.0 * problem.energy_weight * u[k] * tau;
    chi = steps[k].unitary().adjoint() * chi;
  }
  return grad;
}

WaveformFn OCTResult::continuous() const {
  return [c = sine_coefficients, T = t_pi](double t) {
    double f = 0.0;
    for (std::size_t m = 0; m < c.size(); ++m)
      f += c[m] * std::sin(static_cast<double>(m + 1) * M_PI * t / T);
    return f;
  };
}

std::string OCTResult::log_csv() const {
  std::ostringstream os;
  os << "# iteration,objective,fidelity,peak_amplitude\n";
  char buf[120];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.iteration, r.objective, r.fidelity,
                  r.peak_amplitude);
    os << buf;
  }
  return os.str();
}

OCTResult solve(const OCTProblem& problem) {
  problem.validate();
  const SineBasis basis(problem);
  const int n = basis.n_samples;
  const double tau = problem.t_pi / static_cast<double>(n);

  auto eval = [&](const Eigen::VectorXd& c, double* fid) {
    return control_objective(problem, basis.samples(c), fid);
  };

  // Initial guess: zero-offset resonant sine under the pulse envelope, best
  // phase from a coarse scan, projected into the feasible subspace.
  PulseSpec env;
  env.rise_time_dt = M_PI / (10.0 * problem.sys.omega0);
  env.duration_tpi = problem.t_pi;
  env.envelope_kind = EnvelopeKind::ErrorFunction;
  if (!(env.duration_tpi > 2.0 * env.rise_time_dt))
    env.rise_time_dt = 0.25 * env.duration_tpi;

  Eigen::VectorXd c_best;
  double j_best = -1e300;
  for (int p = 0; p < 16; ++p) {
    const double phi = 2.0 * M_PI * static_cast<double>(p) / 16.0;
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      const double t = (static_cast<double>(k) + 0.5) * tau;
      g[k] = env.envelope(t) * std::sin(problem.sys.omega0 * t + phi);
    }
    const Eigen::VectorXd c = basis.project(basis.fit(g));
    const double j = eval(c, nullptr);
    if (j > j_best) {
      j_best = j;
      c_best = c;
    }
  }

  Eigen::VectorXd c = c_best;
  double fid = 0.0;
  double j_cur = eval(c, &fid);

  OCTResult result;
  auto record = [&](int iter, double j, double f, const Eigen::VectorXd& coeff) {
    const std::vector<double> u = basis.samples(coeff);
    double peak = 0.0;
    for (double v : u) peak = std::max(peak, std::abs(v));
    result.log.push_back({iter, j, f, peak});
  };
  record(0, j_cur, fid, c);

  double step = 0.1 / std::max(problem.sys.omega_d, 1e-12);
  int consecutive_failures = 0;
  int iter = 0;
  bool converged = false;
  for (; iter < problem.max_iters; ++iter) {
    const std::vector<double> u = basis.samples(c);
    const std::vector<double> gu = control_gradient(problem, u);
    const Eigen::Map<const Eigen::VectorXd> guv(gu.data(), static_cast<Eigen::Index>(gu.size()));
    Eigen::VectorXd gc = basis.project(basis.sample_matrix.transpose() * guv);
    const double gnorm = gc.norm();
    if (gnorm == 0.0) {
      converged = true;
      break;
    }

    // Backtracking line search; accepted iterates are strictly ascending in J.
    bool accepted = false;
    double alpha = step;
    double j_new = j_cur, fid_new = fid;
    for (int ls = 0; ls < 40; ++ls) {
      const Eigen::VectorXd c_try = c + alpha * gc;
      double f_try = 0.0;
      const double j_try = eval(c_try, &f_try);
      if (j_try > j_cur) {
        c = c_try;
        j_new = j_try;
        fid_new = f_try;
        accepted = true;
        step = (ls == 0) ? alpha * 1.5 : alpha;  // grow on an easy accept
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (++consecutive_failures >= 10) break;
      continue;
    }
    consecutive_failures = 0;
    const double rel_change = (j_new - j_cur) / std::max(std::abs(j_new), 1e-30);
    j_cur = j_new;
    fid = fid_new;
    record(iter + 1, j_cur, fid, c);
    if (rel_change < problem.grad_tol) {
      converged = true;
      ++iter;
      break;
    }
  }

  result.t_pi = problem.t_pi;
  result.sine_coefficients.assign(c.data(), c.data() + c.size());
  result.fidelity = fid;
  result.iterations = iter;
  result.converged = converged;

  const std::vector<double> u = basis.samples(c);
  for (double v : u) result.peak_amplitude = std::max(result.peak_amplitude, std::abs(v));

  double d0 = 0.0, d1 = 0.0;
  for (int m = 0; m < c.size(); ++m) {
    d0 += c[m] * static_cast<double>(m + 1);
    d1 += c[m] * static_cast<double>(m + 1) * ((m + 1) % 2 == 0 ? 1.0 : -1.0);
  }
  result.deriv_start = d0 * M_PI / problem.t_pi;
  result.deriv_end = d1 * M_PI / problem.t_pi;

  // Dense output samples on [0, t_pi] inclusive.
  const int n_out = n + 1;
  result.waveform.times.resize(n_out);
  result.waveform.values.resize(n_out);
  const WaveformFn f = result.continuous();
  for (int k = 0; k < n_out; ++k) {
    const double t = problem.t_pi * static_cast<double>(k) / static_cast<double>(n_out - 1);
    result.waveform.times[k] = t;
    result.waveform.values[k] = f(t);
  }
  result.waveform.values.front() = 0.0;
  result.waveform.values.back() = 0.0;
  return result;
}

double autotune_energy_weight(const OCTProblem& problem) {
  problem.validate();
  auto peak_at = [&](double lambda) {
    OCTProblem p = problem;
    p.energy_weight = lambda;
    return solve(p).peak_amplitude;
  };
  const double lo_target = 0.95, hi_target = 1.10;

  double lambda = problem.energy_weight > 0.0 ? problem.energy_weight : 1e-2;
  double peak = peak_at(lambda);
  if (peak >= lo_target && peak <= hi_target) return lambda;

  // Bracket: peak decreases with lambda.
  double l_low = 0.0, l_high = 0.0;  // peak too high at l_low, too low at l_high
  if (peak > hi_target) {
    l_low = lambda;
    for (int i = 0; i < 20; ++i) {
      lambda *= 4.0;
      peak = peak_at(lambda);
      if (peak >= lo_target && peak <= hi_target) return lambda;
      if (peak < lo_target) {
        l_high = lambda;
        break;
      }
      l_low = lambda;
    }
  } else {
    l_high = lambda;
    for (int i = 0; i < 20; ++i) {
      lambda *= 0.25;
      peak = peak_at(lambda);
      if (peak >= lo_target && peak <= hi_target) return lambda;
      if (peak > hi_target) {
        l_low = lambda;
        break;
      }
      l_high = lambda;
    }
  }
  if (l_high <= 0.0 || l_low < 0.0)
    throw std::runtime_error("autotune_energy_weight: failed to bracket the target peak");

  for (int i = 0; i < 20; ++i) {
    const double mid = (l_low > 0.0) ? std::sqrt(l_low * l_high) : 0.5 * l_high;
    peak = peak_at(mid);
    if (peak >= lo_target && peak <= hi_target) return mid;
    if (peak > hi_target)
      l_low = mid;
    else
      l_high = mid;
  }
  throw std::runtime_error("autotune_energy_weight: no peak in [0.95, 1.10] within 20 bisections"
                           "; last bracket [" +
                           std::to_string(l_low) + ", " + std::to_string(l_high) + "]");
}

OffsetSineFit fit_offset_sine(const ControlWaveform& w, const DriveSystem& sys,
                              const PulseSpec& spec_template, bool fit_scale) {
  if (w.values.empty()) throw std::invalid_argument("fit_offset_sine: empty waveform");
  sys.validate();

  auto residual = [&](double a, double phi, double* scale_out) {
    PulseSpec spec = spec_template;
    spec.offset_a = std::clamp(a, -1.0, 1.0);
    spec.phase_phi = phi;
    double num = 0.0, den = 0.0;
    std::vector<double> model(w.values.size());
    for (std::size_t i = 0; i < w.values.size(); ++i) {
      model[i] = spec.value(w.times[i], sys.omega0);
      num += model[i] * w.values[i];
      den += model[i] * model[i];
    }
    const double s = (fit_scale && den > 0.0) ? num / den : 1.0;
    if (scale_out) *scale_out = s;
    double ss = 0.0;
    for (std::size_t i = 0; i < w.values.size(); ++i) {
      const double r = s * model[i] - w.values[i];
      ss += r * r;
    }
    return std::sqrt(ss / static_cast<double>(w.values.size()));
  };

  // Coarse grid, then compass refinement.
  double best_a = 0.0, best_phi = 0.0;
  double best_rms = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 81; ++i) {
    const double a = -1.0 + 2.0 * static_cast<double>(i) / 80.0;
    for (int j = 0; j < 64; ++j) {
      const double phi = 2.0 * M_PI * static_cast<double>(j) / 64.0;
      const double r = residual(a, phi, nullptr);
      if (r < best_rms) {
        best_rms = r;
        best_a = a;
        best_phi = phi;
      }
    }
  }
  double sa = 2.0 / 80.0, sp = 2.0 * M_PI / 64.0;
  while (sa > 1e-9 || sp > 1e-9) {
    double ca = best_a, cp = best_phi, cr = best_rms;
    auto consider = [&](double a, double phi) {
      const double r = residual(a, phi, nullptr);
      if (r < cr) {
        cr = r;
        ca = a;
        cp = phi;
      }
    };
    consider(std::clamp(best_a + sa, -1.0, 1.0), best_phi);
    consider(std::clamp(best_a - sa, -1.0, 1.0), best_phi);
    consider(best_a, best_phi + sp);
    consider(best_a, best_phi - sp);
    if (cr < best_rms) {
      best_rms = cr;
      best_a = ca;
      best_phi = cp;
    } else {
      sa *= 0.5;
      sp *= 0.5;
    }
  }

  OffsetSineFit fit;
  fit.offset_a = best_a;
  fit.phase_phi = std::fmod(best_phi + 4.0 * M_PI, 2.0 * M_PI);
  fit.residual_rms = residual(best_a, best_phi, &fit.amplitude_scale);

  // Pulse fidelity of the fitted waveform itself.
  PulseSpec spec = spec_template;
  spec.offset_a = best_a;
  spec.phase_phi = best_phi;
  const double scale = fit.amplitude_scale;
  const WaveformFn fn = [spec, scale, omega0 = sys.omega0](double t) {
    return scale * spec.value(t, omega0);
  };
  PropagatorConfig cfg;
  const Eigen::Vector2cd psi = propagate_final(sys, fn, spec.duration_tpi, spin_up(), cfg);
  fit.fit_fidelity = std::norm(psi[1]);
  return fit;
}

ComparisonTable compare_suite(const std::vector<double>& amplitudes, const DriveSystem& sys_base,
                              const PropagatorConfig& cfg, const CompareOptions& options) {
  if (amplitudes.empty()) throw std::invalid_argument("compare_suite: empty amplitude list");
  ComparisonTable table;
  for (double omega_d : amplitudes) {
    ComparisonRow row;
    row.omega_d = omega_d;
    try {
      DriveSystem sys = sys_base;
      sys.omega_d = omega_d;
      sys.validate();
      const PulseSpec tmpl = default_pulse_template(sys);

      OCTProblem problem;
      problem.sys = sys;
      problem.t_pi = tmpl.duration_tpi;
      problem.spectral_cutoff = options.cutoff_factor * sys.omega0;
      problem.energy_weight = options.energy_weight;
      problem.max_iters = options.oct_max_iters;
      const OCTResult oct = solve(problem);
      row.oct_peak_amplitude = oct.peak_amplitude;

      // All three waveforms are judged by the same refined propagator.
      const Eigen::Vector2cd psi_oct =
          propagate_final(sys, oct.continuous(), problem.t_pi, spin_up(), cfg);
      row.oct_infidelity = 1.0 - std::norm(psi_oct[1]);

      const OffsetSineFit fit = fit_offset_sine(oct.waveform, sys, tmpl);
      row.oct_fit_infidelity = 1.0 - fit.fit_fidelity;

      const LandscapeGrid grid = landscape(sys, tmpl, options.phase_n, options.offset_n, cfg);
      const OptimumReport opt = refine_optimum(grid, options.refine_tol, cfg);
      row.offset_sine_infidelity = 1.0 - opt.best_fidelity;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream os;
  os << "# omega_d,oct_infidelity,oct_fit_infidelity,offset_sine_infidelity,"
        "oct_peak_amplitude,ok,error\n";
  char buf[200];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%d,", r.omega_d,
                  r.oct_infidelity, r.oct_fit_infidelity, r.offset_sine_infidelity,
                  r.oct_peak_amplitude, r.ok ? 1 : 0);
    os << buf << r.error << "\n";
  }
  return os.str();
}

std::string ComparisonTable::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"omega_d", r.omega_d},
                 {"oct_infidelity", r.oct_infidelity},
                 {"oct_fit_infidelity", r.oct_fit_infidelity},
                 {"offset_sine_infidelity", r.offset_sine_infidelity},
                 {"oct_peak_amplitude", r.oct_peak_amplitude},
                 {"ok", r.ok},
                 {"error", r.error}});
  }
  return j.dump(2);
}

std::string OffsetSineFit::to_json() const {
  nlohmann::json j;
  j["offset_a"] = offset_a;
  j["phase_phi"] = phase_phi;
  j["amplitude_scale"] = amplitude_scale;
  j["residual_rms"] = residual_rms;
  j["fit_fidelity"] = fit_fidelity;
  return j.dump(2);
}

}  // namespace spindrive
