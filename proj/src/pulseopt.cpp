#include "spindrive/pulseopt.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace spindrive {

namespace {

double wrap_phase(double phi) {
  const double two_pi = 2.0 * M_PI;
  double w = std::fmod(phi, two_pi);
  if (w < 0.0) w += two_pi;
  return w;
}

}  // namespace

double pi_duration(const DriveSystem& sys, double dt) {
  sys.validate();
  if (!(sys.omega_d > 0.0)) throw std::domain_error("pi_duration: omega_d must be > 0");
  if (dt < 0.0) throw std::invalid_argument("pi_duration: dt must be >= 0");
  return M_PI / sys.omega_d + 2.0 * dt;
}

PulseSpec default_pulse_template(const DriveSystem& sys) {
  PulseSpec spec;
  spec.rise_time_dt = M_PI / (10.0 * sys.omega0);
  spec.duration_tpi = pi_duration(sys, spec.rise_time_dt);
  spec.envelope_kind = EnvelopeKind::ErrorFunction;
  return spec;
}

double offset_sine_fidelity(const DriveSystem& sys, const PulseSpec& spec,
                            const PropagatorConfig& cfg) {
  const Eigen::Vector2cd psi =
      propagate_final(sys, spec.waveform(sys.omega0), spec.duration_tpi, spin_up(), cfg);
  return std::norm(psi[1]);
}

LandscapeGrid landscape(const DriveSystem& sys, const PulseSpec& spec_template, int phase_n,
                        int offset_n, const PropagatorConfig& cfg) {
  sys.validate();
  if (phase_n < 2 || offset_n < 2)
    throw std::invalid_argument("landscape: need >= 2 points per axis");

  LandscapeGrid grid;
  grid.sys = sys;
  grid.spec_template = spec_template;
  grid.phases.resize(phase_n);
  grid.offsets.resize(offset_n);
  for (int j = 0; j < phase_n; ++j)
    grid.phases[j] = 2.0 * M_PI * static_cast<double>(j) / static_cast<double>(phase_n);
  for (int i = 0; i < offset_n; ++i)
    grid.offsets[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(offset_n - 1);

  grid.infidelity.resize(offset_n, phase_n);
  for (int i = 0; i < offset_n; ++i) {
    for (int j = 0; j < phase_n; ++j) {
      PulseSpec spec = spec_template;
      spec.offset_a = grid.offsets[i];
      spec.phase_phi = grid.phases[j];
      try {
        grid.infidelity(i, j) = 1.0 - offset_sine_fidelity(sys, spec, cfg);
      } catch (const std::exception& e) {
        throw std::runtime_error("landscape: propagation failed at offset index " +
                                 std::to_string(i) + ", phase index " + std::to_string(j) +
                                 ": " + e.what());
      }
    }
  }
  return grid;
}

namespace {

// Compass pattern search; maximize == true searches for the largest fidelity.
// Phase wraps, offset clamps to [-1, 1]; a frozen offset restricts the search
// to the phase axis.
struct SearchResult {
  double phase;
  double offset;
  double fidelity;
};

SearchResult pattern_search(const DriveSystem& sys, const PulseSpec& spec_template,
                            const PropagatorConfig& cfg, double phase0, double offset0,
                            double step_phase, double step_offset, double tol, bool maximize,
                            bool freeze_offset) {
  auto eval = [&](double phi, double a) {
    PulseSpec spec = spec_template;
    spec.phase_phi = wrap_phase(phi);
    spec.offset_a = std::clamp(a, -1.0, 1.0);
    const double f = offset_sine_fidelity(sys, spec, cfg);
    return maximize ? f : -f;
  };

  double phi = phase0, a = offset0;
  double best = eval(phi, a);
  double sp = step_phase, sa = freeze_offset ? 0.0 : step_offset;
  while (sp > tol || sa > tol) {
    double cand_phi = phi, cand_a = a, cand_val = best;
    auto consider = [&](double p, double o) {
      const double v = eval(p, o);
      if (v > cand_val) {
        cand_val = v;
        cand_phi = p;
        cand_a = o;
      }
    };
    consider(phi + sp, a);
    consider(phi - sp, a);
    if (!freeze_offset) {
      consider(phi, std::clamp(a + sa, -1.0, 1.0));
      consider(phi, std::clamp(a - sa, -1.0, 1.0));
    }
    if (cand_val > best) {
      best = cand_val;
      phi = cand_phi;
      a = cand_a;
    } else {
      sp *= 0.5;
      sa *= 0.5;
    }
  }
  return {wrap_phase(phi), std::clamp(a, -1.0, 1.0), maximize ? best : -best};
}

}  // namespace

OptimumReport refine_optimum(const LandscapeGrid& grid, double tol, const PropagatorConfig& cfg) {
  if (!(tol > 0.0)) throw std::invalid_argument("refine_optimum: tol must be > 0");
  const int offset_n = static_cast<int>(grid.offsets.size());
  const int phase_n = static_cast<int>(grid.phases.size());

  // Best grid cell; ties break to the smallest (offset index, phase index).
  int bi = 0, bj = 0;
  double best_inf = grid.infidelity(0, 0);
  for (int i = 0; i < offset_n; ++i) {
    for (int j = 0; j < phase_n; ++j) {
      if (grid.infidelity(i, j) < best_inf) {
        best_inf = grid.infidelity(i, j);
        bi = i;
        bj = j;
      }
    }
  }
  const double step_phase = grid.phases.size() > 1 ? grid.phases[1] - grid.phases[0] : 0.1;
  const double step_offset = grid.offsets.size() > 1 ? grid.offsets[1] - grid.offsets[0] : 0.05;

  OptimumReport report;
  const SearchResult joint =
      pattern_search(grid.sys, grid.spec_template, cfg, grid.phases[bj], grid.offsets[bi],
                     step_phase, step_offset, tol, /*maximize=*/true, /*freeze_offset=*/false);
  report.best_phase = joint.phase;
  report.best_offset = joint.offset;
  report.best_fidelity = joint.fidelity;

  // Zero-offset row: refined phase-only best and worst.
  int j_best = 0, j_worst = 0;
  int i0 = 0;
  for (int i = 0; i < offset_n; ++i)
    if (std::abs(grid.offsets[i]) < std::abs(grid.offsets[i0])) i0 = i;
  for (int j = 0; j < phase_n; ++j) {
    if (grid.infidelity(i0, j) < grid.infidelity(i0, j_best)) j_best = j;
    if (grid.infidelity(i0, j) > grid.infidelity(i0, j_worst)) j_worst = j;
  }
  const SearchResult zo_best =
      pattern_search(grid.sys, grid.spec_template, cfg, grid.phases[j_best], 0.0, step_phase, 0.0,
                     tol, /*maximize=*/true, /*freeze_offset=*/true);
  const SearchResult zo_worst =
      pattern_search(grid.sys, grid.spec_template, cfg, grid.phases[j_worst], 0.0, step_phase, 0.0,
                     tol, /*maximize=*/false, /*freeze_offset=*/true);
  report.zero_offset_best_phase = zo_best.phase;
  report.zero_offset_best_fidelity = zo_best.fidelity;
  report.zero_offset_worst_fidelity = zo_worst.fidelity;

  // The joint optimum dominates the phase-only one; if the local search missed
  // it, restart from the refined zero-offset point.
  if (report.best_fidelity < report.zero_offset_best_fidelity) {
    const SearchResult retry =
        pattern_search(grid.sys, grid.spec_template, cfg, zo_best.phase, 0.0, step_phase,
                       step_offset, tol, /*maximize=*/true, /*freeze_offset=*/false);
    if (retry.fidelity > report.best_fidelity) {
      report.best_phase = retry.phase;
      report.best_offset = retry.offset;
      report.best_fidelity = retry.fidelity;
    }
    if (report.best_fidelity < report.zero_offset_best_fidelity) {
      // The zero-offset point itself is a member of the joint family.
      report.best_phase = zo_best.phase;
      report.best_offset = 0.0;
      report.best_fidelity = zo_best.fidelity;
    }
  }
  return report;
}

std::pair<OptimumReport, OptimumReport> tilt_comparison(const DriveSystem& sys_tilted,
                                                        const DriveSystem& sys_flat,
                                                        const PropagatorConfig& cfg, int phase_n,
                                                        int offset_n, double tol) {
  if (sys_tilted.omega0 != sys_flat.omega0 || sys_tilted.omega_d != sys_flat.omega_d)
    throw std::invalid_argument("tilt_comparison: systems must share omega0 and omega_d");
  if (sys_flat.theta_d != 0.0)
    throw std::invalid_argument("tilt_comparison: sys_flat must have theta_d = 0");

  auto optimize = [&](const DriveSystem& sys) {
    const PulseSpec tmpl = default_pulse_template(sys);
    const LandscapeGrid grid = landscape(sys, tmpl, phase_n, offset_n, cfg);
    return refine_optimum(grid, tol, cfg);
  };
  return {optimize(sys_tilted), optimize(sys_flat)};
}

std::string LandscapeGrid::to_csv() const {
  std::ostringstream os;
  os << "# infidelity landscape: rows = offsets, columns = phases\n";
  char buf[64];
  os << "offset\\phase";
  for (double p : phases) {
    std::snprintf(buf, sizeof buf, ",%.17g", p);
    os << buf;
  }
  os << "\n";
  for (Eigen::Index i = 0; i < infidelity.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", offsets[static_cast<std::size_t>(i)]);
    os << buf;
    for (Eigen::Index j = 0; j < infidelity.cols(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", infidelity(i, j));
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

std::string LandscapeGrid::to_matrix() const {
  std::ostringstream os;
  char buf[64];
  for (Eigen::Index i = 0; i < infidelity.rows(); ++i) {
    for (Eigen::Index j = 0; j < infidelity.cols(); ++j) {
      std::snprintf(buf, sizeof buf, j ? " %.17g" : "%.17g", infidelity(i, j));
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

std::string LandscapeGrid::to_json() const {
  nlohmann::json j;
  j["phases"] = phases;
  j["offsets"] = offsets;
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(infidelity.rows()));
  for (Eigen::Index i = 0; i < infidelity.rows(); ++i) {
    rows[static_cast<std::size_t>(i)].assign(infidelity.row(i).begin(), infidelity.row(i).end());
  }
  j["infidelity"] = rows;
  j["omega0"] = sys.omega0;
  j["omega_d"] = sys.omega_d;
  j["theta_d"] = sys.theta_d;
  return j.dump(2);
}

std::string OptimumReport::to_json() const {
  nlohmann::json j;
  j["best_phase"] = best_phase;
  j["best_offset"] = best_offset;
  j["best_fidelity"] = best_fidelity;
  j["zero_offset_best_phase"] = zero_offset_best_phase;
  j["zero_offset_best_fidelity"] = zero_offset_best_fidelity;
  j["zero_offset_worst_fidelity"] = zero_offset_worst_fidelity;
  return j.dump(2);
}

}  // namespace spindrive
