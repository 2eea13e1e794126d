// spindrive: command-line runner for pulse simulation, landscape optimization,
// OCT comparison, spiral-antenna field maps, and experimental-data fits.
// Config is an INI-style file ([section], key = value, '#' comments); see
// README for the recognized keys. Exit codes: 0 success, 1 validation error,
// 2 input parse error, 3 numerical failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spindrive/analysis.hpp"
#include "spindrive/antenna.hpp"
#include "spindrive/oct.hpp"
#include "spindrive/pulseopt.hpp"
#include "spindrive/spin.hpp"
#include "spindrive/waveform.hpp"

namespace {

constexpr const char* kVersion = "1.0.0";

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Config = std::map<std::string, std::map<std::string, std::string>>;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

Config parse_ini(const std::string& text) {
  Config cfg;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ParseError("config parse error at line " + std::to_string(line_no) +
                         ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config parse error at line " + std::to_string(line_no) +
                       ": expected key = value");
    cfg[section][trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return cfg;
}

std::string get_str(const Config& cfg, const std::string& sec, const std::string& key,
                    const std::string& fallback) {
  const auto s = cfg.find(sec);
  if (s == cfg.end()) return fallback;
  const auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

bool has_key(const Config& cfg, const std::string& sec, const std::string& key) {
  const auto s = cfg.find(sec);
  return s != cfg.end() && s->second.count(key) > 0;
}

double get_num(const Config& cfg, const std::string& sec, const std::string& key,
               double fallback) {
  const std::string v = get_str(cfg, sec, key, "");
  if (v.empty()) return fallback;
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ParseError("config parse error: [" + sec + "] " + key + " = '" + v +
                     "' is not a number");
  }
  if (pos != v.size())
    throw ParseError("config parse error: [" + sec + "] " + key + " = '" + v +
                     "' is not a number");
  return x;
}

int get_int(const Config& cfg, const std::string& sec, const std::string& key, int fallback) {
  return static_cast<int>(get_num(cfg, sec, key, fallback));
}

std::vector<double> get_list(const Config& cfg, const std::string& sec, const std::string& key,
                             const std::vector<double>& fallback) {
  const std::string v = get_str(cfg, sec, key, "");
  if (v.empty()) return fallback;
  std::vector<double> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ParseError("config parse error: [" + sec + "] " + key + " has non-numeric entry '" +
                       item + "'");
    }
  }
  if (out.empty())
    throw ParseError("config parse error: [" + sec + "] " + key + " is an empty list");
  return out;
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

struct Provenance {
  std::string config_hash;
  long seed = 0;
  int threads = 1;

  std::string csv_header() const {
    std::ostringstream os;
    os << "# spindrive " << kVersion << " config_hash=" << config_hash << " seed=" << seed
       << "\n";
    return os.str();
  }

  nlohmann::json json() const {
    return {{"tool", "spindrive"},
            {"version", kVersion},
            {"config_hash", config_hash},
            {"seed", seed},
            {"threads", threads}};
  }
};

struct RunContext {
  Config cfg;
  Provenance prov;
  std::filesystem::path out_dir;

  void write(const std::string& name, const std::string& body, bool with_header = true) const {
    std::filesystem::create_directories(out_dir);
    std::ofstream f(out_dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (out_dir / name).string());
    if (with_header) f << prov.csv_header();
    f << body;
  }

  void write_json(const std::string& name, nlohmann::json j) const {
    j["provenance"] = prov.json();
    std::filesystem::create_directories(out_dir);
    std::ofstream f(out_dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (out_dir / name).string());
    f << j.dump(2) << "\n";
  }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

spindrive::DriveSystem read_system(const Config& cfg) {
  spindrive::DriveSystem sys;
  sys.omega0 = get_num(cfg, "system", "omega0", 1.0);
  sys.omega_d = get_num(cfg, "system", "omega_d", 0.0) * sys.omega0;
  sys.theta_d = get_num(cfg, "system", "theta_d_deg", 0.0) * M_PI / 180.0;
  sys.validate();
  return sys;
}

spindrive::PulseSpec read_pulse(const Config& cfg, const spindrive::DriveSystem& sys) {
  spindrive::PulseSpec spec = spindrive::default_pulse_template(sys);
  spec.offset_a = get_num(cfg, "pulse", "offset_a", 0.0);
  spec.phase_phi = get_num(cfg, "pulse", "phase_phi", 0.0);
  const std::string env = get_str(cfg, "pulse", "envelope", "erf");
  if (env == "erf") {
    spec.envelope_kind = spindrive::EnvelopeKind::ErrorFunction;
  } else if (env == "rectangular") {
    spec.envelope_kind = spindrive::EnvelopeKind::Rectangular;
  } else {
    throw std::invalid_argument("[pulse] envelope must be 'erf' or 'rectangular'");
  }
  spec.rise_time_dt = get_num(cfg, "pulse", "rise_time", spec.rise_time_dt);
  spec.duration_tpi = get_num(cfg, "pulse", "duration", spec.duration_tpi);
  spec.validate();
  return spec;
}

spindrive::PropagatorConfig read_propagator(const Config& cfg) {
  spindrive::PropagatorConfig p;
  p.base_step = get_num(cfg, "propagator", "base_step", p.base_step);
  p.convergence_tol = get_num(cfg, "propagator", "convergence_tol", p.convergence_tol);
  p.max_refinements = get_int(cfg, "propagator", "max_refinements", p.max_refinements);
  p.output_samples = get_int(cfg, "propagator", "output_samples", p.output_samples);
  p.validate();
  return p;
}

int cmd_simulate(const RunContext& ctx) {
  const spindrive::DriveSystem sys = read_system(ctx.cfg);
  const spindrive::PulseSpec spec = read_pulse(ctx.cfg, sys);
  const spindrive::PropagatorConfig pcfg = read_propagator(ctx.cfg);

  const spindrive::Trajectory traj = spindrive::propagate(
      sys, spec.waveform(sys.omega0), spec.duration_tpi, spindrive::spin_up(), pcfg);

  std::ostringstream csv;
  csv << "# t,p_up,p_down,re_up,im_up,re_down,im_down\n";
  char buf[240];
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const auto& s = traj.states[i];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", traj.times[i],
                  traj.populations[i][0], traj.populations[i][1], s[0].real(), s[0].imag(),
                  s[1].real(), s[1].imag());
    csv << buf;
  }
  ctx.write("trajectory.csv", csv.str());

  nlohmann::json summary;
  summary["final_fidelity"] = traj.final_fidelity;
  summary["infidelity"] = 1.0 - traj.final_fidelity;
  summary["omega0"] = sys.omega0;
  summary["omega_d"] = sys.omega_d;
  summary["theta_d_rad"] = sys.theta_d;
  summary["offset_a"] = spec.offset_a;
  summary["phase_phi"] = spec.phase_phi;
  summary["duration"] = spec.duration_tpi;
  ctx.write_json("summary.json", summary);
  return 0;
}

int cmd_landscape(const RunContext& ctx) {
  const spindrive::DriveSystem sys = read_system(ctx.cfg);
  const spindrive::PulseSpec tmpl = read_pulse(ctx.cfg, sys);
  const spindrive::PropagatorConfig pcfg = read_propagator(ctx.cfg);
  const int phase_n = get_int(ctx.cfg, "landscape", "phase_n", 64);
  const int offset_n = get_int(ctx.cfg, "landscape", "offset_n", 41);
  const double tol = get_num(ctx.cfg, "landscape", "refine_tol", 1e-4);

  const spindrive::LandscapeGrid grid = spindrive::landscape(sys, tmpl, phase_n, offset_n, pcfg);
  const spindrive::OptimumReport report = spindrive::refine_optimum(grid, tol, pcfg);

  ctx.write("landscape.csv", grid.to_csv());
  ctx.write("landscape_matrix.txt", grid.to_matrix(), /*with_header=*/false);
  ctx.write_json("optimum.json", nlohmann::json::parse(report.to_json()));
  return 0;
}

int cmd_oct(const RunContext& ctx) {
  const spindrive::DriveSystem base = read_system(ctx.cfg);
  const spindrive::PropagatorConfig pcfg = read_propagator(ctx.cfg);
  spindrive::CompareOptions opt;
  opt.cutoff_factor = get_num(ctx.cfg, "oct", "cutoff_factor", opt.cutoff_factor);
  opt.energy_weight = get_num(ctx.cfg, "oct", "energy_weight", opt.energy_weight);
  opt.oct_max_iters = get_int(ctx.cfg, "oct", "max_iters", opt.oct_max_iters);
  opt.phase_n = get_int(ctx.cfg, "oct", "phase_n", opt.phase_n);
  opt.offset_n = get_int(ctx.cfg, "oct", "offset_n", opt.offset_n);
  opt.refine_tol = get_num(ctx.cfg, "oct", "refine_tol", opt.refine_tol);
  // Default suite spanning omega0/10..omega0, including the
  // exact-cancellation amplitude omega0/(2 tan theta_d).
  const std::vector<double> rel = get_list(
      ctx.cfg, "oct", "amplitudes",
      {1.0 / 10.0, 1.0 / 6.0, 0.3, 0.45, 1.0 / (2.0 * std::tan(base.theta_d)), 1.0});
  std::vector<double> amplitudes;
  for (double r : rel) amplitudes.push_back(r * base.omega0);

  // Per-amplitude OCT waveforms alongside the three-way table.
  for (std::size_t i = 0; i < amplitudes.size(); ++i) {
    try {
      spindrive::DriveSystem sys = base;
      sys.omega_d = amplitudes[i];
      sys.validate();
      spindrive::OCTProblem problem;
      problem.sys = sys;
      problem.t_pi = spindrive::default_pulse_template(sys).duration_tpi;
      problem.spectral_cutoff = opt.cutoff_factor * sys.omega0;
      problem.energy_weight = opt.energy_weight;
      problem.max_iters = opt.oct_max_iters;
      const spindrive::OCTResult r = spindrive::solve(problem);
      ctx.write("oct_waveform_" + std::to_string(i) + ".csv", r.waveform.to_csv());
    } catch (const std::exception&) {
      // Row-level failures are recorded in the comparison table below.
    }
  }

  const spindrive::ComparisonTable table = spindrive::compare_suite(amplitudes, base, pcfg, opt);
  ctx.write("comparison.csv", table.to_csv());
  nlohmann::json report;
  report["rows"] = nlohmann::json::parse(table.to_json());
  ctx.write_json("comparison.json", report);

  for (const auto& row : table.rows) {
    if (!row.ok) return 0;  // flagged in the table; the run itself succeeded
  }
  return 0;
}

int cmd_spiral(const RunContext& ctx) {
  spindrive::SpiralGeometry geom;
  geom.inner_diameter_um = get_num(ctx.cfg, "spiral", "inner_diameter_um", geom.inner_diameter_um);
  geom.turns = get_int(ctx.cfg, "spiral", "turns", geom.turns);
  geom.trace_width_um = get_num(ctx.cfg, "spiral", "trace_width_um", geom.trace_width_um);
  geom.turn_pitch_um = get_num(ctx.cfg, "spiral", "turn_pitch_um", geom.turn_pitch_um);
  geom.layers = get_int(ctx.cfg, "spiral", "layers", geom.layers);
  geom.layer_gap_um = get_num(ctx.cfg, "spiral", "layer_gap_um", geom.layer_gap_um);
  geom.validate();
  const double height =
      get_num(ctx.cfg, "spiral", "sample_height_um", spindrive::kDefaultSampleHeightUm);
  const int segments = get_int(ctx.cfg, "spiral", "segments_per_turn", 256);

  const spindrive::FieldSample sample = spindrive::biot_savart(geom, {0.0, 0.0, height}, segments);
  const spindrive::NVProjection proj =
      spindrive::project_to_nv(sample, spindrive::NVFrame::default_frame());

  nlohmann::json report;
  report["sample_height_um"] = height;
  report["b_per_current_G_per_A"] = sample.magnitude();
  report["tilt_from_normal_deg"] = sample.tilt_from_normal() * 180.0 / M_PI;
  report["b_parallel_G_per_A"] = proj.b_parallel;
  report["b_transverse_G_per_A"] = proj.b_transverse;
  report["theta_d_deg"] = proj.theta_d * 180.0 / M_PI;
  ctx.write_json("spiral_report.json", report);

  if (get_str(ctx.cfg, "spiral", "map", "false") == "true") {
    spindrive::FieldMapSpec spec;
    spec.x_min_um = get_num(ctx.cfg, "spiral", "map_x_min_um", spec.x_min_um);
    spec.x_max_um = get_num(ctx.cfg, "spiral", "map_x_max_um", spec.x_max_um);
    spec.nx = get_int(ctx.cfg, "spiral", "map_nx", spec.nx);
    spec.z_min_um = get_num(ctx.cfg, "spiral", "map_z_min_um", spec.z_min_um);
    spec.z_max_um = get_num(ctx.cfg, "spiral", "map_z_max_um", spec.z_max_um);
    spec.nz = get_int(ctx.cfg, "spiral", "map_nz", spec.nz);
    spec.segments_per_turn = segments;
    ctx.write("field_map.csv", spindrive::field_map_to_csv(spindrive::field_map(geom, spec)));
  }
  return 0;
}

int cmd_fit(const RunContext& ctx) {
  const std::string kind = get_str(ctx.cfg, "fit", "kind", "");
  if (kind == "rabi") {
    const spindrive::RabiTrace trace =
        spindrive::RabiTrace::from_csv(slurp(get_str(ctx.cfg, "fit", "input", "")));
    const spindrive::RabiFit fit = spindrive::fit_decaying_sine(trace);
    ctx.write_json("rabi_fit.json", nlohmann::json::parse(fit.to_json()));
    return 0;
  }
  if (kind == "odmr") {
    const std::vector<spindrive::OdmrPoint> points =
        spindrive::odmr_series_from_csv(slurp(get_str(ctx.cfg, "fit", "input", "")));
    spindrive::NVModel init;
    init.zero_field_splitting_D = get_num(ctx.cfg, "fit", "D_MHz", init.zero_field_splitting_D);
    init.gyro_e = get_num(ctx.cfg, "fit", "gyro_e_MHz_per_G", init.gyro_e);
    init.strain_E = get_num(ctx.cfg, "fit", "init_strain_E_MHz", 1.0);
    init.field_per_current = get_num(ctx.cfg, "fit", "init_field_per_current", 100.0);
    init.field_dir = spindrive::NVModel::tilted_dir(
        get_num(ctx.cfg, "fit", "init_tilt_deg", 30.0) * M_PI / 180.0);
    const spindrive::OdmrFit fit = spindrive::fit_odmr_series(points, init);
    ctx.write_json("odmr_fit.json", nlohmann::json::parse(fit.to_json()));
    return 0;
  }
  if (kind == "rabi_line") {
    std::vector<std::pair<double, spindrive::RabiFit>> fits;
    std::istringstream is(get_str(ctx.cfg, "fit", "inputs", ""));
    std::string path;
    nlohmann::json per_trace = nlohmann::json::array();
    while (std::getline(is, path, ',')) {
      path = trim(path);
      if (path.empty()) continue;
      const spindrive::RabiTrace trace = spindrive::RabiTrace::from_csv(slurp(path));
      const spindrive::RabiFit fit = spindrive::fit_decaying_sine(trace);
      fits.emplace_back(trace.current_A, fit);
      nlohmann::json j = nlohmann::json::parse(fit.to_json());
      j["current_A"] = trace.current_A;
      per_trace.push_back(j);
    }
    const spindrive::LinearFit line = spindrive::rabi_vs_current(fits);
    nlohmann::json report = nlohmann::json::parse(line.to_json());
    report["traces"] = per_trace;
    report["field_per_current_G_per_A"] = spindrive::rabi_to_field(line.slope);
    ctx.write_json("rabi_line_fit.json", report);
    return 0;
  }
  throw std::invalid_argument("[fit] kind must be 'rabi', 'odmr', or 'rabi_line'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spindrive: strong-driving pulse simulation and analysis toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  long seed = 0;
  int threads = 0;
  app.add_option("--config", config_path, "run configuration file")->required();
  app.add_option("--out", out_dir, "output directory (default: SPINDRIVE_OUT or '.')");
  app.add_option("--seed", seed, "random seed recorded in output provenance");
  app.add_option("--threads", threads, "thread count hint (default: SPINDRIVE_THREADS or 1)");

  CLI::App* sub_simulate = app.add_subcommand("simulate", "propagate one pulse");
  CLI::App* sub_landscape = app.add_subcommand("landscape", "phase/offset infidelity map");
  CLI::App* sub_oct = app.add_subcommand("oct", "OCT vs offset-sine comparison suite");
  CLI::App* sub_spiral = app.add_subcommand("spiral", "antenna field map and NV projection");
  CLI::App* sub_fit = app.add_subcommand("fit", "experimental data fits");

  CLI11_PARSE(app, argc, argv);

  try {
    RunContext ctx;
    const std::string text = slurp(config_path);
    ctx.cfg = parse_ini(text);

    if (out_dir.empty()) {
      const char* env = std::getenv("SPINDRIVE_OUT");
      out_dir = env ? env : ".";
    }
    ctx.out_dir = out_dir;
    if (threads <= 0) {
      const char* env = std::getenv("SPINDRIVE_THREADS");
      threads = env ? std::max(1, std::atoi(env)) : 1;
    }

    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(fnv1a(text)));
    ctx.prov.config_hash = hash;
    ctx.prov.seed = seed;
    ctx.prov.threads = threads;

    if (sub_simulate->parsed()) return cmd_simulate(ctx);
    if (sub_landscape->parsed()) return cmd_landscape(ctx);
    if (sub_oct->parsed()) return cmd_oct(ctx);
    if (sub_spiral->parsed()) return cmd_spiral(ctx);
    if (sub_fit->parsed()) return cmd_fit(ctx);
    return 1;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const spindrive::FitError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const spindrive::ConvergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    std::fprintf(stderr, "error: %s\n", what.c_str());
    return what.find("parse") != std::string::npos ? 2 : 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
