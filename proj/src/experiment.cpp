#include "phasefold/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "phasefold/ekf.hpp"
#include "phasefold/errors.hpp"
#include "phasefold/eval.hpp"
#include "phasefold/io.hpp"

namespace phasefold {

ConfigError::ConfigError(const std::string& source, int line, const std::string& field,
                         const std::string& message)
    : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) +
                         (field.empty() ? std::string() : ": [" + field + "]") + ": " + message),
      line_(line),
      field_(field),
      message_(message) {}

namespace {

std::string join_paths(const std::vector<std::filesystem::path>& paths) {
  std::string s;
  for (const auto& p : paths) s += "\n  " + p.string();
  return s;
}

}  // namespace

MissingInputError::MissingInputError(std::vector<std::filesystem::path> missing)
    : std::runtime_error("missing upstream artifacts:" + join_paths(missing)),
      missing_(std::move(missing)) {}

// --- configuration ----------------------------------------------------------

BodyParams ExperimentConfig::body() const { return BodyParams::diagonal(inertia, viscous, noise); }

TrajectorySpec ExperimentConfig::trajectory_spec() const {
  return trajectory == 0 ? custom_coeffs : TrajectorySpec::by_id(trajectory);
}

SimConfig ExperimentConfig::sim_config() const {
  SimConfig s;
  s.particles = particles;
  s.dt = dt;
  s.horizon = horizon;
  s.seed = seed;
  s.snapshot_times = snapshot_grid(snapshot_stride, horizon, dt);
  return s;
}

MeanOptions ExperimentConfig::mean_options() const {
  MeanOptions m;
  m.tolerance = mean_tolerance;
  m.max_iterations = mean_max_iterations;
  return m;
}

EomOptions ExperimentConfig::eom_options() const {
  EomOptions o;
  o.covariance_bound = covariance_bound;
  return o;
}

void ExperimentConfig::validate(const std::string& source) const {
  auto fail = [&](const char* field, const std::string& msg) {
    throw ConfigError(source, 0, field, msg);
  };
  for (int k = 0; k < 3; ++k) {
    if (!(inertia(k) > 0.0) || !std::isfinite(inertia(k))) {
      fail("body.inertia", "entries must be positive and finite");
    }
  }
  if (!(viscous >= 0.0) || !std::isfinite(viscous)) fail("body.viscous", "must be >= 0");
  if (!(noise >= 0.0) || !std::isfinite(noise)) fail("body.noise", "must be >= 0");
  if (trajectory != 0 && trajectory != 1 && trajectory != 2) {
    fail("trajectory.id", "must be 1, 2 or custom");
  }
  for (const auto& c : custom_coeffs.coeffs) {
    if (!c.allFinite()) fail("trajectory.coeff", "coefficients must be finite");
  }
  if (particles < 1) fail("simulation.particles", "must be >= 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) fail("simulation.dt", "must be > 0");
  try {
    step_count(dt, horizon);
  } catch (const std::invalid_argument& e) {
    fail("simulation.dt", e.what());
  }
  try {
    if (!(snapshot_stride <= horizon * (1.0 + 1e-12))) throw std::invalid_argument("exceeds horizon");
    snapshot_grid(snapshot_stride, horizon, dt);
  } catch (const std::invalid_argument& e) {
    fail("simulation.snapshot_stride", e.what());
  }
  if (!(mean_tolerance > 0.0)) fail("estimator.tolerance", "must be > 0");
  if (mean_max_iterations < 1) fail("estimator.max_iterations", "must be >= 1");
  if (!(covariance_bound > 0.0)) fail("eom.covariance_bound", "must be > 0");
}

namespace {

namespace pt = boost::property_tree;

std::string trim(std::string s) {
  const auto ws = " \t\r";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

// Line of every "section.key" (top-level keys have no section prefix).
std::map<std::string, int> key_lines(const std::string& text) {
  std::map<std::string, int> lines;
  std::istringstream in(text);
  std::string line, section;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    line = trim(line);
    if (line.empty() || line[0] == ';' || line[0] == '#') continue;
    if (line[0] == '[') {
      section = trim(line.substr(1, line.find(']') - 1));
      lines[section] = n;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    lines[section.empty() ? key : section + "." + key] = n;
  }
  return lines;
}

class ConfigReader {
 public:
  ConfigReader(const pt::ptree& tree, std::map<std::string, int> lines, std::string source)
      : tree_(tree), lines_(std::move(lines)), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    const auto it = lines_.find(field);
    throw ConfigError(source_, it == lines_.end() ? 0 : it->second, field, msg);
  }

  std::optional<std::string> raw(const std::string& field) const {
    const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(field, '.'));
    if (!v) return std::nullopt;
    used_.push_back(field);
    return *v;
  }

  void real(const std::string& field, double& out) const {
    if (auto v = raw(field)) {
      try {
        out = io::parse_double(*v);
      } catch (const std::invalid_argument&) {
        fail(field, "expected a number, got '" + *v + "'");
      }
    }
  }

  template <class Int>
  void integer(const std::string& field, Int& out) const {
    if (auto v = raw(field)) {
      Int x{};
      const auto res = std::from_chars(v->data(), v->data() + v->size(), x);
      if (res.ec != std::errc() || res.ptr != v->data() + v->size() || v->empty()) {
        fail(field, "expected a non-negative integer, got '" + *v + "'");
      }
      out = x;
    }
  }

  void boolean(const std::string& field, bool& out) const {
    if (auto v = raw(field)) {
      if (*v == "true" || *v == "yes" || *v == "1") {
        out = true;
      } else if (*v == "false" || *v == "no" || *v == "0") {
        out = false;
      } else {
        fail(field, "expected true or false, got '" + *v + "'");
      }
    }
  }

  void vec3(const std::string& field, Vec3& out) const {
    if (auto v = raw(field)) {
      std::istringstream in(*v);
      std::string tok;
      std::vector<double> xs;
      while (in >> tok) {
        try {
          xs.push_back(io::parse_double(tok));
        } catch (const std::invalid_argument&) {
          fail(field, "expected three numbers, got '" + *v + "'");
        }
      }
      if (xs.size() != 3) fail(field, "expected three numbers, got '" + *v + "'");
      out = Vec3(xs[0], xs[1], xs[2]);
    }
  }

  /// Rejects any key that no reader asked for.
  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty()) {
        if (std::find(used_.begin(), used_.end(), section) == used_.end()) {
          fail(section, "unknown top-level key");
        }
        continue;
      }
      for (const auto& kv : body) {
        const std::string field = section + "." + kv.first;
        if (std::find(used_.begin(), used_.end(), field) == used_.end()) {
          fail(field, "unknown key");
        }
      }
    }
  }

 private:
  const pt::ptree& tree_;
  std::map<std::string, int> lines_;
  std::string source_;
  mutable std::vector<std::string> used_;
};

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source, static_cast<int>(e.line()), "", e.message());
  }
  const ConfigReader r(tree, key_lines(text), source);

  if (auto f = r.raw("format"); f && "format=" + *f != io::kFormatLine) {
    r.fail("format", "unsupported format '" + *f + "'");
  }

  ExperimentConfig cfg;
  r.vec3("body.inertia", cfg.inertia);
  r.real("body.viscous", cfg.viscous);
  r.real("body.noise", cfg.noise);

  if (auto id = r.raw("trajectory.id")) {
    if (*id == "1") {
      cfg.trajectory = 1;
    } else if (*id == "2") {
      cfg.trajectory = 2;
    } else if (*id == "custom") {
      cfg.trajectory = 0;
    } else {
      r.fail("trajectory.id", "expected 1, 2 or custom, got '" + *id + "'");
    }
  }
  for (int k = 0; k < 4; ++k) {
    const std::string field = "trajectory.coeff" + std::to_string(k);
    if (cfg.trajectory != 0 && r.raw(field)) {
      r.fail(field, "polynomial coefficients require id = custom");
    }
    r.vec3(field, cfg.custom_coeffs.coeffs[k]);
  }

  r.integer("simulation.particles", cfg.particles);
  r.real("simulation.dt", cfg.dt);
  r.real("simulation.horizon", cfg.horizon);
  r.integer("simulation.seed", cfg.seed);
  r.real("simulation.snapshot_stride", cfg.snapshot_stride);
  r.real("estimator.tolerance", cfg.mean_tolerance);
  r.integer("estimator.max_iterations", cfg.mean_max_iterations);
  r.real("eom.covariance_bound", cfg.covariance_bound);
  r.boolean("output.particles_csv", cfg.particles_csv);
  r.boolean("output.svg", cfg.svg);
  if (auto dir = r.raw("output.directory")) cfg.out_dir = *dir;
  r.reject_unknown();

  try {
    cfg.validate(source);
  } catch (const ConfigError& e) {
    // Re-raise with the line of the offending field when the file has one.
    r.fail(e.field(), e.message());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "", "cannot open config file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

std::string resolved_config(const ExperimentConfig& cfg) {
  auto num = [](double v) { return io::format_double(v); };
  auto vec = [&](const Vec3& v) { return num(v(0)) + " " + num(v(1)) + " " + num(v(2)); };
  std::ostringstream os;
  os << io::kFormatLine << "\n\n"
     << "[body]\n"
     << "inertia = " << vec(cfg.inertia) << "\n"
     << "viscous = " << num(cfg.viscous) << "\n"
     << "noise = " << num(cfg.noise) << "\n\n"
     << "[trajectory]\n";
  if (cfg.trajectory == 0) {
    os << "id = custom\n";
    for (int k = 0; k < 4; ++k) os << "coeff" << k << " = " << vec(cfg.custom_coeffs.coeffs[k]) << "\n";
  } else {
    os << "id = " << cfg.trajectory << "\n";
  }
  os << "\n[simulation]\n"
     << "particles = " << cfg.particles << "\n"
     << "dt = " << num(cfg.dt) << "\n"
     << "horizon = " << num(cfg.horizon) << "\n"
     << "seed = " << cfg.seed << "\n"
     << "snapshot_stride = " << num(cfg.snapshot_stride) << "\n\n"
     << "[estimator]\n"
     << "tolerance = " << num(cfg.mean_tolerance) << "\n"
     << "max_iterations = " << cfg.mean_max_iterations << "\n\n"
     << "[eom]\n"
     << "covariance_bound = " << num(cfg.covariance_bound) << "\n\n"
     << "[output]\n"
     << "particles_csv = " << (cfg.particles_csv ? "true" : "false") << "\n"
     << "svg = " << (cfg.svg ? "true" : "false") << "\n";
  return os.str();
}

// --- stages -----------------------------------------------------------------

namespace {

std::filesystem::path in_out(const ExperimentConfig& cfg, const char* name) {
  return cfg.out_dir / name;
}

void prepare(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream out(in_out(cfg, files::kConfig));
  out << resolved_config(cfg);
  if (!out) throw std::runtime_error("cannot write " + in_out(cfg, files::kConfig).string());
}

io::EnsembleHeader header_for(const ExperimentConfig& cfg, std::size_t snapshots) {
  io::EnsembleHeader h;
  h.particles = cfg.particles;
  h.snapshots = snapshots;
  h.seed = cfg.seed;
  h.dt = cfg.dt;
  h.params_hash = params_hash(cfg.body(), cfg.trajectory_spec());
  return h;
}

template <class State>
const State* find_state(const std::vector<State>& states, double t) {
  for (const auto& s : states) {
    if (std::abs(s.t - t) < 1e-9) return &s;
  }
  return nullptr;
}

}  // namespace

int run_simulate(const ExperimentConfig& cfg) {
  prepare(cfg);
  const std::string stage = "simulate";
  io::update_error_record(in_out(cfg, files::kError), stage, std::nullopt);
  const SimConfig sim = cfg.sim_config();
  const io::EnsembleHeader header = header_for(cfg, sim.snapshot_times.size());
  io::EnsembleWriter writer(in_out(cfg, files::kEnsemble), header);
  simulate_snapshots(cfg.body(), cfg.trajectory_spec(), sim, [&](const Snapshot& snap) {
    writer.write(snap);
    if (cfg.particles_csv) {
      io::write_particles_csv(cfg.out_dir / io::particles_file_name(snap.t), snap, header);
    }
  });
  writer.close();
  return kExitOk;
}

int run_propagate_ekf(const ExperimentConfig& cfg) {
  prepare(cfg);
  const std::string stage = "propagate-ekf";
  const EkfTrajectory traj =
      propagate_ekf(cfg.body(), cfg.trajectory_spec(), Mat6::Zero(), cfg.dt, cfg.horizon);
  io::write_ekf_series(in_out(cfg, files::kEkf), traj.states);
  if (traj.failure) {
    io::update_error_record(in_out(cfg, files::kError), stage,
                            io::ErrorRecord{stage, "validity_lost", traj.failure->reason,
                                            traj.failure->time, true, {files::kEkf}});
    return kExitValidityLost;
  }
  io::update_error_record(in_out(cfg, files::kError), stage, std::nullopt);
  return kExitOk;
}

int run_propagate_eom(const ExperimentConfig& cfg) {
  prepare(cfg);
  const std::string stage = "propagate-eom";
  const EomTrajectory traj =
      propagate_eom(cfg.body(), cfg.trajectory_spec(), cfg.dt, cfg.horizon, cfg.eom_options());
  io::write_eom_series(in_out(cfg, files::kEom), traj.states);
  if (traj.failure) {
    io::update_error_record(in_out(cfg, files::kError), stage,
                            io::ErrorRecord{stage, "validity_lost", traj.failure->reason,
                                            traj.failure->time, true, {files::kEom}});
    return kExitValidityLost;
  }
  io::update_error_record(in_out(cfg, files::kError), stage, std::nullopt);
  return kExitOk;
}

int run_evaluate(const ExperimentConfig& cfg) {
  const std::vector<std::filesystem::path> inputs = {
      in_out(cfg, files::kEnsemble), in_out(cfg, files::kEkf), in_out(cfg, files::kEom)};
  std::vector<std::filesystem::path> missing;
  for (const auto& p : inputs) {
    if (!std::filesystem::exists(p)) missing.push_back(p);
  }
  if (!missing.empty()) throw MissingInputError(missing);

  prepare(cfg);
  const std::string stage = "evaluate";
  io::EnsembleReader reader(inputs[0]);
  const io::EnsembleHeader expected = header_for(cfg, cfg.sim_config().snapshot_times.size());
  const io::EnsembleHeader& got = reader.header();
  if (got.particles != expected.particles || got.snapshots != expected.snapshots ||
      got.seed != expected.seed || got.dt != expected.dt ||
      got.params_hash != expected.params_hash) {
    throw io::FormatError(inputs[0], "ensemble was produced with a different configuration");
  }
  const std::vector<EkfState> ekf = io::read_ekf_series(inputs[1]);
  const std::vector<EomState> eom = io::read_eom_series(inputs[2]);

  MetricSeries series;
  std::optional<io::ErrorRecord> failure;
  Snapshot snap;
  const MeanOptions opts = cfg.mean_options();
  while (reader.next(snap)) {
    const EkfState* e = find_state(ekf, snap.t);
    const EomState* m = find_state(eom, snap.t);
    if (e == nullptr || m == nullptr) {
      failure = io::ErrorRecord{stage,
                                "validity_lost",
                                std::string(e == nullptr ? "EKF" : "EOM") +
                                    " series ends before snapshot t = " + io::format_double(snap.t),
                                snap.t,
                                true,
                                {files::kMetrics}};
      break;
    }
    series.rows.push_back(evaluate_snapshot(snap, *e, *m, opts));
  }

  io::write_metrics(in_out(cfg, files::kMetrics), series);
  if (cfg.svg) {
    io::write_metrics_svg(in_out(cfg, files::kSvg), series);
    if (failure) failure->outputs.push_back(files::kSvg);
  }
  io::update_error_record(in_out(cfg, files::kError), stage, failure);
  return failure ? kExitValidityLost : kExitOk;
}

int run_full(const ExperimentConfig& cfg) {
  int worst = kExitOk;
  for (auto stage : {run_simulate, run_propagate_ekf, run_propagate_eom, run_evaluate}) {
    worst = std::max(worst, stage(cfg));
  }
  return worst;
}

}  // namespace phasefold
