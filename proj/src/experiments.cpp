#include "qkbo/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "qkbo/errors.hpp"
#include "qkbo/feature_space.hpp"
#include "qkbo/gp.hpp"
#include "qkbo/mps.hpp"
#include "qkbo/optimize.hpp"

namespace qkbo {

namespace fs = std::filesystem;
using Eigen::VectorXd;
using json = nlohmann::json;

namespace {

// ---- config field table ----

// Shortest representation that round-trips.
std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": '" + v + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, std::string v) {
  boost::algorithm::to_lower(v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts, out;
  boost::algorithm::split(parts, v, boost::is_any_of(","));
  for (auto& p : parts) {
    boost::algorithm::trim(p);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + f(v[i]);
  return out;
}

struct Field {
  std::string key;  // section.name
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

Field int_field(std::string key, int ExperimentConfig::*m) {
  return {key, [key, m](ExperimentConfig& c, const std::string& v) { c.*m = static_cast<int>(parse_int(key, v)); },
          [m](const ExperimentConfig& c) { return std::to_string(c.*m); }};
}

Field double_field(std::string key, double ExperimentConfig::*m) {
  return {key, [key, m](ExperimentConfig& c, const std::string& v) { c.*m = parse_double(key, v); },
          [m](const ExperimentConfig& c) { return fmt_double(c.*m); }};
}

Field int_list_field(std::string key, std::vector<int> ExperimentConfig::*m) {
  return {key,
          [key, m](ExperimentConfig& c, const std::string& v) {
            (c.*m).clear();
            for (const auto& s : split_list(v)) (c.*m).push_back(static_cast<int>(parse_int(key, s)));
          },
          [m](const ExperimentConfig& c) { return join(c.*m, [](int i) { return std::to_string(i); }); }};
}

std::string opt_double(const std::optional<double>& v) {
  return v ? fmt_double(*v) : "";
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(int_field("ansatz.n_qubits", &ExperimentConfig::n_qubits));
    f.push_back(int_field("ansatz.depth", &ExperimentConfig::depth));
    f.push_back(double_field("hamiltonian.J", &ExperimentConfig::J));
    f.push_back(double_field("hamiltonian.hx", &ExperimentConfig::hx));
    f.push_back(double_field("hamiltonian.hz", &ExperimentConfig::hz));
    f.push_back({"hamiltonian.periodic",
                 [](ExperimentConfig& c, const std::string& v) { c.periodic = parse_bool("hamiltonian.periodic", v); },
                 [](const ExperimentConfig& c) { return std::string(c.periodic ? "true" : "false"); }});
    f.push_back(int_field("run.repeats", &ExperimentConfig::repeats));
    f.push_back({"run.seed",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.seed = static_cast<std::uint64_t>(parse_int("run.seed", v));
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.seed); }});
    f.push_back({"run.out_dir", [](ExperimentConfig& c, const std::string& v) { c.out_dir = v; },
                 [](const ExperimentConfig& c) { return c.out_dir; }});
    f.push_back(int_field("run.threads", &ExperimentConfig::threads));
    f.push_back({"run.kernels",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.kernels.clear();
                   for (const auto& s : split_list(v)) c.kernels.push_back(kernel_kind_from_string(s));
                 },
                 [](const ExperimentConfig& c) {
                   return join(c.kernels, [](KernelKind k) { return to_string(k); });
                 }});
    f.push_back(int_list_field("regress.n_train", &ExperimentConfig::n_train));
    f.push_back(int_field("regress.n_valid", &ExperimentConfig::n_valid));
    f.push_back({"regress.scales",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.scales.clear();
                   for (const auto& s : split_list(v)) c.scales.push_back(parse_double("regress.scales", s));
                 },
                 [](const ExperimentConfig& c) { return join(c.scales, fmt_double); }});
    f.push_back({"noise.shots",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v.empty() || v == "none")
                     c.noise.shots.reset();
                   else
                     c.noise.shots = parse_int("noise.shots", v);
                 },
                 [](const ExperimentConfig& c) {
                   return c.noise.shots ? std::to_string(*c.noise.shots) : std::string("none");
                 }});
    f.push_back({"noise.depolarizing",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.noise.depolarizing = parse_double("noise.depolarizing", v);
                 },
                 [](const ExperimentConfig& c) { return fmt_double(c.noise.depolarizing); }});
    f.push_back({"bo.n_init", [](ExperimentConfig& c, const std::string& v) { c.bo.n_init = static_cast<int>(parse_int("bo.n_init", v)); },
                 [](const ExperimentConfig& c) { return std::to_string(c.bo.n_init); }});
    f.push_back({"bo.n_queries",
                 [](ExperimentConfig& c, const std::string& v) { c.bo.n_queries = static_cast<int>(parse_int("bo.n_queries", v)); },
                 [](const ExperimentConfig& c) { return std::to_string(c.bo.n_queries); }});
    f.push_back({"bo.xi", [](ExperimentConfig& c, const std::string& v) { c.bo.xi = parse_double("bo.xi", v); },
                 [](const ExperimentConfig& c) { return fmt_double(c.bo.xi); }});
    f.push_back({"bo.acq_restarts",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.bo.acq_restarts = static_cast<int>(parse_int("bo.acq_restarts", v));
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.bo.acq_restarts); }});
    f.push_back({"bo.acq_raw_samples",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.bo.acq_raw_samples = static_cast<int>(parse_int("bo.acq_raw_samples", v));
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.bo.acq_raw_samples); }});
    f.push_back({"bo.hyperopt_every",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.bo.hyperopt_every = static_cast<int>(parse_int("bo.hyperopt_every", v));
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.bo.hyperopt_every); }});
    f.push_back({"bo.optimize_noise",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v == "auto" || v.empty())
                     c.bo.optimize_noise.reset();
                   else
                     c.bo.optimize_noise = parse_bool("bo.optimize_noise", v);
                 },
                 [](const ExperimentConfig& c) {
                   return c.bo.optimize_noise ? std::string(*c.bo.optimize_noise ? "true" : "false") : std::string("auto");
                 }});
    f.push_back({"spsa.max_evaluations",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.spsa.max_evaluations = static_cast<int>(parse_int("spsa.max_evaluations", v));
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.spsa.max_evaluations); }});
    f.push_back({"spsa.calibration_evaluations",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.spsa.calibration_evaluations = static_cast<int>(parse_int("spsa.calibration_evaluations", v));
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.spsa.calibration_evaluations); }});
    f.push_back({"spsa.alpha", [](ExperimentConfig& c, const std::string& v) { c.spsa.alpha = parse_double("spsa.alpha", v); },
                 [](const ExperimentConfig& c) { return fmt_double(c.spsa.alpha); }});
    f.push_back({"spsa.gamma", [](ExperimentConfig& c, const std::string& v) { c.spsa.gamma = parse_double("spsa.gamma", v); },
                 [](const ExperimentConfig& c) { return fmt_double(c.spsa.gamma); }});
    f.push_back({"spsa.target_step",
                 [](ExperimentConfig& c, const std::string& v) { c.spsa.target_step = parse_double("spsa.target_step", v); },
                 [](const ExperimentConfig& c) { return fmt_double(c.spsa.target_step); }});
    f.push_back({"spsa.final_window",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.spsa.final_window = static_cast<int>(parse_int("spsa.final_window", v));
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.spsa.final_window); }});
    f.push_back({"reference.e_opt",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v.empty())
                     c.e_opt.reset();
                   else
                     c.e_opt = parse_double("reference.e_opt", v);
                 },
                 [](const ExperimentConfig& c) { return opt_double(c.e_opt); }});
    f.push_back({"reference.e_opt_file", [](ExperimentConfig& c, const std::string& v) { c.e_opt_file = v; },
                 [](const ExperimentConfig& c) { return c.e_opt_file; }});
    f.push_back(int_field("mps.n_qubits", &ExperimentConfig::mps_qubits));
    f.push_back(int_field("mps.depth", &ExperimentConfig::mps_depth));
    f.push_back(int_field("mps.block_params", &ExperimentConfig::block_params));
    f.push_back(int_list_field("mps.chi", &ExperimentConfig::chi));
    f.push_back(int_list_field("mps.n_train", &ExperimentConfig::mps_n_train));
    f.push_back({"mps.noise_hyper",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.mps_noise.clear();
                   for (const auto& s : split_list(v)) c.mps_noise.push_back(parse_bool("mps.noise_hyper", s));
                 },
                 [](const ExperimentConfig& c) {
                   return join(c.mps_noise, [](bool b) { return std::string(b ? "true" : "false"); });
                 }});
    f.push_back(int_list_field("feature_dim.qubits", &ExperimentConfig::fd_qubits));
    f.push_back(int_list_field("feature_dim.depths", &ExperimentConfig::fd_depths));
    f.push_back(int_field("feature_dim.state_rank_max_qubits", &ExperimentConfig::fd_state_rank_max_qubits));
    f.push_back(int_field("feature_dim.unitary_rank_max_params", &ExperimentConfig::fd_unitary_rank_max_params));
    f.push_back(int_field("find_opt.attempts", &ExperimentConfig::attempts));
    return f;
  }();
  return table;
}

// ---- sampling helpers ----

GateAngles uniform_angles(std::mt19937_64& rng, Eigen::Index p, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  GateAngles x(p);
  for (Eigen::Index i = 0; i < p; ++i) x[i] = u(rng);
  return x;
}

std::vector<GateAngles> sample_box(std::mt19937_64& rng, int m, const GateAngles& center, double half_width) {
  std::vector<GateAngles> X;
  X.reserve(static_cast<std::size_t>(m));
  std::uniform_real_distribution<double> u(-half_width, half_width);
  for (int i = 0; i < m; ++i) {
    GateAngles x = center;
    for (Eigen::Index k = 0; k < x.size(); ++k) x[k] += u(rng);
    X.push_back(std::move(x));
  }
  return X;
}

VectorXd energies(const Ansatz& a, const PauliSum& h, const std::vector<GateAngles>& X) {
  VectorXd y(static_cast<Eigen::Index>(X.size()));
  for (std::size_t i = 0; i < X.size(); ++i) y[static_cast<Eigen::Index>(i)] = energy(a, X[i], h);
  return y;
}

double wrap_angle(double t) {
  return t - 2 * std::numbers::pi * std::round(t / (2 * std::numbers::pi));
}

int worker_count(int requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

KernelSpec kernel_for(KernelKind kind, const Ansatz& a) {
  KernelSpec s;
  s.kind = kind;
  if (is_quantum(kind)) s.ansatz = std::make_shared<const Ansatz>(a);
  return s;
}

std::optional<double> resolve_e_opt(const ExperimentConfig& cfg) {
  if (cfg.e_opt) return cfg.e_opt;
  if (!cfg.e_opt_file.empty()) return read_e_opt(cfg.e_opt_file);
  return std::nullopt;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << std::setprecision(17);
  return out;
}

json nullable(double v) {
  return std::isfinite(v) ? json(v) : json(nullptr);
}

json record_json(const BOTrace& t, int repeat, const BORecord& r) {
  json j;
  j["schema_version"] = kTraceSchemaVersion;
  j["method"] = t.method;
  j["repeat"] = repeat;
  j["seed"] = t.seed;
  j["iteration"] = r.iteration;
  j["theta"] = std::vector<double>(r.theta.data(), r.theta.data() + r.theta.size());
  j["y"] = r.y;
  j["best_y"] = r.best_y;
  j["exact_energy"] = r.exact_energy;
  j["error"] = r.error ? json(*r.error) : json(nullptr);
  j["signal_variance"] = r.signal_variance;
  j["noise_variance"] = r.noise_variance;
  j["lengthscale"] = r.lengthscale;
  j["alpha"] = r.alpha;
  j["ei"] = nullable(r.ei);
  j["wall_time"] = r.wall_time;
  return j;
}

void write_trace(const fs::path& dir, const BOTrace& t, int repeat) {
  fs::create_directories(dir);
  std::ofstream out = open_out(dir / (t.method + "_r" + std::to_string(repeat) + ".jsonl"));
  for (const auto& r : t.records) out << record_json(t, repeat, r).dump() << '\n';
}

void write_aggregate(const fs::path& p, const std::vector<IterationStats>& stats) {
  std::ofstream out = open_out(p);
  out << "method,iteration,count,median,mean,q25,q75\n";
  for (const auto& s : stats)
    out << s.method << ',' << s.iteration << ',' << s.count << ',' << s.median << ',' << s.mean << ',' << s.q25 << ','
        << s.q75 << '\n';
}

std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt_double(*v) : "";
}

}  // namespace

// ---- config ----

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::regress: return "regress";
    case ExperimentKind::regress_local: return "regress-local";
    case ExperimentKind::bo: return "bo";
    case ExperimentKind::spsa: return "spsa";
    case ExperimentKind::mps_regress: return "mps-regress";
    case ExperimentKind::feature_dim: return "feature-dim";
    case ExperimentKind::find_opt: return "find-opt";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::regress, ExperimentKind::regress_local, ExperimentKind::bo, ExperimentKind::spsa,
                 ExperimentKind::mps_regress, ExperimentKind::feature_dim, ExperimentKind::find_opt})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

void ExperimentConfig::validate() const {
  if (n_qubits < 2 || depth < 1) throw ConfigError("ansatz needs n_qubits >= 2 and depth >= 1");
  if (repeats < 1) throw ConfigError("repeats must be positive");
  if (threads < 0) throw ConfigError("threads must be nonnegative");
  if (noise.shots && *noise.shots < 1) throw ConfigError("shots must be positive");
  if (noise.depolarizing < 0.0 || noise.depolarizing > 1.0) throw ConfigError("depolarizing must lie in [0, 1]");
  switch (kind) {
    case ExperimentKind::regress:
    case ExperimentKind::regress_local:
      if (kernels.empty()) throw ConfigError("no kernels selected");
      if (n_train.empty()) throw ConfigError("empty N_t grid");
      for (int n : n_train)
        if (n < 1) throw ConfigError("N_t must be positive");
      if (n_valid < 2) throw ConfigError("N_v must be at least 2");
      if (kind == ExperimentKind::regress_local) {
        if (scales.empty()) throw ConfigError("no scale factors");
        for (double s : scales)
          if (!(s > 0.0)) throw ConfigError("scale factors must be positive");
      }
      for (auto k : kernels)
        if (k == KernelKind::mps_state) throw ConfigError("use mps-regress for the approximated kernel");
      break;
    case ExperimentKind::bo:
      if (kernels.empty()) throw ConfigError("no kernels selected");
      for (auto k : kernels)
        if (k == KernelKind::mps_state) throw ConfigError("bo does not support the approximated kernel");
      bo.validate();
      break;
    case ExperimentKind::spsa:
      spsa.validate();
      break;
    case ExperimentKind::mps_regress:
      if (mps_qubits < 2 || mps_depth < 1) throw ConfigError("mps ansatz needs n >= 2 and depth >= 1");
      if (chi.empty() || mps_n_train.empty() || mps_noise.empty()) throw ConfigError("empty mps grid");
      for (int c : chi)
        if (c < 1) throw ConfigError("chi must be positive");
      for (int n : mps_n_train)
        if (n < 1) throw ConfigError("N_t must be positive");
      if (block_params < 1) throw ConfigError("block needs at least one parameter");
      if (n_valid < 2) throw ConfigError("N_v must be at least 2");
      break;
    case ExperimentKind::feature_dim:
      if (fd_qubits.empty() || fd_depths.empty()) throw ConfigError("empty feature-dimension grid");
      for (int n : fd_qubits)
        if (n < 2) throw ConfigError("feature-dimension grid needs n >= 2");
      for (int d : fd_depths)
        if (d < 1) throw ConfigError("feature-dimension grid needs depth >= 1");
      break;
    case ExperimentKind::find_opt:
      if (attempts < 1) throw ConfigError("find-opt needs at least one attempt");
      break;
  }
}

Ansatz ExperimentConfig::ansatz() const {
  return build_brickwork_ry_cx(n_qubits, depth);
}

PauliSum ExperimentConfig::hamiltonian() const {
  return build_tfim(n_qubits, J, hx, hz, periodic);
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.out_dir = "out/" + to_string(kind);
  switch (kind) {
    case ExperimentKind::spsa: c.repeats = 50; break;
    case ExperimentKind::mps_regress: c.repeats = 5; break;
    default: break;
  }
  return c;
}

ExperimentConfig parse_config(const std::string& ini_text, ExperimentKind kind) {
  ExperimentConfig cfg = default_config(kind);
  boost::property_tree::ptree pt;
  std::istringstream in(ini_text);
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;
  for (const auto& [section, body] : pt) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key outside a section: " + section);
    for (const auto& [name, value] : body) {
      const std::string key = section + "." + name;
      auto it = by_key.find(key);
      if (it == by_key.end()) throw ConfigError("unknown config key " + key);
      std::string v = value.data();
      boost::algorithm::trim(v);
      it->second->set(cfg, v);
    }
  }
  cfg.spsa.e_opt = cfg.e_opt;
  cfg.bo.e_opt = cfg.e_opt;
  return cfg;
}

ExperimentConfig load_config(const std::string& path, ExperimentKind kind) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), kind);
}

std::string config_to_ini(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "; experiment " << to_string(cfg.kind) << '\n';
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      os << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    os << f.key.substr(dot + 1) << " = " << f.get(cfg) << '\n';
  }
  return os.str();
}

void apply_full_scale(ExperimentConfig& cfg) {
  cfg.repeats = cfg.kind == ExperimentKind::spsa ? 1000 : 100;
}

// ---- seeds and scheduling ----

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t repeat_seed(std::uint64_t base, int repeat) {
  return splitmix64(base + static_cast<std::uint64_t>(repeat));
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_count(threads), std::max(count, 1));
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---- statistics ----

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) {
  return quantile(std::move(v), 0.5);
}

std::vector<IterationStats> summarize_errors(const std::vector<BOTrace>& traces) {
  std::map<std::string, std::map<int, std::vector<double>>> groups;
  std::vector<std::string> order;
  for (const auto& t : traces) {
    if (!groups.count(t.method)) order.push_back(t.method);
    auto& g = groups[t.method];
    for (const auto& r : t.records)
      if (r.error) g[r.iteration].push_back(*r.error);
  }
  std::vector<IterationStats> out;
  for (const auto& method : order)
    for (const auto& [it, errs] : groups[method]) {
      IterationStats s;
      s.method = method;
      s.iteration = it;
      s.count = static_cast<int>(errs.size());
      s.median = median(errs);
      double sum = 0;
      for (double e : errs) sum += e;
      s.mean = sum / static_cast<double>(errs.size());
      s.q25 = quantile(errs, 0.25);
      s.q75 = quantile(errs, 0.75);
      out.push_back(s);
    }
  return out;
}

// ---- regression ----

std::vector<RegressionRow> run_regression_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const Ansatz a = cfg.ansatz();
  const PauliSum h = cfg.hamiltonian();
  const double mean = h.identity_coefficient();
  const bool local = cfg.kind == ExperimentKind::regress_local;
  const std::vector<double> scales = local ? cfg.scales : std::vector<double>{1.0};
  const int pool_size = *std::max_element(cfg.n_train.begin(), cfg.n_train.end());
  const int n_scales = static_cast<int>(scales.size());

  std::vector<std::vector<RegressionRow>> per_task(static_cast<std::size_t>(cfg.repeats * n_scales));
  parallel_for(cfg.repeats * n_scales, cfg.threads, [&](int task) {
    const int rep = task / n_scales;
    const double s = scales[static_cast<std::size_t>(task % n_scales)];
    const std::uint64_t seed = repeat_seed(cfg.seed, rep);
    std::mt19937_64 rng(seed);
    // Global sampling is the s = 1 box around the origin; local sampling draws a fresh anchor first.
    const GateAngles anchor =
        local ? uniform_angles(rng, a.num_params(), -std::numbers::pi, std::numbers::pi) : GateAngles::Zero(a.num_params());
    const double half = std::numbers::pi / s;
    const auto X = sample_box(rng, pool_size, anchor, half);
    const auto Xv = sample_box(rng, cfg.n_valid, anchor, half);
    const VectorXd y = energies(a, h, X);
    const VectorXd yv = energies(a, h, Xv);
    auto& rows = per_task[static_cast<std::size_t>(task)];
    for (KernelKind kind : cfg.kernels) {
      auto data = std::make_shared<KernelData>(kernel_for(kind, a));
      data->add_all(X);
      for (int n : cfg.n_train) {
        const GPModel m0 = GPModel::fit(data, data->spec(), y.head(n), mean);
        HyperOptOptions o;
        o.seed = splitmix64(seed + static_cast<std::uint64_t>(n));
        const HyperOptResult r = optimize_hypers(m0, o);
        RegressionRow row;
        row.kernel = to_string(kind);
        row.scale = s;
        row.n_train = n;
        row.repeat = rep;
        row.seed = seed;
        row.r2v = validation_score(r.model, Xv, yv);
        row.log10_error = std::log10(std::max(1.0 - row.r2v, 1e-300));
        row.signal_variance = r.model.kernel().signal_variance;
        row.noise_variance = r.model.kernel().noise_variance;
        row.lengthscale = r.model.kernel().lengthscale;
        row.alpha = r.model.kernel().alpha;
        row.lml = r.final_lml;
        rows.push_back(row);
      }
    }
  });
  std::vector<RegressionRow> out;
  for (const auto& rows : per_task) out.insert(out.end(), rows.begin(), rows.end());
  std::stable_sort(out.begin(), out.end(), [](const RegressionRow& x, const RegressionRow& y) {
    return std::tie(x.scale, x.kernel, x.n_train, x.repeat) < std::tie(y.scale, y.kernel, y.n_train, y.repeat);
  });
  return out;
}

// ---- find-opt ----

FindOptResult find_opt(const Ansatz& a, const PauliSum& h, int attempts, std::uint64_t seed) {
  if (attempts < 1) throw ConfigError("find-opt needs at least one attempt");
  const Eigen::Index p = a.num_params();
  const double inf = std::numeric_limits<double>::infinity();
  const VectorXd lo = VectorXd::Constant(p, -inf), hi = VectorXd::Constant(p, inf);
  auto f = [&](const VectorXd& x, VectorXd* g) {
    if (g) *g = parameter_shift_gradient(a, x, h);
    return energy(a, x, h);
  };
  LbfgsOptions opts;
  opts.max_iterations = 500;
  opts.pgtol = 1e-10;
  opts.ftol = 1e-15;
  std::mt19937_64 rng(seed);
  FindOptResult best{GateAngles::Zero(p), inf, attempts};
  for (int k = 0; k < attempts; ++k) {
    const GateAngles x0 = uniform_angles(rng, p, -std::numbers::pi, std::numbers::pi);
    const BoxResult r = minimize_box(f, x0, lo, hi, opts);
    if (r.f < best.energy) {
      best.energy = r.f;
      best.theta = r.x;
    }
  }
  best.theta = best.theta.unaryExpr(&wrap_angle);
  best.energy = energy(a, best.theta, h);
  return best;
}

FindOptResult find_opt(const ExperimentConfig& cfg) {
  cfg.validate();
  return find_opt(cfg.ansatz(), cfg.hamiltonian(), cfg.attempts, cfg.seed);
}

// ---- BO and SPSA sweeps ----

BOSweep run_bo_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const Ansatz a = cfg.ansatz();
  const PauliSum h = cfg.hamiltonian();
  const auto e_opt = resolve_e_opt(cfg);
  const int n_kernels = static_cast<int>(cfg.kernels.size());
  const int n_tasks = n_kernels * cfg.repeats;
  BOSweep out;
  out.traces.resize(static_cast<std::size_t>(n_tasks));
  out.repeats.resize(static_cast<std::size_t>(n_tasks));
  parallel_for(n_tasks, cfg.threads, [&](int task) {
    const int kernel_index = task / cfg.repeats, rep = task % cfg.repeats;
    BOConfig bo = cfg.bo;
    bo.seed = repeat_seed(cfg.seed, rep);
    bo.e_opt = e_opt;
    EnergyEvaluator ev(a, h, cfg.noise, splitmix64(bo.seed ^ 0x5eed5eed5eed5eedULL));
    out.traces[static_cast<std::size_t>(task)] =
        run_bo(ev, kernel_for(cfg.kernels[static_cast<std::size_t>(kernel_index)], a), bo);
    out.repeats[static_cast<std::size_t>(task)] = rep;
  });
  return out;
}

SPSASweep run_spsa_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const Ansatz a = cfg.ansatz();
  const PauliSum h = cfg.hamiltonian();
  const auto e_opt = resolve_e_opt(cfg);
  SPSASweep out;
  out.runs.resize(static_cast<std::size_t>(cfg.repeats));
  parallel_for(cfg.repeats, cfg.threads, [&](int rep) {
    SPSAConfig sc = cfg.spsa;
    sc.seed = repeat_seed(cfg.seed, rep);
    sc.e_opt = e_opt;
    std::mt19937_64 rng(splitmix64(sc.seed ^ 0x7417a1ULL));
    const GateAngles theta0 = uniform_angles(rng, a.num_params(), -std::numbers::pi, std::numbers::pi);
    EnergyEvaluator ev(a, h, cfg.noise, splitmix64(sc.seed ^ 0x5eed5eed5eed5eedULL));
    out.runs[static_cast<std::size_t>(rep)] = run_spsa(ev, sc, theta0);
  });
  return out;
}

// ---- MPS regression ----

std::vector<MpsRegressionRow> run_mps_regression(const ExperimentConfig& cfg) {
  cfg.validate();
  const Ansatz a = build_brickwork_ry_cx(cfg.mps_qubits, cfg.mps_depth);
  const PauliSum h = build_tfim(cfg.mps_qubits, cfg.J, cfg.hx, cfg.hz, cfg.periodic);
  const double mean = h.identity_coefficient();
  const int p = a.num_params();
  if (cfg.block_params >= p) throw ConfigError("block must leave a nonempty prefix");
  const int first = p - cfg.block_params;
  const int pool_size = *std::max_element(cfg.mps_n_train.begin(), cfg.mps_n_train.end());

  std::vector<std::vector<MpsRegressionRow>> per_rep(static_cast<std::size_t>(cfg.repeats));
  parallel_for(cfg.repeats, cfg.threads, [&](int rep) {
    const std::uint64_t seed = repeat_seed(cfg.seed, rep);
    std::mt19937_64 rng(seed);
    const GateAngles thetaA = uniform_angles(rng, first, -std::numbers::pi, std::numbers::pi);
    const BlockSplit split = split_ansatz(a, first, thetaA);
    auto full_angles = [&](const GateAngles& b) {
      GateAngles t(p);
      t << thetaA, b;
      return t;
    };
    std::vector<GateAngles> XB, XvB, X, Xv;
    for (int i = 0; i < pool_size; ++i) XB.push_back(uniform_angles(rng, cfg.block_params, -std::numbers::pi, std::numbers::pi));
    for (int i = 0; i < cfg.n_valid; ++i) XvB.push_back(uniform_angles(rng, cfg.block_params, -std::numbers::pi, std::numbers::pi));
    for (const auto& b : XB) X.push_back(full_angles(b));
    for (const auto& b : XvB) Xv.push_back(full_angles(b));
    const VectorXd y = energies(a, h, X);
    const VectorXd yv = energies(a, h, Xv);
    const Statevector psiA = cfg.mps_qubits <= 20 ? simulate(split.prefix, thetaA.head(split.prefix.num_params()))
                                                  : Statevector();

    auto fit = [&](std::shared_ptr<KernelData> data, int n, bool noise) {
      const GPModel m0 = GPModel::fit(data, data->spec(), y.head(n), mean);
      HyperOptOptions o;
      o.optimize_noise = noise;
      o.seed = splitmix64(seed + static_cast<std::uint64_t>(n));
      return optimize_hypers(m0, o).model;
    };

    auto full = std::make_shared<KernelData>(kernel_for(KernelKind::state, a));
    full->add_all(X);
    auto& rows = per_rep[static_cast<std::size_t>(rep)];
    // Reference models: the full state kernel under each noise setting.
    std::map<std::pair<int, bool>, GPModel> reference;
    for (int n : cfg.mps_n_train)
      for (bool noise : cfg.mps_noise) {
        const GPModel m = fit(full, n, noise);
        reference.emplace(std::make_pair(n, noise), m);
        MpsRegressionRow row;
        row.chi = 0;
        row.noise_hyper = noise;
        row.n_train = n;
        row.repeat = rep;
        row.seed = seed;
        row.r2v = validation_score(m, Xv, yv);
        row.noise_variance = m.kernel().noise_variance;
        rows.push_back(row);
      }

    for (int chi : cfg.chi) {
      const CompressionResult comp = compress_prefix(split, chi);
      const double fidelity =
          psiA.size() > 0 ? std::norm(psiA.dot(comp.state.to_statevector())) : comp.fidelity_estimate;
      KernelSpec spec;
      spec.kind = KernelKind::mps_state;
      spec.ansatz = std::make_shared<const Ansatz>(split.block);
      spec.mps_input = std::make_shared<const MPS>(comp.state);
      auto data = std::make_shared<KernelData>(spec);
      data->add_all(XB);
      for (int n : cfg.mps_n_train)
        for (bool noise : cfg.mps_noise) {
          const GPModel m = fit(data, n, noise);
          MpsRegressionRow row;
          row.chi = chi;
          row.noise_hyper = noise;
          row.n_train = n;
          row.repeat = rep;
          row.seed = seed;
          row.fidelity = fidelity;
          // Validation inputs are block angles for the approximated kernel.
          row.r2v = validation_score(m, XvB, yv);
          row.log_bayes_factor = log_bayes_factor(m, reference.at({n, noise}));
          row.noise_variance = m.kernel().noise_variance;
          rows.push_back(row);
        }
    }
  });
  std::vector<MpsRegressionRow> out;
  for (const auto& rows : per_rep) out.insert(out.end(), rows.begin(), rows.end());
  return out;
}

// ---- feature dimensions ----

std::vector<FeatureDimRow> run_feature_dim(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<FeatureDimRow> out;
  for (int n : cfg.fd_qubits)
    for (int d : cfg.fd_depths) {
      const Ansatz a = build_brickwork_ry_cx(n, d);
      FeatureDimRow row;
      row.n = n;
      row.depth = d;
      row.p = a.num_params();
      row.state_bound = state_dim_bound(n, row.p);
      row.unitary_bound = unitary_dim_bound(n, row.p);
      row.real_dim = real_ansatz_dim(n);
      if (n <= cfg.fd_state_rank_max_qubits) row.state_rank = state_feature_rank(a);
      if (n <= 3 && row.p <= cfg.fd_unitary_rank_max_params) row.unitary_rank = unitary_feature_rank(a);
      out.push_back(row);
    }
  return out;
}

// ---- persistence ----

double read_e_opt(const std::string& path) {
  std::ifstream in(path);
  double e;
  if (!(in >> e)) throw ConfigError("cannot read reference energy from " + path);
  return e;
}

void run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  {
    std::ofstream snap = open_out(dir / "config.ini");
    snap << config_to_ini(cfg);
  }
  switch (cfg.kind) {
    case ExperimentKind::regress:
    case ExperimentKind::regress_local: {
      const auto rows = run_regression_sweep(cfg);
      std::ofstream out = open_out(dir / "results.csv");
      out << "kernel,scale,n_train,repeat,seed,r2v,log10_error,signal_variance,noise_variance,lengthscale,alpha,lml\n";
      for (const auto& r : rows)
        out << r.kernel << ',' << r.scale << ',' << r.n_train << ',' << r.repeat << ',' << r.seed << ',' << r.r2v << ','
            << r.log10_error << ',' << r.signal_variance << ',' << r.noise_variance << ',' << r.lengthscale << ','
            << r.alpha << ',' << r.lml << '\n';
      std::map<std::tuple<double, std::string, int>, std::vector<double>> groups;
      for (const auto& r : rows) groups[{r.scale, r.kernel, r.n_train}].push_back(r.r2v);
      std::ofstream sum = open_out(dir / "summary.csv");
      sum << "kernel,scale,n_train,count,median_r2v,q25_r2v,q75_r2v,median_log10_error\n";
      for (const auto& [key, v] : groups) {
        const double med = median(v);
        sum << std::get<1>(key) << ',' << std::get<0>(key) << ',' << std::get<2>(key) << ',' << v.size() << ',' << med
            << ',' << quantile(v, 0.25) << ',' << quantile(v, 0.75) << ',' << std::log10(std::max(1.0 - med, 1e-300))
            << '\n';
        log << std::get<1>(key) << " s=" << std::get<0>(key) << " N_t=" << std::get<2>(key) << " median R2v=" << med
            << '\n';
      }
      break;
    }
    case ExperimentKind::bo: {
      if (!resolve_e_opt(cfg)) log << "warning: no reference energy; the error metric is omitted\n";
      const BOSweep sweep = run_bo_sweep(cfg);
      std::ofstream sum = open_out(dir / "summary.csv");
      sum << "kernel,repeat,seed,final_best_y,final_error,evaluator_calls,kernel_pair_evaluations,hyperopt_warning\n";
      for (std::size_t i = 0; i < sweep.traces.size(); ++i) {
        const auto& t = sweep.traces[i];
        write_trace(dir / "traces", t, sweep.repeats[i]);
        sum << t.method << ',' << sweep.repeats[i] << ',' << t.seed << ',' << t.records.back().best_y << ','
            << fmt_opt(t.records.back().error) << ',' << t.evaluator_calls << ',' << t.kernel_pair_evaluations << ','
            << (t.hyperopt_warning ? 1 : 0) << '\n';
      }
      const auto stats = summarize_errors(sweep.traces);
      write_aggregate(dir / "aggregate.csv", stats);
      for (const auto& s : stats)
        if (s.iteration == cfg.bo.n_init + cfg.bo.n_queries)
          log << s.method << " median final error " << s.median << " (IQR " << s.q25 << " .. " << s.q75 << ")\n";
      break;
    }
    case ExperimentKind::spsa: {
      if (!resolve_e_opt(cfg)) log << "warning: no reference energy; the error metric is omitted\n";
      const SPSASweep sweep = run_spsa_sweep(cfg);
      std::ofstream sum = open_out(dir / "summary.csv");
      sum << "method,repeat,seed,final_best_y,final_error,evaluator_calls,a,c,stability\n";
      std::vector<BOTrace> traces;
      std::vector<double> finals;
      for (std::size_t i = 0; i < sweep.runs.size(); ++i) {
        const auto& r = sweep.runs[i];
        write_trace(dir / "traces", r.trace, static_cast<int>(i));
        sum << r.trace.method << ',' << i << ',' << r.trace.seed << ',' << r.trace.records.back().best_y << ','
            << fmt_opt(r.final_error) << ',' << r.trace.evaluator_calls << ',' << r.a << ',' << r.c << ','
            << r.stability << '\n';
        traces.push_back(r.trace);
        if (r.final_error) finals.push_back(*r.final_error);
      }
      write_aggregate(dir / "aggregate.csv", summarize_errors(traces));
      if (!finals.empty()) log << "spsa median final error " << median(finals) << '\n';
      break;
    }
    case ExperimentKind::mps_regress: {
      const auto rows = run_mps_regression(cfg);
      std::ofstream out = open_out(dir / "results.csv");
      out << "chi,noise_hyper,n_train,repeat,seed,fidelity,r2v,log_bayes_factor,noise_variance\n";
      std::map<std::tuple<int, bool, int>, std::vector<double>> groups;
      for (const auto& r : rows) {
        out << (r.chi == 0 ? std::string("full") : std::to_string(r.chi)) << ',' << (r.noise_hyper ? 1 : 0) << ','
            << r.n_train << ',' << r.repeat << ',' << r.seed << ',' << r.fidelity << ',' << r.r2v << ','
            << r.log_bayes_factor << ',' << r.noise_variance << '\n';
        groups[{r.chi, r.noise_hyper, r.n_train}].push_back(r.r2v);
      }
      std::ofstream sum = open_out(dir / "summary.csv");
      sum << "chi,noise_hyper,n_train,count,median_r2v,q25_r2v,q75_r2v\n";
      for (const auto& [key, v] : groups) {
        const auto [chi, noise, n] = key;
        sum << (chi == 0 ? std::string("full") : std::to_string(chi)) << ',' << (noise ? 1 : 0) << ',' << n << ','
            << v.size() << ',' << median(v) << ',' << quantile(v, 0.25) << ',' << quantile(v, 0.75) << '\n';
      }
      log << "wrote " << rows.size() << " rows\n";
      break;
    }
    case ExperimentKind::feature_dim: {
      const auto rows = run_feature_dim(cfg);
      std::ofstream out = open_out(dir / "results.csv");
      out << "n,depth,p,state_bound,unitary_bound,real_ansatz_dim,state_rank,unitary_rank\n";
      for (const auto& r : rows) {
        out << r.n << ',' << r.depth << ',' << r.p << ',' << r.state_bound << ',' << r.unitary_bound << ','
            << r.real_dim << ',' << r.state_rank << ',' << r.unitary_rank << '\n';
        log << "n=" << r.n << " depth=" << r.depth << " p=" << r.p << " rank(S)=" << r.state_rank
            << " bound=" << r.state_bound << '\n';
      }
      break;
    }
    case ExperimentKind::find_opt: {
      const FindOptResult r = find_opt(cfg);
      {
        std::ofstream e = open_out(dir / "e_opt.txt");
        e << r.energy << '\n';
      }
      std::ofstream t = open_out(dir / "theta_opt.csv");
      t << angles_to_csv(r.theta) << '\n';
      log << "E(theta_opt) = " << std::setprecision(10) << r.energy << " after " << r.attempts << " attempts\n";
      break;
    }
  }
}

bool verify_outputs(const std::string& dir_name, std::ostream& log) {
  const fs::path dir(dir_name);
  if (!fs::exists(dir / "traces") || !fs::exists(dir / "aggregate.csv")) {
    log << "no traces or aggregate.csv under " << dir_name << '\n';
    return false;
  }
  // Rebuild traces from the JSON lines.
  std::map<std::string, BOTrace> traces;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir / "traces"))
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  bool ok = true;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string line;
    BOTrace& t = traces[f.stem().string()];
    while (std::getline(in, line)) {
      const json j = json::parse(line);
      if (j.at("schema_version").get<int>() != kTraceSchemaVersion) {
        log << f << ": unsupported schema version\n";
        ok = false;
      }
      t.method = j.at("method").get<std::string>();
      BORecord r;
      r.iteration = j.at("iteration").get<int>();
      if (!j.at("error").is_null()) r.error = j.at("error").get<double>();
      t.records.push_back(r);
    }
  }
  std::vector<BOTrace> all;
  for (auto& [name, t] : traces) all.push_back(std::move(t));
  const auto stats = summarize_errors(all);

  std::ifstream agg(dir / "aggregate.csv");
  std::string line;
  std::getline(agg, line);
  std::map<std::pair<std::string, int>, std::vector<double>> stored;
  while (std::getline(agg, line)) {
    std::vector<std::string> parts;
    boost::algorithm::split(parts, line, boost::is_any_of(","));
    if (parts.size() != 7) continue;
    std::vector<double> vals;
    for (std::size_t k = 2; k < 7; ++k) vals.push_back(std::stod(parts[k]));
    stored[{parts[0], std::stoi(parts[1])}] = vals;
  }
  if (stored.size() != stats.size()) {
    log << "aggregate rows " << stored.size() << " vs recomputed " << stats.size() << '\n';
    ok = false;
  }
  for (const auto& s : stats) {
    auto it = stored.find({s.method, s.iteration});
    if (it == stored.end()) {
      log << "missing aggregate row " << s.method << ' ' << s.iteration << '\n';
      ok = false;
      continue;
    }
    const double want[5] = {static_cast<double>(s.count), s.median, s.mean, s.q25, s.q75};
    for (int k = 0; k < 5; ++k)
      if (std::abs(it->second[static_cast<std::size_t>(k)] - want[k]) > 1e-12 * std::max(1.0, std::abs(want[k]))) {
        log << "aggregate mismatch " << s.method << " iteration " << s.iteration << '\n';
        ok = false;
        break;
      }
  }

  // Evaluator calls in the summary must equal the number of trace records.
  std::ifstream sum(dir / "summary.csv");
  if (sum && std::getline(sum, line)) {
    std::vector<std::string> header;
    boost::algorithm::split(header, line, boost::is_any_of(","));
    const auto col = std::find(header.begin(), header.end(), "evaluator_calls") - header.begin();
    while (std::getline(sum, line)) {
      std::vector<std::string> parts;
      boost::algorithm::split(parts, line, boost::is_any_of(","));
      if (static_cast<std::size_t>(col) >= parts.size()) continue;
      const std::string name = parts[0] + "_r" + parts[1];
      std::ifstream tf(dir / "traces" / (name + ".jsonl"));
      std::size_t n = 0;
      std::string l;
      while (std::getline(tf, l)) ++n;
      if (std::to_string(n) != parts[static_cast<std::size_t>(col)]) {
        log << name << ": summary reports " << parts[static_cast<std::size_t>(col)] << " evaluator calls, trace has "
            << n << " records\n";
        ok = false;
      }
    }
  }
  log << (ok ? "consistent" : "inconsistent") << ": " << files.size() << " traces, " << stats.size()
      << " aggregate rows\n";
  return ok;
}

}  // namespace qkbo
