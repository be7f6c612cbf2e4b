#include "spgd/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace spgd {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// --------------------------------------------------------------------------
// formatting and parsing primitives

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size())
    throw InvalidConfig("bad number for key '" + key + "': " + value);
  return x;
}

long parse_long(const std::string& key, const std::string& value) {
  const double x = parse_double(key, value);
  const long n = static_cast<long>(x);
  if (double(n) != x)
    throw InvalidConfig("expected integer for key '" + key + "': " + value);
  return n;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  const long n = parse_long(key, value);
  if (n < 0) throw InvalidConfig("expected nonnegative for key '" + key + "'");
  return static_cast<std::uint64_t>(n);
}

std::vector<Eigen::Index> parse_index_list(const std::string& key,
                                           const std::string& value) {
  std::vector<Eigen::Index> out;
  if (trim(value).empty()) return out;
  for (const std::string& tok : split(value, ','))
    out.push_back(parse_long(key, tok));
  return out;
}

std::string join_indices(const std::vector<Eigen::Index>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

PrecondKind precond_from_name(const std::string& name) {
  if (name == "exact-svd") return PrecondKind::ExactSvd;
  if (name == "damped-dense") return PrecondKind::DampedDense;
  if (name == "damped-lanczos") return PrecondKind::DampedLanczos;
  if (name == "ce-lanczos") return PrecondKind::CrossEntropyLanczos;
  throw InvalidConfig("unknown preconditioner: " + name);
}

std::string precond_name(PrecondKind k) {
  switch (k) {
    case PrecondKind::ExactSvd: return "exact-svd";
    case PrecondKind::DampedDense: return "damped-dense";
    case PrecondKind::DampedLanczos: return "damped-lanczos";
    case PrecondKind::CrossEntropyLanczos: return "ce-lanczos";
  }
  return "?";
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Consumes the key from kv or throws; returns whether it was present.
class SectionReader {
 public:
  SectionReader(std::string section, KeyValues kv)
      : section_(std::move(section)), kv_(std::move(kv)) {}

  std::optional<std::string> take(const std::string& key) {
    std::optional<std::string> out;
    for (auto it = kv_.begin(); it != kv_.end(); ++it) {
      if (it->first == key) {
        if (out)
          throw InvalidConfig("duplicate key '" + key + "' in [" + section_ +
                              "]");
        out = it->second;
        it = kv_.erase(it);
        if (it == kv_.end()) break;
        --it;
      }
    }
    return out;
  }

  void finish() const {
    if (!kv_.empty())
      throw InvalidConfig("unknown key '" + kv_.front().first + "' in [" +
                          section_ + "]");
  }

 private:
  std::string section_;
  KeyValues kv_;
};

void apply_run_section(RunConfig& cfg, KeyValues kv) {
  SectionReader r("run", std::move(kv));
  if (auto v = r.take("id")) cfg.id = *v;
  if (auto v = r.take("epochs")) cfg.epochs = parse_long("epochs", *v);
  if (auto v = r.take("seeds")) {
    cfg.seeds.clear();
    for (const std::string& tok : split(*v, ','))
      cfg.seeds.push_back(parse_u64("seeds", tok));
  }
  if (auto v = r.take("thresholds")) {
    cfg.thresholds.clear();
    for (const std::string& tok : split(*v, ','))
      cfg.thresholds.push_back(parse_double("thresholds", tok));
  }
  if (auto v = r.take("out")) cfg.out_dir = *v;
  r.finish();
}

void apply_problem_section(ProblemConfig& pc, KeyValues kv) {
  SectionReader r("problem", std::move(kv));
  if (auto v = r.take("kind")) pc.kind = *v;

  const std::set<std::string> kinds = {"linear-lsq", "discrete-pde",
                                       "mlp-regression", "poisson",
                                       "softmax-toy"};
  if (!kinds.count(pc.kind))
    throw InvalidConfig("unknown problem kind: " + pc.kind);

  if (pc.kind == "linear-lsq") {
    if (auto v = r.take("m")) pc.m = parse_long("m", *v);
    if (auto v = r.take("n")) pc.n = parse_long("n", *v);
    if (auto v = r.take("kappa")) pc.kappa = parse_double("kappa", *v);
    if (auto v = r.take("seed")) pc.seed = parse_u64("seed", *v);
  } else if (pc.kind == "discrete-pde") {
    if (auto v = r.take("grid")) pc.grid = parse_long("grid", *v);
    if (auto v = r.take("g")) pc.g = *v;
    if (auto v = r.take("init-radius"))
      pc.init_radius = parse_double("init-radius", *v);
    if (pc.g != "zero" && pc.g != "cubic")
      throw InvalidConfig("unknown pde nonlinearity: " + pc.g);
  } else if (pc.kind == "mlp-regression") {
    if (auto v = r.take("dim")) pc.dim = parse_long("dim", *v);
    if (auto v = r.take("frequency"))
      pc.frequency = parse_double("frequency", *v);
    if (auto v = r.take("hidden")) pc.hidden = parse_index_list("hidden", *v);
    if (auto v = r.take("batch")) pc.batch = parse_long("batch", *v);
    if (auto v = r.take("test-size"))
      pc.test_size = parse_long("test-size", *v);
    if (auto v = r.take("seed")) pc.seed = parse_u64("seed", *v);
  } else if (pc.kind == "poisson") {
    if (auto v = r.take("dim")) pc.dim = parse_long("dim", *v);
    if (auto v = r.take("interior")) pc.interior = parse_long("interior", *v);
    if (auto v = r.take("boundary")) pc.boundary = parse_long("boundary", *v);
    if (auto v = r.take("lambda-bc"))
      pc.lambda_bc = parse_double("lambda-bc", *v);
    if (auto v = r.take("hidden")) pc.hidden = parse_index_list("hidden", *v);
    if (auto v = r.take("test-size"))
      pc.test_size = parse_long("test-size", *v);
    if (auto v = r.take("seed")) pc.seed = parse_u64("seed", *v);
  } else if (pc.kind == "softmax-toy") {
    if (auto v = r.take("samples")) pc.samples = parse_long("samples", *v);
    if (auto v = r.take("features")) pc.features = parse_long("features", *v);
    if (auto v = r.take("classes")) pc.classes = parse_long("classes", *v);
    if (auto v = r.take("hidden")) pc.hidden = parse_index_list("hidden", *v);
    if (auto v = r.take("seed")) pc.seed = parse_u64("seed", *v);
  }
  r.finish();
}

void apply_method_section(MethodConfig& mc, KeyValues kv) {
  SectionReader r("method", std::move(kv));
  if (auto v = r.take("name")) mc.name = *v;
  method_from_name(mc.name);  // validates
  HyperParams& h = mc.hyper;
  if (auto v = r.take("alpha")) h.alpha = parse_double("alpha", *v);
  if (auto v = r.take("beta1")) h.beta1 = parse_double("beta1", *v);
  if (auto v = r.take("beta2")) h.beta2 = parse_double("beta2", *v);
  if (auto v = r.take("eps")) h.eps = parse_double("eps", *v);
  if (auto v = r.take("factor")) h.schedule.factor = parse_double("factor", *v);
  if (auto v = r.take("interval"))
    h.schedule.interval = parse_long("interval", *v);
  if (auto v = r.take("floor")) h.schedule.floor = parse_double("floor", *v);
  if (auto v = r.take("precond")) h.precond.kind = precond_from_name(*v);
  if (auto v = r.take("mu")) h.precond.mu = parse_double("mu", *v);
  if (auto v = r.take("p")) h.precond.p = parse_double("p", *v);
  if (auto v = r.take("k")) h.precond.k = parse_long("k", *v);
  if (auto v = r.take("delta")) h.precond.delta = parse_double("delta", *v);
  if (auto v = r.take("trunc-tol"))
    h.precond.trunc_tol = parse_double("trunc-tol", *v);
  r.finish();
}

void validate_config(const RunConfig& cfg) {
  if (cfg.epochs < 1) throw InvalidConfig("epochs must be >= 1");
  if (cfg.seeds.empty()) throw InvalidConfig("need at least one seed");
  if (cfg.methods.empty()) throw InvalidConfig("need at least one [method]");
  if (cfg.id.empty()) throw InvalidConfig("run id must not be empty");
  for (size_t i = 0; i < cfg.thresholds.size(); ++i) {
    if (cfg.thresholds[i] <= 0)
      throw InvalidConfig("thresholds must be positive");
    if (i > 0 && cfg.thresholds[i] >= cfg.thresholds[i - 1])
      throw InvalidConfig("thresholds must be strictly descending");
  }
  for (const MethodConfig& mc : cfg.methods)
    mc.hyper.validate(method_from_name(mc.name));
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  cfg.methods.clear();

  std::istringstream in(text);
  std::string line;
  std::string section;
  KeyValues kv;
  bool have_run = false, have_problem = false;

  auto flush = [&]() {
    if (section.empty()) {
      if (!kv.empty())
        throw InvalidConfig("key '" + kv.front().first +
                            "' outside of any section");
      return;
    }
    if (section == "run") {
      if (have_run) throw InvalidConfig("duplicate [run] section");
      have_run = true;
      apply_run_section(cfg, std::move(kv));
    } else if (section == "problem") {
      if (have_problem) throw InvalidConfig("duplicate [problem] section");
      have_problem = true;
      apply_problem_section(cfg.problem, std::move(kv));
    } else if (section == "method") {
      MethodConfig mc;
      apply_method_section(mc, std::move(kv));
      cfg.methods.push_back(std::move(mc));
    } else {
      throw InvalidConfig("unknown section [" + section + "]");
    }
    kv.clear();
  };

  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw InvalidConfig("malformed section: " + t);
      flush();
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw InvalidConfig("expected key = value, got: " + t);
    kv.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  flush();

  if (cfg.methods.empty()) cfg.methods.push_back(MethodConfig{});
  validate_config(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "[run]\n";
  out << "id = " << cfg.id << "\n";
  out << "epochs = " << cfg.epochs << "\n";
  out << "seeds = ";
  for (size_t i = 0; i < cfg.seeds.size(); ++i)
    out << (i ? "," : "") << cfg.seeds[i];
  out << "\n";
  out << "thresholds = ";
  for (size_t i = 0; i < cfg.thresholds.size(); ++i)
    out << (i ? "," : "") << format_double(cfg.thresholds[i]);
  out << "\n";
  out << "out = " << cfg.out_dir << "\n";

  const ProblemConfig& pc = cfg.problem;
  out << "\n[problem]\n";
  out << "kind = " << pc.kind << "\n";
  if (pc.kind == "linear-lsq") {
    out << "m = " << pc.m << "\n";
    out << "n = " << pc.n << "\n";
    out << "kappa = " << format_double(pc.kappa) << "\n";
    out << "seed = " << pc.seed << "\n";
  } else if (pc.kind == "discrete-pde") {
    out << "grid = " << pc.grid << "\n";
    out << "g = " << pc.g << "\n";
    out << "init-radius = " << format_double(pc.init_radius) << "\n";
  } else if (pc.kind == "mlp-regression") {
    out << "dim = " << pc.dim << "\n";
    out << "frequency = " << format_double(pc.frequency) << "\n";
    out << "hidden = " << join_indices(pc.hidden) << "\n";
    out << "batch = " << pc.batch << "\n";
    out << "test-size = " << pc.test_size << "\n";
    out << "seed = " << pc.seed << "\n";
  } else if (pc.kind == "poisson") {
    out << "dim = " << pc.dim << "\n";
    out << "interior = " << pc.interior << "\n";
    out << "boundary = " << pc.boundary << "\n";
    out << "lambda-bc = " << format_double(pc.lambda_bc) << "\n";
    out << "hidden = " << join_indices(pc.hidden) << "\n";
    out << "test-size = " << pc.test_size << "\n";
    out << "seed = " << pc.seed << "\n";
  } else if (pc.kind == "softmax-toy") {
    out << "samples = " << pc.samples << "\n";
    out << "features = " << pc.features << "\n";
    out << "classes = " << pc.classes << "\n";
    out << "hidden = " << join_indices(pc.hidden) << "\n";
    out << "seed = " << pc.seed << "\n";
  }

  for (const MethodConfig& mc : cfg.methods) {
    const HyperParams& h = mc.hyper;
    out << "\n[method]\n";
    out << "name = " << mc.name << "\n";
    out << "alpha = " << format_double(h.alpha) << "\n";
    out << "beta1 = " << format_double(h.beta1) << "\n";
    out << "beta2 = " << format_double(h.beta2) << "\n";
    out << "eps = " << format_double(h.eps) << "\n";
    out << "factor = " << format_double(h.schedule.factor) << "\n";
    out << "interval = " << h.schedule.interval << "\n";
    out << "floor = " << format_double(h.schedule.floor) << "\n";
    out << "precond = " << precond_name(h.precond.kind) << "\n";
    out << "mu = " << format_double(h.precond.mu) << "\n";
    out << "p = " << format_double(h.precond.p) << "\n";
    out << "k = " << h.precond.k << "\n";
    out << "delta = " << format_double(h.precond.delta) << "\n";
    out << "trunc-tol = " << format_double(h.precond.trunc_tol) << "\n";
  }
  return out.str();
}

std::string config_hash(const RunConfig& cfg) {
  const std::string s = serialize_config(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

std::unique_ptr<ResidualProblem> make_problem(const ProblemConfig& pc) {
  if (pc.kind == "linear-lsq") {
    return std::make_unique<LinearLsq>(
        make_linear_lsq(pc.m, pc.n, pc.kappa, pc.seed));
  }
  if (pc.kind == "discrete-pde") {
    const PdeNonlinearity g =
        pc.g == "zero" ? PdeNonlinearity::Zero : PdeNonlinearity::Cubic;
    return std::make_unique<DiscretePde>(pc.grid, g, pc.init_radius);
  }
  if (pc.kind == "mlp-regression") {
    MlpRegressionConfig c;
    c.dim = pc.dim;
    c.frequency = pc.frequency;
    c.hidden = pc.hidden;
    c.batch = pc.batch;
    c.test_size = pc.test_size;
    c.data_seed = pc.seed;
    return std::make_unique<MlpRegression>(c);
  }
  if (pc.kind == "poisson") {
    PoissonConfig c;
    c.dim = pc.dim;
    c.n_interior = pc.interior;
    c.n_boundary = pc.boundary;
    c.lambda_bc = pc.lambda_bc;
    c.hidden = pc.hidden;
    c.test_size = pc.test_size;
    c.data_seed = pc.seed;
    return std::make_unique<PoissonCollocation>(c);
  }
  if (pc.kind == "softmax-toy") {
    SoftmaxToyConfig c;
    c.samples = pc.samples;
    c.features = pc.features;
    c.classes = pc.classes;
    c.hidden = pc.hidden;
    c.data_seed = pc.seed;
    return std::make_unique<SoftmaxToy>(c);
  }
  throw InvalidConfig("unknown problem kind: " + pc.kind);
}

void write_trace_csv(const std::string& path, const std::string& run_id,
                     const std::string& method, std::uint64_t seed,
                     const Trace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericalFailure("cannot open trace file: " + path);
  out << "run_id,method,seed,epoch,loss,grad_norm,residual_norm,lr,wall_ms\n";
  for (const TraceRow& row : trace.rows) {
    out << run_id << ',' << method << ',' << seed << ',' << row.epoch << ','
        << format_double(row.loss) << ',' << format_double(row.grad_norm)
        << ',' << format_double(row.residual_norm) << ','
        << format_double(row.lr) << ',' << format_double(row.wall_ms) << '\n';
  }
}

std::vector<CellResult> execute_cells(const RunConfig& cfg, bool quiet,
                                      std::ostream& log) {
  std::vector<CellResult> cells;
  for (const MethodConfig& mc : cfg.methods) {
    const Method method = method_from_name(mc.name);
    for (std::uint64_t seed : cfg.seeds) {
      auto problem = make_problem(cfg.problem);
      CellResult cell;
      cell.method = mc.name;
      cell.seed = seed;
      cell.trace = run(*problem, method, mc.hyper, cfg.epochs, seed);
      if (!cell.trace.diverged)
        cell.final_test_loss = problem->test_loss(cell.trace.final_theta);
      if (!quiet) {
        log << "cell " << mc.name << " seed " << seed << ": "
            << (cell.trace.diverged ? "diverged" : "finished") << " at epoch "
            << (cell.trace.rows.empty() ? 0 : cell.trace.rows.back().epoch)
            << ", loss "
            << (cell.trace.rows.empty()
                    ? std::string("n/a")
                    : format_double(cell.trace.rows.back().loss))
            << "\n";
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Json json_number_or_null(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

Json summary_json(const RunConfig& cfg, const std::vector<CellResult>& cells) {
  Json summary;
  summary["config_hash"] = config_hash(cfg);
  Json jcells = Json::array();
  for (const CellResult& cell : cells) {
    Json jc;
    jc["method"] = cell.method;
    jc["seed"] = cell.seed;
    jc["final_loss"] = cell.trace.rows.empty()
                           ? Json(nullptr)
                           : json_number_or_null(cell.trace.rows.back().loss);
    jc["diverged"] = cell.trace.diverged;
    Json jm;
    for (const auto& [tau, epoch] : milestones(cell.trace.rows,
                                               cfg.thresholds)) {
      jm[format_double(tau)] = epoch ? Json(*epoch) : Json(nullptr);
    }
    jc["milestones"] = jm;
    if (cell.final_test_loss)
      jc["final_test_loss"] = json_number_or_null(*cell.final_test_loss);
    jcells.push_back(std::move(jc));
  }
  summary["cells"] = jcells;

  Json aggregate;
  for (const MethodConfig& mc : cfg.methods) {
    std::vector<double> finals, test_finals;
    std::map<double, std::vector<long>> reached;
    size_t total = 0;
    for (const CellResult& cell : cells) {
      if (cell.method != mc.name) continue;
      ++total;
      if (!cell.trace.diverged && !cell.trace.rows.empty())
        finals.push_back(cell.trace.rows.back().loss);
      if (cell.final_test_loss) test_finals.push_back(*cell.final_test_loss);
      for (const auto& [tau, epoch] :
           milestones(cell.trace.rows, cfg.thresholds))
        if (epoch) reached[tau].push_back(*epoch);
    }
    Json ja;
    ja["median_final_loss"] =
        finals.empty() ? Json(nullptr) : Json(median(finals));
    ja["best_final_loss"] =
        finals.empty()
            ? Json(nullptr)
            : Json(*std::min_element(finals.begin(), finals.end()));
    ja["worst_final_loss"] =
        finals.empty()
            ? Json(nullptr)
            : Json(*std::max_element(finals.begin(), finals.end()));
    if (!test_finals.empty())
      ja["median_final_test_loss"] = median(test_finals);
    Json jm;
    for (double tau : cfg.thresholds) {
      Json jt;
      const auto& hits = reached[tau];
      if (hits.empty()) {
        jt["median_epoch"] = nullptr;
      } else {
        std::vector<double> epochs(hits.begin(), hits.end());
        jt["median_epoch"] = median(epochs);
      }
      jt["success_rate"] =
          total == 0 ? 0.0 : double(reached[tau].size()) / double(total);
      jm[format_double(tau)] = jt;
    }
    ja["milestones"] = jm;
    aggregate[mc.name] = ja;
  }
  summary["aggregate"] = aggregate;
  return summary;
}

void write_outputs(const RunConfig& cfg, const std::vector<CellResult>& cells,
                   bool quiet, std::ostream& log) {
  fs::create_directories(cfg.out_dir);
  for (const CellResult& cell : cells) {
    const std::string path = (fs::path(cfg.out_dir) /
                              (cfg.id + "-" + cell.method + "-" +
                               std::to_string(cell.seed) + ".csv"))
                                 .string();
    write_trace_csv(path, cfg.id, cell.method, cell.seed, cell.trace);
    if (!quiet) log << "wrote " << path << "\n";
  }
  const Json summary = summary_json(cfg, cells);
  const std::string spath =
      (fs::path(cfg.out_dir) / (cfg.id + "-summary.json")).string();
  std::ofstream sout(spath, std::ios::binary);
  sout << summary.dump(2) << "\n";
  if (!quiet) log << "wrote " << spath << "\n";
}

}  // namespace

int cli_run(const RunConfig& cfg, bool quiet, std::ostream& log) {
  const std::vector<CellResult> cells = execute_cells(cfg, quiet, log);
  write_outputs(cfg, cells, quiet, log);
  return 0;
}

int cli_compare(const RunConfig& cfg, bool quiet, std::ostream& log) {
  if (cfg.methods.size() < 2)
    throw InvalidConfig("compare requires at least 2 methods");
  const std::vector<CellResult> cells = execute_cells(cfg, quiet, log);
  write_outputs(cfg, cells, quiet, log);

  // Median loss per epoch per method, for plotting.
  fs::create_directories(cfg.out_dir);
  const std::string cpath =
      (fs::path(cfg.out_dir) / (cfg.id + "-compare.csv")).string();
  std::ofstream cout_file(cpath, std::ios::binary);
  cout_file << "epoch";
  for (const MethodConfig& mc : cfg.methods) cout_file << ',' << mc.name;
  cout_file << '\n';
  for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::string line = std::to_string(epoch);
    bool any = false;
    for (const MethodConfig& mc : cfg.methods) {
      std::vector<double> losses;
      for (const CellResult& cell : cells) {
        if (cell.method != mc.name) continue;
        if (epoch < static_cast<long>(cell.trace.rows.size()))
          losses.push_back(cell.trace.rows[epoch].loss);
      }
      line += ',';
      if (!losses.empty()) {
        line += format_double(median(losses));
        any = true;
      }
    }
    if (!any) break;
    cout_file << line << '\n';
  }
  if (!quiet) log << "wrote " << cpath << "\n";

  // Side-by-side milestone table.
  const Json summary = summary_json(cfg, cells);
  log << "\nmethod";
  for (double tau : cfg.thresholds)
    log << "\tloss<=" << format_double(tau) << " (median ep, success)";
  log << "\tfinal loss (median)\n";
  for (const MethodConfig& mc : cfg.methods) {
    const Json& ja = summary["aggregate"][mc.name];
    log << mc.name;
    for (double tau : cfg.thresholds) {
      const Json& jt = ja["milestones"][format_double(tau)];
      log << "\t";
      if (jt["median_epoch"].is_null())
        log << "-";
      else
        log << jt["median_epoch"].get<double>();
      log << " (" << 100.0 * jt["success_rate"].get<double>() << "%)";
    }
    log << "\t";
    if (ja["median_final_loss"].is_null())
      log << "-";
    else
      log << format_double(ja["median_final_loss"].get<double>());
    if (ja.contains("median_final_test_loss"))
      log << " (test "
          << format_double(ja["median_final_test_loss"].get<double>()) << ")";
    log << "\n";
  }
  return 0;
}

int cli_probe(const RunConfig& cfg, std::ostream& out) {
  auto problem = make_problem(cfg.problem);
  Rng rng(cfg.seeds.front());
  const Vector theta0 = problem->initial_theta(rng);
  const SpectralProbe probe = spectral_probe(*problem, theta0);
  Json j;
  j["sigma_min"] = probe.sigma_min;
  j["sigma_max"] = probe.sigma_max;
  j["kappa"] = probe.kappa;
  j["rank"] = probe.rank;
  out << j.dump(2) << "\n";
  return 0;
}

// --------------------------------------------------------------------------
// check suite

bool check_gradient_consistency(const ResidualProblem& p, Rng& rng, int points,
                                std::string* detail) {
  for (int i = 0; i < points; ++i) {
    Vector theta = p.initial_theta(rng);
    theta += 0.05 * rng.gaussian_vector(theta.size());
    const Vector g = p.loss_gradient(theta);
    const Vector fd = fd_gradient(p, theta);
    const double err = (g - fd).norm();
    const double scale = std::max(fd.norm(), 1e-8);
    if (err > 1e-5 * scale) {
      if (detail) {
        std::ostringstream msg;
        msg << "rel error " << err / scale << " at point " << i;
        *detail = msg.str();
      }
      return false;
    }
  }
  return true;
}

namespace {

struct Check {
  std::string name;
  bool ok = false;
  std::string detail;
};

std::vector<std::pair<std::string, ProblemConfig>> check_problems() {
  std::vector<std::pair<std::string, ProblemConfig>> out;
  {
    ProblemConfig pc;
    pc.kind = "linear-lsq";
    pc.m = 8;
    pc.n = 8;
    pc.kappa = 5;
    pc.seed = 3;
    out.emplace_back("linear-lsq", pc);
  }
  {
    ProblemConfig pc;
    pc.kind = "discrete-pde";
    pc.grid = 15;
    pc.g = "cubic";
    out.emplace_back("discrete-pde", pc);
  }
  {
    ProblemConfig pc;
    pc.kind = "mlp-regression";
    pc.dim = 1;
    pc.frequency = 3;
    pc.hidden = {8, 8};
    pc.batch = 32;
    pc.test_size = 64;
    pc.seed = 3;
    out.emplace_back("mlp-regression", pc);
  }
  {
    ProblemConfig pc;
    pc.kind = "poisson";
    pc.dim = 2;
    pc.interior = 32;
    pc.boundary = 16;
    pc.hidden = {8, 8};
    pc.test_size = 64;
    pc.seed = 3;
    out.emplace_back("poisson", pc);
  }
  {
    ProblemConfig pc;
    pc.kind = "softmax-toy";
    pc.samples = 16;
    pc.features = 4;
    pc.classes = 3;
    pc.seed = 3;
    out.emplace_back("softmax-toy", pc);
  }
  return out;
}

void run_checks(std::vector<Check>& checks) {
  // Gradient and adjoint consistency for every problem kind.
  for (const auto& [name, pc] : check_problems()) {
    auto problem = make_problem(pc);
    {
      Check c{"gradient-check " + name};
      Rng rng(11);
      c.ok = check_gradient_consistency(*problem, rng, 5, &c.detail);
      checks.push_back(c);
    }
    {
      Check c{"adjoint-consistency " + name};
      Rng rng(13);
      const Vector theta = problem->initial_theta(rng);
      c.ok = adjoint_consistent(jacobian_map(*problem, theta), rng);
      checks.push_back(c);
    }
  }

  {
    Check c{"svd-identity (VU^T F vs B grad f)"};
    Rng rng(17);
    c.ok = true;
    for (int i = 0; i < 10 && c.ok; ++i) {
      const Matrix j = rng.gaussian_matrix(12, 9);
      const Vector f = rng.gaussian_vector(12);
      const SvdFactors svd = thin_svd(j);
      const Vector lhs = spgd_direction(svd, f);
      const Vector rhs = precond_gradient_exact(svd, j.transpose() * f);
      if ((lhs - rhs).norm() > 1e-10 * f.norm()) {
        c.ok = false;
        c.detail = "identity violated";
      }
    }
    checks.push_back(c);
  }

  {
    Check c{"lanczos-dense-agreement (k = m)"};
    Rng rng(19);
    c.ok = true;
    const Matrix j = rng.gaussian_matrix(10, 8);
    const Vector g = rng.gaussian_vector(8);
    for (double p : {0.5, 1.0}) {
      for (double mu : {1e-5, 1e-3, 1e-1}) {
        PrecondSpec spec;
        spec.kind = PrecondKind::DampedLanczos;
        spec.mu = mu;
        spec.p = p;
        spec.k = 8;
        const Vector approx = damped_apply_lanczos(matrix_map(j), g, spec);
        const Vector exact = damped_apply_dense(j, g, mu, p);
        if ((approx - exact).norm() > 1e-8 * exact.norm()) {
          c.ok = false;
          c.detail = "mismatch at p=" + format_double(p) +
                     " mu=" + format_double(mu);
        }
      }
    }
    checks.push_back(c);
  }

  {
    Check c{"lemma7-z-identity (AMSGrad auxiliary sequence)"};
    auto problem = make_problem(check_problems()[0].second);
    HyperParams h;
    h.precond.kind = PrecondKind::DampedDense;
    h.precond.mu = 1e-3;
    const AmsgradRecord rec = record_amsgrad_run(*problem, h, 50, 5);
    c.ok = true;
    const std::vector<double> residuals = z_identity_residuals(rec);
    for (size_t t = 0; t < residuals.size(); ++t) {
      const double scale = 1.0 + rec.theta[t + 1].norm();
      if (residuals[t] > 1e-10 * scale) {
        c.ok = false;
        c.detail = "residual " + format_double(residuals[t]);
      }
    }
    const double first = z_first_step_residual(rec.theta[0], rec.theta[1],
                                               rec.lambda[0], rec.vhat[0],
                                               rec.hyper);
    if (first > 1e-12) {
      c.ok = false;
      c.detail = "t=1 residual " + format_double(first);
    }
    checks.push_back(c);
  }

  {
    Check c{"amsgrad-vhat-monotone and At bound"};
    auto problem = make_problem(check_problems()[0].second);
    HyperParams h;
    h.precond.kind = PrecondKind::DampedDense;
    h.precond.mu = 1e-3;
    const AmsgradRecord rec = record_amsgrad_run(*problem, h, 200, 7);
    c.ok = true;
    for (size_t t = 1; t < rec.vhat.size(); ++t) {
      if (((rec.vhat[t] - rec.vhat[t - 1]).array() < -0.0).any()) {
        c.ok = false;
        c.detail = "vhat decreased";
      }
    }
    if (!at_bound_check(rec)) {
      c.ok = false;
      c.detail = "At bound violated";
    }
    checks.push_back(c);
  }

  {
    Check c{"theorem1-gd-rate (kappa=10)"};
    auto problem = std::make_unique<LinearLsq>(make_linear_lsq(16, 16, 10, 1));
    HyperParams h;
    h.alpha = 1.0 / 100.0;  // 1 / sigma_max^2
    Trace trace = run(*problem, Method::Gd, h, 600, 0);
    const RateFit fit = fit_rate_tail(trace.rows);
    const double bound = 1.0 - 1.0 / 100.0;
    c.ok = fit.rho <= bound + 0.01 && fit.r2 >= 0.99;
    if (!c.ok)
      c.detail = "rho " + format_double(fit.rho) + " r2 " +
                 format_double(fit.r2);
    checks.push_back(c);
  }

  {
    Check c{"theorem2-spgd-contraction (per-step residual ratio)"};
    auto problem = std::make_unique<LinearLsq>(make_linear_lsq(16, 16, 10, 1));
    HyperParams h;
    h.alpha = 1.0 / 10.0;  // 1 / sigma_max
    Trace trace = run(*problem, Method::Spgd, h, 50, 0);
    c.ok = true;
    for (size_t i = 1; i < trace.rows.size(); ++i) {
      const double ratio =
          trace.rows[i].residual_norm / trace.rows[i - 1].residual_norm;
      if (ratio > 1.0 - h.alpha * 1.0 + 1e-10) {  // sigma_min = 1
        c.ok = false;
        c.detail = "ratio " + format_double(ratio);
      }
    }
    checks.push_back(c);
  }

  {
    Check c{"fisher-blocks (PSD, null space, dense agreement)"};
    Rng rng(23);
    c.ok = true;
    for (int i = 0; i < 20 && c.ok; ++i) {
      const Eigen::Index k = 2 + rng.uniform_index(5);
      Vector p = rng.gaussian_vector(k).cwiseAbs();
      p /= p.sum();
      Matrix dense = Matrix(p.asDiagonal()) - p * p.transpose();
      Eigen::SelfAdjointEigenSolver<Matrix> es(dense);
      if (es.eigenvalues().minCoeff() < -1e-12) c.ok = false;
      if (fisher_block_apply(p, Vector::Ones(k)).norm() > 1e-12) c.ok = false;
      const Vector u = rng.gaussian_vector(k);
      if ((fisher_block_apply(p, u) - dense * u).norm() > 1e-12) c.ok = false;
    }
    checks.push_back(c);
  }
}

}  // namespace

int cli_check(std::ostream& out) {
  std::vector<Check> checks;
  run_checks(checks);
  int failures = 0;
  for (const Check& c : checks) {
    if (c.ok) {
      out << "PASS " << c.name << "\n";
    } else {
      ++failures;
      out << "FAIL " << c.name;
      if (!c.detail.empty()) out << " (" << c.detail << ")";
      out << "\n";
    }
  }
  out << (failures == 0 ? "all checks passed"
                        : std::to_string(failures) + " check(s) failed")
      << "\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace spgd
