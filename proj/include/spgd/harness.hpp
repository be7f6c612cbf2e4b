#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spgd/diagnostics.hpp"
#include "spgd/optimizer.hpp"

namespace spgd {

/// Problem description as it appears in a [problem] config section.
/// Defaults are the desk-scale settings; only the keys relevant to the kind
/// are serialized.
struct ProblemConfig {
  std::string kind = "linear-lsq";
  // linear-lsq
  Eigen::Index m = 16;
  Eigen::Index n = 16;
  double kappa = 10.0;
  // discrete-pde
  Eigen::Index grid = 31;
  std::string g = "cubic";
  double init_radius = 0.1;
  // mlp-regression / poisson / softmax-toy
  Eigen::Index dim = 1;
  double frequency = 3.0;
  std::vector<Eigen::Index> hidden = {16, 16};
  Eigen::Index batch = 256;
  Eigen::Index test_size = 4096;
  Eigen::Index interior = 256;
  Eigen::Index boundary = 128;
  double lambda_bc = 1000.0;
  Eigen::Index samples = 64;
  Eigen::Index features = 8;
  Eigen::Index classes = 3;
  // data-generation seed, distinct from the per-run seeds
  std::uint64_t seed = 0;
};

struct MethodConfig {
  std::string name = "spgd-adam";
  HyperParams hyper;
};

struct RunConfig {
  std::string id = "run";
  long epochs = 100;
  std::vector<std::uint64_t> seeds = {0};
  std::vector<double> thresholds = {1e-2, 1e-3};
  std::string out_dir = "out";
  ProblemConfig problem;
  std::vector<MethodConfig> methods;
};

/// Parse the line-oriented key = value format with [run], [problem] and
/// repeatable [method] sections. Unknown sections or keys raise
/// InvalidConfig naming the offender.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Canonical serialization; parse(serialize(c)) reproduces c exactly.
std::string serialize_config(const RunConfig& cfg);

/// FNV-1a hash of the canonical serialization, as a hex string.
std::string config_hash(const RunConfig& cfg);

std::unique_ptr<ResidualProblem> make_problem(const ProblemConfig& pc);

/// Shortest round-trip decimal form of a double; used for CSV and config
/// output so traces are byte-identical across runs.
std::string format_double(double x);

void write_trace_csv(const std::string& path, const std::string& run_id,
                     const std::string& method, std::uint64_t seed,
                     const Trace& trace);

struct CellResult {
  std::string method;
  std::uint64_t seed = 0;
  Trace trace;
  std::optional<double> final_test_loss;
};

/// Execute every (method x seed) cell of the config.
std::vector<CellResult> execute_cells(const RunConfig& cfg, bool quiet,
                                      std::ostream& log);

/// run subcommand: traces + summary JSON. Returns the process exit code.
int cli_run(const RunConfig& cfg, bool quiet, std::ostream& log);

/// compare subcommand: requires >= 2 methods; also writes a median-trace CSV
/// and prints a side-by-side milestone table.
int cli_compare(const RunConfig& cfg, bool quiet, std::ostream& log);

/// probe subcommand: spectral probe of the configured problem at theta_0.
int cli_probe(const RunConfig& cfg, std::ostream& out);

/// check subcommand: the built-in verification suite. Prints one pass/fail
/// line per property; returns 0 iff everything passed.
int cli_check(std::ostream& out);

/// Gradient vs central finite differences at `points` random points.
/// Reused by cli_check and by the mutation-canary test.
bool check_gradient_consistency(const ResidualProblem& p, Rng& rng,
                                int points, std::string* detail);

}  // namespace spgd
