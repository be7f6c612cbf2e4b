#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "spgd/harness.hpp"

using namespace spgd;
namespace fs = std::filesystem;

namespace {

const char* kMinimalConfig = R"(
[run]
id = mini
epochs = 5
seeds = 0
thresholds = 1e-1,1e-2
out = OUTDIR

[problem]
kind = linear-lsq
m = 6
n = 6
kappa = 4
seed = 1

[method]
name = spgd
alpha = 0.2
)";

std::string with_out_dir(const std::string& text, const std::string& dir) {
  std::string out = text;
  const std::string needle = "OUTDIR";
  const size_t pos = out.find(needle);
  if (pos != std::string::npos) out.replace(pos, needle.size(), dir);
  return out;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("spgd-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int counter;
};
int TempDir::counter = 0;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Strip the wall_ms column (the last field) from every CSV line.
std::string strip_wall_ms(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const size_t pos = line.rfind(',');
    out << line.substr(0, pos) << "\n";
  }
  return out.str();
}

// A deliberately broken problem: vjp has a flipped sign.
class SignFlippedVjp : public LinearLsq {
 public:
  using LinearLsq::LinearLsq;
  Vector vjp(const Vector& theta, const Vector& u) const override {
    return -LinearLsq::vjp(theta, u);
  }
};

}  // namespace

TEST_CASE("config round-trips through the canonical serialization") {
  TempDir tmp;
  const RunConfig cfg =
      parse_config(with_out_dir(kMinimalConfig, tmp.path.string()));
  CHECK(cfg.id == "mini");
  CHECK(cfg.epochs == 5);
  CHECK(cfg.methods.size() == 1);
  CHECK(cfg.methods[0].name == "spgd");
  CHECK(cfg.thresholds == std::vector<double>{1e-1, 1e-2});

  const std::string canon = serialize_config(cfg);
  const RunConfig cfg2 = parse_config(canon);
  CHECK(serialize_config(cfg2) == canon);
  CHECK(config_hash(cfg2) == config_hash(cfg));
}

TEST_CASE("unknown keys and sections are rejected by name") {
  try {
    parse_config("[run]\nid = x\nbogus-key = 1\n");
    FAIL("expected InvalidConfig");
  } catch (const InvalidConfig& e) {
    CHECK(std::string(e.what()).find("bogus-key") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("[nonsense]\n"), InvalidConfig);
  CHECK_THROWS_AS(parse_config("[problem]\nkind = no-such-kind\n"),
                  InvalidConfig);
  CHECK_THROWS_AS(
      parse_config("[method]\nname = gd\n[method]\nname = gd\nzzz = 1\n"),
      InvalidConfig);
}

TEST_CASE("ascending thresholds are a config error") {
  CHECK_THROWS_AS(parse_config("[run]\nthresholds = 1e-3,1e-2\n"),
                  InvalidConfig);
  CHECK_THROWS_AS(parse_config("[run]\nthresholds = -1\n"), InvalidConfig);
}

TEST_CASE("cli_run writes one csv per cell plus a summary") {
  TempDir tmp;
  RunConfig cfg = parse_config(with_out_dir(kMinimalConfig, tmp.path.string()));
  cfg.seeds = {0, 1};
  std::ostringstream log;
  CHECK(cli_run(cfg, true, log) == 0);

  const fs::path csv0 = tmp.path / "mini-spgd-0.csv";
  const fs::path csv1 = tmp.path / "mini-spgd-1.csv";
  REQUIRE(fs::exists(csv0));
  REQUIRE(fs::exists(csv1));

  const std::string content = read_file(csv0);
  std::istringstream lines(content);
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "run_id,method,seed,epoch,loss,grad_norm,residual_norm,lr,wall_ms");
  int rows = 0;
  std::string line;
  while (std::getline(lines, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 5);

  const fs::path spath = tmp.path / "mini-summary.json";
  REQUIRE(fs::exists(spath));
  const auto summary = nlohmann::json::parse(read_file(spath));
  CHECK(summary["cells"].size() == 2);
  CHECK(summary["cells"][0]["method"] == "spgd");
  CHECK(summary.contains("config_hash"));
  CHECK(summary["aggregate"].contains("spgd"));
}

TEST_CASE("summary statistics are recomputable from the trace files") {
  TempDir tmp;
  RunConfig cfg = parse_config(with_out_dir(kMinimalConfig, tmp.path.string()));
  cfg.seeds = {0, 1, 2};
  std::ostringstream log;
  cli_run(cfg, true, log);

  const auto summary =
      nlohmann::json::parse(read_file(tmp.path / "mini-summary.json"));
  std::vector<double> finals;
  for (std::uint64_t seed : cfg.seeds) {
    const std::string csv = read_file(
        tmp.path / ("mini-spgd-" + std::to_string(seed) + ".csv"));
    std::istringstream lines(csv);
    std::string line, last;
    std::getline(lines, line);  // header
    while (std::getline(lines, line))
      if (!line.empty()) last = line;
    // loss is the 5th field
    std::istringstream cells(last);
    std::string field;
    for (int i = 0; i < 5; ++i) std::getline(cells, field, ',');
    finals.push_back(std::stod(field));
  }
  std::sort(finals.begin(), finals.end());
  CHECK(summary["aggregate"]["spgd"]["median_final_loss"].get<double>() ==
        doctest::Approx(finals[1]).epsilon(1e-15));
  CHECK(summary["aggregate"]["spgd"]["best_final_loss"].get<double>() ==
        doctest::Approx(finals[0]).epsilon(1e-15));
}

TEST_CASE("traces are byte-identical across reruns except wall_ms") {
  TempDir tmp1, tmp2;
  RunConfig cfg1 =
      parse_config(with_out_dir(kMinimalConfig, tmp1.path.string()));
  RunConfig cfg2 =
      parse_config(with_out_dir(kMinimalConfig, tmp2.path.string()));
  std::ostringstream log;
  cli_run(cfg1, true, log);
  cli_run(cfg2, true, log);
  const std::string a = read_file(tmp1.path / "mini-spgd-0.csv");
  const std::string b = read_file(tmp2.path / "mini-spgd-0.csv");
  CHECK(strip_wall_ms(a) == strip_wall_ms(b));
}

TEST_CASE("compare requires at least two methods") {
  TempDir tmp;
  RunConfig cfg = parse_config(with_out_dir(kMinimalConfig, tmp.path.string()));
  std::ostringstream log;
  CHECK_THROWS_AS(cli_compare(cfg, true, log), InvalidConfig);
}

TEST_CASE("compare emits the milestone table and a median trace") {
  TempDir tmp;
  std::string text = with_out_dir(kMinimalConfig, tmp.path.string());
  text +=
      "\n[method]\n"
      "name = gd\n"
      "alpha = 0.05\n";
  RunConfig cfg = parse_config(text);
  cfg.epochs = 30;
  cfg.seeds = {0, 1};
  std::ostringstream log;
  CHECK(cli_compare(cfg, true, log) == 0);
  CHECK(fs::exists(tmp.path / "mini-compare.csv"));
  const std::string table = log.str();
  CHECK(table.find("spgd") != std::string::npos);
  CHECK(table.find("gd") != std::string::npos);

  const std::string csv = read_file(tmp.path / "mini-compare.csv");
  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  CHECK(header == "epoch,spgd,gd");
}

TEST_CASE("probe reports the spectral quantities") {
  TempDir tmp;
  RunConfig cfg = parse_config(with_out_dir(kMinimalConfig, tmp.path.string()));
  std::ostringstream out;
  CHECK(cli_probe(cfg, out) == 0);
  const auto j = nlohmann::json::parse(out.str());
  CHECK(j["kappa"].get<double>() == doctest::Approx(4.0).epsilon(0.02));
  CHECK(j["rank"].get<int>() == 6);
}

TEST_CASE("gradient check catches an injected vjp sign error") {
  const LinearLsq good = make_linear_lsq(5, 5, 3.0, 7);
  SignFlippedVjp bad(good.a(), good.b(), *good.certified_solution());
  Rng rng(1);
  std::string detail;
  CHECK(!check_gradient_consistency(bad, rng, 3, &detail));
  CHECK(!detail.empty());
  Rng rng2(1);
  CHECK(check_gradient_consistency(good, rng2, 3, nullptr));
}

TEST_CASE("cli_check passes on a healthy build") {
  std::ostringstream out;
  CHECK(cli_check(out) == 0);
  CHECK(out.str().find("FAIL") == std::string::npos);
  CHECK(out.str().find("PASS gradient-check linear-lsq") != std::string::npos);
  CHECK(out.str().find("lanczos-dense-agreement") != std::string::npos);
}

TEST_CASE("format_double round-trips") {
  for (double x : {0.01, 1.0 / 3.0, 1e-300, 12345.6789, -0.0, 2.5e-3}) {
    CHECK(std::stod(format_double(x)) == x);
  }
}
