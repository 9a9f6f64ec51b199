#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "weakkam/cli.hpp"

using namespace weakkam;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("weakkam_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Ran {
  int code;
  std::string log;
};

Ran run_json(const std::string& text, const fs::path& out, std::optional<Command> command = std::nullopt) {
  const ExperimentConfig cfg = parse_config(nlohmann::json::parse(text), command);
  std::ostringstream log;
  RunOptions opts;
  opts.output_dir = out.string();
  opts.log = &log;
  const int code = run(cfg, opts);
  return {code, log.str()};
}

const char* kEikonal = R"J({"command": "critical", "hamiltonian": {"builtin": "eikonal", "params": {"V": "cos(2*pi*x)"}}})J";

}  // namespace

TEST_CASE("defaults are filled") {
  const ExperimentConfig cfg = parse_config(nlohmann::json::parse(kEikonal));
  CHECK(cfg.command == Command::critical);
  CHECK(cfg.numerics.n == 256);
  CHECK(cfg.numerics.m == 64);
  CHECK(cfg.numerics.dt == 1e-3);
  CHECK(cfg.numerics.tol == 1e-6);
  CHECK(cfg.numerics.vmax == 4.0);
  CHECK(cfg.numerics.pmax == 4.0);
  CHECK(cfg.spec.name == "eikonal");
  CHECK(cfg.resolved["numerics"]["n"] == 256);
  CHECK(cfg.resolved["hamiltonian"]["G"] == "p^2+(cos(2*pi*x))");
  CHECK(parse_command("example-ex") == Command::example_ex);
  CHECK(to_string(Command::example_ex) == "example-ex");
}

TEST_CASE("validation errors name the problem") {
  auto message = [](const std::string& text, std::optional<Command> c = std::nullopt) -> std::string {
    try {
      parse_config(nlohmann::json::parse(text), c);
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "";
  };
  CHECK(message(R"J({"command": "evolve", "hamiltonian": {"G": "p^2", "W": "u", "dWu": "1"}, "numerics": {"dt": 1.0}})J")
            .find("dt*Lambda exceeds 1/2") != std::string::npos);
  CHECK(message(R"J({"command": "critical", "hamiltonian": {"G": "p^2"}, "numerics": {"dtt": 0.1}})J")
            .find("numerics.dtt") != std::string::npos);
  CHECK(message(R"J({"command": "critical", "hamiltonian": {"G": "p^2"}, "numerics": {"n": -3}})J")
            .find("numerics.n") != std::string::npos);
  CHECK(message(kEikonal, Command::evolve).find("command line says 'evolve'") != std::string::npos);
  CHECK(message(R"J({"hamiltonian": {"G": "p^2"}})J").find("no command") != std::string::npos);
  CHECK(message(R"J({"command": "corollary", "hamiltonian": {"G": "p^2"}})J").find("'a'") != std::string::npos);
  CHECK(message(R"J({"command": "homogenize", "hamiltonian": {"H": "u+p^2", "dHu": "1"}, "numerics": {"eps_list": [0.3]}})J")
            .find("unit fractions") != std::string::npos);
  CHECK(message(R"J({"command": "critical", "hamiltonian": {"G": "p^2 +"}})J").find("syntax error") != std::string::npos);

  const fs::path dir = scratch("parse");
  fs::create_directories(dir);
  std::ofstream(dir / "broken.json") << "{\"command\": \"critical\",, }";
  try {
    load_config(dir / "broken.json");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 24);
  }
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
}

TEST_CASE("example-ex expands to the worked example") {
  const ExperimentConfig cfg =
      parse_config(nlohmann::json::parse(R"J({"hamiltonian": {"theta": 0.5, "zeta": 1}})J"), Command::example_ex);
  CHECK(cfg.spec.name == "example_ex");
  CHECK(cfg.u_minus == std::optional<std::string>("sin(2*pi*x)/(2*pi)"));
  constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0), wide(-2.0, 2.0);
  for (int s = 0; s < 50; ++s) {
    const double x = unit(rng), p = wide(rng), u = wide(rng);
    const double phi = std::sin(2 * kPi * x) / (2 * kPi), dphi = std::cos(2 * kPi * x);
    const double k = dphi * dphi - 0.5;
    CHECK(cfg.spec.g(x, p) == doctest::Approx(p * p));
    CHECK(cfg.spec.w(x, u) == doctest::Approx(-k * u + k * phi - dphi * dphi));
    CHECK(cfg.spec.dw(x, u) == doctest::Approx(0.5 - dphi * dphi));
  }
  CHECK(cfg.spec.lambda_bound == doctest::Approx(0.5));
}

TEST_CASE("critical run writes headed artifacts") {
  const fs::path dir = scratch("critical");
  const std::string text = R"J({"command": "critical", "hamiltonian": {"builtin": "eikonal", "params": {"V": "cos(2*pi*x)"}},
                               "numerics": {"n": 64, "m": 33}})J";
  const Ran r = run_json(text, dir);
  CHECK(r.code == kExitOk);
  CHECK(r.log.rfind("c=1.00±0.02", 0) == 0);
  for (const char* name : {"discount.csv", "corrector.csv"}) {
    const std::string body = slurp(dir / name);
    CHECK(body.rfind("# weakkam critical config {\"command\":\"critical\"", 0) == 0);
    CHECK(body.find("\"n\":64") != std::string::npos);
  }
  CHECK(slurp(dir / "discount.csv").find("\nlambda,mean_lambda_u\n") != std::string::npos);
  const auto report = nlohmann::json::parse(slurp(dir / "critical.json"));
  CHECK(report["config"]["numerics"]["m"] == 33);
  CHECK(std::abs(report["c"].get<double>() - 1.0) < 2e-2);
  CHECK_FALSE(fs::exists(dir / ".weakkam.lock"));
  CHECK_FALSE(fs::exists(dir / "diagnostic.txt"));

  // byte-identical reruns
  const fs::path again = scratch("critical_again");
  CHECK(run_json(text, again).code == kExitOk);
  for (const char* name : {"discount.csv", "corrector.csv", "critical.json"}) CHECK(slurp(dir / name) == slurp(again / name));
}

TEST_CASE("exit codes") {
  {
    const fs::path dir = scratch("locked");
    fs::create_directories(dir);
    std::ofstream(dir / ".weakkam.lock") << "";
    CHECK(run_json(kEikonal, dir).code == kExitConfig);
    CHECK(slurp(dir / "diagnostic.txt").find("locked") != std::string::npos);
    CHECK(fs::exists(dir / ".weakkam.lock"));
  }
  {
    // no step budget: the stationary solve cannot converge
    const fs::path dir = scratch("stall");
    const Ran r = run_json(R"J({"command": "stationary", "hamiltonian": {"builtin": "linear_contact", "params": {"a": 1, "V": 0}},
                               "phi0": "1", "numerics": {"n": 32, "m": 17, "T_max": 0.01}})J",
                           dir);
    CHECK(r.code == kExitSolver);
    CHECK(slurp(dir / "diagnostic.txt").find("exit_code=1") == 0);
  }
  {
    // an impossible agreement tolerance turns into a property failure
    const fs::path dir = scratch("disagree");
    const Ran r = run_json(R"J({"command": "critical", "hamiltonian": {"builtin": "eikonal", "params": {"V": "cos(2*pi*x)"}},
                               "numerics": {"n": 64, "m": 33, "cross_tol": 1e-12}})J",
                           dir);
    CHECK(r.code == kExitProperty);
    CHECK(slurp(dir / "diagnostic.txt").find("disagree") != std::string::npos);
    CHECK(fs::exists(dir / "discount.csv"));
  }
}

TEST_CASE("probe commands") {
  {
    const fs::path dir = scratch("instability");
    const Ran r = run_json(R"J({"command": "instability", "hamiltonian": {"builtin": "linear_contact", "params": {"a": -1, "V": 0}},
                               "numerics": {"n": 64, "m": 33}, "u_minus": "0", "probe": {"eps": 0.01, "Delta": 0.5}})J",
                           dir);
    CHECK(r.code == kExitOk);
    CHECK(r.log.find("escaped t≈3.9") == 0);
    CHECK(slurp(dir / "series.csv").find("\nt,sup_dev\n0,0.01\n") != std::string::npos);
  }
  {
    const fs::path dir = scratch("stability");
    const Ran r = run_json(R"J({"command": "stability",
                               "hamiltonian": {"builtin": "example_ex", "params": {"phi": "sin(2*pi*x)/(2*pi)",
                                               "dphi": "cos(2*pi*x)", "theta": 0.5, "zeta": 1}},
                               "u_minus": "sin(2*pi*x)/(2*pi)", "numerics": {"n": 128, "m": 33}})J",
                           dir);
    CHECK(r.code == kExitOk);
    const auto report = nlohmann::json::parse(slurp(dir / "stability.json"));
    CHECK(report["verdict"] == "holds");
    CHECK(std::abs(report["A_estimate"].get<double>() - 0.5) < 5e-2);
    CHECK(report["decay_slope"].get<double>() <= -0.25);
  }
  {
    const fs::path dir = scratch("corollary");
    const Ran r = run_json(R"J({"command": "corollary", "hamiltonian": {"G": "p^2+cos(2*pi*x)-1"}, "a": "2+sin(2*pi*x)",
                               "numerics": {"n": 64, "m": 33, "dt": 0.01}})J",
                           dir);
    CHECK(r.code == kExitOk);
    CHECK(r.log.find("corollary verdict=holds") == 0);
  }
}
