#pragma once

// Experiment configuration, dispatch and artifact emission behind the
// `weakkam` executable.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "weakkam/hamiltonian.hpp"
#include "weakkam/homogenize.hpp"
#include "weakkam/semigroup.hpp"
#include "weakkam/stability.hpp"

namespace weakkam {

enum class Command {
  evolve,
  stationary,
  critical,
  ceps,
  mather,
  barrier,
  stability,
  instability,
  corollary,
  homogenize,
  example_ex,
};

Command parse_command(std::string_view text);
std::string to_string(Command c);

inline constexpr int kExitOk = 0;
inline constexpr int kExitSolver = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitProperty = 3;

struct Numerics {
  std::size_t n = 256;
  std::size_t m = 64;
  std::size_t k = 64;  // momentum samples of the Legendre transform
  double dt = 1e-3;
  double tol = 1e-6;
  double vmax = 4.0;
  double pmax = 4.0;
  double T = 0.0;  // filled per command when absent
  double T_max = 200.0;  // horizon of stationary solves
  ContactMode mode = ContactMode::explicit_euler;
  Direction direction = Direction::backward;
  std::size_t snap_every = 0;
  std::vector<double> lambda_schedule{4e-2, 2e-2, 1e-2};
  std::vector<double> zeta_grid{0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> eps_list;  // filled per command when absent
  double dt_critical = 0.05;
  double longtime_T = 20.0;
  double cross_tol = 2e-2;
  double margin = 1e-2;
  std::size_t n_per_period = 32;
  std::size_t n_slow = 64;
};

struct ProbeConfig {
  double eps = 1e-2;
  double Delta = 0.5;
  double delta = 5e-2;
};

struct ExperimentConfig {
  Command command = Command::critical;
  HamiltonianSpec spec;                // every command but homogenize
  std::optional<HomogProblem> homog;   // homogenize only
  std::string phi0 = "0";
  std::optional<std::string> u_minus;  // stationary solve from phi0 when absent
  bool polish_u_minus = true;          // refine a given u_minus by a stationary solve
  std::string a;                       // corollary weight
  Condition condition = Condition::A3;
  Numerics numerics;
  ProbeConfig probe;
  std::string output_dir = ".";
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
  nlohmann::ordered_json resolved;  // every field after defaults
};

/// Validates a parsed document. `command` comes from the command line and
/// must agree with a "command" key when both are present.
ExperimentConfig parse_config(const nlohmann::json& doc, std::optional<Command> command = std::nullopt);

/// Reads JSON from `path`; ParseError carries the byte offset of a syntax error.
ExperimentConfig load_config(const std::filesystem::path& path, std::optional<Command> command = std::nullopt);

struct RunOptions {
  std::optional<std::string> output_dir;  // overrides the config
  bool quiet = false;
  std::ostream* log = nullptr;  // summary sink, std::cout when null
};

/// Runs one experiment, writes its artifacts and returns the exit code.
int run(const ExperimentConfig& config, const RunOptions& options = {});

/// Writes diagnostic.txt into `dir` (best effort).
void write_diagnostic(const std::filesystem::path& dir, int code, const std::string& message);

}  // namespace weakkam
