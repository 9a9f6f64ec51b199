#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "weakkam/cli.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

void apply_thread_cap() {
  const char* env = std::getenv("WEAKKAM_THREADS");
  if (env == nullptr) return;
  const int threads = std::atoi(env);
  if (threads <= 0) {
    std::cerr << "warning: ignoring WEAKKAM_THREADS=" << env << '\n';
    return;
  }
#ifdef _OPENMP
  omp_set_num_threads(threads);
#endif
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakkam: numerical lab for contact Hamilton-Jacobi equations on the circle"};
  std::string command, config_path, out_dir;
  bool quiet = false;
  app.add_option("command", command,
                 "evolve | stationary | critical | ceps | mather | barrier | stability | instability | "
                 "corollary | homogenize | example-ex")
      ->required();
  app.add_option("--config", config_path, "JSON experiment configuration")->required();
  app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  app.add_flag("--quiet", quiet, "suppress the summary line");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : weakkam::kExitConfig;
  }
  apply_thread_cap();

  weakkam::RunOptions options;
  options.quiet = quiet;
  if (!out_dir.empty()) options.output_dir = out_dir;
  weakkam::ExperimentConfig config;
  try {
    config = weakkam::load_config(config_path, weakkam::parse_command(command));
  } catch (const weakkam::ParseError& e) {
    const std::string msg = std::string("config parse error: ") + e.what();
    std::cerr << msg << '\n';
    weakkam::write_diagnostic(out_dir.empty() ? "." : out_dir, weakkam::kExitConfig, msg);
    return weakkam::kExitConfig;
  } catch (const weakkam::Error& e) {
    const std::string msg = std::string("config error: ") + e.what();
    std::cerr << msg << '\n';
    weakkam::write_diagnostic(out_dir.empty() ? "." : out_dir, weakkam::kExitConfig, msg);
    return weakkam::kExitConfig;
  }
  return weakkam::run(config, options);
}
