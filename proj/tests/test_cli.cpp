#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tridomain/cli.hpp"

using namespace tridomain;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "tridomain_test_cli";
  fs::create_directories(dir);
  const fs::path path = dir / name;
  std::ofstream(path) << text;
  return path;
}

// A 1 ms single-spike run on a coarse mesh; `extra_scenario` and
// `extra_solver` are appended to their sections.
std::string short_run(const std::string& extra_scenario = "", const std::string& extra_solver = "") {
  return "[geometry]\nNr = 2\nNz = 8\n"
         "[scenario]\nmode = \"single_ap\"\ncadence = 0.1 ms\nformats = \"csv\"\n" +
         extra_scenario + "[solver]\ndt = 0.05 ms\nt_max = 1 ms\n" + extra_solver;
}

}  // namespace

TEST_CASE("params shows the previous column with provenance") {
  const Outcome r = invoke({"--profile", "previous", "params"});
  CHECK(r.code == kExitOk);
  std::istringstream lines(r.out);
  std::string line;
  bool found = false;
  while (std::getline(lines, line)) {
    if (line.rfind("parameters.M_ax ", 0) == 0) {
      found = true;
      CHECK(line.find("5980000") != std::string::npos);
      CHECK(line.find("paper:Table1") != std::string::npos);
    }
  }
  CHECK(found);
}

TEST_CASE("params marks overrides from a config file") {
  const fs::path cfg = write_config("override.ini", "[parameters]\ngbar_K = 70\n");
  const Outcome r = invoke({"params", cfg.string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("override") != std::string::npos);
}

TEST_CASE("unknown flag prints usage and exits 1") {
  const Outcome r = invoke({"--frobnicate", "params"});
  CHECK(r.code == kExitInvalid);
  CHECK(r.err.find("--frobnicate") != std::string::npos);
  CHECK(r.err.find("Usage") != std::string::npos);
}

TEST_CASE("missing subcommand exits 1") {
  CHECK(invoke({}).code == kExitInvalid);
  CHECK(invoke({"run"}).code == kExitInvalid);
}

TEST_CASE("help exits 0") {
  const Outcome r = invoke({"--help"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("params") != std::string::npos);
}

TEST_CASE("seed is accepted") {
  CHECK(invoke({"--seed", "42", "params"}).code == kExitOk);
}

TEST_CASE("self-checks pass") {
  const Outcome r = invoke({"check"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("invalid configuration exits 1 naming the key") {
  const fs::path cfg = write_config("bad.ini", "[parameters]\nC_m = -1\n");
  const Outcome r = invoke({"params", cfg.string()});
  CHECK(r.code == kExitInvalid);
  CHECK(r.err.find("parameters.C_m") != std::string::npos);
  CHECK(invoke({"params", "/nonexistent/config.ini"}).code == kExitInvalid);
}

TEST_CASE("output directory: flag over environment over config") {
  const fs::path base = fs::temp_directory_path() / "tridomain_test_cli_out";
  fs::remove_all(base);
  const fs::path cfg =
      write_config("short.ini", short_run("output_dir = \"" + (base / "config").string() + "\"\n"));

  const Outcome plain = invoke({"run", cfg.string()});
  REQUIRE(plain.code == kExitOk);
  CHECK(fs::exists(base / "config" / "traces.csv"));
  CHECK_FALSE(fs::exists(base / "config" / "traces.svg"));

  ::setenv(kOutputDirEnv, (base / "env").c_str(), 1);
  const Outcome env = invoke({"run", cfg.string()});
  const Outcome flag = invoke({"run", cfg.string(), "-o", (base / "flag").string()});
  ::unsetenv(kOutputDirEnv);
  CHECK(env.code == kExitOk);
  CHECK(fs::exists(base / "env" / "traces.csv"));
  CHECK(flag.code == kExitOk);
  CHECK(fs::exists(base / "flag" / "traces.csv"));
  CHECK(flag.out.find("wrote") != std::string::npos);
}

TEST_CASE("rest subcommand reports potentials") {
  const fs::path cfg = write_config("rest.ini", "[geometry]\nNr = 2\nNz = 8\n");
  const Outcome r = invoke({"rest", cfg.string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("V_ax") != std::string::npos);
  CHECK(r.out.find("electroneutrality") != std::string::npos);
}

TEST_CASE("solver failure exits 2 and reports the time") {
  const fs::path cfg = write_config(
      "fail.ini", short_run("", "newton_max_iter = 1\nnewton_tol = 1e-300\nnewton_abs_tol = 1e-300\nmax_halvings = 0\n"));
  const Outcome r = invoke({"run", cfg.string()});
  CHECK(r.code == kExitSolver);
  CHECK(r.err.find("t = ") != std::string::npos);
}
