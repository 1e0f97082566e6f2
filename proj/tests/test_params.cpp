#include <doctest.h>

#include <chrono>
#include <cmath>
#include <string>

#include "tridomain/params.hpp"

using namespace tridomain;

namespace {

const ResolvedEntry& entry(const std::vector<ResolvedEntry>& entries, const std::string& full) {
  for (const auto& e : entries) {
    if (e.section + "." + e.key == full) return e;
  }
  throw std::out_of_range(full);
}

std::string error_key(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "";
}

}  // namespace

TEST_CASE("thermal voltage from the defined constants") {
  PhysicalConstants pc;
  const double oracle = 1.380649e-23 * 293.15 / 1.602176634e-19;
  CHECK(thermal_voltage(pc) == doctest::Approx(oracle).epsilon(1e-15));
  CHECK(thermal_voltage(pc) == doctest::Approx(2.526e-2).epsilon(5e-4));

  PhysicalConstants hot = pc;
  hot.T = 2 * pc.T;
  CHECK(thermal_voltage(hot) == doctest::Approx(2 * thermal_voltage(pc)).epsilon(1e-15));

  PhysicalConstants frozen = pc;
  frozen.T = 0;
  CHECK_THROWS_AS(thermal_voltage(frozen), std::domain_error);
}

TEST_CASE("exact defined constants") {
  CHECK(PhysicalConstants::e == 1.602176634e-19);
  CHECK(PhysicalConstants::k_B == 1.380649e-23);
}

TEST_CASE("species valences") {
  CHECK(valence(Ion::Na) == 1);
  CHECK(valence(Ion::K) == 1);
  CHECK(valence(Ion::Cl) == -1);
  const auto p = default_parameters();
  for (auto k : kCompartments) {
    for (auto i : kIons) CHECK(p.D(k, i) > 0);
  }
}

TEST_CASE("empty config yields the new parameter column") {
  const Config c = parse_config("");
  const auto& p = c.params;
  CHECK(p.M_ax == 2.392e5);
  CHECK(p.gbar_Na == 3.393e2);
  CHECK(p.gbar_K == 7.364e1);
  CHECK(p.g_leak_Na == 1.2e-1);
  CHECK(p.g_leak_K == 5.5e-1);
  CHECK(p.g_ax_Cl == 3.75);
  CHECK(p.I_ax1 == 2.39e-2);
  CHECK(p.I_ax2 == 3.25e-3);
  CHECK(p.I_shock == 7.5e-2);
  CHECK(p.C_m == 7.5e-3);
  CHECK(p.bath[idx(Ion::K)] == 3.0);
  for (double l : p.lambda) CHECK(l == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("previous profile selects the previous parameter column") {
  for (const char* text : {"profile = \"previous\"\n", "[parameters]\nprofile = \"previous\"\n"}) {
    const auto& p = parse_config(text).params;
    CHECK(p.M_ax == 5.98e6);
    CHECK(p.gbar_Na == 1.357e1);
    CHECK(p.gbar_K == 2.945);
    CHECK(p.g_leak_Na == 4.8e-3);
    CHECK(p.g_leak_K == 2.2e-2);
    CHECK(p.g_ax_Cl == 0.15);
    CHECK(p.I_ax1 == 9.56e-4);
    CHECK(p.I_ax2 == 1.3e-4);
    CHECK(p.I_shock == 3e-3);
  }
  std::vector<std::string> set;
  const Config forced = parse_config("profile = \"new\"\n", &set, Profile::Previous);
  CHECK(forced.params.M_ax == 5.98e6);
}

TEST_CASE("calibration identity between the two columns") {
  const auto start = std::chrono::steady_clock::now();
  const auto a = default_parameters(Profile::Previous);
  const auto b = default_parameters(Profile::New);
  auto rel = [](double x, double y) { return std::abs(x - y) / std::max(std::abs(x), std::abs(y)); };
  CHECK(rel(a.M_ax * a.gbar_K, b.M_ax * b.gbar_K) < 5e-3);
  CHECK(rel(a.M_ax * a.gbar_Na, b.M_ax * b.gbar_Na) < 5e-3);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() < 1e-3);
}

TEST_CASE("unit suffixes") {
  const Config c = parse_config(
      "[bath]\nNa = 120 mM\nK = 4 mM\nCl = 124 mM\n"
      "[parameters]\nV_rest_hh = -65 mV\n"
      "[solver]\ndt = 0.02 ms\n");
  CHECK(c.params.bath[idx(Ion::K)] == 4.0);
  CHECK(c.params.V_rest_hh == doctest::Approx(-65e-3).epsilon(1e-15));
  CHECK(c.solver.dt == doctest::Approx(2e-5).epsilon(1e-15));
}

TEST_CASE("validation names the offending key") {
  CHECK(error_key("[parameters]\nlambda = 0.5, 0.5, 0.5\n").find("lambda") != std::string::npos);
  CHECK_THROWS_AS(parse_config("[parameters]\nlambda = 0.5, 0.5, 0.5\n"), ValidationError);
  CHECK(error_key("[parameters]\neta_ex = 0.5\n").find("eta") != std::string::npos);
  CHECK(error_key("[bath]\nK = 10 mM\n").find("bath") != std::string::npos);
  CHECK(error_key("[parameters]\ngbar_K = -1\n") == "parameters.gbar_K");
  CHECK(error_key("[parameters]\nC_m = -1\n") == "parameters.C_m");
  CHECK(error_key("[solver]\ndt = 0\n") == "solver.dt");
  CHECK(error_key("[scenario]\nprobes = \"1 0.001\"\n") == "scenario.probes");
  CHECK(error_key("[parameters]\nT = 0\n") == "parameters.T");
}

TEST_CASE("grammar errors") {
  CHECK(error_key("[parameters]\nbogus = 1\n") == "parameters.bogus");
  CHECK(error_key("[nowhere]\nx = 1\n") == "nowhere.x");
  CHECK(error_key("[parameters]\nM_ax = 1\nM_ax = 2\n") == "parameters.M_ax");
  CHECK(error_key("[parameters]\nM_ax = abc\n") == "parameters.M_ax");
  CHECK(error_key("[parameters]\nM_ax = 1 mV\n") == "parameters.M_ax");
  CHECK(error_key("profile = \"latest\"\n") == "profile");
  CHECK_THROWS_AS(parse_config("[parameters\nM_ax = 1\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/file.cfg"), ConfigError);
}

TEST_CASE("all-zero lambda is accepted for the conductive membrane") {
  const Config c = parse_config("[parameters]\nlambda = 0, 0, 0\n");
  for (double l : c.params.lambda) CHECK(l == 0.0);
}

TEST_CASE("serialize round-trips bit-exactly") {
  Config c = parse_config(
      "profile = \"previous\"\n[parameters]\nC_m = 0.0071\nlambda = 0.2, 0.3, 0.5\n"
      "[scenario]\nmode = \"comparison\"\nprobes = \"5e-5 0.001; 1e-4 0.002\"\nformats = \"csv\"\n"
      "[solver]\ndt = 0.013 ms\nsealed = true\n");
  c.params.M_gl = 0.1 + 0.2;  // not representable in few digits
  const std::string text = serialize_config(c);
  const Config back = parse_config(text);
  CHECK(serialize_config(back) == text);
  CHECK(back.params.M_gl == c.params.M_gl);
  CHECK(back.params.profile == Profile::Previous);
  CHECK(back.params.M_ax == 5.98e6);
  CHECK(back.params.lambda == c.params.lambda);
  CHECK(back.scenario.mode == ScenarioMode::comparison);
  REQUIRE(back.scenario.probes.size() == 2);
  CHECK(back.scenario.probes[1].z == 0.002);
  CHECK(back.scenario.write_csv);
  CHECK_FALSE(back.scenario.write_svg);
  CHECK(back.solver.dt == c.solver.dt);
  CHECK(back.solver.sealed);
}

TEST_CASE("provenance column") {
  std::vector<std::string> set;
  const Config c = parse_config("[parameters]\ngbar_K = 70\n", &set);
  const auto entries = resolve_entries(c, set);
  CHECK(entry(entries, "parameters.M_ax").provenance == Provenance::paper);
  CHECK(entry(entries, "parameters.M_ax").source == "Table1");
  CHECK(entry(entries, "parameters.gbar_K").provenance == Provenance::override_value);
  CHECK(entry(entries, "parameters.eta_ex").provenance == Provenance::default_value);

  const auto prev = resolve_entries(parse_config("profile = \"previous\"\n"));
  CHECK(entry(prev, "parameters.M_ax").value == "5980000");
  CHECK(entry(prev, "parameters.M_ax").provenance == Provenance::paper);
}
