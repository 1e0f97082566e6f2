#include "tridomain/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "tridomain/membrane.hpp"
#include "tridomain/scenarios.hpp"
#include "tridomain/selfcheck.hpp"
#include "tridomain/solver.hpp"

namespace tridomain {

namespace {

struct Loaded {
  Config config;
  std::vector<std::string> overridden;
};

Loaded load(const std::string& path, const std::optional<Profile>& profile) {
  Loaded l;
  std::string text;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  l.config = parse_config(text, &l.overridden, profile);
  return l;
}

std::string format_volts(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << v * 1e3 << " mV";
  return s.str();
}

int cmd_params(const Loaded& l, std::ostream& out) {
  const auto entries = resolve_entries(l.config, l.overridden);
  std::size_t wk = 3, wv = 5, wu = 4;
  for (const auto& e : entries) {
    wk = std::max(wk, e.section.size() + 1 + e.key.size());
    wv = std::max(wv, e.value.size());
    wu = std::max(wu, e.unit.size());
  }
  out << std::left << std::setw(static_cast<int>(wk)) << "key" << "  " << std::setw(static_cast<int>(wv))
      << "value" << "  " << std::setw(static_cast<int>(wu)) << "unit" << "  provenance\n";
  for (const auto& e : entries) {
    std::string prov = name(e.provenance);
    if (!e.source.empty()) prov += ":" + e.source;
    out << std::setw(static_cast<int>(wk)) << e.section + "." + e.key << "  " << std::setw(static_cast<int>(wv))
        << e.value << "  " << std::setw(static_cast<int>(wu)) << e.unit << "  " << prov << '\n';
  }
  return kExitOk;
}

int cmd_rest(const Loaded& l, std::ostream& out) {
  const Config& c = l.config;
  const Mesh mesh = build_mesh(c.params.geometry, c.solver.sealed ? BoundaryPolicy::sealed
                                                                  : BoundaryPolicy::bath_on_extracellular);
  RestReport report;
  const TridomainState rest = find_rest_state(c.params, mesh, c.solver, &report);
  const Probe probe = effective_probes(c.scenario, c.params.geometry).front();
  const int p = mesh.locate(probe.r, probe.z);

  out << "rest state at r = " << probe.r << " m, z = " << probe.z << " m\n";
  out << "  settled after " << report.steps << " steps, " << report.simulated_time << " s simulated\n";
  out << "  max |dV/dt| " << report.max_dVdt << " V/s, max relative dc per step " << report.max_rel_dc << '\n';
  out << "  electroneutrality error " << electroneutrality_error(rest) << '\n';
  out << "  V_ax " << format_volts(rest.membrane_potential(Compartment::ax)(p)) << ", V_gl "
      << format_volts(rest.membrane_potential(Compartment::gl)(p)) << '\n';
  for (auto k : kCompartments) {
    out << "  " << name(k) << ':';
    for (auto i : kIons) out << ' ' << name(i) << ' ' << rest.conc(k, i)(p) << " mM";
    out << '\n';
  }
  for (auto k : {Compartment::ax, Compartment::gl}) {
    out << "  E(" << name(k) << "):";
    for (auto i : kIons) {
      const double E = nernst_potential(rest.conc(Compartment::ex, i)(p), rest.conc(k, i)(p), valence(i),
                                        c.params.constants, i);
      out << ' ' << name(i) << ' ' << format_volts(E);
    }
    out << '\n';
  }
  return kExitOk;
}

int cmd_run(const Loaded& l, const std::string& output_flag, std::ostream& out) {
  Config c = l.config;
  if (!output_flag.empty()) {
    c.scenario.output_dir = output_flag;
  } else if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
    c.scenario.output_dir = env;
  }
  const ScenarioResult result = run_scenario(c);
  out << "mode " << name(c.scenario.mode) << ": rest reached after " << result.rest_report.steps << " steps\n";
  for (const auto& run : result.runs) {
    const PeakSummary peak = peak_summary(run.traces);
    out << "  " << run.label << ": " << run.steps << " steps, " << run.newton_iterations << " Newton iterations, "
        << std::fixed << std::setprecision(2) << run.wall_time << " s; peak V_ax +"
        << std::setprecision(3) << peak.V_ax * 1e3 << " mV, V_gl +" << peak.V_gl * 1e3 << " mV, K_ex +"
        << std::setprecision(4) << peak.cK_ex << " mM\n"
        << std::defaultfloat;
  }
  if (result.runs.size() == 2) {
    const PeakSummary d =
        relative_discrepancy(peak_summary(result.runs[0].traces), peak_summary(result.runs[1].traces));
    out << "  relative discrepancy: V_ax " << d.V_ax << ", V_gl " << d.V_gl << ", K_ex " << d.cK_ex << '\n';
  }
  for (const auto& path : write_outputs(result, c.scenario, c.scenario.output_dir)) {
    out << "  wrote " << path.string() << '\n';
  }
  return kExitOk;
}

int cmd_check(std::ostream& out) {
  bool ok = true;
  for (const auto& r : run_self_checks()) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitSolver;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tridomain electrodiffusion model of a nerve in a bath", "tridomain"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string profile_text;
  long long seed = 0;
  app.add_option("--profile", profile_text, "Parameter column used as the default layer")
      ->check(CLI::IsMember({"new", "previous"}));
  app.add_option("--seed", seed, "Reserved; the model is deterministic");

  std::string run_config, rest_config, params_config, output_dir;
  auto* run = app.add_subcommand("run", "Run the configured scenario and write traces");
  run->add_option("config", run_config, "Config file")->required();
  run->add_option("-o,--output-dir", output_dir, "Output directory (overrides config and environment)");
  auto* rest = app.add_subcommand("rest", "Report the rest state");
  rest->add_option("config", rest_config, "Config file");
  auto* check = app.add_subcommand("check", "Run invariant self-tests");
  auto* params = app.add_subcommand("params", "Print resolved parameters with provenance");
  params->add_option("config", params_config, "Config file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInvalid;
  }

  std::optional<Profile> profile;
  if (profile_text == "new") profile = Profile::New;
  if (profile_text == "previous") profile = Profile::Previous;

  try {
    if (*check) return cmd_check(out);
    if (*params) return cmd_params(load(params_config, profile), out);
    if (*rest) return cmd_rest(load(rest_config, profile), out);
    if (*run) return cmd_run(load(run_config, profile), output_dir, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const SolverError& e) {
    err << "solver failure at t = " << e.time() << " s: " << e.what() << '\n';
    return kExitSolver;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitSolver;
  }
  return kExitInvalid;
}

}  // namespace tridomain
