#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tridomain {

enum class Ion { Na = 0, K = 1, Cl = 2 };
enum class Compartment { ax = 0, gl = 1, ex = 2 };

inline constexpr int kNumIons = 3;
inline constexpr int kNumCompartments = 3;
inline constexpr std::array<Ion, kNumIons> kIons{Ion::Na, Ion::K, Ion::Cl};
inline constexpr std::array<Compartment, kNumCompartments> kCompartments{
    Compartment::ax, Compartment::gl, Compartment::ex};

inline constexpr int idx(Ion i) { return static_cast<int>(i); }
inline constexpr int idx(Compartment k) { return static_cast<int>(k); }

/// Valence of each species (+1, +1, -1).
inline constexpr int valence(Ion i) {
  return i == Ion::Cl ? -1 : 1;
}

const char* name(Ion i);
const char* name(Compartment k);

/// Thrown for malformed config text. `key` names the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Thrown when a parsed value violates an invariant.
class ValidationError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct PhysicalConstants {
  static constexpr double e = 1.602176634e-19;    // C
  static constexpr double k_B = 1.380649e-23;     // J/K
  static constexpr double N_A = 6.02214076e23;    // 1/mol
  static constexpr double faraday = e * N_A;      // C/mol

  double T = 293.15;  // K
};

/// k_B T / e in volts. Throws std::domain_error for T <= 0.
double thermal_voltage(const PhysicalConstants& constants);

struct IonSpecies {
  Ion name = Ion::Na;
  int z = 1;
  std::array<double, kNumCompartments> D{};  // m^2/s, indexed by Compartment
};

enum class Profile { New, Previous };

struct Geometry {
  double R = 1.5e-4;  // m
  double L = 3e-3;    // m
  int Nr = 8;
  int Nz = 32;
};

struct ParameterSet {
  Profile profile = Profile::New;
  PhysicalConstants constants;

  double M_ax = 0;       // 1/m
  double M_gl = 0;       // 1/m
  double I_ax1 = 0;      // A/m^2, axon pump
  double I_ax2 = 0;      // A/m^2, glial pump
  double g_leak_Na = 0;  // S/m^2
  double g_leak_K = 0;
  double g_ax_Cl = 0;
  double gbar_Na = 0;
  double gbar_K = 0;
  double I_shock = 0;    // A/m^2
  double C_m = 0;        // F/m^2
  std::array<double, kNumIons> lambda{};

  double eta_ax = 0, eta_gl = 0, eta_ex = 0;
  Geometry geometry;
  std::array<double, kNumIons> bath{};  // mol/m^3

  // Free-solution diffusivity times per-compartment tortuosity factor.
  std::array<double, kNumIons> D_free{};
  std::array<double, kNumCompartments> tortuosity{};

  double K_Na_pump = 0;  // mol/m^3
  double K_K_pump = 0;   // mol/m^3
  double V_rest_hh = 0;  // V, offset of the gating rate functions

  // Intracellular starting concentrations for the rest-state search.
  std::array<double, kNumIons> c_ax_init{};
  std::array<double, kNumIons> c_gl_init{};

  double eta(Compartment k) const;
  IonSpecies species(Ion i) const;
  double D(Compartment k, Ion i) const { return D_free[idx(i)] * tortuosity[idx(k)]; }
};

enum class ScenarioMode { rest, single_ap, train, comparison };

const char* name(ScenarioMode m);

struct StimulusProtocol {
  double onset = 1e-3;       // s
  double duration = 2e-3;    // s
  double period = 50e-3;     // s
  int count = 10;            // pulses in train mode; single_ap uses one
  double length = 1e-3;      // m of axon measured from z = 0; 0 selects one axial slab
  Ion carrier = Ion::K;
};

struct Probe {
  double r = 0;
  double z = 0;
};

struct ScenarioConfig {
  ScenarioMode mode = ScenarioMode::single_ap;
  StimulusProtocol stimulus;
  std::vector<Probe> probes;  // empty selects mid-radius, mid-length
  std::string output_dir = "out";
  double cadence = 1e-4;      // s
  bool write_csv = true;
  bool write_svg = true;
};

struct SolverConfig {
  double dt = 1e-5;               // s
  double newton_tol = 1e-9;       // relative to the initial residual
  double newton_abs_tol = 1e-12;  // scaled residual, mol/m^3
  int newton_max_iter = 30;
  double linear_tol = 1e-12;      // reserved for iterative backends
  double t_max = 0.1;             // s
  int max_halvings = 6;
  bool sealed = false;            // seal every exterior face (no bath)

  // Rest-state search.
  double rest_dt_max = 1e3;       // s
  double rest_horizon = 1e6;      // s
  double rest_dVdt_tol = 1e-6;    // V/s
  double rest_dc_tol = 1e-10;     // relative change per dt step
};

struct Config {
  ParameterSet params;
  ScenarioConfig scenario;
  SolverConfig solver;
};

/// Where a resolved parameter value came from.
enum class Provenance { paper, default_value, override_value };

const char* name(Provenance p);

struct ResolvedEntry {
  std::string section;
  std::string key;
  std::string value;
  std::string unit;
  Provenance provenance = Provenance::default_value;
  std::string source;  // e.g. "Table1"
};

/// Built-in parameter layer for a profile (published column plus defaults).
ParameterSet default_parameters(Profile profile = Profile::New);

Config default_config(Profile profile = Profile::New);

/// Parses config text. Keys absent from the text keep their defaults.
/// Throws ConfigError on syntax errors, ValidationError on bad values.
Config parse_config(const std::string& text);

Config load_config(const std::filesystem::path& path);

/// Writes a config that parses back to identical values.
std::string serialize_config(const Config& config);

/// Checks all invariants; throws ValidationError naming the offending key.
void validate(const Config& config);

/// Flattened parameter listing with a provenance tag per key. `overridden`
/// holds "section.key" entries set by the user.
std::vector<ResolvedEntry> resolve_entries(const Config& config,
                                           const std::vector<std::string>& overridden = {});

/// Parses config text and also reports which keys it set. A given `profile`
/// replaces the one named in the text.
Config parse_config(const std::string& text, std::vector<std::string>* overridden,
                    std::optional<Profile> profile = std::nullopt);

}  // namespace tridomain
