#include "tridomain/params.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace tridomain {

const char* name(Ion i) {
  switch (i) {
    case Ion::Na: return "Na";
    case Ion::K: return "K";
    case Ion::Cl: return "Cl";
  }
  return "?";
}

const char* name(Compartment k) {
  switch (k) {
    case Compartment::ax: return "ax";
    case Compartment::gl: return "gl";
    case Compartment::ex: return "ex";
  }
  return "?";
}

const char* name(ScenarioMode m) {
  switch (m) {
    case ScenarioMode::rest: return "rest";
    case ScenarioMode::single_ap: return "single_ap";
    case ScenarioMode::train: return "train";
    case ScenarioMode::comparison: return "comparison";
  }
  return "?";
}

const char* name(Provenance p) {
  switch (p) {
    case Provenance::paper: return "paper";
    case Provenance::default_value: return "default";
    case Provenance::override_value: return "override";
  }
  return "?";
}

double thermal_voltage(const PhysicalConstants& constants) {
  if (!(constants.T > 0)) {
    throw std::domain_error("thermal_voltage: temperature must be positive");
  }
  return PhysicalConstants::k_B * constants.T / PhysicalConstants::e;
}

double ParameterSet::eta(Compartment k) const {
  switch (k) {
    case Compartment::ax: return eta_ax;
    case Compartment::gl: return eta_gl;
    case Compartment::ex: return eta_ex;
  }
  return 0;
}

IonSpecies ParameterSet::species(Ion i) const {
  IonSpecies s;
  s.name = i;
  s.z = valence(i);
  for (auto k : kCompartments) s.D[idx(k)] = D(k, i);
  return s;
}

ParameterSet default_parameters(Profile profile) {
  ParameterSet p;
  p.profile = profile;
  if (profile == Profile::New) {
    p.M_ax = 2.392e5;
    p.I_ax1 = 2.39e-2;
    p.I_ax2 = 3.25e-3;
    p.g_leak_Na = 1.2e-1;
    p.g_leak_K = 5.5e-1;
    p.gbar_Na = 3.393e2;
    p.gbar_K = 7.364e1;
    p.g_ax_Cl = 3.75;
    p.I_shock = 7.5e-2;
  } else {
    p.M_ax = 5.98e6;
    p.I_ax1 = 9.56e-4;
    p.I_ax2 = 1.3e-4;
    p.g_leak_Na = 4.8e-3;
    p.g_leak_K = 2.2e-2;
    p.gbar_Na = 1.357e1;
    p.gbar_K = 2.945;
    p.g_ax_Cl = 1.5e-1;
    p.I_shock = 3e-3;
  }
  // Glial area density follows the axon column so M*g stays matched.
  p.M_gl = p.M_ax;
  p.C_m = 7.5e-3;
  p.lambda = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  p.eta_ax = 0.5;
  p.eta_gl = 0.45;
  p.eta_ex = 0.05;
  p.bath = {120.0, 3.0, 123.0};
  p.D_free = {1.33e-9, 1.96e-9, 2.03e-9};
  p.tortuosity = {1.0, 1.0, 1.0 / (1.6 * 1.6)};

  p.K_Na_pump = 10.0;
  p.K_K_pump = 1.5;
  p.V_rest_hh = -70e-3;

  p.c_ax_init = {35.4, 65.1, 7.7};
  p.c_gl_init = {126.2, 11.6, 10.0};
  return p;
}

Config default_config(Profile profile) {
  Config c;
  c.params = default_parameters(profile);
  return c;
}

namespace {

enum class Unit { none, concentration, voltage, time };

std::string trim(std::string s) {
  auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string unquote(std::string s) {
  s = trim(std::move(s));
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& key, std::string text, Unit unit) {
  text = trim(std::move(text));
  double scale = 1.0;
  auto strip_suffix = [&](const char* suffix, Unit wanted, double factor) {
    std::string s(suffix);
    if (text.size() > s.size() && text.compare(text.size() - s.size(), s.size(), s) == 0) {
      if (unit != wanted) {
        throw ConfigError(key, "key '" + key + "': unit suffix '" + s + "' not allowed here");
      }
      text = trim(text.substr(0, text.size() - s.size()));
      scale = factor;
      return true;
    }
    return false;
  };
  strip_suffix("mM", Unit::concentration, 1.0) || strip_suffix("mV", Unit::voltage, 1e-3) ||
      strip_suffix("ms", Unit::time, 1e-3);

  double value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw ConfigError(key, "key '" + key + "': cannot parse number from '" + text + "'");
  }
  return value * scale;
}

std::vector<std::string> split_list(std::string text, char sep) {
  text = trim(std::move(text));
  if (!text.empty() && (text.front() == '(' || text.front() == '[')) text.erase(0, 1);
  if (!text.empty() && (text.back() == ')' || text.back() == ']')) text.pop_back();
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::array<double, 3> parse_vec3(const std::string& key, const std::string& text, Unit unit) {
  auto parts = split_list(text, ',');
  if (parts.size() != 3) {
    throw ConfigError(key, "key '" + key + "': expected three comma-separated values");
  }
  return {parse_number(key, parts[0], unit), parse_number(key, parts[1], unit),
          parse_number(key, parts[2], unit)};
}

std::string format_vec3(const std::array<double, 3>& v) {
  return "(" + format_double(v[0]) + ", " + format_double(v[1]) + ", " + format_double(v[2]) + ")";
}

int parse_int(const std::string& key, const std::string& text) {
  double v = parse_number(key, text, Unit::none);
  if (v != std::floor(v) || std::abs(v) > 1e9) {
    throw ConfigError(key, "key '" + key + "': expected an integer");
  }
  return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
  auto t = unquote(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key, "key '" + key + "': expected true or false");
}

Ion parse_ion(const std::string& key, const std::string& text) {
  auto t = unquote(text);
  if (t == "Na") return Ion::Na;
  if (t == "K") return Ion::K;
  if (t == "Cl") return Ion::Cl;
  throw ConfigError(key, "key '" + key + "': unknown ion '" + t + "'");
}

ScenarioMode parse_mode(const std::string& key, const std::string& text) {
  auto t = unquote(text);
  for (auto m : {ScenarioMode::rest, ScenarioMode::single_ap, ScenarioMode::train,
                 ScenarioMode::comparison}) {
    if (t == name(m)) return m;
  }
  throw ConfigError(key, "key '" + key + "': unknown mode '" + t + "'");
}

Profile parse_profile(const std::string& key, const std::string& text) {
  auto t = unquote(text);
  if (t == "new") return Profile::New;
  if (t == "previous") return Profile::Previous;
  throw ConfigError(key, "key '" + key + "': profile must be \"new\" or \"previous\"");
}

struct KeyDef {
  std::string section;
  std::string key;
  std::string unit;  // display unit
  std::function<void(Config&, const std::string&)> parse;
  std::function<std::string(const Config&)> format;
  std::string paper_source;  // non-empty when the default comes from published data
};

#define TD_SCALAR(sec, k, field, unitkind, disp, src)                                        \
  KeyDef {                                                                                   \
    sec, k, disp,                                                                            \
        [](Config& c, const std::string& v) { c.field = parse_number(sec "." k, v, unitkind); }, \
        [](const Config& c) { return format_double(c.field); }, src                          \
  }

#define TD_VEC3(sec, k, field, unitkind, disp, src)                                        \
  KeyDef {                                                                                 \
    sec, k, disp,                                                                          \
        [](Config& c, const std::string& v) { c.field = parse_vec3(sec "." k, v, unitkind); }, \
        [](const Config& c) { return format_vec3(c.field); }, src                          \
  }

#define TD_INT(sec, k, field)                                                          \
  KeyDef {                                                                             \
    sec, k, "",                                                                        \
        [](Config& c, const std::string& v) { c.field = parse_int(sec "." k, v); },    \
        [](const Config& c) { return std::to_string(c.field); }, ""                    \
  }

#define TD_BOOL(sec, k, field)                                                         \
  KeyDef {                                                                             \
    sec, k, "",                                                                        \
        [](Config& c, const std::string& v) { c.field = parse_bool(sec "." k, v); },   \
        [](const Config& c) { return std::string(c.field ? "true" : "false"); }, ""    \
  }

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = [] {
    std::vector<KeyDef> t;
    t.push_back(KeyDef{
        "parameters", "profile", "",
        [](Config& c, const std::string& v) {
          c.params.profile = parse_profile("parameters.profile", v);
        },
        [](const Config& c) {
          return std::string(c.params.profile == Profile::New ? "\"new\"" : "\"previous\"");
        },
        ""});
    t.push_back(TD_SCALAR("parameters", "T", params.constants.T, Unit::none, "K", ""));
    t.push_back(TD_SCALAR("parameters", "M_ax", params.M_ax, Unit::none, "1/m", "Table1"));
    t.push_back(TD_SCALAR("parameters", "M_gl", params.M_gl, Unit::none, "1/m", ""));
    t.push_back(TD_SCALAR("parameters", "I_ax1", params.I_ax1, Unit::none, "A/m^2", "Table1"));
    t.push_back(TD_SCALAR("parameters", "I_ax2", params.I_ax2, Unit::none, "A/m^2", "Table1"));
    t.push_back(TD_SCALAR("parameters", "g_leak_Na", params.g_leak_Na, Unit::none, "S/m^2", "Table1"));
    t.push_back(TD_SCALAR("parameters", "g_leak_K", params.g_leak_K, Unit::none, "S/m^2", "Table1"));
    t.push_back(TD_SCALAR("parameters", "g_ax_Cl", params.g_ax_Cl, Unit::none, "S/m^2", "Table1"));
    t.push_back(TD_SCALAR("parameters", "gbar_Na", params.gbar_Na, Unit::none, "S/m^2", "Table1"));
    t.push_back(TD_SCALAR("parameters", "gbar_K", params.gbar_K, Unit::none, "S/m^2", "Table1"));
    t.push_back(TD_SCALAR("parameters", "I_shock", params.I_shock, Unit::none, "A/m^2", "Table1"));
    t.push_back(TD_SCALAR("parameters", "C_m", params.C_m, Unit::none, "F/m^2", "simulation"));
    t.push_back(TD_VEC3("parameters", "lambda", params.lambda, Unit::none, "", "simulation"));
    t.push_back(TD_SCALAR("parameters", "eta_ax", params.eta_ax, Unit::none, "", ""));
    t.push_back(TD_SCALAR("parameters", "eta_gl", params.eta_gl, Unit::none, "", ""));
    t.push_back(TD_SCALAR("parameters", "eta_ex", params.eta_ex, Unit::none, "", ""));
    t.push_back(TD_VEC3("parameters", "D_free", params.D_free, Unit::none, "m^2/s", ""));
    t.push_back(TD_VEC3("parameters", "tortuosity", params.tortuosity, Unit::none, "", ""));
    t.push_back(TD_SCALAR("parameters", "K_Na_pump", params.K_Na_pump, Unit::concentration, "mol/m^3", ""));
    t.push_back(TD_SCALAR("parameters", "K_K_pump", params.K_K_pump, Unit::concentration, "mol/m^3", ""));
    t.push_back(TD_SCALAR("parameters", "V_rest_hh", params.V_rest_hh, Unit::voltage, "V", ""));
    t.push_back(TD_VEC3("parameters", "c_ax_init", params.c_ax_init, Unit::concentration, "mol/m^3", ""));
    t.push_back(TD_VEC3("parameters", "c_gl_init", params.c_gl_init, Unit::concentration, "mol/m^3", ""));

    t.push_back(TD_SCALAR("geometry", "R", params.geometry.R, Unit::none, "m", ""));
    t.push_back(TD_SCALAR("geometry", "L", params.geometry.L, Unit::none, "m", ""));
    t.push_back(TD_INT("geometry", "Nr", params.geometry.Nr));
    t.push_back(TD_INT("geometry", "Nz", params.geometry.Nz));

    t.push_back(TD_SCALAR("bath", "Na", params.bath[0], Unit::concentration, "mol/m^3", ""));
    t.push_back(TD_SCALAR("bath", "K", params.bath[1], Unit::concentration, "mol/m^3", "simulation"));
    t.push_back(TD_SCALAR("bath", "Cl", params.bath[2], Unit::concentration, "mol/m^3", ""));

    t.push_back(KeyDef{
        "scenario", "mode", "",
        [](Config& c, const std::string& v) { c.scenario.mode = parse_mode("scenario.mode", v); },
        [](const Config& c) { return "\"" + std::string(name(c.scenario.mode)) + "\""; }, ""});
    t.push_back(TD_SCALAR("scenario", "onset", scenario.stimulus.onset, Unit::time, "s", ""));
    t.push_back(TD_SCALAR("scenario", "duration", scenario.stimulus.duration, Unit::time, "s", ""));
    t.push_back(TD_SCALAR("scenario", "period", scenario.stimulus.period, Unit::time, "s", ""));
    t.push_back(TD_INT("scenario", "count", scenario.stimulus.count));
    t.push_back(TD_SCALAR("scenario", "stimulus_length", scenario.stimulus.length, Unit::none, "m", ""));
    t.push_back(KeyDef{
        "scenario", "carrier", "",
        [](Config& c, const std::string& v) {
          c.scenario.stimulus.carrier = parse_ion("scenario.carrier", v);
        },
        [](const Config& c) { return "\"" + std::string(name(c.scenario.stimulus.carrier)) + "\""; },
        ""});
    t.push_back(KeyDef{
        "scenario", "probes", "m",
        [](Config& c, const std::string& v) {
          c.scenario.probes.clear();
          for (const auto& item : split_list(unquote(v), ';')) {
            auto rz = split_list(item, ' ');
            if (rz.size() != 2) {
              throw ConfigError("scenario.probes", "key 'scenario.probes': expected 'r z; r z; ...'");
            }
            c.scenario.probes.push_back({parse_number("scenario.probes", rz[0], Unit::none),
                                         parse_number("scenario.probes", rz[1], Unit::none)});
          }
        },
        [](const Config& c) {
          std::string s = "\"";
          for (std::size_t n = 0; n < c.scenario.probes.size(); ++n) {
            if (n) s += "; ";
            s += format_double(c.scenario.probes[n].r) + " " + format_double(c.scenario.probes[n].z);
          }
          return s + "\"";
        },
        ""});
    t.push_back(KeyDef{
        "scenario", "output_dir", "",
        [](Config& c, const std::string& v) { c.scenario.output_dir = unquote(v); },
        [](const Config& c) { return "\"" + c.scenario.output_dir + "\""; }, ""});
    t.push_back(TD_SCALAR("scenario", "cadence", scenario.cadence, Unit::time, "s", ""));
    t.push_back(KeyDef{
        "scenario", "formats", "",
        [](Config& c, const std::string& v) {
          c.scenario.write_csv = c.scenario.write_svg = false;
          for (const auto& f : split_list(unquote(v), ',')) {
            if (f == "csv") c.scenario.write_csv = true;
            else if (f == "svg") c.scenario.write_svg = true;
            else throw ConfigError("scenario.formats", "key 'scenario.formats': unknown format '" + f + "'");
          }
        },
        [](const Config& c) {
          std::string s;
          if (c.scenario.write_csv) s = "csv";
          if (c.scenario.write_svg) s += s.empty() ? "svg" : ", svg";
          return "\"" + s + "\"";
        },
        ""});

    t.push_back(TD_SCALAR("solver", "dt", solver.dt, Unit::time, "s", ""));
    t.push_back(TD_SCALAR("solver", "newton_tol", solver.newton_tol, Unit::none, "", ""));
    t.push_back(TD_SCALAR("solver", "newton_abs_tol", solver.newton_abs_tol, Unit::none, "mol/m^3", ""));
    t.push_back(TD_INT("solver", "newton_max_iter", solver.newton_max_iter));
    t.push_back(TD_SCALAR("solver", "linear_tol", solver.linear_tol, Unit::none, "", ""));
    t.push_back(TD_SCALAR("solver", "t_max", solver.t_max, Unit::time, "s", ""));
    t.push_back(TD_INT("solver", "max_halvings", solver.max_halvings));
    t.push_back(TD_BOOL("solver", "sealed", solver.sealed));
    t.push_back(TD_SCALAR("solver", "rest_dt_max", solver.rest_dt_max, Unit::time, "s", ""));
    t.push_back(TD_SCALAR("solver", "rest_horizon", solver.rest_horizon, Unit::time, "s", ""));
    t.push_back(TD_SCALAR("solver", "rest_dVdt_tol", solver.rest_dVdt_tol, Unit::none, "V/s", ""));
    t.push_back(TD_SCALAR("solver", "rest_dc_tol", solver.rest_dc_tol, Unit::none, "", ""));
    return t;
  }();
  return table;
}

#undef TD_SCALAR
#undef TD_VEC3
#undef TD_INT
#undef TD_BOOL

const KeyDef* find_key(const std::string& section, const std::string& key) {
  for (const auto& def : key_table()) {
    if (def.section == section && def.key == key) return &def;
  }
  return nullptr;
}

void require(bool ok, const std::string& key, const std::string& msg) {
  if (!ok) throw ValidationError(key, "invalid '" + key + "': " + msg);
}

}  // namespace

void validate(const Config& config) {
  const auto& p = config.params;
  require(p.constants.T > 0, "parameters.T", "temperature must be positive");
  for (auto [key, v] : {std::pair{"parameters.M_ax", p.M_ax}, {"parameters.M_gl", p.M_gl},
                        {"parameters.I_ax1", p.I_ax1}, {"parameters.I_ax2", p.I_ax2},
                        {"parameters.g_leak_Na", p.g_leak_Na}, {"parameters.g_leak_K", p.g_leak_K},
                        {"parameters.g_ax_Cl", p.g_ax_Cl}, {"parameters.gbar_Na", p.gbar_Na},
                        {"parameters.gbar_K", p.gbar_K}, {"parameters.I_shock", p.I_shock},
                        {"parameters.C_m", p.C_m}}) {
    require(std::isfinite(v) && v >= 0, key, "must be finite and non-negative");
  }
  double lambda_sum = 0;
  for (double l : p.lambda) {
    require(l >= 0 && l <= 1, "parameters.lambda", "each entry must lie in [0, 1]");
    lambda_sum += l;
  }
  // The all-zero partition is the purely conductive membrane.
  require(std::abs(lambda_sum - 1.0) < 1e-12 || lambda_sum == 0.0, "parameters.lambda",
          "entries must sum to 1");
  for (auto [key, v] : {std::pair{"parameters.eta_ax", p.eta_ax}, {"parameters.eta_gl", p.eta_gl},
                        {"parameters.eta_ex", p.eta_ex}}) {
    require(v > 0 && v < 1, key, "volume fraction must lie in (0, 1)");
  }
  require(std::abs(p.eta_ax + p.eta_gl + p.eta_ex - 1.0) < 1e-12, "parameters.eta_ex",
          "volume fractions must sum to 1");
  for (double d : p.D_free) require(d > 0, "parameters.D_free", "diffusivities must be positive");
  for (double t : p.tortuosity) require(t > 0, "parameters.tortuosity", "factors must be positive");
  require(p.K_Na_pump > 0, "parameters.K_Na_pump", "must be positive");
  require(p.K_K_pump > 0, "parameters.K_K_pump", "must be positive");
  for (double c : p.c_ax_init) require(c > 0, "parameters.c_ax_init", "concentrations must be positive");
  for (double c : p.c_gl_init) require(c > 0, "parameters.c_gl_init", "concentrations must be positive");

  require(p.geometry.R > 0, "geometry.R", "must be positive");
  require(p.geometry.L > 0, "geometry.L", "must be positive");
  require(p.geometry.Nr >= 1, "geometry.Nr", "must be at least 1");
  require(p.geometry.Nz >= 2, "geometry.Nz", "must be at least 2");

  const char* bath_keys[] = {"bath.Na", "bath.K", "bath.Cl"};
  double charge = 0, total = 0;
  for (auto i : kIons) {
    require(p.bath[idx(i)] > 0, bath_keys[idx(i)], "concentration must be positive");
    charge += valence(i) * p.bath[idx(i)];
    total += p.bath[idx(i)];
  }
  require(std::abs(charge) <= 1e-12 * total, "bath.Cl", "bath must be electroneutral");

  const auto& s = config.scenario;
  require(s.stimulus.onset >= 0, "scenario.onset", "must be non-negative");
  require(s.stimulus.duration >= 0, "scenario.duration", "must be non-negative");
  require(s.stimulus.period > 0, "scenario.period", "must be positive");
  require(s.stimulus.count >= 0, "scenario.count", "must be non-negative");
  require(s.stimulus.length >= 0 && s.stimulus.length <= p.geometry.L, "scenario.stimulus_length",
          "must lie in [0, L]");
  for (const auto& pr : s.probes) {
    require(pr.r >= 0 && pr.r <= p.geometry.R && pr.z >= 0 && pr.z <= p.geometry.L,
            "scenario.probes", "probe lies outside the domain");
  }
  require(s.cadence >= config.solver.dt, "scenario.cadence", "cadence must be >= solver.dt");

  const auto& v = config.solver;
  require(v.dt > 0, "solver.dt", "must be positive");
  require(v.newton_tol > 0 && v.newton_tol < 1, "solver.newton_tol", "must lie in (0, 1)");
  require(v.newton_abs_tol > 0 && v.newton_abs_tol < 1, "solver.newton_abs_tol", "must lie in (0, 1)");
  require(v.linear_tol > 0 && v.linear_tol < 1, "solver.linear_tol", "must lie in (0, 1)");
  require(v.newton_max_iter >= 1, "solver.newton_max_iter", "must be at least 1");
  require(v.t_max > 0, "solver.t_max", "must be positive");
  require(v.max_halvings >= 0, "solver.max_halvings", "must be non-negative");
  require(v.rest_dt_max > 0, "solver.rest_dt_max", "must be positive");
  require(v.rest_horizon > 0, "solver.rest_horizon", "must be positive");
  require(v.rest_dVdt_tol > 0, "solver.rest_dVdt_tol", "must be positive");
  require(v.rest_dc_tol > 0, "solver.rest_dc_tol", "must be positive");
}

namespace {

// "section.key" for the assignment on 1-based `line`, or "" when the line
// holds none.
std::string key_at_line(const std::string& text, unsigned long line) {
  std::istringstream in(text);
  std::string row, section;
  for (unsigned long n = 1; std::getline(in, row); ++n) {
    const std::string t = trim(row);
    if (!t.empty() && t.front() == '[' && t.back() == ']') section = trim(t.substr(1, t.size() - 2));
    if (n != line) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || t.empty() || t.front() == '[') return "";
    const std::string key = trim(t.substr(0, eq));
    return section.empty() ? key : section + "." + key;
  }
  return "";
}

}  // namespace

Config parse_config(const std::string& text, std::vector<std::string>* overridden,
                    std::optional<Profile> profile_override) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& err) {
    const std::string where = key_at_line(text, err.line());
    throw ConfigError(where.empty() ? "line " + std::to_string(err.line()) : where,
                      std::string("parse error: ") + err.message() + " (line " + std::to_string(err.line()) +
                          (where.empty() ? "" : ", key '" + where + "'") + ")");
  }

  // `profile` selects the default layer, so it is read first. It may sit at
  // top level or in [parameters].
  Profile profile = Profile::New;
  if (auto top = tree.get_optional<std::string>("profile"); top && tree.get_child("profile").empty()) {
    profile = parse_profile("profile", *top);
  }
  if (auto sec = tree.get_child_optional("parameters")) {
    if (auto v = sec->get_optional<std::string>("profile")) profile = parse_profile("parameters.profile", *v);
  }
  if (profile_override) profile = *profile_override;
  Config config = default_config(profile);

  std::set<std::string> seen;
  for (const auto& [section, child] : tree) {
    if (child.empty()) {
      if (section == "profile") {
        if (overridden) overridden->push_back("parameters.profile");
        continue;
      }
      throw ConfigError(section, "unknown top-level key '" + section + "'");
    }
    for (const auto& [key, node] : child) {
      const std::string full = section + "." + key;
      const KeyDef* def = find_key(section, key);
      if (!def) throw ConfigError(full, "unknown key '" + full + "'");
      if (!seen.insert(full).second) throw ConfigError(full, "duplicate key '" + full + "'");
      if (!(profile_override && full == "parameters.profile")) def->parse(config, node.data());
      if (overridden) overridden->push_back(full);
    }
  }
  validate(config);
  return config;
}

Config parse_config(const std::string& text) { return parse_config(text, nullptr); }

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const Config& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& def : key_table()) {
    if (def.section != section) {
      if (!section.empty()) out << "\n";
      section = def.section;
      out << "[" << section << "]\n";
    }
    out << def.key << " = " << def.format(config) << "\n";
  }
  return out.str();
}

std::vector<ResolvedEntry> resolve_entries(const Config& config,
                                           const std::vector<std::string>& overridden) {
  std::vector<ResolvedEntry> out;
  for (const auto& def : key_table()) {
    ResolvedEntry e;
    e.section = def.section;
    e.key = def.key;
    e.value = def.format(config);
    e.unit = def.unit;
    const std::string full = def.section + "." + def.key;
    if (std::find(overridden.begin(), overridden.end(), full) != overridden.end()) {
      e.provenance = Provenance::override_value;
    } else if (!def.paper_source.empty()) {
      e.provenance = Provenance::paper;
      e.source = def.paper_source;
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace tridomain
