#pragma once

// Experiment protocols on top of the integrator: rest, single action
// potential, pulse train and the capacitive/conductive comparison, plus the
// CSV and SVG writers for probe traces.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tridomain/mesh.hpp"
#include "tridomain/params.hpp"
#include "tridomain/solver.hpp"
#include "tridomain/transport.hpp"

namespace tridomain {

/// Sampled probe signals. Column 3 * p + q holds quantity q of probe p, with
/// q = 0 for V_ax (V), 1 for V_gl (V) and 2 for extracellular K (mol/m^3).
struct TraceSet {
  std::vector<Probe> probes;
  std::vector<double> time;                  // s
  std::vector<std::vector<double>> columns;  // 3 * probes.size()

  enum Quantity { V_ax = 0, V_gl = 1, cK_ex = 2 };

  explicit TraceSet(std::vector<Probe> p = {});

  std::size_t rows() const { return time.size(); }
  std::size_t column_count() const { return 1 + columns.size(); }
  const std::vector<double>& column(std::size_t probe, Quantity q) const { return columns.at(3 * probe + q); }

  /// Appends one row sampled from `s` at the probe cells of `mesh`.
  void record(const TridomainState& s, const Mesh& mesh);
};

/// Probe locations with the mid-radius, mid-length default filled in.
std::vector<Probe> effective_probes(const ScenarioConfig& scenario, const Geometry& geometry);

struct ScenarioRun {
  std::string label;  // "capacitive", "conductive" or the mode name
  std::vector<double> lambda;
  TraceSet traces;
  TridomainState final_state;
  int steps = 0;
  int newton_iterations = 0;
  int jacobian_evaluations = 0;
  double wall_time = 0;  // s
};

struct ScenarioResult {
  TridomainState rest;
  RestReport rest_report;
  std::uint64_t rest_hash = 0;
  std::vector<ScenarioRun> runs;  // two for comparison mode, one otherwise
};

/// FNV-1a hash over every stored value of the state.
std::uint64_t state_hash(const TridomainState& s);

/// Runs the configured scenario from the rest state. Solver failures surface
/// as SolverError carrying the simulated time.
ScenarioResult run_scenario(const Config& config);

/// Peak excursions above the first sample, per probe.
struct PeakSummary {
  double V_ax = 0;   // V, peak axon depolarization
  double V_gl = 0;   // V, peak glial depolarization
  double cK_ex = 0;  // mol/m^3, peak extracellular K rise
};

PeakSummary peak_summary(const TraceSet& traces, std::size_t probe = 0);

/// |a - b| / max(|a|, |b|) per field; 0 when both vanish.
PeakSummary relative_discrepancy(const PeakSummary& a, const PeakSummary& b);

/// Writes an RFC 4180 table with LF line endings and 17 significant digits.
void emit_csv(const TraceSet& traces, const std::filesystem::path& path);

/// Parses a file written by emit_csv.
TraceSet read_csv(const std::filesystem::path& path);

struct PlotSeries {
  std::string label;
  const TraceSet* traces = nullptr;
};

/// Three stacked panels (V_gl, extracellular K, V_ax against time) for probe
/// 0, one curve per series, with a legend naming each labelled series.
void emit_plot(const std::vector<PlotSeries>& series, const std::filesystem::path& path);
std::string render_plot(const std::vector<PlotSeries>& series);

/// Files written for a scenario result, in `directory`.
std::vector<std::filesystem::path> write_outputs(const ScenarioResult& result, const ScenarioConfig& scenario,
                                                 const std::filesystem::path& directory);

}  // namespace tridomain
