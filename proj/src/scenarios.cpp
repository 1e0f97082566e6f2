#include "tridomain/scenarios.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <future>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace tridomain {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < n; ++k) {
    h ^= bytes[k];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::uint64_t h, const Field<double>& f) {
  return fnv1a(h, f.data(), sizeof(double) * static_cast<std::size_t>(f.size()));
}

Mesh scenario_mesh(const Config& config) {
  return build_mesh(config.params.geometry, config.solver.sealed ? BoundaryPolicy::sealed
                                                                 : BoundaryPolicy::bath_on_extracellular);
}

ScenarioRun run_branch(const Config& config, const ParameterSet& params, const Mesh& mesh,
                       const TridomainState& rest, const std::optional<StimulusProtocol>& stimulus,
                       std::string label) {
  const auto start = std::chrono::steady_clock::now();
  ScenarioRun run;
  run.label = std::move(label);
  run.lambda.assign(params.lambda.begin(), params.lambda.end());
  run.traces = TraceSet(effective_probes(config.scenario, params.geometry));

  Integrator integrator(mesh, params, config.solver);
  integrator.set_stimulus(stimulus);

  const double dt = config.solver.dt;
  const double cadence = config.scenario.cadence;
  const auto steps = static_cast<long>(std::llround(config.solver.t_max / dt));

  TridomainState state = rest;
  run.traces.record(state, mesh);
  double next_sample = state.t + cadence;
  for (long n = 0; n < steps; ++n) {
    StepReport report;
    state = integrator.advance(state, dt, &report);
    ++run.steps;
    run.newton_iterations += report.newton_iterations;
    run.jacobian_evaluations += report.jacobian_evaluations;
    if (state.t + 0.5 * dt >= next_sample) {
      run.traces.record(state, mesh);
      while (next_sample <= state.t + 0.5 * dt) next_sample += cadence;
    }
  }
  run.final_state = std::move(state);
  run.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

std::string format_g17(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cell += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

std::string header_name(std::size_t probe, TraceSet::Quantity q) {
  static const char* const stem[] = {"V_ax_V@p", "V_gl_V@p", "cK_ex_mM@p"};
  return stem[q] + std::to_string(probe);
}

}  // namespace

TraceSet::TraceSet(std::vector<Probe> p) : probes(std::move(p)), columns(3 * probes.size()) {}

void TraceSet::record(const TridomainState& s, const Mesh& mesh) {
  if (!time.empty() && !(s.t > time.back())) {
    throw std::logic_error("TraceSet::record: time must increase strictly");
  }
  time.push_back(s.t);
  for (std::size_t n = 0; n < probes.size(); ++n) {
    const int p = mesh.locate(probes[n].r, probes[n].z);
    const double phi_ex = s.potential(Compartment::ex)(p);
    columns[3 * n + V_ax].push_back(s.potential(Compartment::ax)(p) - phi_ex);
    columns[3 * n + V_gl].push_back(s.potential(Compartment::gl)(p) - phi_ex);
    columns[3 * n + cK_ex].push_back(s.conc(Compartment::ex, Ion::K)(p));
  }
}

std::vector<Probe> effective_probes(const ScenarioConfig& scenario, const Geometry& geometry) {
  if (!scenario.probes.empty()) return scenario.probes;
  return {Probe{0.5 * geometry.R, 0.5 * geometry.L}};
}

std::uint64_t state_hash(const TridomainState& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (auto k : kCompartments) {
    for (auto i : kIons) h = fnv1a(h, s.conc(k, i));
    h = fnv1a(h, s.potential(k));
  }
  for (const auto& g : s.gating) {
    const double v[3] = {g.m, g.h, g.n};
    h = fnv1a(h, v, sizeof v);
  }
  h = fnv1a(h, s.a.data(), sizeof(double) * s.a.size());
  return fnv1a(h, &s.t, sizeof s.t);
}

ScenarioResult run_scenario(const Config& config) {
  validate(config);
  const Mesh mesh = scenario_mesh(config);
  ScenarioResult result;
  result.rest = find_rest_state(config.params, mesh, config.solver, &result.rest_report);
  result.rest_hash = state_hash(result.rest);

  std::optional<StimulusProtocol> stimulus = config.scenario.stimulus;
  switch (config.scenario.mode) {
    case ScenarioMode::rest:
      stimulus.reset();
      break;
    case ScenarioMode::single_ap:
    case ScenarioMode::comparison:
      stimulus->count = 1;
      break;
    case ScenarioMode::train:
      break;
  }

  if (config.scenario.mode != ScenarioMode::comparison) {
    result.runs.push_back(
        run_branch(config, config.params, mesh, result.rest, stimulus, name(config.scenario.mode)));
    return result;
  }

  ParameterSet capacitive = config.params;
  capacitive.lambda = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  ParameterSet conductive = config.params;
  conductive.lambda = {0.0, 0.0, 0.0};

  auto launch = [&](const ParameterSet& params, const char* label) {
    return std::async(std::launch::async, [&config, &mesh, &result, &stimulus, params, label] {
      const TridomainState start = result.rest;
      if (state_hash(start) != result.rest_hash) {
        throw std::logic_error(std::string(label) + " branch: initial state differs from the shared rest state");
      }
      try {
        return run_branch(config, params, mesh, start, stimulus, label);
      } catch (const SolverError& e) {
        throw SolverError(std::string(label) + " branch: " + e.what(), e.time());
      }
    });
  };
  auto cap = launch(capacitive, "capacitive");
  auto con = launch(conductive, "conductive");
  // Both futures are drained before an exception leaves this scope.
  std::exception_ptr failure;
  for (auto* f : {&cap, &con}) {
    try {
      result.runs.push_back(f->get());
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return result;
}

PeakSummary peak_summary(const TraceSet& traces, std::size_t probe) {
  PeakSummary peak;
  if (traces.rows() == 0) return peak;
  auto rise = [&](TraceSet::Quantity q) {
    const auto& c = traces.column(probe, q);
    return *std::max_element(c.begin(), c.end()) - c.front();
  };
  peak.V_ax = rise(TraceSet::V_ax);
  peak.V_gl = rise(TraceSet::V_gl);
  peak.cK_ex = rise(TraceSet::cK_ex);
  return peak;
}

PeakSummary relative_discrepancy(const PeakSummary& a, const PeakSummary& b) {
  auto rel = [](double x, double y) {
    const double scale = std::max(std::abs(x), std::abs(y));
    return scale == 0 ? 0.0 : std::abs(x - y) / scale;
  };
  return {rel(a.V_ax, b.V_ax), rel(a.V_gl, b.V_gl), rel(a.cK_ex, b.cK_ex)};
}

void emit_csv(const TraceSet& traces, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << "t_s";
  for (std::size_t n = 0; n < traces.probes.size(); ++n) {
    for (auto q : {TraceSet::V_ax, TraceSet::V_gl, TraceSet::cK_ex}) out << ',' << csv_field(header_name(n, q));
  }
  out << '\n';
  for (std::size_t row = 0; row < traces.rows(); ++row) {
    out << format_g17(traces.time[row]);
    for (const auto& col : traces.columns) out << ',' << format_g17(col[row]);
    out << '\n';
  }
  out.close();
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

TraceSet read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path.string() + "': missing header");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "t_s" || (header.size() - 1) % 3 != 0) {
    throw std::runtime_error("'" + path.string() + "': unexpected header");
  }
  TraceSet traces(std::vector<Probe>((header.size() - 1) / 3));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("'" + path.string() + "' line " + std::to_string(line_no) + ": wrong field count");
    }
    std::vector<double> values(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const auto& c = cells[k];
      const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), values[k]);
      if (ec != std::errc() || ptr != c.data() + c.size()) {
        throw std::runtime_error("'" + path.string() + "' line " + std::to_string(line_no) + ": bad number '" +
                                 c + "'");
      }
    }
    traces.time.push_back(values[0]);
    for (std::size_t k = 1; k < values.size(); ++k) traces.columns[k - 1].push_back(values[k]);
  }
  return traces;
}

namespace {

struct Axis {
  double lo = 0;
  double hi = 1;
  double step = 0.2;
};

Axis nice_axis(double lo, double hi) {
  if (!(hi > lo)) {
    const double pad = lo == 0 ? 1.0 : 0.05 * std::abs(lo);
    lo -= pad;
    hi += pad;
  }
  const double raw = (hi - lo) / 5;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  return {std::floor(lo / step) * step, std::ceil(hi / step) * step, step};
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  const int n = std::snprintf(buf, sizeof buf, spec, v);
  return std::string(buf, static_cast<std::size_t>(n));
}

std::string tick_label(double v, double step) {
  if (std::abs(v) < 1e-9 * step) v = 0;
  const int decimals = std::max(0, -static_cast<int>(std::floor(std::log10(step) + 1e-9)) + 1);
  return fmt(("%." + std::to_string(std::min(decimals, 6)) + "f").c_str(), v);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_plot(const std::vector<PlotSeries>& series) {
  if (series.empty()) throw std::invalid_argument("emit_plot: no series");
  for (const auto& s : series) {
    if (!s.traces || s.traces->rows() < 2 || s.traces->probes.empty()) {
      throw std::invalid_argument("emit_plot: each series needs at least two samples of one probe");
    }
  }
  static const char* const colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  struct Panel {
    TraceSet::Quantity q;
    const char* label;
    double scale;
  };
  const Panel panels[] = {{TraceSet::V_gl, "V_gl (mV)", 1e3},
                          {TraceSet::cK_ex, "extracellular K+ (mM)", 1.0},
                          {TraceSet::V_ax, "V_ax (mV)", 1e3}};
  const double width = 760, left = 90, right = 30, top = 50, panel_h = 190, gap = 60;
  const double plot_w = width - left - right;
  const double height = top + 3 * panel_h + 2 * gap + 60;

  double t_lo = std::numeric_limits<double>::infinity(), t_hi = -t_lo;
  for (const auto& s : series) {
    t_lo = std::min(t_lo, s.traces->time.front() * 1e3);
    t_hi = std::max(t_hi, s.traces->time.back() * 1e3);
  }
  const Axis tx = nice_axis(t_lo, t_hi);

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt("%.0f", width) << "\" height=\""
      << fmt("%.0f", height) << "\" viewBox=\"0 0 " << fmt("%.0f", width) << ' ' << fmt("%.0f", height)
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (int k = 0; k < 3; ++k) {
    const Panel& panel = panels[k];
    const double y0 = top + k * (panel_h + gap);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : series) {
      for (double v : s.traces->column(0, panel.q)) {
        lo = std::min(lo, v * panel.scale);
        hi = std::max(hi, v * panel.scale);
      }
    }
    const Axis ty = nice_axis(lo, hi);
    auto px = [&](double t) { return left + (t - tx.lo) / (tx.hi - tx.lo) * plot_w; };
    auto py = [&](double v) { return y0 + panel_h - (v - ty.lo) / (ty.hi - ty.lo) * panel_h; };

    svg << "<g>\n<rect x=\"" << fmt("%.2f", left) << "\" y=\"" << fmt("%.2f", y0) << "\" width=\""
        << fmt("%.2f", plot_w) << "\" height=\"" << fmt("%.2f", panel_h)
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    const int ny = static_cast<int>(std::lround((ty.hi - ty.lo) / ty.step));
    for (int n = 0; n <= ny; ++n) {
      const double v = ty.lo + n * ty.step;
      svg << "<line x1=\"" << fmt("%.2f", left - 5) << "\" y1=\"" << fmt("%.2f", py(v)) << "\" x2=\""
          << fmt("%.2f", left) << "\" y2=\"" << fmt("%.2f", py(v)) << "\" stroke=\"black\"/>"
          << "<text x=\"" << fmt("%.2f", left - 8) << "\" y=\"" << fmt("%.2f", py(v) + 4)
          << "\" text-anchor=\"end\">" << tick_label(v, ty.step) << "</text>\n";
    }
    const int nx = static_cast<int>(std::lround((tx.hi - tx.lo) / tx.step));
    for (int n = 0; n <= nx; ++n) {
      const double t = tx.lo + n * tx.step;
      svg << "<line x1=\"" << fmt("%.2f", px(t)) << "\" y1=\"" << fmt("%.2f", y0 + panel_h) << "\" x2=\""
          << fmt("%.2f", px(t)) << "\" y2=\"" << fmt("%.2f", y0 + panel_h + 5) << "\" stroke=\"black\"/>"
          << "<text x=\"" << fmt("%.2f", px(t)) << "\" y=\"" << fmt("%.2f", y0 + panel_h + 18)
          << "\" text-anchor=\"middle\">" << tick_label(t, tx.step) << "</text>\n";
    }
    svg << "<text transform=\"translate(" << fmt("%.2f", 22.0) << ',' << fmt("%.2f", y0 + panel_h / 2)
        << ") rotate(-90)\" text-anchor=\"middle\">" << xml_escape(panel.label) << "</text>\n"
        << "<text x=\"" << fmt("%.2f", left + plot_w / 2) << "\" y=\"" << fmt("%.2f", y0 + panel_h + 36)
        << "\" text-anchor=\"middle\">t (ms)</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
      const auto& tr = *series[s].traces;
      const auto& col = tr.column(0, panel.q);
      svg << "<polyline fill=\"none\" stroke=\"" << colors[s % 5] << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t r = 0; r < tr.rows(); ++r) {
        if (r) svg << ' ';
        svg << fmt("%.2f", px(tr.time[r] * 1e3)) << ',' << fmt("%.2f", py(col[r] * panel.scale));
      }
      svg << "\"/>\n";
    }
    svg << "</g>\n";
  }

  svg << "<g>\n";
  double lx = left;
  for (std::size_t s = 0; s < series.size(); ++s) {
    if (series[s].label.empty()) continue;
    svg << "<line x1=\"" << fmt("%.2f", lx) << "\" y1=\"20.00\" x2=\"" << fmt("%.2f", lx + 24)
        << "\" y2=\"20.00\" stroke=\"" << colors[s % 5] << "\" stroke-width=\"2\"/>"
        << "<text x=\"" << fmt("%.2f", lx + 30) << "\" y=\"24.00\">" << xml_escape(series[s].label)
        << "</text>\n";
    lx += 40 + 8.0 * static_cast<double>(series[s].label.size());
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

void emit_plot(const std::vector<PlotSeries>& series, const std::filesystem::path& path) {
  const std::string text = render_plot(series);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  out.close();
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

std::vector<std::filesystem::path> write_outputs(const ScenarioResult& result, const ScenarioConfig& scenario,
                                                 const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  std::vector<std::filesystem::path> written;
  const bool paired = result.runs.size() > 1;
  std::vector<PlotSeries> series;
  for (const auto& run : result.runs) {
    if (scenario.write_csv) {
      const auto path = directory / (paired ? "traces_" + run.label + ".csv" : std::string("traces.csv"));
      emit_csv(run.traces, path);
      written.push_back(path);
    }
    series.push_back({run.label, &run.traces});
  }
  if (scenario.write_svg && !series.empty() && series.front().traces->rows() >= 2) {
    const auto path = directory / (paired ? "comparison.svg" : "traces.svg");
    emit_plot(series, path);
    written.push_back(path);
  }
  return written;
}

}  // namespace tridomain
