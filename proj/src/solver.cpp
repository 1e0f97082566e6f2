#include "tridomain/solver.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <unsupported/Eigen/AutoDiff>

namespace tridomain {

namespace {

constexpr double kConcentrationFloor = 1e-9;  // mol/m^3
constexpr int kColors = 5;

using Derivatives = Eigen::Matrix<double, kUnknownsPerCell, 1>;
using ADScalar = Eigen::AutoDiffScalar<Derivatives>;

// Cells within one stencil step of any cell get distinct colours.
int color(const Mesh& mesh, int cell) {
  const int j = cell % mesh.Nr;
  const int l = cell / mesh.Nr;
  return (j + 2 * l) % kColors;
}

template <typename Scalar>
TridomainFields<Scalar> unpack_fields(const VectorX<Scalar>& x, int cells) {
  TridomainFields<Scalar> s;
  for (auto k : kCompartments) {
    for (auto i : kIons) s.conc(k, i).resize(cells);
    s.potential(k).resize(cells);
  }
  for (int p = 0; p < cells; ++p) {
    const Scalar* base = x.data() + p * kUnknownsPerCell;
    for (auto k : kCompartments) {
      for (auto i : kIons) s.conc(k, i)(p) = base[conc_slot(k, i)];
      s.potential(k)(p) = base[phi_slot(k)];
    }
  }
  return s;
}

template <typename Scalar>
Residual<Scalar> assemble_blocks(const StepProblem& pb, const VectorX<Scalar>& x) {
  const Mesh& mesh = *pb.mesh;
  const ParameterSet& p = *pb.params;
  const auto s = unpack_fields(x, mesh.cells());
  const auto J = membrane_sources(s, *pb.prev, *pb.gating, pb.dt, p);
  auto div = transport_divergence(s, mesh, p);
  Residual<Scalar> r;
  r.current = current_residual(J, p, div);
  r.conservation = conservation_residual(s, *pb.prev, pb.dt, J, p, std::move(div));
  if (pb.stimulus) apply_stimulus(r, *pb.stimulus, p.I_shock, pb.t0, pb.t0 + pb.dt, mesh, p);
  return r;
}

template <typename Scalar>
VectorX<Scalar> assemble_scaled(const StepProblem& pb, const VectorX<Scalar>& x) {
  const int cells = pb.mesh->cells();
  const auto r = assemble_blocks(pb, x);
  const double conservation_scale = pb.dt;
  const double current_scale = pb.dt / PhysicalConstants::faraday;
  VectorX<Scalar> F(cells * kUnknownsPerCell);
  for (int q = 0; q < cells; ++q) {
    Scalar* base = F.data() + q * kUnknownsPerCell;
    for (auto k : kCompartments) {
      for (auto i : kIons) base[conc_slot(k, i)] = conservation_scale * r.conservation[idx(k)][idx(i)](q);
      base[phi_slot(k)] = current_scale * r.current[idx(k)](q);
    }
  }
  if (pb.gauge_cell >= 0) {
    const int row = pb.gauge_cell * kUnknownsPerCell + phi_slot(Compartment::ex);
    F(row) = x(row);
  }
  return F;
}

// Structural coupling between a row slot of one cell and a column slot of a
// face neighbour.
bool neighbour_coupled(int row, int col, bool axial) {
  auto compartment_of_slot = [](int slot) { return slot < 9 ? slot / kNumIons : slot - 9; };
  const int kc = compartment_of_slot(col);
  if (kc == idx(Compartment::ax) && !axial) return false;
  if (row < 9) {
    const int kr = row / kNumIons;
    return col == row || col == 9 + kr;
  }
  const int kr = row - 9;
  if (kr == idx(Compartment::ex)) return true;
  return kc == kr;
}

Eigen::SparseMatrix<double> jacobian_pattern(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> t;
  const int n = mesh.cells();
  t.reserve(static_cast<std::size_t>(n) * kUnknownsPerCell * kUnknownsPerCell * 2);
  for (int l = 0; l < mesh.Nz; ++l) {
    for (int j = 0; j < mesh.Nr; ++j) {
      const int p = mesh.cell(j, l);
      for (int r = 0; r < kUnknownsPerCell; ++r) {
        for (int c = 0; c < kUnknownsPerCell; ++c) {
          t.emplace_back(p * kUnknownsPerCell + r, p * kUnknownsPerCell + c, 0.0);
        }
      }
      auto add_neighbour = [&](int q, bool axial) {
        for (int r = 0; r < kUnknownsPerCell; ++r) {
          for (int c = 0; c < kUnknownsPerCell; ++c) {
            if (neighbour_coupled(r, c, axial)) {
              t.emplace_back(p * kUnknownsPerCell + r, q * kUnknownsPerCell + c, 0.0);
            }
          }
        }
      };
      if (j > 0) add_neighbour(mesh.cell(j - 1, l), false);
      if (j + 1 < mesh.Nr) add_neighbour(mesh.cell(j + 1, l), false);
      if (l > 0) add_neighbour(mesh.cell(j, l - 1), true);
      if (l + 1 < mesh.Nz) add_neighbour(mesh.cell(j, l + 1), true);
    }
  }
  Eigen::SparseMatrix<double> J(n * kUnknownsPerCell, n * kUnknownsPerCell);
  J.setFromTriplets(t.begin(), t.end());
  J.makeCompressed();
  return J;
}

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

bool clip_concentrations(Eigen::VectorXd& x) {
  bool clipped = false;
  const Eigen::Index cells = x.size() / kUnknownsPerCell;
  for (Eigen::Index p = 0; p < cells; ++p) {
    for (int s = 0; s < 9; ++s) {
      double& c = x(p * kUnknownsPerCell + s);
      if (!(c >= kConcentrationFloor)) {
        c = kConcentrationFloor;
        clipped = true;
      }
    }
  }
  return clipped;
}

}  // namespace

std::string block_name(int slot) {
  std::ostringstream out;
  if (slot < 9) {
    out << "conservation[" << name(kCompartments[slot / kNumIons]) << "][" << name(kIons[slot % kNumIons])
        << "]";
  } else {
    out << "current[" << name(kCompartments[slot - 9]) << "]";
  }
  return out.str();
}

Eigen::VectorXd pack(const TridomainFields<double>& s) {
  const auto cells = s.potential(Compartment::ex).size();
  Eigen::VectorXd x(cells * kUnknownsPerCell);
  for (Eigen::Index p = 0; p < cells; ++p) {
    double* base = x.data() + p * kUnknownsPerCell;
    for (auto k : kCompartments) {
      for (auto i : kIons) base[conc_slot(k, i)] = s.conc(k, i)(p);
      base[phi_slot(k)] = s.potential(k)(p);
    }
  }
  return x;
}

void unpack(const Eigen::VectorXd& x, TridomainFields<double>& s) {
  const int cells = static_cast<int>(x.size() / kUnknownsPerCell);
  auto fields = unpack_fields<double>(x, cells);
  s.c = std::move(fields.c);
  s.phi = std::move(fields.phi);
}

Eigen::VectorXd scaled_residual(const StepProblem& problem, const Eigen::VectorXd& x) {
  return assemble_scaled<double>(problem, x);
}

Residual<double> physical_residual(const StepProblem& problem, const Eigen::VectorXd& x) {
  return assemble_blocks<double>(problem, x);
}

Eigen::SparseMatrix<double> assemble_jacobian(const StepProblem& problem, const Eigen::VectorXd& x) {
  const Mesh& mesh = *problem.mesh;
  const int cells = mesh.cells();
  std::array<VectorX<ADScalar>, kColors> seeded_residual;
  for (int col = 0; col < kColors; ++col) {
    VectorX<ADScalar> xa(x.size());
    for (Eigen::Index u = 0; u < x.size(); ++u) xa(u) = ADScalar(x(u));
    for (int p = 0; p < cells; ++p) {
      if (color(mesh, p) != col) continue;
      for (int s = 0; s < kUnknownsPerCell; ++s) {
        xa(p * kUnknownsPerCell + s).derivatives()(s) = 1.0;
      }
    }
    seeded_residual[col] = assemble_scaled<ADScalar>(problem, xa);
  }

  auto J = jacobian_pattern(mesh);
  for (int outer = 0; outer < J.outerSize(); ++outer) {
    const int q = outer / kUnknownsPerCell;
    const int s = outer % kUnknownsPerCell;
    const auto& F = seeded_residual[color(mesh, q)];
    for (Eigen::SparseMatrix<double>::InnerIterator it(J, outer); it; ++it) {
      it.valueRef() = F(it.row()).derivatives()(s);
    }
  }
  return J;
}

Eigen::MatrixXd finite_difference_jacobian(const StepProblem& problem, const Eigen::VectorXd& x,
                                           double relative_step) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd J(n, n);
  Eigen::VectorXd xp = x;
  for (Eigen::Index u = 0; u < n; ++u) {
    const bool is_potential = (u % kUnknownsPerCell) >= 9;
    const double typical = is_potential ? 0.1 : 1.0;
    const double h = relative_step * std::max(std::abs(x(u)), typical);
    xp(u) = x(u) + h;
    const Eigen::VectorXd fp = scaled_residual(problem, xp);
    xp(u) = x(u) - h;
    const Eigen::VectorXd fm = scaled_residual(problem, xp);
    xp(u) = x(u);
    J.col(u) = (fp - fm) / (2.0 * h);
  }
  return J;
}

std::vector<std::string> null_blocks(const Eigen::SparseMatrix<double>& J, int cells) {
  Eigen::VectorXd row_abs = Eigen::VectorXd::Zero(J.rows());
  for (int outer = 0; outer < J.outerSize(); ++outer) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(J, outer); it; ++it) {
      row_abs(it.row()) += std::abs(it.value());
    }
  }
  std::set<int> slots;
  for (int p = 0; p < cells; ++p) {
    for (int s = 0; s < kUnknownsPerCell; ++s) {
      if (row_abs(p * kUnknownsPerCell + s) == 0.0) slots.insert(s);
    }
  }
  std::vector<std::string> names;
  for (int s : slots) names.push_back(block_name(s));
  return names;
}

Integrator::Integrator(Mesh mesh, ParameterSet params, SolverConfig config)
    : mesh_(std::move(mesh)), params_(std::move(params)), config_(config) {
  gauge_cell_ = mesh_.has_bath(Compartment::ex) ? -1 : 0;
}

StepProblem Integrator::problem(const TridomainState& prev, const std::vector<GatingState>& gating,
                                double dt) const {
  StepProblem pb;
  pb.mesh = &mesh_;
  pb.params = &params_;
  pb.prev = &prev;
  pb.gating = &gating;
  pb.stimulus = stimulus_ ? &*stimulus_ : nullptr;
  pb.dt = dt;
  pb.t0 = prev.t;
  pb.gauge_cell = gauge_cell_;
  return pb;
}

void Integrator::factorize(const Eigen::SparseMatrix<double>& J, double t) {
  if (auto nulls = null_blocks(J, mesh_.cells()); !nulls.empty()) {
    std::string msg = "singular Jacobian: null block";
    for (const auto& b : nulls) msg += " " + b;
    throw SolverError(msg, t);
  }
  if (!pattern_ready_) {
    lu_.analyzePattern(J);
    pattern_ready_ = true;
  }
  lu_.factorize(J);
  if (lu_.info() != Eigen::Success) {
    have_factor_ = false;
    throw SolverError("singular Jacobian: sparse LU factorization failed (" + lu_.lastErrorMessage() + ")", t);
  }
  have_factor_ = true;
}

TridomainState Integrator::step(const TridomainState& state, double dt, StepReport* report) {
  const auto wall_start = std::chrono::steady_clock::now();
  StepReport rep;
  if (!(dt > 0)) throw SolverError("step: dt must be positive", state.t);

  TridomainState next = state;
  const Field<double> V_old = state.membrane_potential(Compartment::ax);
  for (int q = 0; q < mesh_.cells(); ++q) {
    next.gating[q] = gating_step(state.gating[q], V_old(q), dt, params_.V_rest_hh);
  }
  const StepProblem pb = problem(state, next.gating, dt);

  Eigen::VectorXd x = pack(state);
  Eigen::VectorXd F;
  try {
    F = scaled_residual(pb, x);
  } catch (const std::domain_error& e) {
    throw SolverError(std::string("step: invalid input state: ") + e.what(), state.t);
  }
  double r = max_abs(F);
  rep.initial_residual = r;
  const double target = std::max(config_.newton_tol * r, config_.newton_abs_tol);

  bool need_fresh = !have_factor_ || factor_dt_ != dt;
  bool clipped = false;
  bool converged = false;
  int it = 0;
  while (true) {
    if (r <= target && !clipped) {
      converged = true;
      break;
    }
    if (it >= config_.newton_max_iter) break;
    bool fresh = false;
    if (need_fresh) {
      const auto J = assemble_jacobian(pb, x);
      factorize(J, state.t);
      factor_dt_ = dt;
      ++rep.jacobian_evaluations;
      fresh = true;
      need_fresh = false;
    }
    const Eigen::VectorXd dx = -lu_.solve(F);
    if (!dx.allFinite()) {
      if (fresh) break;
      need_fresh = true;
      continue;
    }

    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd x_try;
    Eigen::VectorXd F_try;
    double r_try = std::numeric_limits<double>::infinity();
    bool clip_try = false;
    for (int ls = 0; ls < 10; ++ls) {
      x_try = x + alpha * dx;
      clip_try = clip_concentrations(x_try);
      try {
        F_try = scaled_residual(pb, x_try);
        r_try = max_abs(F_try);
      } catch (const std::domain_error&) {
        r_try = std::numeric_limits<double>::infinity();
      }
      if (std::isfinite(r_try) && (r_try <= (1.0 - 1e-4 * alpha) * r || r_try <= target)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    ++it;
    if (!accepted) {
      // A full step that cannot lower a residual already at roundoff level
      // is stagnation, not failure.
      if (fresh && r <= 1e3 * target && !clipped) {
        converged = true;
        break;
      }
      if (fresh) break;
      need_fresh = true;
      continue;
    }
    if (!fresh && r_try > 0.1 * r) need_fresh = true;
    x = std::move(x_try);
    F = std::move(F_try);
    r = r_try;
    clipped = clip_try;
  }

  rep.newton_iterations = it;
  rep.final_residual = r;
  rep.converged = converged;
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  if (report) *report = rep;
  if (!converged) {
    have_factor_ = false;
    std::ostringstream msg;
    msg << "Newton failed to converge at t = " << state.t << " s (dt = " << dt << " s, residual " << r
        << " after " << it << " iterations, target " << target << ")";
    throw SolverError(msg.str(), state.t);
  }
  unpack(x, next);
  next.t = state.t + dt;
  return next;
}

TridomainState Integrator::advance(const TridomainState& state, double dt, StepReport* report) {
  std::function<TridomainState(const TridomainState&, double, int)> go =
      [&](const TridomainState& s, double h, int depth) -> TridomainState {
    try {
      return step(s, h, report);
    } catch (const SolverError&) {
      if (depth >= config_.max_halvings) throw;
      if (report) report->dt_rejected = true;
      auto half = go(s, 0.5 * h, depth + 1);
      return go(half, 0.5 * h, depth + 1);
    }
  };
  auto out = go(state, dt, 0);
  out.t = state.t + dt;
  return out;
}

TridomainState step(const TridomainState& state, double dt, const ParameterSet& params, const Mesh& mesh,
                    const SolverConfig& config, StepReport* report) {
  Integrator integrator(mesh, params, config);
  return integrator.step(state, dt, report);
}

RestMetrics rest_metrics(const TridomainState& before, const TridomainState& after, double dt) {
  RestMetrics m;
  for (auto k : {Compartment::ax, Compartment::gl}) {
    const Field<double> dV = after.membrane_potential(k) - before.membrane_potential(k);
    m.max_dVdt = std::max(m.max_dVdt, dV.cwiseAbs().maxCoeff() / dt);
  }
  for (auto k : kCompartments) {
    for (auto i : kIons) {
      const Field<double> rel =
          (after.conc(k, i) - before.conc(k, i)).cwiseAbs().cwiseQuotient(before.conc(k, i));
      m.max_rel_dc = std::max(m.max_rel_dc, rel.maxCoeff());
    }
  }
  return m;
}

TridomainState find_rest_state(const ParameterSet& params, const Mesh& mesh, const SolverConfig& config,
                               RestReport* report) {
  Integrator integrator(mesh, params, config);
  TridomainState state = uniform_state(mesh, params, params.V_rest_hh, params.V_rest_hh);
  RestReport rep;
  double dt = config.dt;
  double t = 0;
  RestMetrics metrics{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  while (true) {
    if (t > config.rest_horizon) {
      std::ostringstream msg;
      msg << "rest state not reached within " << config.rest_horizon << " s: max |dV/dt| = " << metrics.max_dVdt
          << " V/s, max relative dc per step = " << metrics.max_rel_dc;
      throw SolverError(msg.str(), t);
    }
    StepReport sr;
    TridomainState next;
    try {
      next = integrator.step(state, dt, &sr);
    } catch (const SolverError&) {
      dt *= 0.25;
      if (dt < 1e-3 * config.dt) throw;
      continue;
    }
    state = std::move(next);
    t += dt;
    ++rep.steps;
    if (sr.newton_iterations <= 6) dt = std::min(1.5 * dt, config.rest_dt_max);

    if (dt >= config.rest_dt_max || rep.steps % 50 == 0) {
      TridomainState probe_start = state;
      probe_start.t = 0;
      const auto probe = integrator.step(probe_start, config.dt);
      metrics = rest_metrics(probe_start, probe, config.dt);
      if (metrics.max_dVdt < config.rest_dVdt_tol && metrics.max_rel_dc < config.rest_dc_tol) break;
    }
  }
  rep.simulated_time = t;
  rep.max_dVdt = metrics.max_dVdt;
  rep.max_rel_dc = metrics.max_rel_dc;
  if (report) *report = rep;
  state.t = 0;
  return state;
}

JacobianCheck jacobian_check(const TridomainState& state, double dt, const ParameterSet& params,
                             const Mesh& mesh, double relative_step, double floor) {
  StepProblem pb;
  pb.mesh = &mesh;
  pb.params = &params;
  pb.prev = &state;
  pb.gating = &state.gating;
  pb.dt = dt;
  pb.t0 = state.t;
  pb.gauge_cell = mesh.has_bath(Compartment::ex) ? -1 : 0;

  const Eigen::VectorXd x = pack(state);
  const Eigen::SparseMatrix<double> J = assemble_jacobian(pb, x);
  const Eigen::MatrixXd Jfd = finite_difference_jacobian(pb, x, relative_step);
  const Eigen::MatrixXd Jd = Eigen::MatrixXd(J);

  JacobianCheck out;
  out.singular_blocks = null_blocks(J, mesh.cells());
  // Rows differ in scale by orders of magnitude, so the floor is per row.
  for (Eigen::Index r = 0; r < Jd.rows(); ++r) {
    const double row_max = std::max(Jd.row(r).cwiseAbs().maxCoeff(), Jfd.row(r).cwiseAbs().maxCoeff());
    const double cut = floor * row_max;
    for (Eigen::Index c = 0; c < Jd.cols(); ++c) {
      const double a = Jd(r, c);
      const double b = Jfd(r, c);
      const double mag = std::max(std::abs(a), std::abs(b));
      if (mag <= cut || mag == 0.0) continue;
      out.max_relative_error = std::max(out.max_relative_error, std::abs(a - b) / mag);
    }
  }
  return out;
}

}  // namespace tridomain
