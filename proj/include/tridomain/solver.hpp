#pragma once

// Backward-Euler time stepping of the coupled concentration/potential system
// with Newton's method. Gating is split off and advanced first with the
// exponential integrator at the old membrane potential.

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "tridomain/mesh.hpp"
#include "tridomain/params.hpp"
#include "tridomain/transport.hpp"

namespace tridomain {

/// Unknowns per cell: nine concentrations (compartment-major) then phi_ax,
/// phi_gl, phi_ex.
inline constexpr int kUnknownsPerCell = 12;

inline constexpr int conc_slot(Compartment k, Ion i) { return idx(k) * kNumIons + idx(i); }
inline constexpr int phi_slot(Compartment k) { return 9 + idx(k); }

/// Human-readable name of a residual row within a cell block, e.g.
/// "conservation[gl][K]" or "current[ex]".
std::string block_name(int slot);

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double t) : std::runtime_error(what), t_(t) {}
  /// Simulated time at which the failure happened.
  double time() const { return t_; }

 private:
  double t_;
};

struct StepReport {
  int newton_iterations = 0;
  int jacobian_evaluations = 0;
  double initial_residual = 0;
  double final_residual = 0;
  double wall_time = 0;  // s
  bool converged = false;
  bool dt_rejected = false;
};

/// Everything a step needs besides the state.
struct StepProblem {
  const Mesh* mesh = nullptr;
  const ParameterSet* params = nullptr;
  const TridomainFields<double>* prev = nullptr;
  const std::vector<GatingState>* gating = nullptr;  // already advanced to the new level
  const StimulusProtocol* stimulus = nullptr;        // null: no stimulus
  double dt = 0;
  double t0 = 0;
  int gauge_cell = -1;  // pinned phi_ex cell when no bath face exists
};

/// Flatten / restore the per-cell unknown vector.
Eigen::VectorXd pack(const TridomainFields<double>& s);
void unpack(const Eigen::VectorXd& x, TridomainFields<double>& s);

/// Scaled residual: conservation rows times dt (mol/m^3), current rows times
/// dt / F (mol/m^3 of charge).
Eigen::VectorXd scaled_residual(const StepProblem& problem, const Eigen::VectorXd& x);

/// Residual blocks in physical units for the fields in `x`.
Residual<double> physical_residual(const StepProblem& problem, const Eigen::VectorXd& x);

/// Jacobian of scaled_residual by forward-mode differentiation with a
/// distance-2 colouring of the five-point stencil.
Eigen::SparseMatrix<double> assemble_jacobian(const StepProblem& problem, const Eigen::VectorXd& x);

/// Central finite-difference Jacobian (dense); test and check use only.
Eigen::MatrixXd finite_difference_jacobian(const StepProblem& problem, const Eigen::VectorXd& x,
                                           double relative_step);

/// Names of residual blocks whose Jacobian rows are identically zero.
std::vector<std::string> null_blocks(const Eigen::SparseMatrix<double>& J, int cells);

class Integrator {
 public:
  Integrator(Mesh mesh, ParameterSet params, SolverConfig config);

  const Mesh& mesh() const { return mesh_; }
  const ParameterSet& params() const { return params_; }
  const SolverConfig& config() const { return config_; }

  void set_stimulus(std::optional<StimulusProtocol> stimulus) { stimulus_ = std::move(stimulus); }
  const std::optional<StimulusProtocol>& stimulus() const { return stimulus_; }

  /// One backward-Euler step of size dt. Throws SolverError on failure and
  /// leaves `state` untouched.
  TridomainState step(const TridomainState& state, double dt, StepReport* report = nullptr);

  /// Advances by dt, halving on rejection up to config().max_halvings times.
  TridomainState advance(const TridomainState& state, double dt, StepReport* report = nullptr);

  StepProblem problem(const TridomainState& prev, const std::vector<GatingState>& gating, double dt) const;

  int gauge_cell() const { return gauge_cell_; }

 private:
  void factorize(const Eigen::SparseMatrix<double>& J, double t);

  Mesh mesh_;
  ParameterSet params_;
  SolverConfig config_;
  std::optional<StimulusProtocol> stimulus_;
  int gauge_cell_ = -1;

  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
  bool pattern_ready_ = false;
  bool have_factor_ = false;
  double factor_dt_ = 0;
};

TridomainState step(const TridomainState& state, double dt, const ParameterSet& params,
                    const Mesh& mesh, const SolverConfig& config, StepReport* report = nullptr);

struct RestReport {
  double simulated_time = 0;
  int steps = 0;
  double max_dVdt = 0;   // V/s at the probe step
  double max_rel_dc = 0; // per probe step
};

/// Relaxes the documented starting state with no stimulus until the
/// settling criteria hold at the probe step config.dt.
TridomainState find_rest_state(const ParameterSet& params, const Mesh& mesh, const SolverConfig& config,
                               RestReport* report = nullptr);

struct RestMetrics {
  double max_dVdt = 0;
  double max_rel_dc = 0;
};

/// Rates of change over one probe step of size dt.
RestMetrics rest_metrics(const TridomainState& before, const TridomainState& after, double dt);

struct JacobianCheck {
  double max_relative_error = 0;
  std::vector<std::string> singular_blocks;
};

/// Compares the assembled Jacobian with central differences at `relative_step`.
/// Entries below `floor` times the largest |J| are skipped.
JacobianCheck jacobian_check(const TridomainState& state, double dt, const ParameterSet& params,
                             const Mesh& mesh, double relative_step = 1e-5, double floor = 1e-8);

}  // namespace tridomain
