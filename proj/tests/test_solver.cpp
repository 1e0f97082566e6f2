#include <doctest.h>

#include <cmath>

#include "tridomain/membrane.hpp"
#include "tridomain/selfcheck.hpp"
#include "tridomain/solver.hpp"

using namespace tridomain;

namespace {

ParameterSet params_for(int Nr, int Nz) {
  ParameterSet p = default_parameters();
  p.geometry.Nr = Nr;
  p.geometry.Nz = Nz;
  return p;
}

struct Fixture {
  ParameterSet params;
  Mesh mesh;
  SolverConfig config;
  TridomainState rest;
};

// Rest state of a coarse open nerve, computed once.
const Fixture& coarse() {
  static const Fixture f = [] {
    Fixture x{params_for(2, 16), {}, {}, {}};
    x.mesh = build_mesh(x.params.geometry);
    x.rest = find_rest_state(x.params, x.mesh, x.config);
    return x;
  }();
  return f;
}

double max_abs_diff(const Field<double>& a, const Field<double>& b) { return (a - b).cwiseAbs().maxCoeff(); }

TridomainState run(Integrator& integ, TridomainState s, double dt, int steps) {
  for (int n = 0; n < steps; ++n) s = integ.advance(s, dt);
  return s;
}

StimulusProtocol single_pulse() {
  StimulusProtocol proto;
  proto.count = 1;
  return proto;
}

}  // namespace

TEST_CASE("rest state is a fixed point") {
  const Fixture& f = coarse();
  Integrator integ(f.mesh, f.params, f.config);
  StepReport rep;
  const TridomainState next = integ.step(f.rest, f.config.dt, &rep);
  CHECK(rep.converged);
  for (auto k : {Compartment::ax, Compartment::gl}) {
    CHECK(max_abs_diff(next.membrane_potential(k), f.rest.membrane_potential(k)) < 1e-9);
  }

  const TridomainState later = run(integ, f.rest, 1e-2, 100);
  CHECK(later.t == doctest::Approx(1.0).epsilon(1e-12));
  for (auto k : {Compartment::ax, Compartment::gl}) {
    CHECK(max_abs_diff(later.membrane_potential(k), f.rest.membrane_potential(k)) < 1e-4);
  }
}

TEST_CASE("rest potentials are negative and ordered as expected") {
  const Fixture& f = coarse();
  const double V_ax = f.rest.membrane_potential(Compartment::ax)(0);
  const double V_gl = f.rest.membrane_potential(Compartment::gl)(0);
  MESSAGE("rest V_ax " << V_ax * 1e3 << " mV, V_gl " << V_gl * 1e3 << " mV");
  CHECK(V_ax < -0.05);
  CHECK(V_ax > -0.09);
  CHECK(V_gl < 0);
}

TEST_CASE("passive rest potential lies between the Nernst potentials") {
  ParameterSet p = params_for(1, 2);
  p.I_ax1 = p.I_ax2 = 0;
  const Mesh mesh = build_mesh(p.geometry, 1, 2, BoundaryPolicy::sealed);
  SolverConfig cfg;
  Integrator integ(mesh, p, cfg);
  const TridomainState s = run(integ, uniform_state(mesh, p, -0.07, -0.07), 1e-3, 300);
  for (auto m : {Membrane::ax, Membrane::gl}) {
    const Compartment k = compartment_of(m);
    const auto g = membrane_conductances(m, p, s.gating[0]);
    double lo = 1, hi = -1;
    for (auto i : kIons) {
      if (g[idx(i)] == 0) continue;
      const double E = nernst_potential(s.conc(Compartment::ex, i)(0), s.conc(k, i)(0), valence(i), p.constants, i);
      lo = std::min(lo, E);
      hi = std::max(hi, E);
    }
    const double V = s.membrane_potential(k)(0);
    CHECK(V > lo);
    CHECK(V < hi);
  }
}

TEST_CASE("electroneutrality is held through an action potential") {
  const Fixture& f = coarse();
  Integrator integ(f.mesh, f.params, f.config);
  integ.set_stimulus(single_pulse());
  TridomainState s = f.rest;
  double worst = electroneutrality_error(s);
  for (int n = 0; n < 400; ++n) {
    s = integ.advance(s, f.config.dt);
    worst = std::max(worst, electroneutrality_error(s));
  }
  MESSAGE("max electroneutrality error " << worst);
  CHECK(worst < 1e-10);
}

TEST_CASE("passive membrane charges like an RC circuit") {
  ParameterSet p = params_for(1, 2);
  p.gbar_Na = p.gbar_K = 0;
  const Mesh mesh = build_mesh(p.geometry, 1, 2, BoundaryPolicy::sealed);
  SolverConfig cfg;
  const TridomainState rest = find_rest_state(p, mesh, cfg);

  const double G = p.g_leak_Na + p.g_leak_K + p.g_ax_Cl;
  const double tau = p.C_m / G;
  const double dV = 1e-3;
  p.I_shock = G * dV;
  StimulusProtocol proto;
  proto.onset = 0;
  proto.duration = 1;
  proto.count = 1;
  proto.length = p.geometry.L;

  Integrator integ(mesh, p, cfg);
  integ.set_stimulus(proto);
  const double V0 = rest.membrane_potential(Compartment::ax)(0);
  TridomainState s = rest;
  const double dt = 1e-5;
  for (double t_check : {tau, 2 * tau, 5 * tau}) {
    while (s.t < t_check - dt / 2) s = integ.advance(s, dt);
    const double oracle = dV * (1 - std::exp(-s.t / tau));
    const double got = s.membrane_potential(Compartment::ax)(0) - V0;
    MESSAGE("t/tau " << s.t / tau << ": " << got * 1e3 << " mV vs " << oracle * 1e3 << " mV");
    CHECK(std::abs(got - oracle) < 0.02 * oracle);
  }
}

TEST_CASE("time stepping converges at first order") {
  const Fixture& f = coarse();
  const double T = 3e-3;
  std::vector<Field<double>> V;
  for (double dt : {4e-5, 2e-5, 1e-5}) {
    Integrator integ(f.mesh, f.params, f.config);
    integ.set_stimulus(single_pulse());
    V.push_back(run(integ, f.rest, dt, static_cast<int>(std::lround(T / dt))).membrane_potential(Compartment::ax));
  }
  const double e1 = max_abs_diff(V[0], V[1]), e2 = max_abs_diff(V[1], V[2]);
  MESSAGE("self-convergence differences " << e1 << " " << e2 << "; order " << std::log2(e1 / e2));
  // The observed order approaches 1 from below.
  CHECK(std::log2(e1 / e2) >= 0.95);
}

TEST_CASE("assembled Jacobian matches central differences") {
  const ParameterSet p = params_for(4, 4);
  const Mesh mesh = build_mesh(p.geometry);
  const TridomainState s = random_state(mesh, p, 3);
  const JacobianCheck check = jacobian_check(s, 1e-5, p, mesh);
  CHECK(check.max_relative_error < 1e-5);
  CHECK(check.singular_blocks.empty());

  // Truncation error of the difference quotient falls as h^2.
  const double coarse_err = jacobian_check(s, 1e-5, p, mesh, 1e-3, 1e-3).max_relative_error;
  const double fine_err = jacobian_check(s, 1e-5, p, mesh, 1e-4, 1e-3).max_relative_error;
  MESSAGE("errors at h 1e-3, 1e-4: " << coarse_err << " " << fine_err);
  CHECK(coarse_err / fine_err > 30);
}

TEST_CASE("null residual blocks are reported") {
  ParameterSet p = params_for(2, 3);
  p.g_leak_Na = p.g_leak_K = p.g_ax_Cl = p.gbar_Na = p.gbar_K = 0;
  p.I_ax1 = p.I_ax2 = 0;
  p.C_m = 0;
  p.D_free = {0, 0, 0};
  const Mesh mesh = build_mesh(p.geometry);
  const TridomainState s = uniform_state(mesh, p, -0.07, -0.03);
  const JacobianCheck check = jacobian_check(s, 1e-5, p, mesh);
  REQUIRE_FALSE(check.singular_blocks.empty());
  CHECK(check.singular_blocks.front().find("current") != std::string::npos);

  // The stimulus makes the first residual nonzero, so a Newton update is needed.
  Integrator integ(mesh, p, SolverConfig{});
  StimulusProtocol proto = single_pulse();
  proto.onset = 0;
  integ.set_stimulus(proto);
  try {
    (void)integ.step(s, 1e-5);
    FAIL("expected a solver error");
  } catch (const SolverError& e) {
    CHECK(std::string(e.what()).find("null block") != std::string::npos);
  }
}

TEST_CASE("runs are bit-identical") {
  const Fixture& f = coarse();
  auto once = [&] {
    Integrator integ(f.mesh, f.params, f.config);
    integ.set_stimulus(single_pulse());
    return run(integ, f.rest, f.config.dt, 150);
  };
  const TridomainState a = once(), b = once();
  CHECK(a == b);
}

TEST_CASE("a rejected step leaves the integrator usable") {
  const Fixture& f = coarse();
  SolverConfig strict = f.config;
  strict.newton_max_iter = 1;
  strict.newton_tol = 1e-30;
  strict.newton_abs_tol = 0;
  strict.max_halvings = 0;
  Integrator integ(f.mesh, f.params, strict);
  integ.set_stimulus(single_pulse());
  TridomainState start = f.rest;
  start.t = 1.5e-3;
  const TridomainState copy = start;
  CHECK_THROWS_AS((void)integ.advance(start, 1e-3), SolverError);
  CHECK(start == copy);


  // Whatever the outcome of a large step, the next step must not depend on it.
  Integrator fresh(f.mesh, f.params, f.config);
  fresh.set_stimulus(single_pulse());
  Integrator reused(f.mesh, f.params, f.config);
  reused.set_stimulus(single_pulse());
  try {
    (void)reused.step(start, 0.5);
  } catch (const SolverError&) {
  }
  CHECK(reused.step(start, f.config.dt) == fresh.step(start, f.config.dt));
}

TEST_CASE("sealed nerve conserves every species") {
  ParameterSet p = params_for(2, 6);
  const Mesh mesh = build_mesh(p.geometry, 2, 6, BoundaryPolicy::sealed);
  SolverConfig cfg;
  cfg.sealed = true;
  Integrator integ(mesh, p, cfg);
  StimulusProtocol proto = single_pulse();
  proto.onset = 0;
  integ.set_stimulus(proto);
  TridomainState s = uniform_state(mesh, p, -0.07, -0.03);
  std::array<double, kNumIons> start{};
  for (auto i : kIons) start[idx(i)] = total_content(s, mesh, p, i);
  for (int n = 0; n < 200; ++n) s = integ.advance(s, cfg.dt);
  for (auto i : kIons) {
    const double drift = std::abs(total_content(s, mesh, p, i) - start[idx(i)]) / start[idx(i)];
    INFO(name(i) << " drift " << drift);
    CHECK(drift < 1e-10);
  }
}
