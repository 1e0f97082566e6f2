#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "tridomain/membrane.hpp"
#include "tridomain/selfcheck.hpp"

using namespace tridomain;

namespace {

const double kE = 1.602176634e-19;
const double kVt = 1.380649e-23 * 293.15 / kE;

// Classical squid rates in 1/ms at deviation v (mV), written out directly.
struct Classic {
  double am, bm, ah, bh, an, bn;
};
Classic classic(double v) {
  return {0.1 * (25 - v) / (std::exp((25 - v) / 10) - 1), 4 * std::exp(-v / 18),
          0.07 * std::exp(-v / 20),                       1 / (std::exp((30 - v) / 10) + 1),
          0.01 * (10 - v) / (std::exp((10 - v) / 10) - 1), 0.125 * std::exp(-v / 80)};
}

}  // namespace

TEST_CASE("Nernst potential examples") {
  PhysicalConstants pc;
  CHECK(nernst_potential(3.0, 3.0, 1, pc) == 0.0);
  const double E = nernst_potential(3.0, 100.0, 1, pc);
  CHECK(E == doctest::Approx(kVt * std::log(0.03)).epsilon(1e-12));
  CHECK(E == doctest::Approx(-8.857e-2).epsilon(5e-4));
  CHECK(nernst_potential(3.0, 100.0, -1, pc) == doctest::Approx(-kVt * std::log(0.03)).epsilon(1e-12));
  CHECK(nernst_potential(3.0, 100.0, -1, pc) == doctest::Approx(8.857e-2).epsilon(5e-4));
}

TEST_CASE("Nernst antisymmetry under swapping sides") {
  PhysicalConstants pc;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> c(0.1, 200.0);
  for (int n = 0; n < 1000; ++n) {
    const double a = c(rng), b = c(rng);
    CHECK(nernst_potential(a, b, 1, pc) == doctest::Approx(-nernst_potential(b, a, 1, pc)).epsilon(1e-13));
  }
}

TEST_CASE("Nernst rejects non-positive concentrations naming species and side") {
  PhysicalConstants pc;
  try {
    nernst_potential(0.0, 10.0, 1, pc, Ion::Na);
    FAIL("expected domain_error");
  } catch (const std::domain_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("Na") != std::string::npos);
    CHECK(msg.find("extracellular") != std::string::npos);
  }
  try {
    nernst_potential(10.0, -1.0, -1, pc, Ion::Cl);
    FAIL("expected domain_error");
  } catch (const std::domain_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("Cl") != std::string::npos);
    CHECK(msg.find("intracellular") != std::string::npos);
  }
}

TEST_CASE("channel flux") {
  CHECK(channel_flux(1.0, -0.07, -0.07, 1) == 0.0);
  const double J = channel_flux(1.0, 2.526e-2, 0.0, 1);
  CHECK(J == doctest::Approx(2.526e-2 / kE).epsilon(1e-15));
  CHECK(J == doctest::Approx(1.577e17).epsilon(5e-4));
  CHECK(channel_flux(1.0, 2.526e-2, 0.0, -1) == doctest::Approx(-J).epsilon(1e-15));
  CHECK(channel_flux(3.0, 2.526e-2, 0.0, 1) == doctest::Approx(3 * J).epsilon(1e-15));
  CHECK(channel_flux(1.0, 2 * 2.526e-2, 0.0, 1) == doctest::Approx(2 * J).epsilon(1e-15));
}

TEST_CASE("capacitive flux") {
  CHECK(capacitive_flux(7.5e-3, 1.0 / 3, 1, 0.0) == 0.0);
  const double J = capacitive_flux(7.5e-3, 1.0 / 3, 1, 1.0);
  CHECK(J == doctest::Approx(7.5e-3 / 3 / kE).epsilon(1e-15));
  CHECK(J == doctest::Approx(1.5606e16).epsilon(5e-4));
}

TEST_CASE("charge identity within 10 ulps for randomized inputs") {
  const CheckResult r = check_lambda_identity(100000, 11);
  INFO(r.detail);
  CHECK(r.passed);
}

TEST_CASE("rate functions at the removable singularities") {
  CHECK(hh_rates(-70e-3 + 25e-3).alpha_m == doctest::Approx(1000.0).epsilon(1e-12));
  CHECK(hh_rates(-70e-3 + 10e-3).alpha_n == doctest::Approx(100.0).epsilon(1e-12));
  for (double dv : {1e-9, 1e-7, 1e-5}) {
    for (double centre : {25e-3, 10e-3}) {
      const auto lo = hh_rates(-70e-3 + centre - dv);
      const auto hi = hh_rates(-70e-3 + centre + dv);
      CHECK(std::abs(lo.alpha_m - hi.alpha_m) < 1e6 * dv);
      CHECK(std::abs(lo.alpha_n - hi.alpha_n) < 1e6 * dv);
    }
  }
}

TEST_CASE("rate functions match the classical expressions") {
  for (double v = -100; v <= 120; v += 7.3) {
    const auto c = classic(v);
    const auto r = hh_rates(-70e-3 + v * 1e-3);
    CHECK(r.alpha_m == doctest::Approx(1e3 * c.am).epsilon(1e-12));
    CHECK(r.beta_m == doctest::Approx(1e3 * c.bm).epsilon(1e-12));
    CHECK(r.alpha_h == doctest::Approx(1e3 * c.ah).epsilon(1e-12));
    CHECK(r.beta_h == doctest::Approx(1e3 * c.bh).epsilon(1e-12));
    CHECK(r.alpha_n == doctest::Approx(1e3 * c.an).epsilon(1e-12));
    CHECK(r.beta_n == doctest::Approx(1e3 * c.bn).epsilon(1e-12));
    for (double x : {r.alpha_m, r.beta_m, r.alpha_h, r.beta_h, r.alpha_n, r.beta_n}) CHECK(x >= 0);
  }
}

TEST_CASE("steady-state gates at rest") {
  const auto c = classic(0);
  const auto r = hh_rates(-70e-3);
  CHECK(r.m_inf() == doctest::Approx(c.am / (c.am + c.bm)).epsilon(1e-12));
  CHECK(r.m_inf() == doctest::Approx(0.0529).epsilon(1e-3));
  CHECK(r.n_inf() == doctest::Approx(0.3177).epsilon(1e-3));
}

TEST_CASE("gating step properties") {
  const double V = -50e-3;
  const GatingState inf = gating_steady_state(V);
  const GatingState kept = gating_step(inf, V, 1e-4);
  CHECK(kept.m == doctest::Approx(inf.m).epsilon(1e-14));
  CHECK(kept.h == doctest::Approx(inf.h).epsilon(1e-14));
  CHECK(kept.n == doctest::Approx(inf.n).epsilon(1e-14));

  const GatingState far = gating_step({0.9, 0.1, 0.8}, V, 1e3);
  CHECK(far.m == doctest::Approx(inf.m).epsilon(1e-14));
  CHECK(far.h == doctest::Approx(inf.h).epsilon(1e-14));
  CHECK(far.n == doctest::Approx(inf.n).epsilon(1e-14));

  const GatingState start{0.3, 0.6, 0.2};
  const GatingState one = gating_step(start, V, 2e-4);
  const GatingState two = gating_step(gating_step(start, V, 1e-4), V, 1e-4);
  CHECK(two.m == doctest::Approx(one.m).epsilon(1e-13));
  CHECK(two.h == doctest::Approx(one.h).epsilon(1e-13));
  CHECK(two.n == doctest::Approx(one.n).epsilon(1e-13));

  CHECK_THROWS_AS(gating_step(start, V, 0.0), std::invalid_argument);
}

TEST_CASE("gating stays in the unit cube for 1e6 randomized steps") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> volts(-0.3, 0.3);
  std::uniform_real_distribution<double> logdt(-9.0, 3.0);
  long bad = 0;
  for (int n = 0; n < 1000000; ++n) {
    const GatingState g = gating_step({unit(rng), unit(rng), unit(rng)}, volts(rng), std::pow(10.0, logdt(rng)));
    for (double x : {g.m, g.h, g.n}) {
      if (!(x >= 0.0 && x <= 1.0)) ++bad;
    }
  }
  CHECK(bad == 0);
}

TEST_CASE("pump flux") {
  const auto zero = pump_flux(15.0, 3.0, 0.0);
  for (double j : zero) CHECK(j == 0.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> c(0.1, 300.0);
  for (int n = 0; n < 1000; ++n) {
    const double na = c(rng), k = c(rng);
    const double I = pump_current(na, k, 0.02);
    const auto J = pump_flux(na, k, 0.02);
    CHECK(kE * (J[idx(Ion::Na)] + J[idx(Ion::K)]) == doctest::Approx(I).epsilon(1e-14));
    CHECK(J[idx(Ion::Cl)] == 0.0);
    CHECK(pump_current(na * 1.01, k, 0.02) > I);
    CHECK(pump_current(na, k * 1.01, 0.02) > I);
  }
  const double oracle = 0.02 * std::pow(15.0 / 25.0, 3) * std::pow(3.0 / 4.5, 2);
  CHECK(pump_current(15.0, 3.0, 0.02) == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(pump_current(1e12, 1e12, 0.02) == doctest::Approx(0.02).epsilon(1e-9));
}

TEST_CASE("total membrane flux decomposition") {
  ParameterSet p = default_parameters();
  MembraneLocalState<double> s;
  s.c_in = {15.0, 140.0, 10.0};
  s.c_ex = {120.0, 3.0, 123.0};
  s.V_m = -0.065;
  s.gating = {0.1, 0.6, 0.3};
  const double dVdt = 12.0;

  const auto f = total_membrane_flux(Membrane::ax, p, s, dVdt);
  for (auto i : kIons) {
    const int n = idx(i);
    CHECK(f.total[n] == f.J_p[n] + f.J_c[n] + f.J_m[n]);
  }

  ParameterSet conductive = p;
  conductive.lambda = {0, 0, 0};
  const auto g = total_membrane_flux(Membrane::ax, conductive, s, dVdt);
  const double gNa = p.g_leak_Na + p.gbar_Na * 0.1 * 0.1 * 0.1 * 0.6;
  const double gK = p.g_leak_K + p.gbar_K * std::pow(0.3, 4);
  const double eq1[3] = {gNa / kE * (s.V_m - kVt * std::log(120.0 / 15.0)),
                         gK / kE * (s.V_m - kVt * std::log(3.0 / 140.0)),
                         p.g_ax_Cl / -kE * (s.V_m + kVt * std::log(123.0 / 10.0))};
  const auto pump = pump_flux(15.0, 3.0, p.I_ax1, PumpConstants{p.K_Na_pump, p.K_K_pump});
  for (int n = 0; n < 3; ++n) {
    CHECK(g.J_m[n] == 0.0);
    CHECK(g.total[n] == doctest::Approx(eq1[n] + pump[n]).epsilon(1e-12));
  }
}

TEST_CASE("membrane flux vanishes at equilibrium with pumps off") {
  ParameterSet p = default_parameters();
  p.I_ax1 = p.I_ax2 = 0;
  MembraneLocalState<double> s;
  s.c_in = s.c_ex = {120.0, 3.0, 123.0};
  s.V_m = 0.0;
  s.gating = {0.5, 0.5, 0.5};
  for (auto m : {Membrane::ax, Membrane::gl}) {
    const auto f = total_membrane_flux(m, p, s, 0.0);
    for (double j : f.total) CHECK(j == 0.0);
  }

  ParameterSet off = p;
  off.g_leak_Na = off.g_leak_K = off.g_ax_Cl = off.gbar_Na = off.gbar_K = 0;
  s.c_in = {15.0, 140.0, 10.0};
  s.V_m = -0.07;
  const auto f = total_membrane_flux(Membrane::ax, off, s, 0.0);
  for (double j : f.total) CHECK(j == 0.0);
}

TEST_CASE("glial membrane ignores gating") {
  ParameterSet p = default_parameters();
  MembraneLocalState<double> s;
  s.c_in = {15.0, 140.0, 10.0};
  s.c_ex = {120.0, 3.0, 123.0};
  s.V_m = -0.05;
  s.gating = {0.0, 0.0, 0.0};
  const auto a = total_membrane_flux(Membrane::gl, p, s, 1.0);
  s.gating = {1.0, 1.0, 1.0};
  const auto b = total_membrane_flux(Membrane::gl, p, s, 1.0);
  for (int n = 0; n < 3; ++n) CHECK(a.total[n] == b.total[n]);
  CHECK(a.J_c[idx(Ion::Cl)] == 0.0);
}
