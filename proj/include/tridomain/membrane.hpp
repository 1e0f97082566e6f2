#pragma once

// Transmembrane flux physics. Every flux returned here is in ions per m^2 per
// second, positive when leaving the cell. Functions are templated on the
// scalar type so the solver can evaluate them with forward-mode derivatives.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tridomain/params.hpp"

namespace tridomain {

/// Plain value of a scalar, whatever its derivative payload.
inline double value_of(double x) { return x; }
template <typename Scalar>
double value_of(const Scalar& x) {
  return x.value();
}

/// E = (k_B T / (z e)) ln(c_ex / c_in). Throws std::domain_error naming the
/// species and side for non-positive concentrations.
template <typename Scalar>
Scalar nernst_potential(const Scalar& c_ex, const Scalar& c_in, int z,
                        const PhysicalConstants& constants, Ion species) {
  using std::log;
  if (!(value_of(c_ex) > 0)) {
    throw std::domain_error(std::string("nernst_potential: non-positive extracellular ") +
                            name(species) + " concentration");
  }
  if (!(value_of(c_in) > 0)) {
    throw std::domain_error(std::string("nernst_potential: non-positive intracellular ") +
                            name(species) + " concentration");
  }
  return (thermal_voltage(constants) / z) * log(c_ex / c_in);
}

template <typename Scalar>
Scalar nernst_potential(const Scalar& c_ex, const Scalar& c_in, int z,
                        const PhysicalConstants& constants) {
  return nernst_potential(c_ex, c_in, z, constants, z < 0 ? Ion::Cl : Ion::K);
}

/// Conductive channel flux (g / (z e)) (V_m - E), V_m = phi_in - phi_ex.
template <typename Scalar>
Scalar channel_flux(double g, const Scalar& V_m, const Scalar& E, int z) {
  return (g / (z * PhysicalConstants::e)) * (V_m - E);
}

/// Share lambda of the displacement current C_m dV/dt carried by one species.
template <typename Scalar>
Scalar capacitive_flux(double C_m, double lambda, int z, const Scalar& dVdt) {
  return (lambda * C_m / (z * PhysicalConstants::e)) * dVdt;
}

struct GatingState {
  double m = 0;
  double h = 0;
  double n = 0;

  friend bool operator==(const GatingState&, const GatingState&) = default;
};

/// Hodgkin-Huxley rate constants in 1/s.
struct HHRates {
  double alpha_m, beta_m;
  double alpha_h, beta_h;
  double alpha_n, beta_n;

  double m_inf() const { return alpha_m / (alpha_m + beta_m); }
  double h_inf() const { return alpha_h / (alpha_h + beta_h); }
  double n_inf() const { return alpha_n / (alpha_n + beta_n); }
};

namespace detail {
// u / (exp(u) - 1), continuous through u = 0.
inline double exprel_inv(double u) {
  if (std::abs(u) < 1e-6) return 1.0 - u / 2.0 + u * u / 12.0;
  return u / std::expm1(u);
}
}  // namespace detail

/// Classical squid-axon kinetics in the deviation v = V_m - V_rest (mV).
inline HHRates hh_rates(double V_m, double V_rest = -70e-3) {
  const double v = (V_m - V_rest) * 1e3;
  HHRates r;
  // Per-ms rate expressions, scaled to 1/s on return.
  r.alpha_m = detail::exprel_inv((25.0 - v) / 10.0);
  r.beta_m = 4.0 * std::exp(-v / 18.0);
  r.alpha_h = 0.07 * std::exp(-v / 20.0);
  r.beta_h = 1.0 / (std::exp((30.0 - v) / 10.0) + 1.0);
  r.alpha_n = 0.1 * detail::exprel_inv((10.0 - v) / 10.0);
  r.beta_n = 0.125 * std::exp(-v / 80.0);
  for (double* x : {&r.alpha_m, &r.beta_m, &r.alpha_h, &r.beta_h, &r.alpha_n, &r.beta_n}) {
    *x *= 1e3;
  }
  return r;
}

inline GatingState gating_steady_state(double V_m, double V_rest = -70e-3) {
  const auto r = hh_rates(V_m, V_rest);
  return {r.m_inf(), r.h_inf(), r.n_inf()};
}

/// Exponential integrator at fixed V_m: x <- x_inf + (x - x_inf) exp(-dt/tau).
inline GatingState gating_step(const GatingState& state, double V_m, double dt,
                               double V_rest = -70e-3) {
  if (!(dt > 0)) throw std::invalid_argument("gating_step: dt must be positive");
  const auto r = hh_rates(V_m, V_rest);
  auto relax = [dt](double x, double a, double b) {
    const double s = a + b;
    const double x_inf = a / s;
    const double next = x_inf + (x - x_inf) * std::exp(-dt * s);
    return std::clamp(next, 0.0, 1.0);
  };
  return {relax(state.m, r.alpha_m, r.beta_m), relax(state.h, r.alpha_h, r.beta_h),
          relax(state.n, r.alpha_n, r.beta_n)};
}

struct PumpConstants {
  double K_Na = 10.0;  // mol/m^3
  double K_K = 1.5;    // mol/m^3
};

/// Pump current I_max (Na/(Na+K_Na))^3 (K/(K+K_K))^2 in A/m^2.
template <typename Scalar>
Scalar pump_current(const Scalar& c_Na_in, const Scalar& c_K_ex, double I_max,
                    const PumpConstants& k = {}) {
  const Scalar sNa = c_Na_in / (c_Na_in + k.K_Na);
  const Scalar sK = c_K_ex / (c_K_ex + k.K_K);
  return I_max * (sNa * sNa * sNa) * (sK * sK);
}

/// 3 Na out, 2 K in per cycle; Cl is not pumped.
template <typename Scalar>
std::array<Scalar, kNumIons> pump_flux(const Scalar& c_Na_in, const Scalar& c_K_ex, double I_max,
                                       const PumpConstants& k = {}) {
  const Scalar I_p = pump_current(c_Na_in, c_K_ex, I_max, k);
  const double e = PhysicalConstants::e;
  return {3.0 * I_p / e, -2.0 * I_p / e, Scalar(0.0 * I_p)};
}

enum class Membrane { ax, gl };

template <typename Scalar>
struct MembraneFlux {
  std::array<Scalar, kNumIons> J_p;
  std::array<Scalar, kNumIons> J_c;
  std::array<Scalar, kNumIons> J_m;
  std::array<Scalar, kNumIons> total;
};

/// State seen by one patch of membrane.
template <typename Scalar>
struct MembraneLocalState {
  std::array<Scalar, kNumIons> c_in;
  std::array<Scalar, kNumIons> c_ex;
  Scalar V_m;
  GatingState gating;  // ignored for the glial membrane
};

/// Channel conductance per species. The axon carries gated Na and K plus a Cl
/// leak; the glial membrane has only the Na and K leaks.
inline std::array<double, kNumIons> membrane_conductances(Membrane k, const ParameterSet& p,
                                                          const GatingState& g) {
  if (k == Membrane::ax) {
    return {p.g_leak_Na + p.gbar_Na * g.m * g.m * g.m * g.h,
            p.g_leak_K + p.gbar_K * g.n * g.n * g.n * g.n, p.g_ax_Cl};
  }
  return {p.g_leak_Na, p.g_leak_K, 0.0};
}

inline double pump_strength(Membrane k, const ParameterSet& p) {
  return k == Membrane::ax ? p.I_ax1 : p.I_ax2;
}

template <typename Scalar>
MembraneFlux<Scalar> total_membrane_flux(Membrane k, const ParameterSet& p,
                                         const MembraneLocalState<Scalar>& s, const Scalar& dVdt) {
  MembraneFlux<Scalar> f;
  const auto g = membrane_conductances(k, p, s.gating);
  f.J_p = pump_flux(s.c_in[idx(Ion::Na)], s.c_ex[idx(Ion::K)], pump_strength(k, p),
                    PumpConstants{p.K_Na_pump, p.K_K_pump});
  for (auto i : kIons) {
    const int n = idx(i);
    const int z = valence(i);
    if (g[n] != 0.0) {
      const Scalar E = nernst_potential(s.c_ex[n], s.c_in[n], z, p.constants, i);
      f.J_c[n] = channel_flux(g[n], s.V_m, E, z);
    } else {
      f.J_c[n] = Scalar(0.0 * s.V_m);
    }
    f.J_m[n] = capacitive_flux(p.C_m, p.lambda[n], z, dVdt);
    f.total[n] = f.J_p[n] + f.J_c[n] + f.J_m[n];
  }
  return f;
}

}  // namespace tridomain
