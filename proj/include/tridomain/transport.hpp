#pragma once

// Semi-discrete tridomain system: Nernst-Planck fluxes inside each
// compartment, the nine ion-conservation residuals and the three
// current-conservation residuals. Conservation residuals are in mol/m^3/s,
// current residuals in A/m^3.

#include <array>
#include <vector>

#include "tridomain/membrane.hpp"
#include "tridomain/mesh.hpp"
#include "tridomain/params.hpp"

namespace tridomain {

template <typename Scalar>
using SpeciesFields = std::array<Field<Scalar>, kNumIons>;

/// Concentrations c[k][i] (mol/m^3) and potentials phi[k] (V).
template <typename Scalar = double>
struct TridomainFields {
  std::array<SpeciesFields<Scalar>, kNumCompartments> c;
  std::array<Field<Scalar>, kNumCompartments> phi;

  const Field<Scalar>& conc(Compartment k, Ion i) const { return c[idx(k)][idx(i)]; }
  Field<Scalar>& conc(Compartment k, Ion i) { return c[idx(k)][idx(i)]; }
  const Field<Scalar>& potential(Compartment k) const { return phi[idx(k)]; }
  Field<Scalar>& potential(Compartment k) { return phi[idx(k)]; }
};

struct TridomainState : TridomainFields<double> {
  std::vector<GatingState> gating;                // one per cell, axon membrane
  std::array<double, kNumCompartments> a{};       // fixed background charge, C/m^3
  double t = 0;                                   // s

  Field<double> membrane_potential(Compartment k) const { return phi[idx(k)] - phi[idx(Compartment::ex)]; }
};

bool operator==(const TridomainState& lhs, const TridomainState& rhs);

/// Conservation blocks indexed [compartment][species].
template <typename Scalar>
using ConservationResidual = std::array<SpeciesFields<Scalar>, kNumCompartments>;

/// Current blocks indexed by compartment: gl and ax are the membrane current
/// balances, ex is total current conservation.
template <typename Scalar>
using CurrentResidual = std::array<Field<Scalar>, kNumCompartments>;

template <typename Scalar = double>
struct Residual {
  ConservationResidual<Scalar> conservation;
  CurrentResidual<Scalar> current;
};

/// Molar transmembrane flux (mol/m^2/s, positive outward) per membrane and
/// species; index 0 is the axon membrane, 1 the glial membrane.
template <typename Scalar>
struct MembraneSources {
  std::array<SpeciesFields<Scalar>, 2> J;

  const Field<Scalar>& of(Membrane m, Ion i) const { return J[static_cast<int>(m)][idx(i)]; }
  Field<Scalar>& of(Membrane m, Ion i) { return J[static_cast<int>(m)][idx(i)]; }
};

inline Compartment compartment_of(Membrane m) {
  return m == Membrane::ax ? Compartment::ax : Compartment::gl;
}

/// Nernst-Planck flux j = -D (grad c + z c grad(phi) / V_T) on faces, in
/// mol/m^2/s. Diffusion is central; the drift term takes the upwind cell
/// value. Extracellular bath faces see the bath concentration at phi = 0.
template <typename Scalar>
FaceField<Scalar> np_flux(Compartment k, Ion i, const TridomainFields<Scalar>& s, const Mesh& mesh,
                          const ParameterSet& p) {
  const double D = p.D(k, i);
  const int z = valence(i);
  const double VT = thermal_voltage(p.constants);
  const double c_bath = p.bath[idx(i)];
  const auto& c = s.conc(k, i);
  const auto& phi = s.potential(k);
  const auto gc = gradient_along_faces(c, mesh, k, c_bath);
  const auto gphi = gradient_along_faces(phi, mesh, k, 0.0);

  auto flux = FaceField<Scalar>::zeros(mesh);
  auto face_flux = [&](const Scalar& grad_c, const Scalar& grad_phi, const Scalar& c_minus,
                       const Scalar& c_plus) -> Scalar {
    const Scalar v = (-D * z / VT) * grad_phi;
    const Scalar c_up = value_of(v) > 0 ? c_minus : c_plus;
    return -D * grad_c + v * c_up;
  };
  const Scalar bath_c(c_bath);

  if (axis_policy(k) == AxisPolicy::full) {
    const auto& tag = mesh.radial_tag[idx(k)];
    for (int l = 0; l < mesh.Nz; ++l) {
      for (int j = 0; j <= mesh.Nr; ++j) {
        const int f = mesh.radial_face(j, l);
        if (tag[f] == FaceTag::interior) {
          flux.radial(f) = face_flux(gc.radial(f), gphi.radial(f), c(mesh.cell(j - 1, l)), c(mesh.cell(j, l)));
        } else if (tag[f] == FaceTag::bath) {
          flux.radial(f) = face_flux(gc.radial(f), gphi.radial(f), c(mesh.cell(j - 1, l)), bath_c);
        }
      }
    }
  }
  const auto& tag = mesh.axial_tag[idx(k)];
  for (int l = 0; l <= mesh.Nz; ++l) {
    for (int j = 0; j < mesh.Nr; ++j) {
      const int f = mesh.axial_face(j, l);
      if (tag[f] == FaceTag::interior) {
        flux.axial(f) = face_flux(gc.axial(f), gphi.axial(f), c(mesh.cell(j, l - 1)), c(mesh.cell(j, l)));
      } else if (tag[f] == FaceTag::bath) {
        flux.axial(f) = l == 0 ? face_flux(gc.axial(f), gphi.axial(f), bath_c, c(mesh.cell(j, 0)))
                               : face_flux(gc.axial(f), gphi.axial(f), c(mesh.cell(j, l - 1)), bath_c);
      }
    }
  }
  return flux;
}

/// div(eta_k j_k^i) per cell for every compartment and species.
template <typename Scalar>
ConservationResidual<Scalar> transport_divergence(const TridomainFields<Scalar>& s, const Mesh& mesh,
                                                  const ParameterSet& p) {
  ConservationResidual<Scalar> div;
  for (auto k : kCompartments) {
    for (auto i : kIons) {
      div[idx(k)][idx(i)] = p.eta(k) * divergence(np_flux(k, i, s, mesh, p), mesh, axis_policy(k));
    }
  }
  return div;
}

/// Transmembrane sources at the new time level. dV/dt is the backward
/// difference of V_m against `prev`.
template <typename Scalar>
MembraneSources<Scalar> membrane_sources(const TridomainFields<Scalar>& s,
                                         const TridomainFields<double>& prev,
                                         const std::vector<GatingState>& gating, double dt,
                                         const ParameterSet& p) {
  const int n = static_cast<int>(s.phi[0].size());
  MembraneSources<Scalar> out;
  for (auto& per_membrane : out.J) {
    for (auto& f : per_membrane) f.resize(n);
  }
  const auto& phi_ex = s.potential(Compartment::ex);
  const auto& phi_ex_prev = prev.potential(Compartment::ex);
  for (auto m : {Membrane::ax, Membrane::gl}) {
    const Compartment k = compartment_of(m);
    for (int q = 0; q < n; ++q) {
      MembraneLocalState<Scalar> local;
      for (auto i : kIons) {
        local.c_in[idx(i)] = s.conc(k, i)(q);
        local.c_ex[idx(i)] = s.conc(Compartment::ex, i)(q);
      }
      local.V_m = s.potential(k)(q) - phi_ex(q);
      local.gating = gating.empty() ? GatingState{} : gating[q];
      const double V_prev = prev.potential(k)(q) - phi_ex_prev(q);
      const Scalar dVdt = (local.V_m - V_prev) / dt;
      const auto flux = total_membrane_flux(m, p, local, dVdt);
      for (auto i : kIons) out.of(m, i)(q) = flux.total[idx(i)] / PhysicalConstants::N_A;
    }
  }
  return out;
}

/// eta_k (c - c_prev)/dt + membrane terms + div(eta_k j_k). Membrane terms are
/// outflow-positive for ax and gl; ex receives both with opposite sign.
/// `div` is transport_divergence(s, mesh, p).
template <typename Scalar>
ConservationResidual<Scalar> conservation_residual(const TridomainFields<Scalar>& s,
                                                   const TridomainFields<double>& prev, double dt,
                                                   const MembraneSources<Scalar>& J,
                                                   const ParameterSet& p,
                                                   ConservationResidual<Scalar> div) {
  for (auto i : kIons) {
    const int n = idx(i);
    for (auto k : kCompartments) {
      div[idx(k)][n] += p.eta(k) * (s.conc(k, i) - prev.conc(k, i).template cast<Scalar>()) / dt;
    }
    div[idx(Compartment::ax)][n] += p.M_ax * J.of(Membrane::ax, i);
    div[idx(Compartment::gl)][n] += p.M_gl * J.of(Membrane::gl, i);
    div[idx(Compartment::ex)][n] -= p.M_ax * J.of(Membrane::ax, i) + p.M_gl * J.of(Membrane::gl, i);
  }
  return div;
}

template <typename Scalar>
ConservationResidual<Scalar> conservation_residual(const TridomainFields<Scalar>& s,
                                                   const TridomainFields<double>& prev, double dt,
                                                   const MembraneSources<Scalar>& J, const Mesh& mesh,
                                                   const ParameterSet& p) {
  return conservation_residual(s, prev, dt, J, p, transport_divergence(s, mesh, p));
}

/// The three z-weighted current equations exactly as in the model: membrane
/// current balance for gl and ax, total current conservation for ex.
template <typename Scalar>
CurrentResidual<Scalar> current_residual(const MembraneSources<Scalar>& J, const ParameterSet& p,
                                         const ConservationResidual<Scalar>& div) {
  const double F = PhysicalConstants::faraday;
  const auto n = div[0][0].size();
  CurrentResidual<Scalar> r;
  for (auto& f : r) f = Field<Scalar>::Constant(n, Scalar(0.0));
  for (auto i : kIons) {
    const double zF = valence(i) * F;
    const int m = idx(i);
    r[idx(Compartment::gl)] += zF * (p.M_gl * J.of(Membrane::gl, i) + div[idx(Compartment::gl)][m]);
    r[idx(Compartment::ax)] += zF * (p.M_ax * J.of(Membrane::ax, i) + div[idx(Compartment::ax)][m]);
    r[idx(Compartment::ex)] +=
        zF * (div[idx(Compartment::gl)][m] + div[idx(Compartment::ax)][m] + div[idx(Compartment::ex)][m]);
  }
  return r;
}

template <typename Scalar>
CurrentResidual<Scalar> current_residual(const TridomainFields<Scalar>& s,
                                         const MembraneSources<Scalar>& J, const Mesh& mesh,
                                         const ParameterSet& p) {
  return current_residual(J, p, transport_divergence(s, mesh, p));
}

/// Fraction of [t0, t1] covered by stimulus pulses.
double stimulus_fraction(const StimulusProtocol& protocol, double t0, double t1);

/// Cells whose axon membrane receives the stimulus: the axial slabs with
/// z_center < protocol.length (at least the first slab).
std::vector<int> stimulated_cells(const StimulusProtocol& protocol, const Mesh& mesh);

/// Equivalent transmembrane flux of the stimulus (ions/m^2/s, outward
/// positive) while the pulse is on: -I_shock / (z e) for the carrier.
double stimulus_flux(const StimulusProtocol& protocol, double I_shock);

/// Adds the stimulus as a carrier-ion flux across the stimulated axon
/// membrane, averaged over the step [t0, t1].
template <typename Scalar>
void apply_stimulus(Residual<Scalar>& r, const StimulusProtocol& protocol, double I_shock, double t0,
                    double t1, const Mesh& mesh, const ParameterSet& p) {
  const double frac = stimulus_fraction(protocol, t0, t1);
  if (frac == 0.0) return;
  const double J = frac * stimulus_flux(protocol, I_shock) / PhysicalConstants::N_A;
  const Ion carrier = protocol.carrier;
  const double zF = valence(carrier) * PhysicalConstants::faraday;
  for (int q : stimulated_cells(protocol, mesh)) {
    r.conservation[idx(Compartment::ax)][idx(carrier)](q) += p.M_ax * J;
    r.conservation[idx(Compartment::ex)][idx(carrier)](q) -= p.M_ax * J;
    r.current[idx(Compartment::ax)](q) += zF * p.M_ax * J;
  }
}

/// Largest dt for which an explicit Euler transport step from `s` keeps every
/// concentration positive: the inverse of the largest per-cell outflow rate
/// sum_f (A_f / V) (D / d_f + max(v_out, 0)).
double positivity_time_step(const TridomainFields<double>& s, const Mesh& mesh, const ParameterSet& p);

/// Background charge making each compartment of `s` electroneutral, from
/// the first cell. Initial concentrations are uniform per compartment.
std::array<double, kNumCompartments> electroneutral_background(const TridomainFields<double>& s);

/// Largest per-cell |sum_i z e c + a| / (e sum_i c) over all compartments,
/// using molar charge (F in place of e).
double electroneutrality_error(const TridomainState& s);

/// sum_k sum_cells eta_k c_k^i volume, in mol.
double total_content(const TridomainState& s, const Mesh& mesh, const ParameterSet& p, Ion i);

/// Uniform state: intracellular concentrations from the parameter set,
/// extracellular at bath, gating at steady state for V_m.
TridomainState uniform_state(const Mesh& mesh, const ParameterSet& p, double V_ax, double V_gl);

}  // namespace tridomain
