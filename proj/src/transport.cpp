#include "tridomain/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tridomain {

bool operator==(const TridomainState& lhs, const TridomainState& rhs) {
  for (auto k : kCompartments) {
    if (lhs.potential(k) != rhs.potential(k)) return false;
    for (auto i : kIons) {
      if (lhs.conc(k, i) != rhs.conc(k, i)) return false;
    }
  }
  return lhs.gating == rhs.gating && lhs.a == rhs.a && lhs.t == rhs.t;
}

double stimulus_fraction(const StimulusProtocol& protocol, double t0, double t1) {
  if (!(t1 > t0) || protocol.duration <= 0) return 0.0;
  double covered = 0;
  for (int n = 0; n < protocol.count; ++n) {
    const double on = protocol.onset + n * protocol.period;
    const double off = on + protocol.duration;
    covered += std::max(0.0, std::min(t1, off) - std::max(t0, on));
  }
  return covered / (t1 - t0);
}

std::vector<int> stimulated_cells(const StimulusProtocol& protocol, const Mesh& mesh) {
  std::vector<int> cells;
  for (int l = 0; l < mesh.Nz; ++l) {
    if (l > 0 && !(mesh.z_center(l) < protocol.length)) break;
    for (int j = 0; j < mesh.Nr; ++j) cells.push_back(mesh.cell(j, l));
  }
  return cells;
}

double stimulus_flux(const StimulusProtocol& protocol, double I_shock) {
  return -I_shock / (valence(protocol.carrier) * PhysicalConstants::e);
}

double positivity_time_step(const TridomainFields<double>& s, const Mesh& mesh, const ParameterSet& p) {
  const double VT = thermal_voltage(p.constants);
  double worst = 0;
  for (auto k : kCompartments) {
    const auto& rtag = mesh.radial_tag[idx(k)];
    const auto& ztag = mesh.axial_tag[idx(k)];
    const auto gphi = gradient_along_faces(s.potential(k), mesh, k, 0.0);
    for (auto i : kIons) {
      const double D = p.D(k, i);
      const double z = valence(i);
      Field<double> rate = Field<double>::Zero(mesh.cells());
      // Adds the outflow coefficient of face f to the cell on side `sign`
      // (+1: the face is the cell's upper face, outward normal along +axis).
      auto add = [&](int cell, FaceTag tag, double area, double dist, double grad_phi, double sign) {
        if (tag != FaceTag::interior && tag != FaceTag::bath) return;
        const double v_out = sign * (-D * z / VT) * grad_phi;
        rate(cell) += area / mesh.volume(cell) * (D / dist + std::max(v_out, 0.0));
      };
      for (int l = 0; l < mesh.Nz; ++l) {
        for (int j = 0; j < mesh.Nr; ++j) {
          const int q = mesh.cell(j, l);
          if (axis_policy(k) == AxisPolicy::full) {
            const int lo = mesh.radial_face(j, l), hi = mesh.radial_face(j + 1, l);
            add(q, rtag[lo], mesh.radial_area(j), mesh.dr, gphi.radial(lo), -1.0);
            add(q, rtag[hi], mesh.radial_area(j + 1), rtag[hi] == FaceTag::bath ? 0.5 * mesh.dr : mesh.dr,
                gphi.radial(hi), 1.0);
          }
          const int lo = mesh.axial_face(j, l), hi = mesh.axial_face(j, l + 1);
          add(q, ztag[lo], mesh.axial_area(j), ztag[lo] == FaceTag::bath ? 0.5 * mesh.dz : mesh.dz,
              gphi.axial(lo), -1.0);
          add(q, ztag[hi], mesh.axial_area(j), ztag[hi] == FaceTag::bath ? 0.5 * mesh.dz : mesh.dz,
              gphi.axial(hi), 1.0);
        }
      }
      worst = std::max(worst, rate.maxCoeff());
    }
  }
  return worst > 0 ? 1.0 / worst : std::numeric_limits<double>::infinity();
}

std::array<double, kNumCompartments> electroneutral_background(const TridomainFields<double>& s) {
  std::array<double, kNumCompartments> a{};
  for (auto k : kCompartments) {
    double charge = 0;
    for (auto i : kIons) charge += valence(i) * s.conc(k, i)(0);
    a[idx(k)] = -PhysicalConstants::faraday * charge;
  }
  return a;
}

double electroneutrality_error(const TridomainState& s) {
  const double F = PhysicalConstants::faraday;
  double worst = 0;
  for (auto k : kCompartments) {
    const auto n = s.potential(k).size();
    for (Eigen::Index q = 0; q < n; ++q) {
      double charge = s.a[idx(k)];
      double total = 0;
      for (auto i : kIons) {
        charge += valence(i) * F * s.conc(k, i)(q);
        total += s.conc(k, i)(q);
      }
      worst = std::max(worst, std::abs(charge) / (F * total));
    }
  }
  return worst;
}

double total_content(const TridomainState& s, const Mesh& mesh, const ParameterSet& p, Ion i) {
  double sum = 0;
  for (auto k : kCompartments) sum += p.eta(k) * s.conc(k, i).dot(mesh.volume);
  return sum;
}

TridomainState uniform_state(const Mesh& mesh, const ParameterSet& p, double V_ax, double V_gl) {
  const int n = mesh.cells();
  TridomainState s;
  for (auto i : kIons) {
    s.conc(Compartment::ax, i) = Field<double>::Constant(n, p.c_ax_init[idx(i)]);
    s.conc(Compartment::gl, i) = Field<double>::Constant(n, p.c_gl_init[idx(i)]);
    s.conc(Compartment::ex, i) = Field<double>::Constant(n, p.bath[idx(i)]);
  }
  s.potential(Compartment::ex) = Field<double>::Zero(n);
  s.potential(Compartment::ax) = Field<double>::Constant(n, V_ax);
  s.potential(Compartment::gl) = Field<double>::Constant(n, V_gl);
  s.gating.assign(n, gating_steady_state(V_ax, p.V_rest_hh));
  s.a = electroneutral_background(s);
  return s;
}

}  // namespace tridomain
