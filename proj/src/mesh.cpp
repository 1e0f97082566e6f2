#include "tridomain/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tridomain {

bool Mesh::has_bath(Compartment k) const {
  const auto& rt = radial_tag[idx(k)];
  const auto& zt = axial_tag[idx(k)];
  return std::find(rt.begin(), rt.end(), FaceTag::bath) != rt.end() ||
         std::find(zt.begin(), zt.end(), FaceTag::bath) != zt.end();
}

int Mesh::locate(double r, double z) const {
  if (r < 0 || r > R || z < 0 || z > L) throw std::out_of_range("Mesh::locate: point outside domain");
  const int j = std::min(Nr - 1, static_cast<int>(std::floor(r / dr)));
  const int l = std::min(Nz - 1, static_cast<int>(std::floor(z / dz)));
  return cell(j, l);
}

Mesh build_mesh(const Geometry& geometry, int Nr, int Nz, BoundaryPolicy policy) {
  if (Nr < 1 || Nz < 2) throw std::invalid_argument("build_mesh: need Nr >= 1 and Nz >= 2");
  if (!(geometry.R > 0) || !(geometry.L > 0)) {
    throw std::invalid_argument("build_mesh: R and L must be positive");
  }
  constexpr double pi = std::numbers::pi;

  Mesh m;
  m.Nr = Nr;
  m.Nz = Nz;
  m.R = geometry.R;
  m.L = geometry.L;
  m.dr = geometry.R / Nr;
  m.dz = geometry.L / Nz;

  m.r_face.resize(Nr + 1);
  for (int j = 0; j <= Nr; ++j) m.r_face(j) = geometry.R * j / Nr;
  m.r_face(Nr) = geometry.R;
  m.r_center.resize(Nr);
  for (int j = 0; j < Nr; ++j) m.r_center(j) = 0.5 * (m.r_face(j) + m.r_face(j + 1));
  m.z_center.resize(Nz);
  for (int l = 0; l < Nz; ++l) m.z_center(l) = (l + 0.5) * m.dz;

  m.radial_area.resize(Nr + 1);
  for (int j = 0; j <= Nr; ++j) m.radial_area(j) = 2.0 * pi * m.r_face(j) * m.dz;
  m.axial_area.resize(Nr);
  for (int j = 0; j < Nr; ++j) {
    m.axial_area(j) = pi * (m.r_face(j + 1) * m.r_face(j + 1) - m.r_face(j) * m.r_face(j));
  }
  m.volume.resize(m.cells());
  for (int l = 0; l < Nz; ++l) {
    for (int j = 0; j < Nr; ++j) m.volume(m.cell(j, l)) = m.axial_area(j) * m.dz;
  }

  for (auto k : kCompartments) {
    const FaceTag exterior = (policy == BoundaryPolicy::bath_on_extracellular && k == Compartment::ex)
                                 ? FaceTag::bath
                                 : FaceTag::sealed;
    auto& rt = m.radial_tag[idx(k)];
    rt.assign(m.radial_faces(), FaceTag::interior);
    for (int l = 0; l < Nz; ++l) {
      rt[m.radial_face(0, l)] = FaceTag::axis;
      rt[m.radial_face(Nr, l)] = exterior;
    }
    auto& zt = m.axial_tag[idx(k)];
    zt.assign(m.axial_faces(), FaceTag::interior);
    for (int j = 0; j < Nr; ++j) {
      zt[m.axial_face(j, 0)] = exterior;
      zt[m.axial_face(j, Nz)] = exterior;
    }
  }
  return m;
}

}  // namespace tridomain
