#pragma once

// Axisymmetric (r, z) finite-volume grid. Cells are indexed p = l * Nr + j
// with j the radial and l the axial index. Radial faces sit at r_{j-1/2},
// j = 0..Nr (face 0 is the axis); axial faces at z_{l-1/2}, l = 0..Nz.

#include <array>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "tridomain/params.hpp"

namespace tridomain {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// One value per cell.
template <typename Scalar = double>
using Field = VectorX<Scalar>;

enum class FaceTag { interior, axis, sealed, bath };

enum class BoundaryPolicy {
  bath_on_extracellular,  // r = R and both end disks are bath for ex, sealed otherwise
  sealed                  // every exterior face sealed for every compartment
};

struct Mesh {
  int Nr = 0;
  int Nz = 0;
  double R = 0;
  double L = 0;
  double dr = 0;
  double dz = 0;

  Eigen::VectorXd r_center;      // Nr
  Eigen::VectorXd z_center;      // Nz
  Eigen::VectorXd r_face;        // Nr + 1
  Eigen::VectorXd volume;        // Nr * Nz, m^3
  Eigen::VectorXd radial_area;   // Nr + 1, per axial slab: 2 pi r_f dz
  Eigen::VectorXd axial_area;    // Nr, per ring: pi (r_out^2 - r_in^2)

  // Per compartment tags for radial faces ((Nr+1) * Nz) and axial faces (Nr * (Nz+1)).
  std::array<std::vector<FaceTag>, kNumCompartments> radial_tag;
  std::array<std::vector<FaceTag>, kNumCompartments> axial_tag;

  int cells() const { return Nr * Nz; }
  int cell(int j, int l) const { return l * Nr + j; }
  int radial_faces() const { return (Nr + 1) * Nz; }
  int axial_faces() const { return Nr * (Nz + 1); }
  int radial_face(int j, int l) const { return l * (Nr + 1) + j; }
  int axial_face(int j, int l) const { return l * Nr + j; }

  bool has_bath(Compartment k) const;
  /// Cell containing (r, z); points on a shared face go to the lower index.
  int locate(double r, double z) const;
  double total_volume() const { return volume.sum(); }
};

Mesh build_mesh(const Geometry& geometry, int Nr, int Nz,
                BoundaryPolicy policy = BoundaryPolicy::bath_on_extracellular);

inline Mesh build_mesh(const Geometry& geometry,
                       BoundaryPolicy policy = BoundaryPolicy::bath_on_extracellular) {
  return build_mesh(geometry, geometry.Nr, geometry.Nz, policy);
}

/// Face-centred values, oriented along +r and +z.
template <typename Scalar = double>
struct FaceField {
  VectorX<Scalar> radial;
  VectorX<Scalar> axial;

  static FaceField zeros(const Mesh& mesh) {
    FaceField f;
    f.radial = VectorX<Scalar>::Constant(mesh.radial_faces(), Scalar(0.0));
    f.axial = VectorX<Scalar>::Constant(mesh.axial_faces(), Scalar(0.0));
    return f;
  }
};

/// Which face families carry transport for a compartment. The axon conducts
/// along z only.
enum class AxisPolicy { full, axial_only };

inline AxisPolicy axis_policy(Compartment k) {
  return k == Compartment::ax ? AxisPolicy::axial_only : AxisPolicy::full;
}

/// Finite-volume divergence: sum of outward face flux times area over volume.
template <typename Scalar>
Field<Scalar> divergence(const FaceField<Scalar>& flux, const Mesh& mesh, AxisPolicy policy) {
  if (flux.radial.size() != mesh.radial_faces() || flux.axial.size() != mesh.axial_faces()) {
    throw std::invalid_argument("divergence: face field size does not match mesh");
  }
  Field<Scalar> div(mesh.cells());
  for (int l = 0; l < mesh.Nz; ++l) {
    for (int j = 0; j < mesh.Nr; ++j) {
      Scalar net = flux.axial(mesh.axial_face(j, l + 1)) * mesh.axial_area(j) -
                   flux.axial(mesh.axial_face(j, l)) * mesh.axial_area(j);
      if (policy == AxisPolicy::full) {
        net += flux.radial(mesh.radial_face(j + 1, l)) * mesh.radial_area(j + 1) -
               flux.radial(mesh.radial_face(j, l)) * mesh.radial_area(j);
      }
      const int p = mesh.cell(j, l);
      div(p) = net / mesh.volume(p);
    }
  }
  return div;
}

/// Two-point differences across faces. Bath faces difference against
/// `boundary_value` over half a cell; sealed and axis faces are zero.
template <typename Scalar>
FaceField<Scalar> gradient_along_faces(const Field<Scalar>& u, const Mesh& mesh, Compartment k,
                                       double boundary_value = 0.0) {
  if (u.size() != mesh.cells()) {
    throw std::invalid_argument("gradient_along_faces: field size does not match mesh");
  }
  auto g = FaceField<Scalar>::zeros(mesh);
  const auto& rtag = mesh.radial_tag[idx(k)];
  const auto& ztag = mesh.axial_tag[idx(k)];
  for (int l = 0; l < mesh.Nz; ++l) {
    for (int j = 0; j <= mesh.Nr; ++j) {
      const int f = mesh.radial_face(j, l);
      if (rtag[f] == FaceTag::interior) {
        g.radial(f) = (u(mesh.cell(j, l)) - u(mesh.cell(j - 1, l))) / mesh.dr;
      } else if (rtag[f] == FaceTag::bath) {
        g.radial(f) = (boundary_value - u(mesh.cell(j - 1, l))) / (0.5 * mesh.dr);
      }
    }
  }
  for (int l = 0; l <= mesh.Nz; ++l) {
    for (int j = 0; j < mesh.Nr; ++j) {
      const int f = mesh.axial_face(j, l);
      if (ztag[f] == FaceTag::interior) {
        g.axial(f) = (u(mesh.cell(j, l)) - u(mesh.cell(j, l - 1))) / mesh.dz;
      } else if (ztag[f] == FaceTag::bath) {
        g.axial(f) = l == 0 ? Scalar((u(mesh.cell(j, 0)) - boundary_value) / (0.5 * mesh.dz))
                            : Scalar((boundary_value - u(mesh.cell(j, l - 1))) / (0.5 * mesh.dz));
      }
    }
  }
  return g;
}

}  // namespace tridomain
