#include "tridomain/selfcheck.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "tridomain/membrane.hpp"
#include "tridomain/solver.hpp"

namespace tridomain {

namespace {

std::string describe(const char* what, double value, const char* bound, double limit) {
  std::ostringstream s;
  s.precision(3);
  s << what << ' ' << value << ' ' << bound << ' ' << limit;
  return s.str();
}

}  // namespace

TridomainState random_state(const Mesh& mesh, const ParameterSet& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(0.9, 1.1);
  std::uniform_real_distribution<double> shift(-5e-3, 5e-3);
  std::uniform_real_distribution<double> gate(0.0, 1.0);
  TridomainState s = uniform_state(mesh, params, params.V_rest_hh, params.V_rest_hh);
  for (auto k : kCompartments) {
    for (auto i : kIons) {
      for (auto& c : s.conc(k, i)) c *= scale(rng);
    }
    for (auto& phi : s.potential(k)) phi += shift(rng);
  }
  for (auto& g : s.gating) g = {gate(rng), gate(rng), gate(rng)};
  return s;
}

std::uint64_t ulp_distance(double a, double b) {
  auto ordered = [](double x) {
    const auto bits = std::bit_cast<std::int64_t>(x);
    return bits < 0 ? std::numeric_limits<std::int64_t>::min() - bits : bits;
  };
  const std::int64_t ia = ordered(a);
  const std::int64_t ib = ordered(b);
  return ia > ib ? static_cast<std::uint64_t>(ia) - static_cast<std::uint64_t>(ib)
                 : static_cast<std::uint64_t>(ib) - static_cast<std::uint64_t>(ia);
}

CheckResult check_lambda_identity(int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> rate(-1e3, 1e3);
  std::uniform_real_distribution<double> cap(1e-3, 1e-1);
  const double e = PhysicalConstants::e;
  std::uint64_t worst = 0;
  for (int n = 0; n < samples; ++n) {
    // Sorted cut points give a partition of [0, 1] whose parts sum to 1.
    double u = unit(rng), v = unit(rng);
    if (u > v) std::swap(u, v);
    const double lambda[3] = {u, v - u, 1.0 - v};
    const double C_m = cap(rng);
    const double dVdt = rate(rng);
    double charge = 0;
    for (auto i : kIons) {
      const int z = valence(i);
      charge += z * e * capacitive_flux(C_m, lambda[idx(i)], z, dVdt);
    }
    worst = std::max(worst, ulp_distance(charge, C_m * dVdt));
  }
  return {"lambda-sum charge identity", worst <= 10,
          "max " + std::to_string(worst) + " ulp over " + std::to_string(samples) + " samples (limit 10)"};
}

CheckResult check_nernst_oracles() {
  const PhysicalConstants pc;
  // Oracle written from the defined constants, independent of thermal_voltage().
  const double vt = 1.380649e-23 * 293.15 / 1.602176634e-19;
  struct Case {
    double c_ex, c_in;
    int z;
    double expected;
  };
  const Case cases[] = {
      {3.0, 3.0, 1, 0.0},
      {3.0, 100.0, 1, vt * std::log(0.03)},
      {3.0, 100.0, -1, -vt * std::log(0.03)},
  };
  double worst = 0;
  for (const auto& c : cases) {
    const double got = nernst_potential(c.c_ex, c.c_in, c.z, pc);
    const double err = c.expected == 0 ? std::abs(got) : std::abs(got - c.expected) / std::abs(c.expected);
    worst = std::max(worst, err);
  }
  const bool anchor = std::abs(cases[1].expected / -8.857e-2 - 1) < 5e-4;
  return {"Nernst oracles", worst <= 1e-12 && anchor, describe("max relative error", worst, "<=", 1e-12)};
}

CheckResult check_divergence_theorem(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  Geometry g;
  const Mesh mesh = build_mesh(g, 5, 7);
  auto f = FaceField<double>::zeros(mesh);
  for (auto& x : f.radial) x = val(rng);
  for (auto& x : f.axial) x = val(rng);
  double worst = 0;
  for (auto policy : {AxisPolicy::full, AxisPolicy::axial_only}) {
    const Field<double> div = divergence(f, mesh, policy);
    const double interior = div.dot(mesh.volume);
    double boundary = 0, scale = 0;
    for (int j = 0; j < mesh.Nr; ++j) {
      const double out = f.axial(mesh.axial_face(j, mesh.Nz)) - f.axial(mesh.axial_face(j, 0));
      boundary += out * mesh.axial_area(j);
      scale += (std::abs(f.axial(mesh.axial_face(j, mesh.Nz))) + std::abs(f.axial(mesh.axial_face(j, 0)))) *
               mesh.axial_area(j);
    }
    if (policy == AxisPolicy::full) {
      for (int l = 0; l < mesh.Nz; ++l) {
        const double out = f.radial(mesh.radial_face(mesh.Nr, l)) * mesh.radial_area(mesh.Nr) -
                           f.radial(mesh.radial_face(0, l)) * mesh.radial_area(0);
        boundary += out;
        scale += std::abs(f.radial(mesh.radial_face(mesh.Nr, l))) * mesh.radial_area(mesh.Nr);
      }
    }
    worst = std::max(worst, std::abs(interior - boundary) / scale);
  }
  return {"discrete divergence theorem", worst <= 1e-12, describe("relative mismatch", worst, "<=", 1e-12)};
}

CheckResult check_jacobian(std::uint64_t seed) {
  ParameterSet p = default_parameters(Profile::New);
  p.geometry.Nr = 4;
  p.geometry.Nz = 4;
  const Mesh mesh = build_mesh(p.geometry);
  const TridomainState s = random_state(mesh, p, seed);
  const JacobianCheck jc = jacobian_check(s, 1e-5, p, mesh);
  std::string detail = describe("max relative error", jc.max_relative_error, "<", 1e-5);
  if (!jc.singular_blocks.empty()) detail += "; null block " + jc.singular_blocks.front();
  return {"Jacobian vs central differences", jc.max_relative_error < 1e-5 && jc.singular_blocks.empty(), detail};
}

std::vector<CheckResult> run_self_checks() {
  return {check_lambda_identity(), check_nernst_oracles(), check_divergence_theorem(), check_jacobian()};
}

}  // namespace tridomain
