#include "qfd/observables.hpp"

#include <cmath>
#include <vector>

#include "qfd/error.hpp"
#include "qfd/kernels.hpp"

namespace qfd {

namespace {

ObservableSums sums_of(const Field3D& psi, const PotentialGrid& grid) {
  const auto layout = kernels::SlabLayout::whole(psi.n());
  const auto planes = static_cast<std::size_t>(psi.n());
  std::vector<double> num(planes), den(planes), r2(planes);
  kernels::plane_energy(psi.values().data(), grid, layout, num, den, r2);
  return ObservableSums{kernels::ordered_sum(num), kernels::ordered_sum(den),
                        kernels::ordered_sum(r2)};
}

} // namespace

Observables observables_from_sums(const ObservableSums& sums, const PotentialGrid& grid) {
  if (!(sums.psi2 > 0.0)) throw ZeroNorm("observables requested for a zero-norm wavefunction");
  Observables obs;
  obs.energy = sums.psi_h_psi / sums.psi2;
  if (grid.v_inf) obs.binding = obs.energy - *grid.v_inf;
  const double a = grid.spec.a;
  obs.norm2 = sums.psi2 * (a * a * a);
  obs.rms_radius = std::sqrt(sums.r2_psi2 / sums.psi2);
  return obs;
}

Observables measure(const Field3D& psi, const PotentialGrid& grid) {
  return observables_from_sums(sums_of(psi, grid), grid);
}

double energy(const Field3D& psi, const PotentialGrid& grid) { return measure(psi, grid).energy; }

std::optional<double> binding_energy(const Field3D& psi, const PotentialGrid& grid) {
  return measure(psi, grid).binding;
}

double norm2(const Field3D& psi) {
  const auto layout = kernels::SlabLayout::whole(psi.n());
  std::vector<double> planes(static_cast<std::size_t>(psi.n()));
  kernels::plane_norm2(psi.values().data(), layout, planes);
  const double a = psi.spec().a;
  return kernels::ordered_sum(planes) * (a * a * a);
}

double rms_radius(const Field3D& psi) {
  const LatticeSpec& spec = psi.spec();
  const int n = psi.n();
  double weighted = 0.0, total = 0.0;
  for (int i = 1; i <= n; ++i) {
    double wp = 0.0, tp = 0.0;
    const double x = spec.coordinate(i);
    for (int j = 1; j <= n; ++j) {
      const double y = spec.coordinate(j);
      for (int k = 1; k <= n; ++k) {
        const double z = spec.coordinate(k);
        const double w = psi(i, j, k) * psi(i, j, k);
        wp += (x * x + y * y + z * z) * w;
        tp += w;
      }
    }
    weighted += wp;
    total += tp;
  }
  if (!(total > 0.0)) throw ZeroNorm("rms radius requested for a zero-norm wavefunction");
  return std::sqrt(weighted / total);
}

Field3D apply_hamiltonian(const Field3D& psi, const PotentialGrid& grid) {
  Field3D out(psi.spec());
  kernels::apply_hamiltonian(psi.values().data(), out.values().data(), grid,
                             kernels::SlabLayout::whole(psi.n()));
  return out;
}

} // namespace qfd
