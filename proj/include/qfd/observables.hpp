#pragma once

#include <optional>

#include "qfd/lattice.hpp"
#include "qfd/potential.hpp"

namespace qfd {

struct Observables {
  double energy = 0.0;
  /// energy - V_inf; empty for unbounded potentials.
  std::optional<double> binding;
  /// sum of psi^2 a^3 over the interior.
  double norm2 = 0.0;
  double rms_radius = 0.0;
};

/// Global sums from which every observable is formed; summed plane by
/// plane in ascending x so that serial and decomposed runs agree.
struct ObservableSums {
  double psi_h_psi = 0.0;   ///< sum psi (H psi)
  double psi2 = 0.0;        ///< sum psi^2
  double r2_psi2 = 0.0;     ///< sum r^2 psi^2
};

/// Throws ZeroNorm if sums.psi2 == 0.
Observables observables_from_sums(const ObservableSums& sums, const PotentialGrid& grid);

/// Rayleigh quotient <psi|H|psi>/<psi|psi> of the discrete Hamiltonian
/// H = -(1/2m) laplacian + V. Throws ZeroNorm.
double energy(const Field3D& psi, const PotentialGrid& grid);

/// energy - V_inf, or empty when the potential is unbounded.
std::optional<double> binding_energy(const Field3D& psi, const PotentialGrid& grid);

/// sum over interior of psi^2 a^3.
double norm2(const Field3D& psi);

/// sqrt(sum r^2 psi^2 / sum psi^2) with r measured from the lattice centre.
double rms_radius(const Field3D& psi);

Observables measure(const Field3D& psi, const PotentialGrid& grid);

/// H psi as a field (padding zero).
Field3D apply_hamiltonian(const Field3D& psi, const PotentialGrid& grid);

} // namespace qfd
