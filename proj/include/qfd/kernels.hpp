#pragma once

// Plane-wise stencil and reduction kernels shared by the serial stepper and
// the slab workers. Every kernel works on a slab: `width` interior x-planes
// plus one padding plane on each side, with local plane p (0..width+1)
// mapping to global padded x-index first_plane - 1 + p. A whole field is the
// slab with first_plane = 1 and width = N.
//
// Reductions never sum across x-planes here. Each kernel emits one partial
// per local interior plane (each accumulated in canonical (j, k) order) and
// callers add the partials in ascending global x. Because planes are never
// split between workers, totals are bit-identical for any decomposition.

#include <cstddef>
#include <span>

#include "qfd/potential.hpp"

namespace qfd::kernels {

struct SlabLayout {
  int n = 0;            ///< global sites per axis
  int width = 0;        ///< interior planes held locally
  int first_plane = 1;  ///< global x-index of local plane 1

  static SlabLayout whole(int n) { return SlabLayout{n, n, 1}; }

  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(n + 2) * static_cast<std::size_t>(n + 2);
  }
  std::size_t storage_size() const noexcept {
    return plane_size() * static_cast<std::size_t>(width + 2);
  }
  int global_x(int local_plane) const noexcept { return first_plane - 1 + local_plane; }
};

/// Imaginary-time update of local planes [p_begin, p_end] (inclusive):
///
///   out = A in + B * (dtau / (2 m a^2)) * (sum of six neighbours - 6 in).
///
/// When `plane_norm2` is non-null, plane_norm2[p - 1] receives the sum of
/// squares of the updated plane.
void update_planes(const double* in, double* out, const PotentialGrid& grid,
                   const SlabLayout& layout, int p_begin, int p_end, double* plane_norm2);

/// Sum of squares per interior plane (result has `width` entries).
void plane_norm2(const double* field, const SlabLayout& layout, std::span<double> out);

/// Per-plane sum of f * g over the interior.
void plane_overlap(const double* f, const double* g, const SlabLayout& layout,
                   std::span<double> out);

/// Per-plane sums of psi * (H psi), psi^2 and r^2 psi^2, with
/// H = -(1/2m) laplacian + V and r measured from the lattice centre.
void plane_energy(const double* psi, const PotentialGrid& grid, const SlabLayout& layout,
                  std::span<double> kinetic_plus_potential, std::span<double> norm2,
                  std::span<double> r2_weighted);

/// H psi on the interior planes; padding of `out` is zeroed.
void apply_hamiltonian(const double* psi, double* out, const PotentialGrid& grid,
                       const SlabLayout& layout);

/// Multiplies every interior site by `factor`.
void scale_interior(double* field, const SlabLayout& layout, double factor);

/// Left-to-right sum; the only accumulation order used for totals.
double ordered_sum(std::span<const double> values) noexcept;

} // namespace qfd::kernels
