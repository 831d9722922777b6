#include "qfd/kernels.hpp"

#include <algorithm>

namespace qfd::kernels {

namespace {

struct PlaneCursor {
  std::size_t plane;  // sites per plane
  std::size_t row;    // sites per row
  std::size_t local;  // offset of the plane in the slab buffer
  std::size_t global; // offset of the same plane in the global coefficient arrays
};

PlaneCursor cursor(const SlabLayout& layout, int p) {
  const std::size_t ps = layout.plane_size();
  return PlaneCursor{ps, static_cast<std::size_t>(layout.n + 2), static_cast<std::size_t>(p) * ps,
                     static_cast<std::size_t>(layout.global_x(p)) * ps};
}

} // namespace

void update_planes(const double* in, double* out, const PotentialGrid& grid,
                   const SlabLayout& layout, int p_begin, int p_end, double* plane_norm2) {
  const LatticeSpec& spec = grid.spec;
  const double kinetic = spec.dtau / (2.0 * spec.mass * spec.a * spec.a);
  const int n = layout.n;
  const double* acoef = grid.a_coeff.data();
  const double* bcoef = grid.b_coeff.data();

  for (int p = p_begin; p <= p_end; ++p) {
    const PlaneCursor c = cursor(layout, p);
    double norm = 0.0;
    for (int j = 1; j <= n; ++j) {
      const std::size_t row = c.local + static_cast<std::size_t>(j) * c.row;
      const std::size_t grow = c.global + static_cast<std::size_t>(j) * c.row;
      const double* here = in + row;
      const double* below = here - c.plane;
      const double* above = here + c.plane;
      const double* left = here - c.row;
      const double* right = here + c.row;
      const double* arow = acoef + grow;
      const double* brow = bcoef + grow;
      double* dst = out + row;
      for (int k = 1; k <= n; ++k) {
        const double centre = here[k];
        const double sum =
            below[k] + above[k] + left[k] + right[k] + here[k - 1] + here[k + 1];
        const double lap = sum - 6.0 * centre;
        const double next = arow[k] * centre + brow[k] * (kinetic * lap);
        dst[k] = next;
        norm += next * next;
      }
    }
    if (plane_norm2 != nullptr) plane_norm2[p - 1] = norm;
  }
}

void plane_norm2(const double* field, const SlabLayout& layout, std::span<double> out) {
  const int n = layout.n;
  for (int p = 1; p <= layout.width; ++p) {
    const PlaneCursor c = cursor(layout, p);
    double sum = 0.0;
    for (int j = 1; j <= n; ++j) {
      const double* row = field + c.local + static_cast<std::size_t>(j) * c.row;
      for (int k = 1; k <= n; ++k) sum += row[k] * row[k];
    }
    out[static_cast<std::size_t>(p - 1)] = sum;
  }
}

void plane_overlap(const double* f, const double* g, const SlabLayout& layout,
                   std::span<double> out) {
  const int n = layout.n;
  for (int p = 1; p <= layout.width; ++p) {
    const PlaneCursor c = cursor(layout, p);
    double sum = 0.0;
    for (int j = 1; j <= n; ++j) {
      const std::size_t row = c.local + static_cast<std::size_t>(j) * c.row;
      for (int k = 1; k <= n; ++k) sum += f[row + k] * g[row + k];
    }
    out[static_cast<std::size_t>(p - 1)] = sum;
  }
}

void plane_energy(const double* psi, const PotentialGrid& grid, const SlabLayout& layout,
                  std::span<double> kinetic_plus_potential, std::span<double> norm2,
                  std::span<double> r2_weighted) {
  const LatticeSpec& spec = grid.spec;
  const double hop = 1.0 / (2.0 * spec.mass * spec.a * spec.a);
  const int n = layout.n;
  const double* pot = grid.v.data();

  for (int p = 1; p <= layout.width; ++p) {
    const PlaneCursor c = cursor(layout, p);
    const double x = spec.coordinate(layout.global_x(p));
    double num = 0.0, den = 0.0, r2sum = 0.0;
    for (int j = 1; j <= n; ++j) {
      const double y = spec.coordinate(j);
      const std::size_t row = c.local + static_cast<std::size_t>(j) * c.row;
      const double* here = psi + row;
      const double* below = here - c.plane;
      const double* above = here + c.plane;
      const double* left = here - c.row;
      const double* right = here + c.row;
      const double* vrow = pot + c.global + static_cast<std::size_t>(j) * c.row;
      for (int k = 1; k <= n; ++k) {
        const double z = spec.coordinate(k);
        const double centre = here[k];
        const double sum =
            below[k] + above[k] + left[k] + right[k] + here[k - 1] + here[k + 1];
        const double lap = sum - 6.0 * centre;
        const double hpsi = vrow[k] * centre - hop * lap;
        const double weight = centre * centre;
        num += centre * hpsi;
        den += weight;
        r2sum += (x * x + y * y + z * z) * weight;
      }
    }
    const std::size_t slot = static_cast<std::size_t>(p - 1);
    kinetic_plus_potential[slot] = num;
    norm2[slot] = den;
    r2_weighted[slot] = r2sum;
  }
}

void apply_hamiltonian(const double* psi, double* out, const PotentialGrid& grid,
                       const SlabLayout& layout) {
  const LatticeSpec& spec = grid.spec;
  const double hop = 1.0 / (2.0 * spec.mass * spec.a * spec.a);
  const int n = layout.n;
  std::fill(out, out + layout.storage_size(), 0.0);
  for (int p = 1; p <= layout.width; ++p) {
    const PlaneCursor c = cursor(layout, p);
    for (int j = 1; j <= n; ++j) {
      const std::size_t row = c.local + static_cast<std::size_t>(j) * c.row;
      const double* here = psi + row;
      const double* below = here - c.plane;
      const double* above = here + c.plane;
      const double* left = here - c.row;
      const double* right = here + c.row;
      const double* vrow = grid.v.data() + c.global + static_cast<std::size_t>(j) * c.row;
      for (int k = 1; k <= n; ++k) {
        const double centre = here[k];
        const double sum =
            below[k] + above[k] + left[k] + right[k] + here[k - 1] + here[k + 1];
        const double lap = sum - 6.0 * centre;
        out[row + k] = vrow[k] * centre - hop * lap;
      }
    }
  }
}

void scale_interior(double* field, const SlabLayout& layout, double factor) {
  const int n = layout.n;
  for (int p = 1; p <= layout.width; ++p) {
    const PlaneCursor c = cursor(layout, p);
    for (int j = 1; j <= n; ++j) {
      double* row = field + c.local + static_cast<std::size_t>(j) * c.row;
      for (int k = 1; k <= n; ++k) row[k] *= factor;
    }
  }
}

double ordered_sum(std::span<const double> values) noexcept {
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

} // namespace qfd::kernels
