#include "qfd/states.hpp"

#include <cmath>
#include <string>

#include "qfd/error.hpp"
#include "qfd/kernels.hpp"
#include "qfd/parallel.hpp"

namespace qfd {

namespace {

double interior_dot(const Field3D& f, const Field3D& g) {
  const auto layout = kernels::SlabLayout::whole(f.n());
  std::vector<double> planes(static_cast<std::size_t>(f.n()));
  kernels::plane_overlap(f.values().data(), g.values().data(), layout, planes);
  return kernels::ordered_sum(planes);
}

void axpy_interior(Field3D& r, double c, const Field3D& b) {
  const int n = r.n();
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= n; ++j) {
      for (int k = 1; k <= n; ++k) r(i, j, k) -= c * b(i, j, k);
    }
  }
}

void check_shapes(const Field3D& snap, const Field3D& b) {
  if (b.n() != snap.n()) throw ConfigError("projection basis and snapshot differ in lattice size");
}

// Two Gram-Schmidt sweeps in basis order; throws when nothing is left.
void project_in_place(Field3D& r, const std::vector<const Field3D*>& basis) {
  const double before = interior_dot(r, r);
  for (int pass = 0; pass < 2; ++pass) {
    for (const Field3D* b : basis) {
      check_shapes(r, *b);
      const double bb = interior_dot(*b, *b);
      if (bb == 0.0) throw ZeroNorm("projection basis contains a zero state");
      axpy_interior(r, interior_dot(*b, r) / bb, *b);
    }
  }
  const double after = interior_dot(r, r);
  if (!(std::sqrt(after) >= 1e-12 * std::sqrt(before)) || after == 0.0) {
    throw DegenerateSnapshot("snapshot has no component outside the lower states");
  }
}

} // namespace

double inner_product(const Field3D& f, const Field3D& g) {
  check_shapes(f, g);
  const double a = f.spec().a;
  return interior_dot(f, g) * (a * a * a);
}

Field3D project_out(const Field3D& snap, const std::vector<const Field3D*>& basis) {
  Field3D r = snap;
  project_in_place(r, basis);
  return r;
}

Field3D project_out(const Field3D& snap, const std::vector<Field3D>& basis) {
  std::vector<const Field3D*> ptrs;
  ptrs.reserve(basis.size());
  for (const auto& b : basis) ptrs.push_back(&b);
  return project_out(snap, ptrs);
}

ExcitedOptions excited_options_for(const EvolutionState& state, int count) {
  ExcitedOptions o;
  o.count = count;
  o.check_freq = state.check_freq;
  o.polish_steps = 10L * state.check_freq;
  o.constraints = state.constraints;
  return o;
}

namespace {

void reproject(SerialPropagator& prop, const std::vector<const Field3D*>& basis,
               const std::vector<SymmetryConstraint>& constraints) {
  for (const auto& c : constraints) prop.impose(c);
  project_in_place(prop.field(), basis);
  prop.renormalize();
}

ExtractedState polish(Field3D start, const PotentialGrid& grid,
                      const std::vector<const Field3D*>& basis, const ExcitedOptions& opt,
                      long snapshot_step) {
  SerialPropagator prop(std::move(start), grid);
  reproject(prop, basis, opt.constraints);
  bool have_previous = false;
  double previous = 0.0;
  for (long s = 1; s <= opt.polish_steps; ++s) {
    prop.advance();
    if (s % opt.check_freq != 0 && s != opt.polish_steps) continue;
    reproject(prop, basis, opt.constraints);
    if (opt.tol > 0.0) {
      const double e = prop.measure().energy;
      if (have_previous && std::fabs(e - previous) <= opt.tol * std::fabs(e)) break;
      previous = e;
      have_previous = true;
    }
  }
  const Observables obs = prop.measure();
  return ExtractedState{prop.take_field(), obs.energy, obs.binding, obs.rms_radius, snapshot_step};
}

} // namespace

std::vector<ExtractedState> extract_excited(const EvolutionState& state, const PotentialGrid& grid,
                                            const ExcitedOptions& options) {
  std::vector<ExtractedState> out;
  if (options.count <= 0) return out;
  if (options.check_freq < 1) throw ConfigError("polish check frequency must be at least 1");
  if (options.polish_steps < 0) throw ConfigError("polish_steps must be non-negative");
  if (static_cast<int>(state.snapshots.size()) < options.count) {
    throw ConfigError("need " + std::to_string(options.count) + " snapshots for excited states, have " +
                      std::to_string(state.snapshots.size()));
  }

  std::vector<const Field3D*> basis{&state.psi};
  std::size_t next = 0;
  out.reserve(static_cast<std::size_t>(options.count));
  for (int level = 0; level < options.count; ++level) {
    bool found = false;
    while (next < state.snapshots.size() && !found) {
      const Snapshot& snap = state.snapshots[next++];
      Field3D residual = snap.psi;
      try {
        project_in_place(residual, basis);
      } catch (const DegenerateSnapshot&) {
        continue;
      }
      out.push_back(polish(std::move(residual), grid, basis, options, snap.step));
      found = true;
    }
    if (!found) {
      throw DegenerateSnapshot("snapshots exhausted after " + std::to_string(level) +
                               " excited states");
    }
    basis.push_back(&out.back().psi);
  }
  return out;
}

SectorResult symmetry_excited_run(Field3D initial, const PotentialGrid& grid, EvolutionParams params,
                                  const std::vector<SymmetryConstraint>& constraints, int workers) {
  params.constraints = constraints;
  EvolutionState state = workers > 1
                             ? evolve_parallel(std::move(initial), grid, params, workers).state
                             : evolve_to_convergence(std::move(initial), grid, params);
  const Observables obs = measure(state.psi, grid);
  SectorResult result;
  result.lowest = ExtractedState{state.psi, obs.energy, obs.binding, obs.rms_radius, state.step_count};
  result.evolution = std::move(state);
  return result;
}

} // namespace qfd
