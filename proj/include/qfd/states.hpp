#pragma once

#include <optional>
#include <vector>

#include "qfd/evolve.hpp"
#include "qfd/lattice.hpp"
#include "qfd/potential.hpp"
#include "qfd/symmetry.hpp"

namespace qfd {

/// <f|g> = sum over interior of f g a^3.
double inner_product(const Field3D& f, const Field3D& g);

/// Removes from `snap` its components along each basis state, in basis
/// order (Gram-Schmidt, applied twice for numerical orthogonality). The
/// result is not renormalized. Throws DegenerateSnapshot when the residual
/// norm falls below 1e-12 of the snapshot norm.
Field3D project_out(const Field3D& snap, const std::vector<const Field3D*>& basis);
Field3D project_out(const Field3D& snap, const std::vector<Field3D>& basis);

struct ExcitedOptions {
  int count = 1;
  /// Further evolution of each projected snapshot, re-projecting against the
  /// lower states every check_freq steps; 0 uses the projected snapshot as is.
  long polish_steps = 1000;
  int check_freq = 100;
  /// Stop polishing early once the energy changes by at most tol (relative)
  /// between checks; 0 always runs polish_steps.
  double tol = 0.0;
  std::vector<SymmetryConstraint> constraints;  ///< re-imposed while polishing
};

struct ExtractedState {
  Field3D psi;  ///< normalized
  double energy = 0.0;
  std::optional<double> binding;
  double rms_radius = 0.0;
  long snapshot_step = 0;  ///< step at which the source snapshot was taken
};

/// Options matching a finished evolution (its check frequency and
/// constraints) with the default polish length of 10 check intervals.
ExcitedOptions excited_options_for(const EvolutionState& state, int count);

/// Extracts `count` excited states from the snapshots of a converged
/// evolution: each uses the earliest unused snapshot, projects out the
/// ground state and the states already extracted, polishes, and
/// renormalizes. Snapshots that project to nothing are skipped. Throws
/// ConfigError when fewer snapshots than `count` exist and
/// DegenerateSnapshot when they run out.
std::vector<ExtractedState> extract_excited(const EvolutionState& state, const PotentialGrid& grid,
                                            const ExcitedOptions& options);

struct SectorResult {
  ExtractedState lowest;
  EvolutionState evolution;
};

/// Lowest state in the symmetry sector selected by `constraints`: the
/// constraints are imposed on `initial` and re-imposed during evolution.
/// `workers` > 1 runs on in-process slab workers.
SectorResult symmetry_excited_run(Field3D initial, const PotentialGrid& grid,
                                  EvolutionParams params,
                                  const std::vector<SymmetryConstraint>& constraints,
                                  int workers = 1);

} // namespace qfd
