#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "qfd/evolve.hpp"
#include "qfd/lattice.hpp"
#include "qfd/potential.hpp"

namespace qfd {

/// Writes psi (kind = wavefunction) in the lattice file format. Identical
/// fields give identical bytes.
void save_wavefunction(const Field3D& psi, const std::filesystem::path& path,
                       std::uint64_t step_count = 0);

struct LoadedWavefunction {
  Field3D psi;  ///< padding reset to 0
  std::uint64_t step_count = 0;
};

/// Reads a wavefunction file. The file carries no time step, so the loaded
/// lattice gets dtau = a^2/4. Throws FormatError.
LoadedWavefunction load_wavefunction(const std::filesystem::path& path);

/// Trilinear interpolation of `coarse` onto the sites of `fine` at equal
/// box length. Site n sits at (n - (N+1)/2) a; points beyond the outermost
/// coarse sites take the value on the nearest face. Throws ConfigError when
/// the box lengths differ by more than 1e-12 relative.
Field3D resample_unnormalized(const Field3D& coarse, const LatticeSpec& fine);

/// resample_unnormalized followed by renormalization.
Field3D resample(const Field3D& coarse, const LatticeSpec& fine);

struct BootstrapStage {
  LatticeSpec spec;
  EvolutionParams params;
};

struct BootstrapOptions {
  std::function<PotentialGrid(const LatticeSpec&)> potential;
  std::uint64_t seed = 1;
  int workers = 1;
  /// Weights of the ground and excited states handed to the next stage;
  /// more than one entry extracts excited states from each earlier stage.
  std::vector<double> carry{1.0};
  /// Replaces the random start of the first stage.
  std::optional<Field3D> initial;
  /// Stage driver; empty runs evolve_to_convergence, or evolve_parallel
  /// when workers > 1.
  std::function<EvolutionState(Field3D, const PotentialGrid&, const EvolutionParams&)> evolve;
};

struct StageReport {
  LatticeSpec spec;
  long steps = 0;
  bool converged = false;
  double seconds = 0.0;
  double energy = 0.0;
  std::optional<double> binding;
};

struct BootstrapResult {
  EvolutionState state;
  std::vector<StageReport> stages;
};

/// Runs the schedule coarse to fine, starting each stage from the resampled
/// result of the one before. Throws ConfigError for an empty schedule, non
/// increasing N or a changing box length, and NonConvergence when an
/// intermediate stage fails to converge; the last stage's flag is returned.
BootstrapResult bootstrap_run(const std::vector<BootstrapStage>& schedule,
                              const BootstrapOptions& options);

} // namespace qfd
