#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "qfd/kernels.hpp"
#include "qfd/lattice.hpp"
#include "qfd/observables.hpp"
#include "qfd/potential.hpp"
#include "qfd/symmetry.hpp"

namespace qfd {

struct StabilityCheck {
  bool ok = true;
  double limit = 0.0;  ///< a^2 / 3
};

/// The explicit scheme is stable for dtau < a^2 / 3.
StabilityCheck check_stability(const LatticeSpec& spec);

/// One imaginary-time step of every interior site,
///
///   psi'(x) = A(x) psi(x) + B(x) dtau / (2m a^2) * (sum of 6 neighbours - 6 psi(x)),
///
/// reading the padding of `psi` as boundary values. Padding of the result is
/// copied from `psi`. Throws NumericalDivergence if any updated value is
/// not finite.
Field3D step(const Field3D& psi, const PotentialGrid& grid);

/// Scales psi so that sum psi^2 a^3 = 1 and returns the norm sqrt(sum psi^2 a^3)
/// measured before scaling. Throws ZeroNorm for an all-zero interior.
double renormalize(Field3D& psi);

struct EvolutionParams {
  double tol = 1e-6;          ///< relative change in (binding) energy between checks
  int check_freq = 100;       ///< steps between energy checks
  int snap_freq = 1000;       ///< steps between snapshots; 0 disables
  long max_steps = 1'000'000;
  int max_snapshots = 4;      ///< most recent snapshots retained
  std::vector<SymmetryConstraint> constraints;
  int reimpose_freq = 0;      ///< steps between symmetry re-imposition; 0 = check_freq

  int effective_reimpose_freq() const noexcept {
    return reimpose_freq > 0 ? reimpose_freq : check_freq;
  }
  /// Throws ConfigError for non-positive tol / check_freq / max_steps.
  void validate() const;
};

struct Snapshot {
  long step = 0;
  double tau = 0.0;
  Field3D psi;
};

struct EnergyRecord {
  long step = 0;
  double tau = 0.0;
  double energy = 0.0;
  std::optional<double> binding;
  /// Norm of the field before the renormalization of this step; tends to
  /// exp(-E dtau) per step as the evolution settles.
  double norm = 0.0;
  double rms_radius = 0.0;
};

struct EvolutionState {
  Field3D psi;
  double tau = 0.0;
  long step_count = 0;
  std::vector<Snapshot> snapshots;  ///< increasing tau
  std::vector<EnergyRecord> history;
  bool converged = false;
  std::vector<SymmetryConstraint> constraints;
  int check_freq = 100;

  /// Latest energy record; throws std::logic_error when no check ran.
  const EnergyRecord& last() const;
};

/// Double-buffered whole-lattice stepper (renormalizing after every step).
class SerialPropagator {
public:
  SerialPropagator(Field3D initial, const PotentialGrid& grid, int max_snapshots = 0);

  void impose(const SymmetryConstraint& c);
  double renormalize();
  double advance();
  /// Overlap of the last two iterates.
  double step_overlap();
  Observables measure() const;
  void snapshot(long step, double tau);

  Field3D& field() noexcept { return current_; }
  const Field3D& field() const noexcept { return current_; }
  Field3D take_field() { return std::move(current_); }
  std::vector<Snapshot> take_snapshots();

private:
  Field3D current_;
  Field3D previous_;
  const PotentialGrid* grid_;
  kernels::SlabLayout layout_;
  std::vector<double> planes_;
  int max_snapshots_;
  std::deque<Snapshot> snapshots_;
};

/// Evolves `initial` in imaginary time, renormalizing after every step.
/// Every check_freq steps the (binding) energy is measured and the run stops
/// once |E(now) - E(prev)| <= tol |E(now)|; symmetry constraints are imposed
/// on the initial field and re-imposed every reimpose_freq steps. Running out
/// of steps returns an unconverged state. Throws NumericalDivergence when the
/// field stops being finite or, at a check, when consecutive iterates have
/// negative overlap (a sign-alternating unstable mode dominates).
EvolutionState evolve_to_convergence(Field3D initial, const PotentialGrid& grid,
                                     const EvolutionParams& params);

} // namespace qfd
