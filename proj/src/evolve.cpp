#include "qfd/evolve.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "qfd/convergence_loop.hpp"
#include "qfd/error.hpp"
#include "qfd/kernels.hpp"

namespace qfd {

StabilityCheck check_stability(const LatticeSpec& spec) {
  const double limit = spec.a * spec.a / 3.0;
  return StabilityCheck{spec.dtau < limit, limit};
}

Field3D step(const Field3D& psi, const PotentialGrid& grid) {
  Field3D out = psi;
  const auto layout = kernels::SlabLayout::whole(psi.n());
  std::vector<double> planes(static_cast<std::size_t>(psi.n()));
  kernels::update_planes(psi.values().data(), out.values().data(), grid, layout, 1, psi.n(),
                         planes.data());
  if (!std::isfinite(kernels::ordered_sum(planes))) {
    throw NumericalDivergence("imaginary-time step produced non-finite values");
  }
  return out;
}

double renormalize(Field3D& psi) {
  const auto layout = kernels::SlabLayout::whole(psi.n());
  std::vector<double> planes(static_cast<std::size_t>(psi.n()));
  kernels::plane_norm2(psi.values().data(), layout, planes);
  const double a = psi.spec().a;
  const double norm = std::sqrt(kernels::ordered_sum(planes) * (a * a * a));
  if (!std::isfinite(norm)) throw NumericalDivergence("wavefunction norm is not finite");
  if (norm == 0.0) throw ZeroNorm("cannot renormalize a zero wavefunction");
  kernels::scale_interior(psi.values().data(), layout, 1.0 / norm);
  return norm;
}

void EvolutionParams::validate() const {
  if (!(tol > 0.0)) throw ConfigError("convergence tolerance must be positive");
  if (check_freq < 1) throw ConfigError("check frequency must be at least 1");
  if (snap_freq < 0) throw ConfigError("snapshot frequency must be non-negative");
  if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
  if (max_snapshots < 0) throw ConfigError("max_snapshots must be non-negative");
  if (reimpose_freq < 0) throw ConfigError("reimpose frequency must be non-negative");
}

const EnergyRecord& EvolutionState::last() const {
  if (history.empty()) throw std::logic_error("no energy check has run");
  return history.back();
}

SerialPropagator::SerialPropagator(Field3D initial, const PotentialGrid& grid, int max_snapshots)
    : current_(std::move(initial)), previous_(current_), grid_(&grid),
      layout_(kernels::SlabLayout::whole(current_.n())),
      planes_(static_cast<std::size_t>(current_.n())), max_snapshots_(max_snapshots) {}

void SerialPropagator::impose(const SymmetryConstraint& c) { qfd::impose(current_, c); }

double SerialPropagator::renormalize() { return qfd::renormalize(current_); }

double SerialPropagator::advance() {
  std::swap(previous_, current_);
  kernels::update_planes(previous_.values().data(), current_.values().data(), *grid_, layout_, 1,
                         layout_.width, planes_.data());
  const double a = grid_->spec.a;
  const double norm = std::sqrt(kernels::ordered_sum(planes_) * (a * a * a));
  if (!std::isfinite(norm)) throw NumericalDivergence("imaginary-time step produced non-finite values");
  if (norm == 0.0) throw ZeroNorm("wavefunction vanished during evolution");
  kernels::scale_interior(current_.values().data(), layout_, 1.0 / norm);
  return norm;
}

double SerialPropagator::step_overlap() {
  kernels::plane_overlap(previous_.values().data(), current_.values().data(), layout_, planes_);
  return kernels::ordered_sum(planes_);
}

Observables SerialPropagator::measure() const { return qfd::measure(current_, *grid_); }

void SerialPropagator::snapshot(long step, double tau) {
  if (max_snapshots_ == 0) return;
  if (static_cast<int>(snapshots_.size()) == max_snapshots_) snapshots_.pop_front();
  snapshots_.push_back(Snapshot{step, tau, current_});
}

std::vector<Snapshot> SerialPropagator::take_snapshots() {
  std::vector<Snapshot> out(std::make_move_iterator(snapshots_.begin()),
                            std::make_move_iterator(snapshots_.end()));
  snapshots_.clear();
  return out;
}

EvolutionState evolve_to_convergence(Field3D initial, const PotentialGrid& grid,
                                     const EvolutionParams& params) {
  params.validate();
  if (initial.spec().n != grid.spec.n) {
    throw ConfigError("initial field and potential have different lattice sizes");
  }
  apply_dirichlet_boundary(initial, 0.0);

  SerialPropagator engine(std::move(initial), grid, params.max_snapshots);
  EvolutionState state;
  const auto outcome = detail::run_convergence_loop(engine, params, grid.spec.dtau, state.history);
  state.step_count = outcome.steps;
  state.tau = static_cast<double>(outcome.steps) * grid.spec.dtau;
  state.converged = outcome.converged;
  state.constraints = params.constraints;
  state.check_freq = params.check_freq;
  state.psi = engine.take_field();
  state.snapshots = engine.take_snapshots();
  return state;
}

} // namespace qfd
