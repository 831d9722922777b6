#pragma once

// The imaginary-time driver shared by the serial engine and the slab
// workers. An engine exposes
//
//   void        impose(const SymmetryConstraint&);
//   double      renormalize();      // returns the pre-scaling norm
//   double      advance();          // one step + renormalize; pre-scaling norm
//   double      step_overlap();     // <previous iterate | current iterate>
//   Observables measure();
//   void        snapshot(long step, double tau);
//
// and every call that reduces over the lattice returns the same value on
// every worker, so all workers take identical control-flow decisions.

#include <cmath>
#include <sstream>
#include <vector>

#include "qfd/error.hpp"
#include "qfd/evolve.hpp"

namespace qfd::detail {

struct LoopOutcome {
  long steps = 0;
  bool converged = false;
};

template <class Engine>
LoopOutcome run_convergence_loop(Engine& engine, const EvolutionParams& params, double dtau,
                                 std::vector<EnergyRecord>& history) {
  for (const auto& c : params.constraints) engine.impose(c);
  engine.renormalize();

  const int reimpose = params.effective_reimpose_freq();
  bool have_previous = false;
  double previous = 0.0;
  long step = 0;
  while (step < params.max_steps) {
    const double norm = engine.advance();
    ++step;
    const double tau = static_cast<double>(step) * dtau;

    if (params.snap_freq > 0 && step % params.snap_freq == 0) engine.snapshot(step, tau);

    const bool checking = step % params.check_freq == 0;
    if (checking) {
      const double overlap = engine.step_overlap();
      if (!(overlap > 0.0)) {
        std::ostringstream err;
        err << "evolution diverged at step " << step
            << ": consecutive iterates have overlap " << overlap
            << " (an unstable sign-alternating mode dominates; is dtau below a^2/3?)";
        throw NumericalDivergence(err.str());
      }
    }
    if (!params.constraints.empty() && step % reimpose == 0) {
      for (const auto& c : params.constraints) engine.impose(c);
    }
    if (!checking) continue;

    const Observables obs = engine.measure();
    history.push_back(EnergyRecord{step, tau, obs.energy, obs.binding, norm, obs.rms_radius});
    const double metric = obs.binding.value_or(obs.energy);
    if (have_previous && std::fabs(metric - previous) <= params.tol * std::fabs(metric)) {
      return LoopOutcome{step, true};
    }
    previous = metric;
    have_previous = true;
  }
  return LoopOutcome{step, false};
}

} // namespace qfd::detail
