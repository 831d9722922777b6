#include "qfd/multires.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "qfd/error.hpp"
#include "qfd/lattice_file.hpp"
#include "qfd/parallel.hpp"
#include "qfd/states.hpp"

namespace qfd {

void save_wavefunction(const Field3D& psi, const std::filesystem::path& path, std::uint64_t step_count) {
  for (double v : psi.values()) {
    if (!std::isfinite(v)) throw NumericalDivergence("refusing to save a non-finite wavefunction");
  }
  const LatticeSpec& s = psi.spec();
  LatticeFileHeader h;
  h.kind = PayloadKind::wavefunction;
  h.n = static_cast<std::uint64_t>(s.n);
  h.a = s.a;
  h.mass = s.mass;
  h.v_inf = 0.0;
  h.step_count = step_count;
  write_lattice_file(path, h, psi.values());
}

LoadedWavefunction load_wavefunction(const std::filesystem::path& path) {
  LatticeFile file = read_lattice_file(path);
  if (file.header.kind != PayloadKind::wavefunction) {
    throw FormatError(path.string() + " holds a potential, not a wavefunction");
  }
  const auto spec = LatticeSpec::with_default_step(static_cast<int>(file.header.n), file.header.a,
                                                   file.header.mass);
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  LoadedWavefunction out{Field3D(spec), file.header.step_count};
  std::copy(file.values.begin(), file.values.end(), out.psi.values().begin());
  apply_dirichlet_boundary(out.psi, 0.0);
  return out;
}

Field3D resample_unnormalized(const Field3D& coarse, const LatticeSpec& fine) {
  const LatticeSpec& cs = coarse.spec();
  fine.validate();
  const double lc = cs.box_length();
  const double lf = fine.box_length();
  if (std::fabs(lc - lf) > 1e-12 * std::fabs(lc)) {
    throw ConfigError("resampling must keep the box length (" + std::to_string(lc) + " vs " +
                      std::to_string(lf) + ")");
  }
  const int nc = cs.n;
  const double ratio = fine.a / cs.a;

  struct Weight {
    int lo;
    double frac;
  };
  std::vector<Weight> w(static_cast<std::size_t>(fine.n + 1));
  for (int n = 1; n <= fine.n; ++n) {
    const double t = std::clamp((n - fine.center()) * ratio + cs.center(), 1.0, static_cast<double>(nc));
    const int lo = std::min(static_cast<int>(std::floor(t)), nc - 1);
    w[static_cast<std::size_t>(n)] = Weight{lo, t - lo};
  }

  Field3D out(fine);
  for (int i = 1; i <= fine.n; ++i) {
    const auto [i0, fx] = w[static_cast<std::size_t>(i)];
    for (int j = 1; j <= fine.n; ++j) {
      const auto [j0, fy] = w[static_cast<std::size_t>(j)];
      for (int k = 1; k <= fine.n; ++k) {
        const auto [k0, fz] = w[static_cast<std::size_t>(k)];
        auto lerp_z = [&](int ii, int jj) {
          return (1.0 - fz) * coarse(ii, jj, k0) + fz * coarse(ii, jj, k0 + 1);
        };
        const double y0 = (1.0 - fy) * lerp_z(i0, j0) + fy * lerp_z(i0, j0 + 1);
        const double y1 = (1.0 - fy) * lerp_z(i0 + 1, j0) + fy * lerp_z(i0 + 1, j0 + 1);
        out(i, j, k) = (1.0 - fx) * y0 + fx * y1;
      }
    }
  }
  return out;
}

Field3D resample(const Field3D& coarse, const LatticeSpec& fine) {
  Field3D out = resample_unnormalized(coarse, fine);
  renormalize(out);
  return out;
}

namespace {

void check_schedule(const std::vector<BootstrapStage>& schedule, int workers) {
  if (schedule.empty()) throw ConfigError("bootstrap schedule is empty");
  const double length = schedule.front().spec.box_length();
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    const LatticeSpec& spec = schedule[s].spec;
    spec.validate();
    schedule[s].params.validate();
    partition(spec, workers);
    if (s > 0 && spec.n <= schedule[s - 1].spec.n) {
      throw ConfigError("bootstrap lattice sizes must increase strictly");
    }
    if (std::fabs(spec.box_length() - length) > 1e-12 * length) {
      throw ConfigError("bootstrap stages must share one box length");
    }
  }
}

EvolutionState evolve_stage(Field3D initial, const PotentialGrid& grid, const EvolutionParams& params,
                            int workers) {
  if (workers > 1) return evolve_parallel(std::move(initial), grid, params, workers).state;
  return evolve_to_convergence(std::move(initial), grid, params);
}

Field3D carried_state(const EvolutionState& state, const PotentialGrid& grid,
                      const std::vector<double>& carry) {
  if (carry.size() <= 1) return state.psi;
  auto excited = extract_excited(state, grid, excited_options_for(state, static_cast<int>(carry.size()) - 1));
  Field3D mix = state.psi;
  for (double& v : mix.values()) v *= carry[0];
  for (std::size_t k = 0; k < excited.size(); ++k) {
    const auto src = excited[k].psi.values();
    auto dst = mix.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += carry[k + 1] * src[i];
  }
  return mix;
}

} // namespace

BootstrapResult bootstrap_run(const std::vector<BootstrapStage>& schedule,
                              const BootstrapOptions& options) {
  if (!options.potential) throw ConfigError("bootstrap needs a potential");
  if (options.carry.empty()) throw ConfigError("bootstrap carry weights are empty");
  check_schedule(schedule, options.workers);

  BootstrapResult result;
  Field3D next;
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    const BootstrapStage& stage = schedule[s];
    const auto start = std::chrono::steady_clock::now();
    const PotentialGrid grid = options.potential(stage.spec);

    Field3D initial;
    if (s == 0) {
      if (options.initial) {
        const LatticeSpec& given = options.initial->spec();
        if (given.n == stage.spec.n && given.a == stage.spec.a) {
          initial = Field3D(stage.spec);
          std::copy(options.initial->values().begin(), options.initial->values().end(),
                    initial.values().begin());
        } else {
          initial = resample(*options.initial, stage.spec);
        }
      } else {
        initial = allocate(stage.spec);
        fill_random_gaussian(initial, options.seed);
      }
    } else {
      initial = resample(next, stage.spec);
    }

    EvolutionState state = options.evolve
                               ? options.evolve(std::move(initial), grid, stage.params)
                               : evolve_stage(std::move(initial), grid, stage.params, options.workers);
    const bool last = s + 1 == schedule.size();
    if (!state.converged && !last) {
      throw NonConvergence("bootstrap stage N = " + std::to_string(stage.spec.n) +
                           " did not converge in " + std::to_string(state.step_count) + " steps");
    }
    if (!last) next = carried_state(state, grid, options.carry);

    StageReport report;
    report.spec = stage.spec;
    report.steps = state.step_count;
    report.converged = state.converged;
    if (!state.history.empty()) {
      report.energy = state.history.back().energy;
      report.binding = state.history.back().binding;
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.stages.push_back(report);
    if (last) result.state = std::move(state);
  }
  return result;
}

} // namespace qfd
