// qfd: command-line driver (run, benchmark, export, resample, launch-worker).

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "qfd/app.hpp"
#include "qfd/error.hpp"
#include "qfd/multires.hpp"

namespace {

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream in(item);
    T v{};
    if (!(in >> v) || !in.eof()) throw qfd::ConfigError(std::string("bad entry '") + item + "' in " + what);
    out.push_back(v);
  }
  return out;
}

void print_energy(const char* label, double e, const std::optional<double>& binding) {
  std::printf("%s = %.10g", label, e);
  if (binding) std::printf("  (binding %.10g)", *binding);
  std::printf("\n");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Imaginary-time finite-difference solver for the 3d Schroedinger equation"};
  app.set_config("--config", "", "key = value file; command-line options override it");
  app.fallthrough();
  app.require_subcommand(1);

  qfd::RunConfig cfg;
  std::string potential = "harmonic", transport = "inproc", symmetry, bootstrap, carry = "1", output = "qfd-out";
  app.add_option("--n", cfg.n, "sites per axis")->capture_default_str();
  app.add_option("--a", cfg.a, "lattice spacing")->capture_default_str();
  app.add_option("--mass", cfg.mass, "particle mass")->capture_default_str();
  app.add_option("--dtau", cfg.dtau, "imaginary-time step; 0 means a^2/4")->capture_default_str();
  app.add_option("--potential", potential, "free, coulomb, harmonic, dodecahedron or file")->capture_default_str();
  app.add_option("--potential-file", cfg.potential_file, "potential file for potential = file");
  app.add_option("--depth", cfg.depth, "dodecahedron well depth")->capture_default_str();
  app.add_option("--tol", cfg.tol, "relative energy change that ends the run")->capture_default_str();
  app.add_option("--check-freq", cfg.check_freq, "steps between energy checks")->capture_default_str();
  app.add_option("--snap-freq", cfg.snap_freq, "steps between snapshots; 0 means 10 * check-freq")->capture_default_str();
  app.add_option("--max-steps", cfg.max_steps, "step limit")->capture_default_str();
  app.add_option("--max-snapshots", cfg.max_snapshots, "snapshots kept (most recent)")->capture_default_str();
  app.add_option("--reimpose-freq", cfg.reimpose_freq, "steps between symmetry re-imposition; 0 means check-freq")->capture_default_str();
  app.add_option("--workers", cfg.workers, "slab workers M (must divide n)")->capture_default_str();
  app.add_option("--transport", transport, "inproc or tcp")->capture_default_str();
  app.add_option("--endpoints", cfg.endpoints, "host:port per rank for tcp");
  app.add_flag("--spawn-local", cfg.spawn_local, "tcp: start ranks 1..M-1 as local processes");
  app.add_option("--seed", cfg.seed, "random initial field seed")->capture_default_str();
  app.add_option("--symmetry", symmetry, "constraints such as Az or Sx,Sy,Sz");
  app.add_option("--excited", cfg.excited, "excited states extracted from snapshots")->capture_default_str();
  app.add_option("--polish-steps", cfg.polish_steps, "steps polishing each excited state; -1 means 10 * check-freq")->capture_default_str();
  app.add_option("--polish-tol", cfg.polish_tol, "stop polishing at this relative energy change; 0 disables")->capture_default_str();
  app.add_option("--bootstrap", bootstrap, "coarser sizes run first at the same box length, e.g. 32");
  app.add_option("--carry", carry, "weights of ground and excited states carried between stages")->capture_default_str();
  app.add_option("--bootstrap-tol", cfg.bootstrap_tol, "tolerance of coarse stages; 0 means tol")->capture_default_str();
  app.add_option("--initial", cfg.initial, "wavefunction file used as the initial field");
  app.add_option("--output", output, "output directory")->capture_default_str();

  auto* run_cmd = app.add_subcommand("run", "evolve to convergence and write results");

  auto* bench_cmd = app.add_subcommand("benchmark", "time iterations for several worker counts");
  std::string worker_list = "1,2,4";
  int repetitions = 10;
  long iterations = 50;
  bench_cmd->add_option("--workers-list", worker_list, "worker counts to time")->capture_default_str();
  bench_cmd->add_option("--repetitions", repetitions, "runs per worker count")->capture_default_str();
  bench_cmd->add_option("--iterations", iterations, "steps per run")->capture_default_str();

  auto* export_cmd = app.add_subcommand("export", "write one plane of a wavefunction file as CSV");
  std::string input, csv, axis = "z";
  int plane = 0;
  bool density = false;
  export_cmd->add_option("--input", input, "wavefunction file")->required();
  export_cmd->add_option("--axis", axis, "axis normal to the plane")->capture_default_str();
  export_cmd->add_option("--index", plane, "plane index 1..N; 0 means the middle")->capture_default_str();
  export_cmd->add_flag("--density", density, "write psi^2");
  export_cmd->add_option("--csv", csv, "output CSV")->required();

  auto* resample_cmd = app.add_subcommand("resample", "resample a wavefunction file to another N at the same box");
  std::string resample_in, resample_out;
  int target_n = 0;
  resample_cmd->add_option("--input", resample_in, "wavefunction file")->required();
  resample_cmd->add_option("--to", target_n, "target sites per axis")->required();
  resample_cmd->add_option("--out", resample_out, "output wavefunction file")->required();

  auto* worker_cmd = app.add_subcommand("launch-worker", "run one non-zero rank of a tcp run");
  int rank = 1;
  worker_cmd->add_option("--rank", rank, "this worker's rank")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : static_cast<int>(qfd::ExitStatus::config_error);
  }

  try {
    cfg.potential = qfd::parse_potential_kind(potential);
    cfg.transport = qfd::parse_transport_kind(transport);
    cfg.symmetry = qfd::parse_constraints(symmetry);
    cfg.bootstrap = parse_list<int>(bootstrap, "bootstrap");
    cfg.carry = parse_list<double>(carry, "carry");
    cfg.output = output;

    if (run_cmd->parsed()) {
      const auto s = qfd::run(cfg);
      for (const auto& st : s.stages) {
        std::printf("stage N=%d a=%g: %ld steps, %.2f s%s\n", st.spec.n, st.spec.a, st.steps, st.seconds,
                    st.converged ? "" : " (not converged)");
      }
      print_energy("E0", s.energy, s.binding);
      for (std::size_t k = 0; k < s.excited.size(); ++k) {
        const std::string label = "E" + std::to_string(k + 1);
        print_energy(label.c_str(), s.excited[k].energy, s.excited[k].binding);
      }
      std::printf("r_rms = %.10g\nsteps = %ld, wall = %.2f s, output in %s\n", s.rms_radius, s.steps,
                  s.wall_seconds, cfg.output.string().c_str());
      if (!s.converged) {
        std::fprintf(stderr, "error: no convergence within %ld steps\n", cfg.max_steps);
        return static_cast<int>(qfd::ExitStatus::non_convergence);
      }
    } else if (bench_cmd->parsed()) {
      cfg.validate();
      const auto report = qfd::benchmark(cfg, parse_list<int>(worker_list, "workers-list"), repetitions, iterations);
      std::filesystem::create_directories(cfg.output);
      qfd::write_benchmark_json(report, cfg.output / "benchmark.json");
      for (const auto& t : report.timings) {
        std::printf("M=%d  %.6g s/iteration  +- %.2g (R=%d)\n", t.workers, t.seconds_per_iteration.mean,
                    t.seconds_per_iteration.std_error, t.seconds_per_iteration.count);
      }
      std::printf("slope %.3f +- %.3f, dtu %.3g s/site, dtc %.3g s/site, N_1d <= %ld, N_3d <= %ld\n",
                  report.scaling.slope, report.scaling.slope_error, report.dtu, report.dtc,
                  report.max_nodes_1d, report.max_nodes_3d);
    } else if (export_cmd->parsed()) {
      qfd::SliceSpec slice;
      slice.axis = qfd::parse_constraint("S" + axis).axis;
      slice.index = plane;
      slice.density = density;
      qfd::export_slice(qfd::load_wavefunction(input).psi, slice, csv);
    } else if (resample_cmd->parsed()) {
      const auto loaded = qfd::load_wavefunction(resample_in);
      const auto& from = loaded.psi.spec();
      const auto to = qfd::LatticeSpec::with_default_step(target_n, from.box_length() / target_n, from.mass);
      qfd::save_wavefunction(qfd::resample(loaded.psi, to), resample_out, loaded.step_count);
    } else if (worker_cmd->parsed()) {
      qfd::run_worker(cfg, rank);
    }
  } catch (const qfd::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.status());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(qfd::ExitStatus::config_error);
  }
  return 0;
}
