#pragma once

// Run orchestration behind the `qfd` command-line tool.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qfd/evolve.hpp"
#include "qfd/lattice.hpp"
#include "qfd/multires.hpp"
#include "qfd/potential.hpp"
#include "qfd/symmetry.hpp"
#include "qfd/transport.hpp"

namespace qfd {

enum class TransportKind { inproc, tcp };

TransportKind parse_transport_kind(const std::string& name);
std::string to_string(TransportKind kind);

struct RunConfig {
  int n = 64;
  double a = 0.1;
  double mass = 1.0;
  double dtau = 0.0;  ///< 0 selects a^2/4

  PotentialKind potential = PotentialKind::harmonic;
  std::string potential_file;
  double depth = -100.0;  ///< dodecahedron well depth

  double tol = 1e-6;
  int check_freq = 100;
  int snap_freq = 0;  ///< 0 selects 10 * check_freq
  long max_steps = 1'000'000;
  int max_snapshots = 4;
  int reimpose_freq = 0;  ///< 0 selects check_freq

  int workers = 1;
  TransportKind transport = TransportKind::inproc;
  std::string endpoints;  ///< host:port per rank, tcp only
  bool spawn_local = false;  ///< tcp: start ranks 1..M-1 as local processes

  std::uint64_t seed = 1;
  std::vector<SymmetryConstraint> symmetry;
  int excited = 0;
  long polish_steps = -1;  ///< -1 selects 10 * check_freq
  double polish_tol = 0.0;

  std::vector<int> bootstrap;  ///< coarser lattice sizes run first, same box
  std::vector<double> carry{1.0};
  double bootstrap_tol = 0.0;  ///< tolerance of coarse stages; 0 uses tol

  std::string initial;  ///< wavefunction file replacing the random start
  std::filesystem::path output = "qfd-out";

  LatticeSpec spec() const;
  LatticeSpec spec_for(int n_sites) const;
  EvolutionParams params() const;
  /// Throws ConfigError naming the first violated constraint, including
  /// the a^2/3 stability limit.
  void validate() const;
};

/// key = value lines readable by the command line parser's --config.
void write_config(const RunConfig& config, const std::filesystem::path& path);

PotentialGrid make_potential(const RunConfig& config, const LatticeSpec& spec);

struct ExcitedSummary {
  double energy = 0.0;
  std::optional<double> binding;
  double rms_radius = 0.0;
  long snapshot_step = 0;
};

struct RunSummary {
  bool converged = false;
  long steps = 0;
  double tau = 0.0;
  double energy = 0.0;
  std::optional<double> binding;
  double rms_radius = 0.0;
  double wall_seconds = 0.0;
  std::vector<ExcitedSummary> excited;
  std::vector<StageReport> stages;
};

/// Runs the configuration as rank 0 and writes into config.output:
/// observables.csv, ground.qwf, excited_<k>.qwf and summary.json.
/// Throws qfd::Error subclasses; an unconverged run returns normally with
/// converged = false.
RunSummary run(const RunConfig& config);

/// Rank `rank` > 0 of a TCP run: joins every stage rank 0 runs.
void run_worker(const RunConfig& config, int rank);

/// Writes the observables CSV (header step,tau,E,E_binding,norm,r_rms).
void write_observables_csv(const std::vector<EnergyRecord>& history, const std::filesystem::path& path);

struct SliceSpec {
  Axis axis = Axis::z;
  int index = 0;  ///< padded plane index 1..N; 0 selects the middle plane
  bool density = false;  ///< write psi^2 instead of psi
};

/// CSV of one lattice plane with physical coordinates of the two in-plane
/// axes; N^2 rows. Throws ConfigError for a plane outside 1..N.
void export_slice(const Field3D& psi, const SliceSpec& slice, const std::filesystem::path& path);

// ---------------------------------------------------------------- benchmark

struct SampleStats {
  double mean = 0.0;
  double stddev = 0.0;      ///< sample standard deviation (R - 1)
  double std_error = 0.0;   ///< stddev / sqrt(R)
  int count = 0;
};

/// Throws ConfigError for fewer than two samples.
SampleStats summarize(const std::vector<double>& samples);

struct LineFit {
  double slope = 0.0;
  double slope_error = 0.0;  ///< standard error; 0 with two points
  double intercept = 0.0;
};

/// Least-squares line through (x, y); needs two distinct x.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct WorkerTiming {
  int workers = 1;
  SampleStats seconds_per_iteration;
};

struct BenchmarkReport {
  int n = 0;
  long iterations = 0;
  int repetitions = 0;
  std::vector<WorkerTiming> timings;
  double dtu = 0.0;  ///< seconds per site update
  double dtc = 0.0;  ///< seconds per site sent and returned between workers
  LineFit scaling;   ///< log(time per iteration) against log(M)
  bool speedup_1_to_2 = false;  ///< mean time at M=2 below M=1
  long max_nodes_1d = 0;
  long max_nodes_3d = 0;
};

/// Seconds per site update of the serial stepper over `iterations` steps.
double measure_update_time(const RunConfig& config, long iterations);

/// Seconds per site for a halo plane making a round trip between two
/// in-process workers, averaged over `round_trips`.
double measure_transport_time(int n, int round_trips);

/// Times `iterations` steps for each M with R repetitions from one fixed
/// initial field. Throws ConfigError for R < 2.
BenchmarkReport benchmark(const RunConfig& config, const std::vector<int>& workers,
                          int repetitions, long iterations);

void write_benchmark_json(const BenchmarkReport& report, const std::filesystem::path& path);

} // namespace qfd
