#include "qfd/app.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include <netinet/in.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "qfd/error.hpp"
#include "qfd/observables.hpp"
#include "qfd/parallel.hpp"
#include "qfd/states.hpp"

extern char** environ;

namespace qfd {

TransportKind parse_transport_kind(const std::string& name) {
  if (name == "inproc") return TransportKind::inproc;
  if (name == "tcp") return TransportKind::tcp;
  throw ConfigError("unknown transport '" + name + "' (inproc or tcp)");
}

std::string to_string(TransportKind kind) { return kind == TransportKind::tcp ? "tcp" : "inproc"; }

LatticeSpec RunConfig::spec() const { return spec_for(n); }

LatticeSpec RunConfig::spec_for(int n_sites) const {
  LatticeSpec s;
  s.n = n_sites;
  s.a = n_sites == n ? a : (static_cast<double>(n) * a) / n_sites;
  s.mass = mass;
  s.dtau = dtau > 0.0 ? dtau : s.a * s.a / 4.0;
  return s;
}

EvolutionParams RunConfig::params() const {
  EvolutionParams p;
  p.tol = tol;
  p.check_freq = check_freq;
  p.snap_freq = snap_freq > 0 ? snap_freq : 10 * check_freq;
  p.max_steps = max_steps;
  p.max_snapshots = max_snapshots;
  p.constraints = symmetry;
  p.reimpose_freq = reimpose_freq;
  return p;
}

void RunConfig::validate() const {
  if (dtau < 0.0) throw ConfigError("dtau must be positive (or 0 for a^2/4)");
  std::vector<int> sizes = bootstrap;
  sizes.push_back(n);
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    if (s > 0 && sizes[s] <= sizes[s - 1]) {
      throw ConfigError("bootstrap sizes must increase strictly and stay below n");
    }
    const LatticeSpec sp = spec_for(sizes[s]);
    sp.validate();
    const auto stable = check_stability(sp);
    if (!stable.ok) {
      std::ostringstream err;
      err << std::setprecision(6) << "dtau = " << sp.dtau << " is unstable for a = " << sp.a
          << ": the scheme needs dtau < a^2/3 = " << stable.limit;
      throw ConfigError(err.str());
    }
    partition(sp, workers);
  }
  params().validate();
  if (potential == PotentialKind::file && potential_file.empty()) {
    throw ConfigError("potential = file needs potential-file");
  }
  if (excited < 0) throw ConfigError("excited must be non-negative");
  if (excited > max_snapshots) {
    throw ConfigError("excited = " + std::to_string(excited) + " needs at least as many max-snapshots");
  }
  if (polish_steps < -1) throw ConfigError("polish-steps must be non-negative");
  if (polish_tol < 0.0 || bootstrap_tol < 0.0) throw ConfigError("tolerances must be non-negative");
  if (carry.empty()) throw ConfigError("carry needs at least one weight");
  if (transport == TransportKind::tcp && workers > 1 && !spawn_local) {
    if (static_cast<int>(parse_endpoints(endpoints).size()) != workers) {
      throw ConfigError("tcp transport needs one endpoint per worker");
    }
  }
}

namespace {

template <class T>
std::string join(const std::vector<T>& items, const std::function<std::string(const T&)>& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ',';
    out += fmt(items[i]);
  }
  return out;
}

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

} // namespace

void write_config(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "n = " << c.n << "\n"
      << "a = " << num(c.a) << "\n"
      << "mass = " << num(c.mass) << "\n"
      << "dtau = " << num(c.dtau) << "\n"
      << "potential = \"" << to_string(c.potential) << "\"\n";
  if (!c.potential_file.empty()) out << "potential-file = \"" << c.potential_file << "\"\n";
  out << "depth = " << num(c.depth) << "\n"
      << "tol = " << num(c.tol) << "\n"
      << "check-freq = " << c.check_freq << "\n"
      << "snap-freq = " << c.snap_freq << "\n"
      << "max-steps = " << c.max_steps << "\n"
      << "max-snapshots = " << c.max_snapshots << "\n"
      << "reimpose-freq = " << c.reimpose_freq << "\n"
      << "workers = " << c.workers << "\n"
      << "transport = \"" << to_string(c.transport) << "\"\n";
  if (!c.endpoints.empty()) out << "endpoints = \"" << c.endpoints << "\"\n";
  out << "seed = " << c.seed << "\n";
  if (!c.symmetry.empty()) {
    out << "symmetry = \""
        << join<SymmetryConstraint>(c.symmetry, [](const auto& s) { return to_string(s); }) << "\"\n";
  }
  out << "excited = " << c.excited << "\n"
      << "polish-steps = " << c.polish_steps << "\n"
      << "polish-tol = " << num(c.polish_tol) << "\n";
  if (!c.bootstrap.empty()) {
    out << "bootstrap = \"" << join<int>(c.bootstrap, [](const int& v) { return std::to_string(v); })
        << "\"\n";
  }
  out << "carry = \"" << join<double>(c.carry, [](const double& v) { return num(v); }) << "\"\n"
      << "bootstrap-tol = " << num(c.bootstrap_tol) << "\n";
  if (!c.initial.empty()) out << "initial = \"" << c.initial << "\"\n";
  out << "output = \"" << c.output.string() << "\"\n";
}

PotentialGrid make_potential(const RunConfig& config, const LatticeSpec& spec) {
  switch (config.potential) {
  case PotentialKind::free: return constant(spec, 0.0);
  case PotentialKind::coulomb: return coulomb(spec);
  case PotentialKind::harmonic: return harmonic(spec);
  case PotentialKind::dodecahedron: return dodecahedron(spec, config.depth);
  case PotentialKind::file: return potential_from_file(config.potential_file, spec);
  }
  throw ConfigError("unknown potential kind");
}

void write_observables_csv(const std::vector<EnergyRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "step,tau,E,E_binding,norm,r_rms\n" << std::setprecision(17);
  for (const auto& r : history) {
    out << r.step << ',' << r.tau << ',' << r.energy << ',';
    if (r.binding) out << *r.binding;
    out << ',' << r.norm << ',' << r.rms_radius << '\n';
  }
}

void export_slice(const Field3D& psi, const SliceSpec& slice, const std::filesystem::path& path) {
  const int n = psi.n();
  const int index = slice.index == 0 ? (n + 1) / 2 : slice.index;
  if (index < 1 || index > n) {
    throw ConfigError("plane " + std::to_string(index) + " lies outside 1.." + std::to_string(n));
  }
  static const char* names[3][2] = {{"y", "z"}, {"x", "z"}, {"x", "y"}};
  const auto axis = static_cast<int>(slice.axis);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << names[axis][0] << ',' << names[axis][1] << ',' << (slice.density ? "psi2" : "psi") << '\n'
      << std::setprecision(17);
  const LatticeSpec& spec = psi.spec();
  for (int u = 1; u <= n; ++u) {
    for (int v = 1; v <= n; ++v) {
      double value = 0.0;
      switch (slice.axis) {
      case Axis::x: value = psi(index, u, v); break;
      case Axis::y: value = psi(u, index, v); break;
      case Axis::z: value = psi(u, v, index); break;
      }
      if (slice.density) value *= value;
      out << spec.coordinate(u) << ',' << spec.coordinate(v) << ',' << value << '\n';
    }
  }
}

// ---------------------------------------------------------------- run

namespace {

std::vector<BootstrapStage> schedule_of(const RunConfig& config) {
  std::vector<BootstrapStage> out;
  for (int ns : config.bootstrap) {
    BootstrapStage st{config.spec_for(ns), config.params()};
    if (config.bootstrap_tol > 0.0) st.params.tol = config.bootstrap_tol;
    out.push_back(st);
  }
  out.push_back(BootstrapStage{config.spec(), config.params()});
  return out;
}

std::uint16_t free_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  socklen_t len = sizeof addr;
  if (fd < 0 || ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) < 0) {
    if (fd >= 0) ::close(fd);
    throw TransportError("no free local port");
  }
  ::close(fd);
  return ntohs(addr.sin_port);
}

// Local worker processes for a tcp run.
class LocalWorkers {
public:
  explicit LocalWorkers(const RunConfig& config) {
    const auto conf = config.output / "worker.conf";
    write_config(config, conf);
    for (int r = 1; r < config.workers; ++r) {
      std::vector<std::string> args{"/proc/self/exe", "launch-worker", "--config", conf.string(),
                                    "--rank", std::to_string(r)};
      std::vector<char*> argv;
      for (auto& s : args) argv.push_back(s.data());
      argv.push_back(nullptr);
      pid_t pid = 0;
      if (::posix_spawn(&pid, "/proc/self/exe", nullptr, nullptr, argv.data(), environ) != 0) {
        throw TransportError("could not start worker process " + std::to_string(r));
      }
      pids_.push_back(pid);
    }
  }
  ~LocalWorkers() {
    for (pid_t pid : pids_) {
      int status = 0;
      ::waitpid(pid, &status, 0);
    }
  }

private:
  std::vector<pid_t> pids_;
};

nlohmann::json json_of(std::optional<double> v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

} // namespace

RunSummary run(const RunConfig& input) {
  RunConfig config = input;
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  std::filesystem::create_directories(config.output);

  std::unique_ptr<LocalWorkers> spawned;
  std::unique_ptr<TcpTransport> tcp;
  if (config.transport == TransportKind::tcp && config.workers > 1) {
    if (config.spawn_local) {
      config.endpoints.clear();
      for (int r = 0; r < config.workers; ++r) {
        if (r > 0) config.endpoints += ',';
        config.endpoints += "127.0.0.1:" + std::to_string(free_port());
      }
      config.spawn_local = false;
      spawned = std::make_unique<LocalWorkers>(config);
    }
    tcp = std::make_unique<TcpTransport>(0, parse_endpoints(config.endpoints));
  }

  BootstrapOptions options;
  options.potential = [&config](const LatticeSpec& s) { return make_potential(config, s); };
  options.seed = config.seed;
  options.workers = config.workers;
  options.carry = config.carry;
  if (!config.initial.empty()) options.initial = load_wavefunction(config.initial).psi;
  if (tcp) {
    options.evolve = [&tcp](Field3D init, const PotentialGrid& grid, const EvolutionParams& params) {
      return std::move(*run_rank(*tcp, grid, params, &init));
    };
  }

  BootstrapResult boot = bootstrap_run(schedule_of(config), options);
  tcp.reset();
  spawned.reset();
  const EvolutionState& state = boot.state;
  const PotentialGrid grid = make_potential(config, config.spec());

  RunSummary summary;
  summary.converged = state.converged;
  summary.steps = state.step_count;
  summary.tau = state.tau;
  const Observables obs = measure(state.psi, grid);
  summary.energy = obs.energy;
  summary.binding = obs.binding;
  summary.rms_radius = obs.rms_radius;
  summary.stages = boot.stages;

  write_observables_csv(state.history, config.output / "observables.csv");
  save_wavefunction(state.psi, config.output / "ground.qwf", static_cast<std::uint64_t>(state.step_count));

  if (config.excited > 0 && state.converged) {
    ExcitedOptions eo = excited_options_for(state, config.excited);
    if (config.polish_steps >= 0) eo.polish_steps = config.polish_steps;
    eo.tol = config.polish_tol;
    const auto excited = extract_excited(state, grid, eo);
    for (std::size_t k = 0; k < excited.size(); ++k) {
      const auto& e = excited[k];
      summary.excited.push_back(ExcitedSummary{e.energy, e.binding, e.rms_radius, e.snapshot_step});
      save_wavefunction(e.psi, config.output / ("excited_" + std::to_string(k + 1) + ".qwf"));
    }
  }
  summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  nlohmann::json j;
  j["converged"] = summary.converged;
  j["steps"] = summary.steps;
  j["tau"] = summary.tau;
  j["energy"] = summary.energy;
  j["binding_energy"] = json_of(summary.binding);
  j["rms_radius"] = summary.rms_radius;
  j["wall_seconds"] = summary.wall_seconds;
  j["workers"] = config.workers;
  j["transport"] = to_string(config.transport);
  j["n"] = config.n;
  j["a"] = config.a;
  j["dtau"] = config.spec().dtau;
  j["excited"] = nlohmann::json::array();
  for (const auto& e : summary.excited) {
    j["excited"].push_back({{"energy", e.energy}, {"binding_energy", json_of(e.binding)},
                            {"rms_radius", e.rms_radius}, {"snapshot_step", e.snapshot_step}});
  }
  j["stages"] = nlohmann::json::array();
  for (const auto& s : summary.stages) {
    j["stages"].push_back({{"n", s.spec.n}, {"a", s.spec.a}, {"steps", s.steps},
                           {"converged", s.converged}, {"seconds", s.seconds},
                           {"energy", s.energy}, {"binding_energy", json_of(s.binding)}});
  }
  std::ofstream(config.output / "summary.json") << j.dump(2) << '\n';
  config.endpoints = input.endpoints;
  config.spawn_local = input.spawn_local;
  write_config(config, config.output / "run.conf");
  return summary;
}

void run_worker(const RunConfig& config, int rank) {
  config.validate();
  if (config.transport != TransportKind::tcp) throw ConfigError("launch-worker needs transport = tcp");
  if (rank < 1 || rank >= config.workers) throw ConfigError("worker rank must lie in 1..workers-1");
  TcpTransport transport(rank, parse_endpoints(config.endpoints));
  for (const auto& stage : schedule_of(config)) {
    const PotentialGrid grid = make_potential(config, stage.spec);
    run_rank(transport, grid, stage.params, nullptr);
  }
}

// ---------------------------------------------------------------- benchmark

SampleStats summarize(const std::vector<double>& samples) {
  if (samples.size() < 2) throw ConfigError("statistics need at least two samples");
  SampleStats s;
  s.count = static_cast<int>(samples.size());
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean = sum / s.count;
  double ss = 0.0;
  for (double v : samples) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / (s.count - 1));
  s.std_error = s.stddev / std::sqrt(static_cast<double>(s.count));
  return s;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("a line fit needs two or more points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw ConfigError("a line fit needs two distinct x values");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - (f.intercept + f.slope * x[i]);
      ssr += r * r;
    }
    f.slope_error = std::sqrt(ssr / (n - 2.0) / sxx);
  }
  return f;
}

namespace {

Field3D benchmark_field(const RunConfig& config) {
  Field3D f = allocate(config.spec());
  fill_random_gaussian(f, config.seed);
  return f;
}

} // namespace

double measure_update_time(const RunConfig& config, long iterations) {
  const LatticeSpec spec = config.spec();
  const PotentialGrid grid = make_potential(config, spec);
  SerialPropagator prop(benchmark_field(config), grid);
  prop.renormalize();
  const auto t0 = std::chrono::steady_clock::now();
  for (long i = 0; i < iterations; ++i) prop.advance();
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double sites = std::pow(static_cast<double>(spec.n), 3);
  return s / (static_cast<double>(iterations) * sites);
}

double measure_transport_time(int n, int round_trips) {
  InProcessHub hub(2);
  auto a = hub.endpoint(0);
  auto b = hub.endpoint(1);
  const std::size_t plane = static_cast<std::size_t>(n + 2) * static_cast<std::size_t>(n + 2);
  std::thread echo([&] {
    for (int i = 0; i < round_trips; ++i) {
      Frame f = b->receive(0, MessageKind::halo);
      b->send(0, std::move(f));
    }
  });
  const std::vector<double> payload(plane, 1.0);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < round_trips; ++i) {
    a->send(1, Frame{0, static_cast<std::uint32_t>(i), MessageKind::halo, Direction::right, payload});
    receive_tagged(*a, 1, MessageKind::halo, static_cast<std::uint32_t>(i));
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  echo.join();
  return s / (static_cast<double>(round_trips) * static_cast<double>(plane));
}

BenchmarkReport benchmark(const RunConfig& config, const std::vector<int>& workers, int repetitions,
                          long iterations) {
  if (repetitions < 2) throw ConfigError("benchmark needs at least two repetitions");
  if (iterations < 1) throw ConfigError("benchmark needs at least one iteration");
  if (workers.empty()) throw ConfigError("benchmark needs at least one worker count");
  const LatticeSpec spec = config.spec();
  const PotentialGrid grid = make_potential(config, spec);
  const Field3D initial = benchmark_field(config);

  EvolutionParams params;
  params.tol = 1e-300;
  params.check_freq = static_cast<int>(iterations);
  params.max_steps = iterations;
  params.snap_freq = 0;
  params.max_snapshots = 0;

  BenchmarkReport report;
  report.n = spec.n;
  report.iterations = iterations;
  report.repetitions = repetitions;
  std::vector<double> logm, logt;
  int max_workers = 1;
  for (int m : workers) {
    partition(spec, m);
    max_workers = std::max(max_workers, m);
    std::vector<double> samples;
    for (int r = 0; r < repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      evolve_parallel(initial, grid, params, m);
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      samples.push_back(s / static_cast<double>(iterations));
    }
    WorkerTiming wt{m, summarize(samples)};
    report.timings.push_back(wt);
    logm.push_back(std::log(static_cast<double>(m)));
    logt.push_back(std::log(wt.seconds_per_iteration.mean));
  }
  if (report.timings.size() >= 2) report.scaling = fit_line(logm, logt);

  const WorkerTiming* one = nullptr;
  const WorkerTiming* two = nullptr;
  for (const auto& t : report.timings) {
    if (t.workers == 1) one = &t;
    if (t.workers == 2) two = &t;
  }
  report.speedup_1_to_2 =
      one && two && two->seconds_per_iteration.mean < one->seconds_per_iteration.mean;

  report.dtu = measure_update_time(config, iterations);
  report.dtc = measure_transport_time(spec.n, 200);
  const ScalingEstimate est = scaling_estimate(report.dtu, report.dtc, spec.n, max_workers);
  report.max_nodes_1d = est.max_nodes_1d;
  report.max_nodes_3d = est.max_nodes_3d;
  return report;
}

void write_benchmark_json(const BenchmarkReport& r, const std::filesystem::path& path) {
  nlohmann::json j;
  j["n"] = r.n;
  j["iterations"] = r.iterations;
  j["repetitions"] = r.repetitions;
  j["timings"] = nlohmann::json::array();
  for (const auto& t : r.timings) {
    j["timings"].push_back({{"workers", t.workers},
                            {"mean_seconds_per_iteration", t.seconds_per_iteration.mean},
                            {"stddev", t.seconds_per_iteration.stddev},
                            {"std_error", t.seconds_per_iteration.std_error},
                            {"runs", t.seconds_per_iteration.count}});
  }
  j["dtu_seconds_per_site"] = r.dtu;
  j["dtc_seconds_per_site"] = r.dtc;
  j["slope"] = r.scaling.slope;
  j["slope_error"] = r.scaling.slope_error;
  j["speedup_1_to_2"] = r.speedup_1_to_2;
  j["max_nodes_1d"] = r.max_nodes_1d;
  j["max_nodes_3d"] = r.max_nodes_3d;
  j["host_threads"] = std::thread::hardware_concurrency();
  j["note"] = "timings and node bounds are specific to this host";
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

} // namespace qfd
