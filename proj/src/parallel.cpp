#include "qfd/parallel.hpp"

#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include "qfd/convergence_loop.hpp"
#include "qfd/error.hpp"

namespace qfd {

SlabPartition partition(const LatticeSpec& spec, int workers) {
  if (workers < 1) throw ConfigError("worker count must be at least 1");
  if (spec.n % workers != 0) {
    throw ConfigError("N = " + std::to_string(spec.n) + " is not divisible by " +
                      std::to_string(workers) + " workers");
  }
  SlabPartition p;
  p.n = spec.n;
  p.workers = workers;
  p.width = spec.n / workers;
  for (int r = 0; r < workers; ++r) {
    Slab s;
    s.rank = r;
    s.first = r * p.width + 1;
    s.last = (r + 1) * p.width;
    if (r > 0) s.left = r - 1;
    if (r + 1 < workers) s.right = r + 1;
    p.slabs.push_back(s);
  }
  return p;
}

std::vector<double> reduce_broadcast(Transport& t, std::span<const double> local, int quantities,
                                     std::uint32_t tag) {
  if (quantities < 1 || local.size() % static_cast<std::size_t>(quantities) != 0) {
    throw std::invalid_argument("reduction blocks do not divide the partials");
  }
  const int m = t.size();
  if (t.rank() != 0) {
    t.send(0, Frame{0, tag, MessageKind::reduction, Direction::none, {local.begin(), local.end()}});
    Frame f = receive_tagged(t, 0, MessageKind::broadcast, tag);
    if (f.payload.size() != static_cast<std::size_t>(quantities)) {
      throw ProtocolError("broadcast carries the wrong number of totals");
    }
    return std::move(f.payload);
  }

  std::vector<std::vector<double>> parts(static_cast<std::size_t>(m));
  parts[0].assign(local.begin(), local.end());
  for (int r = 1; r < m; ++r) {
    Frame f = receive_tagged(t, r, MessageKind::reduction, tag);
    if (f.payload.size() % static_cast<std::size_t>(quantities) != 0) {
      throw ProtocolError("reduction partial from rank " + std::to_string(r) + " has a bad length");
    }
    parts[static_cast<std::size_t>(r)] = std::move(f.payload);
  }
  std::vector<double> totals(static_cast<std::size_t>(quantities), 0.0);
  for (int q = 0; q < quantities; ++q) {
    double sum = 0.0;
    for (const auto& part : parts) {
      const std::size_t block = part.size() / static_cast<std::size_t>(quantities);
      for (std::size_t i = 0; i < block; ++i) sum += part[static_cast<std::size_t>(q) * block + i];
    }
    totals[static_cast<std::size_t>(q)] = sum;
  }
  for (int r = 1; r < m; ++r) {
    t.send(r, Frame{0, tag, MessageKind::broadcast, Direction::none, totals});
  }
  return totals;
}

int mirrored_plane_exchange(Transport& t, const SlabPartition& part, double* slab,
                            const SymmetryConstraint& c, std::uint32_t tag) {
  const int rank = t.rank();
  const auto layout = part.layout(rank);
  if (c.axis != Axis::x) {
    kernels::impose_transverse(slab, layout, c);
    return 0;
  }
  const int n = part.n;
  const Slab& mine = part.slabs[static_cast<std::size_t>(rank)];
  const std::size_t ps = layout.plane_size();
  const double sign = c.parity == Parity::symmetric ? 1.0 : -1.0;
  auto plane = [&](int global_x) {
    return std::span<double>(slab + static_cast<std::size_t>(global_x - mine.first + 1) * ps, ps);
  };

  // lower-half planes go out, ascending
  std::map<int, std::vector<double>> outgoing;
  for (int g = mine.first; g <= mine.last && g <= n / 2; ++g) {
    const int owner = part.owner(n + 1 - g);
    if (owner == rank) continue;
    auto src = plane(g);
    auto& buf = outgoing[owner];
    buf.insert(buf.end(), src.begin(), src.end());
  }
  int sent = 0;
  for (auto& [dest, payload] : outgoing) {
    t.send(dest, Frame{0, tag, MessageKind::mirror, Direction::none, std::move(payload)});
    ++sent;
  }

  for (int g = mine.first; g <= mine.last && g <= n / 2; ++g) {
    const int target = n + 1 - g;
    if (part.owner(target) == rank) kernels::mirror_plane(plane(g), plane(target), n, sign);
  }

  // upper-half targets grouped by the rank owning their source plane
  std::map<int, std::vector<int>> incoming;
  for (int target = mine.last; target >= mine.first; --target) {
    const int g = n + 1 - target;
    if (g >= target) break;
    const int owner = part.owner(g);
    if (owner != rank) incoming[owner].push_back(g);
  }
  for (auto& [source, sources] : incoming) {
    Frame f = receive_tagged(t, source, MessageKind::mirror, tag);
    if (f.payload.size() != sources.size() * ps) {
      throw ProtocolError("mirror message from rank " + std::to_string(source) + " has a bad length");
    }
    for (std::size_t s = 0; s < sources.size(); ++s) {
      std::span<const double> src(f.payload.data() + s * ps, ps);
      kernels::mirror_plane(src, plane(n + 1 - sources[s]), n, sign);
    }
  }

  const int middle = (n + 1) / 2;
  if (n % 2 == 1 && c.parity == Parity::antisymmetric && middle >= mine.first && middle <= mine.last) {
    kernels::clear_plane(plane(middle), n);
  }
  return sent;
}

// ---------------------------------------------------------------- SlabWorker

SlabWorker::SlabWorker(Transport& t, const SlabPartition& part, const PotentialGrid& grid,
                       std::vector<double> slab, int max_snapshots)
    : transport_(t), part_(part), grid_(grid), layout_(part.layout(t.rank())),
      left_(part.slabs[static_cast<std::size_t>(t.rank())].left),
      right_(part.slabs[static_cast<std::size_t>(t.rank())].right), current_(std::move(slab)),
      previous_(current_), planes_(static_cast<std::size_t>(layout_.width)),
      max_snapshots_(max_snapshots) {
  if (current_.size() != layout_.storage_size()) {
    throw std::invalid_argument("slab storage does not match the partition");
  }
}

void SlabWorker::exchange_halos(std::vector<double>& field, std::uint32_t tag, bool count) {
  const std::size_t ps = layout_.plane_size();
  const int w = layout_.width;
  auto plane = [&](int p) { return field.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(p) * ps); };
  if (left_) {
    transport_.send(*left_, Frame{0, tag, MessageKind::halo, Direction::left, {plane(1), plane(2)}});
    if (count) ++sweep_halo_messages_;
  }
  if (right_) {
    transport_.send(*right_, Frame{0, tag, MessageKind::halo, Direction::right, {plane(w), plane(w + 1)}});
    if (count) ++sweep_halo_messages_;
  }
}

namespace {

void take_halo(Transport& t, int source, std::uint32_t tag, Direction expected,
               std::vector<double>& field, std::size_t offset, std::size_t size) {
  Frame f = receive_tagged(t, source, MessageKind::halo, tag);
  if (f.direction != expected || f.payload.size() != size) {
    throw ProtocolError("halo plane from rank " + std::to_string(source) + " is malformed");
  }
  std::copy(f.payload.begin(), f.payload.end(), field.begin() + static_cast<std::ptrdiff_t>(offset));
}

} // namespace

void SlabWorker::halo_step() {
  std::swap(previous_, current_);
  ++step_tag_;
  const int w = layout_.width;
  const std::size_t ps = layout_.plane_size();

  exchange_halos(previous_, step_tag_, true);
  if (w > 2) {
    kernels::update_planes(previous_.data(), current_.data(), grid_, layout_, 2, w - 1, planes_.data());
  }
  if (left_) take_halo(transport_, *left_, step_tag_, Direction::right, previous_, 0, ps);
  if (right_) {
    take_halo(transport_, *right_, step_tag_, Direction::left, previous_,
              static_cast<std::size_t>(w + 1) * ps, ps);
  }
  kernels::update_planes(previous_.data(), current_.data(), grid_, layout_, 1, 1, planes_.data());
  if (w > 1) kernels::update_planes(previous_.data(), current_.data(), grid_, layout_, w, w, planes_.data());
  ++sweeps_;
}

double SlabWorker::reduce_one(std::span<const double> planes) {
  return reduce_broadcast(transport_, planes, 1, next_epoch())[0];
}

void SlabWorker::impose(const SymmetryConstraint& c) {
  mirrored_plane_exchange(transport_, part_, current_.data(), c, next_epoch());
}

double SlabWorker::renormalize() {
  kernels::plane_norm2(current_.data(), layout_, planes_);
  const double a = grid_.spec.a;
  const double norm = std::sqrt(reduce_one(planes_) * (a * a * a));
  if (!std::isfinite(norm)) throw NumericalDivergence("wavefunction norm is not finite");
  if (norm == 0.0) throw ZeroNorm("cannot renormalize a zero wavefunction");
  kernels::scale_interior(current_.data(), layout_, 1.0 / norm);
  return norm;
}

double SlabWorker::advance() {
  halo_step();
  const double a = grid_.spec.a;
  const double norm = std::sqrt(reduce_one(planes_) * (a * a * a));
  if (!std::isfinite(norm)) throw NumericalDivergence("imaginary-time step produced non-finite values");
  if (norm == 0.0) throw ZeroNorm("wavefunction vanished during evolution");
  kernels::scale_interior(current_.data(), layout_, 1.0 / norm);
  return norm;
}

double SlabWorker::step_overlap() {
  kernels::plane_overlap(previous_.data(), current_.data(), layout_, planes_);
  return reduce_one(planes_);
}

Observables SlabWorker::measure() {
  const std::uint32_t tag = next_epoch();
  const std::size_t ps = layout_.plane_size();
  const int w = layout_.width;
  exchange_halos(current_, tag, false);
  if (left_) take_halo(transport_, *left_, tag, Direction::right, current_, 0, ps);
  if (right_) {
    take_halo(transport_, *right_, tag, Direction::left, current_, static_cast<std::size_t>(w + 1) * ps, ps);
  }
  const auto width = static_cast<std::size_t>(w);
  std::vector<double> partials(3 * width);
  std::span<double> all(partials);
  kernels::plane_energy(current_.data(), grid_, layout_, all.subspan(0, width),
                        all.subspan(width, width), all.subspan(2 * width, width));
  const auto totals = reduce_broadcast(transport_, partials, 3, next_epoch());
  return observables_from_sums(ObservableSums{totals[0], totals[1], totals[2]}, grid_);
}

void SlabWorker::snapshot(long step, double tau) {
  if (max_snapshots_ == 0) return;
  if (static_cast<int>(snapshots_.size()) == max_snapshots_) snapshots_.pop_front();
  snapshots_.push_back(SlabSnapshot{step, tau, current_});
}

// ---------------------------------------------------------------- driver

namespace {

constexpr std::uint32_t scatter_tag = 0;
constexpr std::uint32_t gather_tag = 1;

std::vector<double> interior_planes(const std::vector<double>& slab, const kernels::SlabLayout& layout) {
  const std::size_t ps = layout.plane_size();
  return {slab.begin() + static_cast<std::ptrdiff_t>(ps),
          slab.begin() + static_cast<std::ptrdiff_t>(ps * static_cast<std::size_t>(layout.width + 1))};
}

Field3D gather(Transport& t, const SlabPartition& part, const LatticeSpec& spec,
               const std::vector<double>& own, std::uint32_t tag) {
  Field3D out(spec);
  const std::size_t ps = spec.plane_size();
  const std::size_t block = ps * static_cast<std::size_t>(part.width);
  auto place = [&](int rank, const std::vector<double>& planes) {
    if (planes.size() != block) throw ProtocolError("gathered slab has a bad length");
    const auto first = part.slabs[static_cast<std::size_t>(rank)].first;
    std::copy(planes.begin(), planes.end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(first) * ps));
  };
  place(0, own);
  for (int r = 1; r < part.workers; ++r) place(r, receive_tagged(t, r, MessageKind::slab, tag).payload);
  return out;
}

} // namespace

std::optional<EvolutionState> run_rank(Transport& t, const PotentialGrid& grid,
                                       const EvolutionParams& params, const Field3D* initial,
                                       ParallelStats* stats) {
  params.validate();
  const SlabPartition part = partition(grid.spec, t.size());
  const int rank = t.rank();
  const auto layout = part.layout(rank);
  const std::size_t ps = layout.plane_size();
  const std::size_t slab_size = layout.storage_size();

  std::vector<double> slab;
  if (rank == 0) {
    if (initial == nullptr) throw std::invalid_argument("rank 0 needs the initial field");
    if (initial->n() != grid.spec.n) {
      throw ConfigError("initial field and potential have different lattice sizes");
    }
    Field3D psi = *initial;
    apply_dirichlet_boundary(psi, 0.0);
    const auto values = psi.values();
    for (int r = 1; r < part.workers; ++r) {
      const auto from = static_cast<std::size_t>(part.slabs[static_cast<std::size_t>(r)].first - 1) * ps;
      t.send(r, Frame{0, scatter_tag, MessageKind::slab, Direction::none,
                      {values.begin() + static_cast<std::ptrdiff_t>(from),
                       values.begin() + static_cast<std::ptrdiff_t>(from + slab_size)}});
    }
    slab.assign(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(slab_size));
  } else {
    slab = receive_tagged(t, 0, MessageKind::slab, scatter_tag).payload;
    if (slab.size() != slab_size) throw ProtocolError("scattered slab has a bad length");
  }

  SlabWorker worker(t, part, grid, std::move(slab), params.max_snapshots);
  std::vector<EnergyRecord> history;
  const auto outcome = detail::run_convergence_loop(worker, params, grid.spec.dtau, history);

  if (stats != nullptr) {
    stats->workers = part.workers;
    stats->sweeps = worker.sweeps();
    stats->halo_messages = worker.sweep_halo_messages();
  }

  std::uint32_t tag = gather_tag;
  if (rank != 0) {
    t.send(0, Frame{0, tag++, MessageKind::slab, Direction::none, interior_planes(worker.slab(), layout)});
    for (const auto& snap : worker.snapshots()) {
      t.send(0, Frame{0, tag++, MessageKind::slab, Direction::none, interior_planes(snap.values, layout)});
    }
    if (stats != nullptr) stats->messages = t.sent();
    return std::nullopt;
  }

  const LatticeSpec& spec = initial->spec();
  EvolutionState state;
  state.psi = gather(t, part, spec, interior_planes(worker.slab(), layout), tag++);
  for (const auto& snap : worker.snapshots()) {
    state.snapshots.push_back(
        Snapshot{snap.step, snap.tau, gather(t, part, spec, interior_planes(snap.values, layout), tag++)});
  }
  state.step_count = outcome.steps;
  state.tau = static_cast<double>(outcome.steps) * grid.spec.dtau;
  state.converged = outcome.converged;
  state.constraints = params.constraints;
  state.check_freq = params.check_freq;
  state.history = std::move(history);
  if (stats != nullptr) stats->messages = t.sent();
  return state;
}

ParallelResult evolve_parallel(Field3D initial, const PotentialGrid& grid,
                               const EvolutionParams& params, int workers) {
  params.validate();
  partition(grid.spec, workers);
  if (initial.n() != grid.spec.n) {
    throw ConfigError("initial field and potential have different lattice sizes");
  }

  InProcessHub hub(workers);
  std::vector<ParallelStats> per_rank(static_cast<std::size_t>(workers));
  std::mutex failure_mutex;
  std::exception_ptr failure;
  std::optional<EvolutionState> state;

  auto body = [&](int rank) {
    try {
      auto endpoint = hub.endpoint(rank);
      auto result = run_rank(*endpoint, grid, params, rank == 0 ? &initial : nullptr,
                             &per_rank[static_cast<std::size_t>(rank)]);
      if (rank == 0) state = std::move(result);
    } catch (const std::exception& e) {
      {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
      hub.abort("rank " + std::to_string(rank) + " failed: " + e.what());
    }
  };

  std::vector<std::thread> threads;
  for (int r = 1; r < workers; ++r) threads.emplace_back(body, r);
  body(0);
  for (auto& th : threads) th.join();
  if (failure) std::rethrow_exception(failure);

  ParallelResult out;
  out.state = std::move(*state);
  out.stats.workers = workers;
  out.stats.sweeps = per_rank[0].sweeps;
  for (const auto& s : per_rank) {
    out.stats.halo_messages += s.halo_messages;
    for (std::size_t k = 0; k < message_kind_count; ++k) out.stats.messages[k] += s.messages[k];
  }
  return out;
}

ScalingEstimate scaling_estimate(double dtu, double dtc, int n, int workers) {
  if (!(dtu > 0.0) || !(dtc > 0.0)) throw ConfigError("per-site times must be positive");
  if (n < 1 || workers < 1) throw ConfigError("lattice size and worker count must be positive");
  const double nn = static_cast<double>(n);
  ScalingEstimate e;
  e.tau_u = (nn / workers) * nn * nn * dtu;
  e.tau_c = 2.0 * nn * nn * dtc;
  e.max_nodes_1d = static_cast<long>(std::floor(0.5 * (dtu / dtc) * nn));
  const double side = nn * dtu / (6.0 * dtc);
  e.max_nodes_3d = static_cast<long>(std::floor(side * side * side));
  return e;
}

} // namespace qfd
