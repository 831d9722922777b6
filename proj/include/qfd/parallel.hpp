#pragma once

// 1d slab decomposition of the lattice along x.
//
// Rank r of M owns global interior planes r W + 1 .. (r + 1) W, W = N / M,
// stored as a (W + 2) x (N + 2)^2 slab whose first and last planes are
// padding: either a neighbour's boundary plane (halo) or the Dirichlet
// boundary. A step follows the inside-out order: post the two boundary
// planes to the neighbours, update the inner planes, wait for the
// neighbours' planes, then update the two boundary planes.
//
// Reductions gather per-plane partial sums at rank 0 and add them in
// ascending global x before broadcasting the totals, so results agree
// bitwise with the serial code for every M.

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "qfd/evolve.hpp"
#include "qfd/kernels.hpp"
#include "qfd/lattice.hpp"
#include "qfd/potential.hpp"
#include "qfd/symmetry.hpp"
#include "qfd/transport.hpp"

namespace qfd {

struct Slab {
  int rank = 0;
  int first = 1;  ///< first owned global x-plane
  int last = 0;   ///< last owned global x-plane
  std::optional<int> left;   ///< neighbour rank; empty at the Dirichlet wall
  std::optional<int> right;
};

struct SlabPartition {
  int n = 0;
  int workers = 1;
  int width = 0;
  std::vector<Slab> slabs;

  int owner(int global_x) const { return (global_x - 1) / width; }
  kernels::SlabLayout layout(int rank) const {
    return kernels::SlabLayout{n, width, slabs[static_cast<std::size_t>(rank)].first};
  }
};

/// Throws ConfigError unless M >= 1 and N is divisible by M.
SlabPartition partition(const LatticeSpec& spec, int workers);

/// Sums per-plane partials across all ranks. `local` holds `quantities`
/// equal-length blocks (one per quantity, planes in ascending x); rank 0
/// adds every rank's block q in rank order and broadcasts the totals. Every
/// rank returns the same `quantities` values. `tag` must agree on all ranks.
std::vector<double> reduce_broadcast(Transport& t, std::span<const double> local, int quantities,
                                     std::uint32_t tag);

/// Reflects a slab-decomposed field about the mid-plane of c.axis. For the
/// x axis every owner of a lower-half plane sends it (one message per rank
/// pair) to the owner of its mirror plane; y and z are handled locally.
/// Returns the number of messages this rank sent.
int mirrored_plane_exchange(Transport& t, const SlabPartition& part, double* slab,
                            const SymmetryConstraint& c, std::uint32_t tag);

struct SlabSnapshot {
  long step = 0;
  double tau = 0.0;
  std::vector<double> values;  ///< the slab, padding included
};

/// Per-worker engine for the shared convergence loop.
class SlabWorker {
public:
  /// `slab` is this rank's (W + 2) planes, padding included.
  SlabWorker(Transport& t, const SlabPartition& part, const PotentialGrid& grid,
             std::vector<double> slab, int max_snapshots);

  /// One inside-out step without renormalization.
  void halo_step();

  void impose(const SymmetryConstraint& c);
  double renormalize();
  double advance();
  double step_overlap();
  Observables measure();
  void snapshot(long step, double tau);

  const std::vector<double>& slab() const noexcept { return current_; }
  std::deque<SlabSnapshot>& snapshots() noexcept { return snapshots_; }
  long sweeps() const noexcept { return sweeps_; }
  /// Halo planes sent by halo_step() (not by energy measurements).
  long sweep_halo_messages() const noexcept { return sweep_halo_messages_; }

private:
  void exchange_halos(std::vector<double>& field, std::uint32_t tag, bool count);
  double reduce_one(std::span<const double> planes);
  std::uint32_t next_epoch() noexcept { return epoch_++; }

  Transport& transport_;
  const SlabPartition& part_;
  const PotentialGrid& grid_;
  kernels::SlabLayout layout_;
  std::optional<int> left_, right_;
  std::vector<double> current_;
  std::vector<double> previous_;
  std::vector<double> planes_;
  int max_snapshots_;
  std::deque<SlabSnapshot> snapshots_;
  std::uint32_t step_tag_ = 0;
  std::uint32_t epoch_ = 0;
  long sweeps_ = 0;
  long sweep_halo_messages_ = 0;
};

struct ParallelStats {
  int workers = 1;
  long sweeps = 0;
  long halo_messages = 0;  ///< sent by halo steps, all ranks
  MessageCounts messages{};  ///< everything sent, all ranks, per kind

  double halo_messages_per_sweep() const noexcept {
    return sweeps > 0 ? static_cast<double>(halo_messages) / static_cast<double>(sweeps) : 0.0;
  }
};

/// One rank's part of a decomposed evolution. Rank 0 passes the whole
/// initial field, scatters slabs, runs the loop with everyone and gathers
/// the final field and snapshots; it alone returns a state. `stats`, when
/// given, receives this rank's sweep and message counts.
std::optional<EvolutionState> run_rank(Transport& t, const PotentialGrid& grid,
                                       const EvolutionParams& params, const Field3D* initial,
                                       ParallelStats* stats = nullptr);

struct ParallelResult {
  EvolutionState state;
  ParallelStats stats;
};

/// evolve_to_convergence on `workers` in-process slab workers (one thread
/// each). Bitwise identical to the serial result for every valid M.
ParallelResult evolve_parallel(Field3D initial, const PotentialGrid& grid,
                               const EvolutionParams& params, int workers);

struct ScalingEstimate {
  double tau_u = 0.0;  ///< update time per sweep, (N/M) N^2 dtu
  double tau_c = 0.0;  ///< communication time per sweep, 2 N^2 dtc
  long max_nodes_1d = 0;  ///< floor((dtu/dtc) N / 2)
  long max_nodes_3d = 0;  ///< floor((dtu N / (6 dtc))^3), cubic subdomains
};

/// Throws ConfigError unless dtu, dtc > 0, N >= 1 and M >= 1.
ScalingEstimate scaling_estimate(double dtu, double dtc, int n, int workers);

} // namespace qfd
