#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <exception>
#include <functional>
#include <thread>

#include "qfd/error.hpp"
#include "qfd/evolve.hpp"
#include "qfd/parallel.hpp"
#include "qfd/symmetry.hpp"
#include "qfd/transport.hpp"
#include "support.hpp"

using namespace qfd;

namespace {

std::vector<double> slab_of(const Field3D& f, const SlabPartition& part, int rank) {
  const std::size_t ps = f.spec().plane_size();
  const Slab& s = part.slabs[static_cast<std::size_t>(rank)];
  const auto begin = f.values().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(s.first - 1) * ps);
  return {begin, begin + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(part.width + 2) * ps)};
}

// Copies the interior planes of each slab back into a global field.
Field3D assemble(const LatticeSpec& spec, const SlabPartition& part,
                 const std::vector<std::vector<double>>& slabs) {
  Field3D out = allocate(spec);
  const std::size_t ps = spec.plane_size();
  for (int r = 0; r < part.workers; ++r) {
    const Slab& s = part.slabs[static_cast<std::size_t>(r)];
    const auto& slab = slabs[static_cast<std::size_t>(r)];
    std::copy(slab.begin() + static_cast<std::ptrdiff_t>(ps),
              slab.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(part.width + 1) * ps),
              out.values().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(s.first) * ps));
  }
  return out;
}

// Runs body(rank) on one thread per rank and rethrows the first failure.
void run_ranks(int m, const std::function<void(int)>& body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(m));
  std::vector<std::thread> threads;
  for (int r = 0; r < m; ++r) {
    threads.emplace_back([&, r] {
      try {
        body(r);
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::uint16_t free_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  REQUIRE(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

EvolutionParams quick_params() {
  EvolutionParams p;
  p.tol = 1e-7;
  p.check_freq = 10;
  p.snap_freq = 30;
  p.max_snapshots = 3;
  p.max_steps = 5000;
  return p;
}

} // namespace

TEST_SUITE("parallel") {

TEST_CASE("partition examples") {
  const auto spec = LatticeSpec::with_default_step(8, 1.0);
  const auto p = partition(spec, 2);
  REQUIRE(p.slabs.size() == 2);
  CHECK(p.width == 4);
  CHECK(p.slabs[0].first == 1);
  CHECK(p.slabs[0].last == 4);
  CHECK(p.slabs[1].first == 5);
  CHECK(p.slabs[1].last == 8);
  CHECK_FALSE(p.slabs[0].left.has_value());
  CHECK(p.slabs[0].right == 1);
  CHECK(p.slabs[1].left == 0);
  CHECK_FALSE(p.slabs[1].right.has_value());
  CHECK(p.owner(4) == 0);
  CHECK(p.owner(5) == 1);
  CHECK(p.layout(1).storage_size() == 6u * 100u);

  const auto one = partition(spec, 1);
  CHECK(one.slabs.size() == 1);
  CHECK_FALSE(one.slabs[0].left.has_value());
  CHECK_FALSE(one.slabs[0].right.has_value());

  CHECK_THROWS_AS(partition(spec, 3), ConfigError);
  CHECK_THROWS_AS(partition(spec, 0), ConfigError);
}

TEST_CASE("partition covers the interior exactly once") {
  for (int m : {1, 2, 3, 4, 6, 12}) {
    const auto p = partition(LatticeSpec::with_default_step(12, 1.0), m);
    std::vector<int> owner(13, -1);
    for (const auto& s : p.slabs)
      for (int x = s.first; x <= s.last; ++x) {
        CHECK(owner[static_cast<std::size_t>(x)] == -1);
        owner[static_cast<std::size_t>(x)] = s.rank;
      }
    for (int x = 1; x <= 12; ++x) CHECK(owner[static_cast<std::size_t>(x)] == p.owner(x));
  }
}

TEST_CASE("frame codec") {
  Frame f{3, 77, MessageKind::halo, Direction::left, {1.5, -2.0, 1e300}};
  const auto bytes = encode_frame(f);
  REQUIRE(bytes.size() == frame_header_size + 24);
  CHECK(std::memcmp(bytes.data(), "QHLO", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 3);
  CHECK(bytes[12] == 77);
  CHECK(bytes[16] == 0);
  CHECK(bytes[17] == 1);
  CHECK(bytes[20] == 24);
  double first;
  std::memcpy(&first, bytes.data() + 28, 8);
  CHECK(first == 1.5);

  const Frame back = decode_frame(bytes);
  CHECK(back.sender == 3);
  CHECK(back.step_tag == 77);
  CHECK(back.kind == MessageKind::halo);
  CHECK(back.direction == Direction::left);
  CHECK(back.payload == f.payload);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_frame(bad), ProtocolError);
  bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_AS(decode_frame(bad), ProtocolError);
  bad = bytes;
  bad[16] = 42;
  CHECK_THROWS_AS(decode_frame(bad), ProtocolError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_frame(bad), ProtocolError);
  CHECK_THROWS_AS(decode_frame_header(std::span(bytes).first(10)), ProtocolError);
}

TEST_CASE("mailbox keeps per-source order and times out") {
  InProcessHub hub(3, std::chrono::milliseconds(100));
  auto e0 = hub.endpoint(0), e1 = hub.endpoint(1), e2 = hub.endpoint(2);
  e1->send(0, Frame{0, 1, MessageKind::reduction, Direction::none, {1.0}});
  e2->send(0, Frame{0, 1, MessageKind::reduction, Direction::none, {2.0}});
  e1->send(0, Frame{0, 2, MessageKind::reduction, Direction::none, {3.0}});
  CHECK(e0->receive(2, MessageKind::reduction).payload[0] == 2.0);
  const Frame a = e0->receive(1, MessageKind::reduction);
  CHECK(a.sender == 1);
  CHECK(a.payload[0] == 1.0);
  CHECK(e0->receive(1, MessageKind::reduction).payload[0] == 3.0);
  CHECK(e1->sent()[static_cast<std::size_t>(MessageKind::reduction)] == 2);
  CHECK_THROWS_AS(e0->receive(1, MessageKind::halo), TransportError);
}

TEST_CASE("tag mismatch is a protocol error") {
  InProcessHub hub(2, std::chrono::seconds(5));
  auto e0 = hub.endpoint(0), e1 = hub.endpoint(1);
  e0->send(1, Frame{0, 5, MessageKind::halo, Direction::right, {}});
  CHECK_THROWS_AS(receive_tagged(*e1, 0, MessageKind::halo, 4), ProtocolError);

  // A worker receiving a halo from the wrong step stops.
  const auto spec = LatticeSpec::with_default_step(8, 0.5);
  const auto grid = harmonic(spec);
  const auto part = partition(spec, 2);
  const Field3D psi = support::random_field(spec, 1);
  e0->send(1, Frame{0, 99, MessageKind::halo, Direction::right,
                    std::vector<double>(spec.plane_size(), 0.0)});
  SlabWorker w1(*e1, part, grid, slab_of(psi, part, 1), 0);
  CHECK_THROWS_AS(w1.halo_step(), ProtocolError);
}

TEST_CASE("abort wakes a blocked receive") {
  InProcessHub hub(2);
  auto e0 = hub.endpoint(0);
  std::thread killer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    hub.abort("peer failed");
  });
  CHECK_THROWS_AS(e0->receive(1, MessageKind::halo), TransportError);
  killer.join();
}

TEST_CASE("halo step equals the serial step bitwise") {
  const auto spec = LatticeSpec::with_default_step(8, 0.4);
  const auto grid = harmonic(spec);
  const Field3D psi = support::random_field(spec, 42);
  const Field3D serial = step(psi, grid);

  for (int m : {1, 2, 4, 8}) {
    const auto part = partition(spec, m);
    InProcessHub hub(m);
    std::vector<std::vector<double>> results(static_cast<std::size_t>(m));
    std::vector<long> halo(static_cast<std::size_t>(m));
    run_ranks(m, [&](int r) {
      auto t = hub.endpoint(r);
      SlabWorker w(*t, part, grid, slab_of(psi, part, r), 0);
      w.halo_step();
      results[static_cast<std::size_t>(r)] = w.slab();
      halo[static_cast<std::size_t>(r)] = w.sweep_halo_messages();
    });
    CHECK(assemble(spec, part, results) == serial);
    long total = 0;
    for (long h : halo) total += h;
    CHECK(total == 2 * (m - 1));
  }
}

TEST_CASE("reduce_broadcast") {
  SUBCASE("partials 1, 2, 3") {
    InProcessHub hub(3);
    std::vector<double> got(3);
    run_ranks(3, [&](int r) {
      auto t = hub.endpoint(r);
      const double mine = r + 1.0;
      got[static_cast<std::size_t>(r)] = reduce_broadcast(*t, std::span(&mine, 1), 1, 0)[0];
    });
    for (double g : got) CHECK(g == 6.0);
  }
  SUBCASE("single worker is the identity") {
    InProcessHub hub(1);
    auto t = hub.endpoint(0);
    const std::vector<double> v{0.1, 0.2, 0.7};
    const auto out = reduce_broadcast(*t, v, 3, 0);
    CHECK(out == v);
    CHECK(t->sent()[0] + t->sent()[1] + t->sent()[2] == 0);
  }
  SUBCASE("per-plane partials give the serial sum for every M") {
    const auto spec = LatticeSpec::with_default_step(16, 0.3);
    const Field3D f = support::random_field(spec, 7);
    const double serial = norm2(f);
    for (int m : {1, 2, 4, 8}) {
      const auto part = partition(spec, m);
      InProcessHub hub(m);
      std::vector<double> got(static_cast<std::size_t>(m));
      run_ranks(m, [&](int r) {
        auto t = hub.endpoint(r);
        const auto slab = slab_of(f, part, r);
        std::vector<double> planes(static_cast<std::size_t>(part.width));
        kernels::plane_norm2(slab.data(), part.layout(r), planes);
        got[static_cast<std::size_t>(r)] = reduce_broadcast(*t, planes, 1, 3)[0] * (0.3 * 0.3 * 0.3);
      });
      for (double g : got) CHECK(g == serial);
    }
  }
}

TEST_CASE("mirrored plane exchange matches impose") {
  struct Case {
    int n, m;
    const char* constraint;
    int messages_rank0;
  };
  for (const Case& c : {Case{8, 2, "Sx", 1}, Case{8, 2, "Ax", 1}, Case{8, 1, "Ax", 0}, Case{8, 2, "Ay", 0},
                        Case{8, 4, "Ax", 1}, Case{9, 3, "Ax", 1}, Case{12, 6, "Sx", 1}, Case{12, 4, "Sz", 0}}) {
    CAPTURE(c.n);
    CAPTURE(c.m);
    CAPTURE(c.constraint);
    const auto spec = LatticeSpec::with_default_step(c.n, 1.0);
    const auto sym = parse_constraint(c.constraint);
    const Field3D psi = support::random_field(spec, 13);
    Field3D serial = psi;
    impose(serial, sym);

    const auto part = partition(spec, c.m);
    InProcessHub hub(c.m);
    std::vector<std::vector<double>> slabs(static_cast<std::size_t>(c.m));
    std::vector<int> sent(static_cast<std::size_t>(c.m));
    run_ranks(c.m, [&](int r) {
      auto t = hub.endpoint(r);
      auto slab = slab_of(psi, part, r);
      sent[static_cast<std::size_t>(r)] = mirrored_plane_exchange(*t, part, slab.data(), sym, 0);
      slabs[static_cast<std::size_t>(r)] = std::move(slab);
    });
    CHECK(assemble(spec, part, slabs) == serial);
    CHECK(sent[0] == c.messages_rank0);
    int total = 0;
    for (int s : sent) total += s;
    CHECK(total == (sym.axis == Axis::x ? c.m / 2 : 0));
  }
}

TEST_CASE("decomposed evolution is bitwise identical to serial") {
  const auto spec = LatticeSpec::with_default_step(16, 0.5);
  const auto grid = harmonic(spec);
  const Field3D initial = support::random_field(spec, 2024);
  const auto params = quick_params();
  const auto serial = evolve_to_convergence(initial, grid, params);
  REQUIRE(serial.converged);

  for (int m : {1, 2, 4, 8}) {
    CAPTURE(m);
    const auto par = evolve_parallel(initial, grid, params, m);
    CHECK(par.state.psi == serial.psi);
    CHECK(par.state.step_count == serial.step_count);
    CHECK(par.state.converged);
    REQUIRE(par.state.history.size() == serial.history.size());
    for (std::size_t c = 0; c < serial.history.size(); ++c) {
      CHECK(par.state.history[c].energy == serial.history[c].energy);
      CHECK(par.state.history[c].norm == serial.history[c].norm);
      CHECK(par.state.history[c].rms_radius == serial.history[c].rms_radius);
    }
    REQUIRE(par.state.snapshots.size() == serial.snapshots.size());
    for (std::size_t s = 0; s < serial.snapshots.size(); ++s) {
      CHECK(par.state.snapshots[s].step == serial.snapshots[s].step);
      CHECK(par.state.snapshots[s].psi == serial.snapshots[s].psi);
    }
    CHECK(par.stats.sweeps == serial.step_count);
    CHECK(par.stats.halo_messages_per_sweep() == 2.0 * (m - 1));
  }
}

TEST_CASE("constrained decomposed evolution matches serial") {
  const auto spec = LatticeSpec::with_default_step(12, 0.5);
  const auto grid = harmonic(spec);
  const Field3D initial = support::random_field(spec, 5);
  auto params = quick_params();
  params.constraints = parse_constraints("Ax,Sy");
  params.reimpose_freq = 7;
  const auto serial = evolve_to_convergence(initial, grid, params);
  for (int m : {2, 3, 4}) {
    const auto par = evolve_parallel(initial, grid, params, m);
    CHECK(par.state.psi == serial.psi);
    CHECK(par.state.last().energy == serial.last().energy);
  }
}

TEST_CASE("worker failures propagate without deadlock") {
  const LatticeSpec unstable{8, 1.0, 1.0, 1.05 / 3.0};
  const auto grid = constant(unstable, 0.0);
  auto params = quick_params();
  params.max_steps = 500;
  CHECK_THROWS_AS(evolve_parallel(support::random_field(unstable, 3), grid, params, 4), NumericalDivergence);
  CHECK_THROWS_AS(evolve_parallel(support::random_field(unstable, 3), grid, params, 3), ConfigError);
}

TEST_CASE("tcp helpers") {
  const auto eps = parse_endpoints("127.0.0.1:5000,node2:6001");
  REQUIRE(eps.size() == 2);
  CHECK(eps[1].host == "node2");
  CHECK(eps[1].port == 6001);
  CHECK_THROWS_AS(parse_endpoints("localhost"), ConfigError);
  CHECK_THROWS_AS(parse_endpoints("h:99999"), ConfigError);
  CHECK_THROWS_AS(parse_endpoints(""), ConfigError);

  CHECK(tcp_peers(0, 4) == std::vector<int>{1, 2, 3});
  CHECK(tcp_peers(1, 4) == std::vector<int>{0, 2});
  CHECK(tcp_peers(3, 8) == std::vector<int>{0, 2, 4});
  CHECK(tcp_peers(5, 8) == std::vector<int>{0, 2, 4, 6});
  CHECK(tcp_peers(0, 1).empty());
}

TEST_CASE("tcp loopback evolution matches serial") {
  const int m = 4;
  std::string list;
  for (int r = 0; r < m; ++r) list += (r ? "," : "") + std::string("127.0.0.1:") + std::to_string(free_port());
  const auto endpoints = parse_endpoints(list);

  const auto spec = LatticeSpec::with_default_step(8, 0.5);
  const auto grid = harmonic(spec);
  const Field3D initial = support::random_field(spec, 77);
  auto params = quick_params();
  params.constraints = parse_constraints("Sx");
  const auto serial = evolve_to_convergence(initial, grid, params);

  std::optional<EvolutionState> result;
  run_ranks(m, [&](int r) {
    TcpTransport t(r, endpoints, std::chrono::seconds(20), std::chrono::seconds(60));
    auto out = run_rank(t, grid, params, r == 0 ? &initial : nullptr);
    if (r == 0) result = std::move(out);
  });
  REQUIRE(result.has_value());
  CHECK(result->psi == serial.psi);
  CHECK(result->last().energy == serial.last().energy);
}

TEST_CASE("tcp peer loss surfaces as a transport error") {
  std::string list = "127.0.0.1:" + std::to_string(free_port()) + ",127.0.0.1:" + std::to_string(free_port());
  const auto endpoints = parse_endpoints(list);
  std::atomic<bool> failed{false};
  run_ranks(2, [&](int r) {
    TcpTransport t(r, endpoints, std::chrono::seconds(20), std::chrono::seconds(30));
    if (r == 1) {
      t.send(0, Frame{1, 0, MessageKind::reduction, Direction::none, {4.0}});
      return;  // closes the connection
    }
    CHECK(t.receive(1, MessageKind::reduction).payload == std::vector<double>{4.0});
    try {
      t.receive(1, MessageKind::reduction);
    } catch (const TransportError&) {
      failed = true;
    }
  });
  CHECK(failed);
}

TEST_CASE("scaling estimate") {
  const auto bounds = scaling_estimate(1.0, 5.0, 1024, 1);
  CHECK(bounds.max_nodes_1d == 102);
  CHECK(bounds.max_nodes_3d == 39768);

  const int n = 64;
  const auto e = scaling_estimate(2e-9, 2e-9, n, n);
  CHECK(e.tau_u == doctest::Approx(n * n * 2e-9));
  CHECK(e.tau_c == doctest::Approx(2.0 * n * n * 2e-9));
  CHECK(e.tau_c > e.tau_u);

  const auto half = scaling_estimate(3e-9, 1e-9, 128, 4);
  CHECK(half.tau_u == doctest::Approx(32.0 * 128 * 128 * 3e-9));

  CHECK_THROWS_AS(scaling_estimate(0.0, 1.0, 8, 1), ConfigError);
  CHECK_THROWS_AS(scaling_estimate(1.0, -1.0, 8, 1), ConfigError);
  CHECK_THROWS_AS(scaling_estimate(1.0, 1.0, 8, 0), ConfigError);
}

}
