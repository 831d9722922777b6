#include "qfd/transport.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <set>

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "qfd/endian.hpp"
#include "qfd/error.hpp"

namespace qfd {

namespace {

constexpr char frame_magic[4] = {'Q', 'H', 'L', 'O'};

std::string kind_name(MessageKind kind) {
  switch (kind) {
  case MessageKind::halo: return "halo";
  case MessageKind::reduction: return "reduction";
  case MessageKind::broadcast: return "broadcast";
  case MessageKind::mirror: return "mirror";
  case MessageKind::slab: return "slab";
  case MessageKind::hello: return "hello";
  }
  return "unknown";
}

} // namespace

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  std::vector<std::uint8_t> out;
  out.reserve(frame_header_size + frame.payload.size() * 8);
  out.insert(out.end(), std::begin(frame_magic), std::end(frame_magic));
  le::put<std::uint32_t>(out, wire_version);
  le::put<std::uint32_t>(out, frame.sender);
  le::put<std::uint32_t>(out, frame.step_tag);
  out.push_back(static_cast<std::uint8_t>(frame.kind));
  out.push_back(static_cast<std::uint8_t>(frame.direction));
  le::put<std::uint16_t>(out, 0);
  le::put<std::uint64_t>(out, static_cast<std::uint64_t>(frame.payload.size()) * 8);
  le::put_f64_array(out, frame.payload.data(), frame.payload.size());
  return out;
}

FrameHeader decode_frame_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < frame_header_size) throw ProtocolError("frame shorter than its header");
  const std::uint8_t* p = bytes.data();
  if (!std::equal(std::begin(frame_magic), std::end(frame_magic), p)) {
    throw ProtocolError("frame has bad magic (expected QHLO)");
  }
  const auto version = le::get<std::uint32_t>(p + 4);
  if (version != wire_version) throw ProtocolError("unsupported wire version " + std::to_string(version));
  FrameHeader h;
  h.sender = le::get<std::uint32_t>(p + 8);
  h.step_tag = le::get<std::uint32_t>(p + 12);
  if (p[16] >= message_kind_count) throw ProtocolError("unknown message kind " + std::to_string(p[16]));
  h.kind = static_cast<MessageKind>(p[16]);
  if (p[17] > 2) throw ProtocolError("unknown halo direction " + std::to_string(p[17]));
  h.direction = static_cast<Direction>(p[17]);
  if (le::get<std::uint16_t>(p + 18) != 0) throw ProtocolError("reserved frame field is not zero");
  h.payload_bytes = le::get<std::uint64_t>(p + 20);
  if (h.payload_bytes % 8 != 0) throw ProtocolError("payload is not a whole number of doubles");
  return h;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  const FrameHeader h = decode_frame_header(bytes);
  if (bytes.size() - frame_header_size != h.payload_bytes) {
    throw ProtocolError("frame payload length does not match its header");
  }
  Frame f{h.sender, h.step_tag, h.kind, h.direction, {}};
  f.payload.resize(h.payload_bytes / 8);
  le::get_f64_array(bytes.data() + frame_header_size, f.payload.data(), f.payload.size());
  return f;
}

MessageCounts Transport::sent() const {
  MessageCounts out{};
  for (std::size_t i = 0; i < message_kind_count; ++i) out[i] = sent_[i].load();
  return out;
}

void Transport::count_send(MessageKind kind) noexcept {
  sent_[static_cast<std::size_t>(kind)].fetch_add(1, std::memory_order_relaxed);
}

Frame receive_tagged(Transport& t, int source, MessageKind kind, std::uint32_t tag) {
  Frame f = t.receive(source, kind);
  if (f.step_tag != tag) {
    throw ProtocolError("rank " + std::to_string(t.rank()) + " expected " + kind_name(kind) +
                        " tag " + std::to_string(tag) + " from rank " + std::to_string(source) +
                        " but got tag " + std::to_string(f.step_tag));
  }
  return f;
}

// ---------------------------------------------------------------- Mailbox

void Mailbox::post(Frame frame) {
  {
    std::lock_guard lock(mutex_);
    queues_[{static_cast<int>(frame.sender), static_cast<int>(frame.kind)}].push_back(std::move(frame));
  }
  ready_.notify_all();
}

Frame Mailbox::take(int source, MessageKind kind) {
  std::unique_lock lock(mutex_);
  auto& queue = queues_[{source, static_cast<int>(kind)}];
  const bool arrived = ready_.wait_for(lock, timeout_, [&] {
    return !queue.empty() || failure_.has_value() || closed_.count(source) != 0;
  });
  if (!queue.empty()) {
    Frame f = std::move(queue.front());
    queue.pop_front();
    return f;
  }
  if (failure_) throw TransportError(*failure_);
  if (auto it = closed_.find(source); it != closed_.end()) throw TransportError(it->second);
  if (!arrived) {
    throw TransportError("timed out waiting for a " + kind_name(kind) + " message from rank " +
                         std::to_string(source));
  }
  throw TransportError("mailbox woke without a message");
}

void Mailbox::fail(const std::string& reason) {
  {
    std::lock_guard lock(mutex_);
    if (!failure_) failure_ = reason;
  }
  ready_.notify_all();
}

void Mailbox::close_source(int source, const std::string& reason) {
  {
    std::lock_guard lock(mutex_);
    closed_.emplace(source, reason);
  }
  ready_.notify_all();
}

// ---------------------------------------------------------------- in-process

class InProcessEndpoint final : public Transport {
public:
  InProcessEndpoint(InProcessHub& hub, int rank) : hub_(hub), rank_(rank) {}

  int rank() const noexcept override { return rank_; }
  int size() const noexcept override { return hub_.size(); }

  void send(int dest, Frame frame) override {
    if (dest < 0 || dest >= hub_.size()) throw TransportError("send to unknown rank " + std::to_string(dest));
    frame.sender = static_cast<std::uint32_t>(rank_);
    count_send(frame.kind);
    hub_.boxes_[static_cast<std::size_t>(dest)]->post(std::move(frame));
  }

  Frame receive(int source, MessageKind kind) override {
    if (source < 0 || source >= hub_.size()) {
      throw TransportError("receive from unknown rank " + std::to_string(source));
    }
    return hub_.boxes_[static_cast<std::size_t>(rank_)]->take(source, kind);
  }

  void abort(const std::string& reason) override { hub_.abort(reason); }

private:
  InProcessHub& hub_;
  int rank_;
};

InProcessHub::InProcessHub(int size, std::chrono::milliseconds timeout) {
  if (size < 1) throw ConfigError("worker count must be at least 1");
  for (int r = 0; r < size; ++r) boxes_.push_back(std::make_unique<Mailbox>(timeout));
}

std::unique_ptr<Transport> InProcessHub::endpoint(int rank) {
  if (rank < 0 || rank >= size()) throw ConfigError("no rank " + std::to_string(rank) + " in hub");
  return std::make_unique<InProcessEndpoint>(*this, rank);
}

void InProcessHub::abort(const std::string& reason) {
  for (auto& box : boxes_) box->fail(reason);
}

// ---------------------------------------------------------------- TCP

std::vector<Endpoint> parse_endpoints(const std::string& list) {
  std::vector<Endpoint> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t end = std::min(list.find(',', start), list.size());
    const std::string item = list.substr(start, end - start);
    start = end + 1;
    if (item.empty()) continue;
    const auto colon = item.rfind(':');
    if (colon == std::string::npos || colon == 0) {
      throw ConfigError("endpoint '" + item + "' is not host:port");
    }
    int port = 0;
    try {
      std::size_t used = 0;
      port = std::stoi(item.substr(colon + 1), &used);
      if (used != item.size() - colon - 1) port = -1;
    } catch (const std::exception&) {
      port = -1;
    }
    if (port <= 0 || port > 65535) throw ConfigError("bad port in endpoint '" + item + "'");
    out.push_back(Endpoint{item.substr(0, colon), static_cast<std::uint16_t>(port)});
  }
  if (out.empty()) throw ConfigError("empty endpoint list");
  return out;
}

std::vector<int> tcp_peers(int rank, int size) {
  std::set<int> peers{0, rank - 1, rank + 1, size - 1 - rank};
  std::vector<int> out;
  for (int p : peers) {
    if (p >= 0 && p < size && p != rank) out.push_back(p);
  }
  if (rank == 0) {
    out.clear();
    for (int p = 1; p < size; ++p) out.push_back(p);
  }
  return out;
}

namespace {

[[noreturn]] void sys_fail(const std::string& what) {
  throw TransportError(what + ": " + std::strerror(errno));
}

void write_all(int fd, const std::uint8_t* data, std::size_t size) {
  while (size > 0) {
    const ssize_t n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      sys_fail("socket write failed");
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

// false on orderly EOF before any byte
bool read_all(int fd, std::uint8_t* data, std::size_t size) {
  std::size_t got = 0;
  while (got < size) {
    const ssize_t n = ::recv(fd, data + got, size - got, 0);
    if (n == 0) {
      if (got == 0) return false;
      throw TransportError("connection closed mid-frame");
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      sys_fail("socket read failed");
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<Frame> read_frame(int fd) {
  std::vector<std::uint8_t> header(frame_header_size);
  if (!read_all(fd, header.data(), header.size())) return std::nullopt;
  const FrameHeader h = decode_frame_header(header);
  if (h.payload_bytes > (std::uint64_t{1} << 36)) throw ProtocolError("implausibly large frame");
  std::vector<std::uint8_t> payload(h.payload_bytes);
  if (!payload.empty() && !read_all(fd, payload.data(), payload.size())) {
    throw TransportError("connection closed mid-frame");
  }
  Frame f{h.sender, h.step_tag, h.kind, h.direction, {}};
  f.payload.resize(h.payload_bytes / 8);
  le::get_f64_array(payload.data(), f.payload.data(), f.payload.size());
  return f;
}

void tune(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

int listen_on(std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) sys_fail("socket");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(fd);
    sys_fail("cannot bind port " + std::to_string(port));
  }
  if (::listen(fd, 64) < 0) {
    ::close(fd);
    sys_fail("listen");
  }
  return fd;
}

int connect_to(const Endpoint& ep, std::chrono::steady_clock::time_point deadline) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  for (;;) {
    addrinfo* res = nullptr;
    const std::string port = std::to_string(ep.port);
    if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) == 0) {
      for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
          ::freeaddrinfo(res);
          return fd;
        }
        ::close(fd);
      }
      ::freeaddrinfo(res);
    }
    if (std::chrono::steady_clock::now() > deadline) {
      throw TransportError("could not connect to " + ep.host + ":" + port);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

} // namespace

TcpTransport::TcpTransport(int rank, std::vector<Endpoint> endpoints,
                           std::chrono::milliseconds connect_timeout,
                           std::chrono::milliseconds receive_timeout)
    : rank_(rank), endpoints_(std::move(endpoints)), inbox_(receive_timeout) {
  const int n = static_cast<int>(endpoints_.size());
  if (rank_ < 0 || rank_ >= n) throw ConfigError("rank outside the endpoint list");
  const auto deadline = std::chrono::steady_clock::now() + connect_timeout;
  const auto peers = tcp_peers(rank_, n);

  std::set<int> expected;
  for (int p : peers) {
    if (p > rank_) expected.insert(p);
  }
  const int listener = expected.empty() ? -1 : listen_on(endpoints_[static_cast<std::size_t>(rank_)].port);
  std::map<int, int> fds;
  try {
    for (int p : peers) {
      if (p > rank_) continue;
      const int fd = connect_to(endpoints_[static_cast<std::size_t>(p)], deadline);
      tune(fd);
      fds[p] = fd;
      const auto hello = encode_frame(Frame{static_cast<std::uint32_t>(rank_), 0, MessageKind::hello,
                                            Direction::none, {}});
      write_all(fd, hello.data(), hello.size());
    }
    while (!expected.empty()) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      pollfd pfd{listener, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(std::max<long>(left.count(), 0)));
      if (ready <= 0) throw TransportError("timed out waiting for peers to connect");
      const int fd = ::accept(listener, nullptr, nullptr);
      if (fd < 0) sys_fail("accept");
      tune(fd);
      const auto hello = read_frame(fd);
      if (!hello || hello->kind != MessageKind::hello || expected.count(static_cast<int>(hello->sender)) == 0) {
        ::close(fd);
        throw ProtocolError("unexpected peer during connection setup");
      }
      fds[static_cast<int>(hello->sender)] = fd;
      expected.erase(static_cast<int>(hello->sender));
    }
  } catch (...) {
    for (auto& [p, fd] : fds) ::close(fd);
    if (listener >= 0) ::close(listener);
    throw;
  }
  if (listener >= 0) ::close(listener);

  for (auto& [p, fd] : fds) {
    auto c = std::make_unique<Connection>();
    c->fd = fd;
    connections_[p] = std::move(c);
  }
  for (auto& [p, c] : connections_) {
    c->reader = std::thread(&TcpTransport::reader_loop, this, p, c->fd);
  }
}

TcpTransport::~TcpTransport() {
  stopping_ = true;
  for (auto& [p, c] : connections_) ::shutdown(c->fd, SHUT_RDWR);
  for (auto& [p, c] : connections_) {
    if (c->reader.joinable()) c->reader.join();
    ::close(c->fd);
  }
}

TcpTransport::Connection& TcpTransport::connection(int peer) {
  auto it = connections_.find(peer);
  if (it == connections_.end()) {
    throw TransportError("rank " + std::to_string(rank_) + " has no connection to rank " +
                         std::to_string(peer));
  }
  return *it->second;
}

void TcpTransport::send(int dest, Frame frame) {
  frame.sender = static_cast<std::uint32_t>(rank_);
  const auto bytes = encode_frame(frame);
  Connection& c = connection(dest);
  std::lock_guard lock(c.write_mutex);
  count_send(frame.kind);
  write_all(c.fd, bytes.data(), bytes.size());
}

Frame TcpTransport::receive(int source, MessageKind kind) {
  connection(source);
  return inbox_.take(source, kind);
}

void TcpTransport::abort(const std::string& reason) {
  inbox_.fail(reason);
  for (auto& [p, c] : connections_) ::shutdown(c->fd, SHUT_RDWR);
}

void TcpTransport::reader_loop(int peer, int fd) {
  const std::string lost = "connection to rank " + std::to_string(peer) + " lost";
  try {
    for (;;) {
      auto frame = read_frame(fd);
      if (!frame) break;
      if (static_cast<int>(frame->sender) != peer) throw ProtocolError("frame sender does not match connection");
      inbox_.post(std::move(*frame));
    }
    inbox_.close_source(peer, lost);
  } catch (const std::exception& e) {
    inbox_.close_source(peer, stopping_ ? lost : lost + ": " + e.what());
  }
}

} // namespace qfd
