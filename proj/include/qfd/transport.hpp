#pragma once

// Message transport between slab workers.
//
// Frames travel as
//
//   "QHLO" | u32 version = 1 | u32 sender | u32 step_tag | u8 kind |
//   u8 direction | u16 reserved = 0 | u64 payload bytes | f64 payload...
//
// all little-endian. Delivery is reliable and in order per (sender, kind);
// send() never waits for the receiver, receive() blocks until a frame of the
// requested kind from the requested peer arrives.

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace qfd {

enum class MessageKind : std::uint8_t {
  halo = 0,
  reduction = 1,
  broadcast = 2,
  mirror = 3,
  slab = 4,   ///< scatter of initial slabs / gather of results
  hello = 5,  ///< first frame on a TCP connection, identifies the peer
};
inline constexpr std::size_t message_kind_count = 6;

enum class Direction : std::uint8_t { none = 0, left = 1, right = 2 };

struct Frame {
  std::uint32_t sender = 0;
  std::uint32_t step_tag = 0;
  MessageKind kind = MessageKind::halo;
  Direction direction = Direction::none;
  std::vector<double> payload;
};

inline constexpr std::uint32_t wire_version = 1;
inline constexpr std::size_t frame_header_size = 28;

std::vector<std::uint8_t> encode_frame(const Frame& frame);

struct FrameHeader {
  std::uint32_t sender = 0;
  std::uint32_t step_tag = 0;
  MessageKind kind = MessageKind::halo;
  Direction direction = Direction::none;
  std::uint64_t payload_bytes = 0;
};

/// Parses and validates the fixed 28-byte header; throws ProtocolError.
FrameHeader decode_frame_header(std::span<const std::uint8_t> bytes);

/// Header plus payload; throws ProtocolError on malformed input.
Frame decode_frame(std::span<const std::uint8_t> bytes);

using MessageCounts = std::array<long, message_kind_count>;

class Transport {
public:
  virtual ~Transport() = default;

  virtual int rank() const noexcept = 0;
  virtual int size() const noexcept = 0;

  virtual void send(int dest, Frame frame) = 0;
  /// Throws TransportError on abort, peer loss or timeout.
  virtual Frame receive(int source, MessageKind kind) = 0;
  /// Fails every pending and future receive on every endpoint reachable.
  virtual void abort(const std::string& reason) = 0;

  /// Frames sent by this endpoint, per kind.
  MessageCounts sent() const;

protected:
  void count_send(MessageKind kind) noexcept;

private:
  std::array<std::atomic<long>, message_kind_count> sent_{};
};

/// receive() plus a tag check; a mismatch is a ProtocolError.
Frame receive_tagged(Transport& t, int source, MessageKind kind, std::uint32_t tag);

/// Blocking per-endpoint inbox keyed by (source, kind).
class Mailbox {
public:
  explicit Mailbox(std::chrono::milliseconds timeout) : timeout_(timeout) {}

  void post(Frame frame);
  Frame take(int source, MessageKind kind);
  /// Wakes every waiter with TransportError(reason).
  void fail(const std::string& reason);
  /// Receives from `source` fail once its queue drains.
  void close_source(int source, const std::string& reason);

private:
  std::mutex mutex_;
  std::condition_variable ready_;
  std::map<std::pair<int, int>, std::deque<Frame>> queues_;
  std::map<int, std::string> closed_;
  std::optional<std::string> failure_;
  std::chrono::milliseconds timeout_;
};

/// Default receive timeout.
inline constexpr std::chrono::milliseconds default_receive_timeout{std::chrono::minutes(10)};

/// In-process message channels for `size` workers living in one process.
class InProcessHub {
public:
  explicit InProcessHub(int size, std::chrono::milliseconds timeout = default_receive_timeout);

  int size() const noexcept { return static_cast<int>(boxes_.size()); }
  /// Endpoint for `rank`; the hub must outlive it.
  std::unique_ptr<Transport> endpoint(int rank);
  void abort(const std::string& reason);

private:
  friend class InProcessEndpoint;
  std::vector<std::unique_ptr<Mailbox>> boxes_;
};

/// "host:port" per rank.
struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

/// Parses "host:port[,host:port...]"; throws ConfigError.
std::vector<Endpoint> parse_endpoints(const std::string& list);

/// Ranks a worker holds a TCP connection to: rank 0, its x-neighbours and
/// the rank owning its mirror slab.
std::vector<int> tcp_peers(int rank, int size);

/// TCP endpoint. The constructor listens on endpoints[rank], connects to
/// every lower-ranked peer (retrying until `connect_timeout`) and accepts
/// every higher-ranked one; each connection starts with a hello frame.
class TcpTransport final : public Transport {
public:
  TcpTransport(int rank, std::vector<Endpoint> endpoints,
               std::chrono::milliseconds connect_timeout = std::chrono::seconds(30),
               std::chrono::milliseconds receive_timeout = default_receive_timeout);
  ~TcpTransport() override;

  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  int rank() const noexcept override { return rank_; }
  int size() const noexcept override { return static_cast<int>(endpoints_.size()); }
  void send(int dest, Frame frame) override;
  Frame receive(int source, MessageKind kind) override;
  void abort(const std::string& reason) override;

private:
  struct Connection {
    int fd = -1;
    std::mutex write_mutex;
    std::thread reader;
  };

  void reader_loop(int peer, int fd);
  Connection& connection(int peer);

  int rank_;
  std::vector<Endpoint> endpoints_;
  Mailbox inbox_;
  std::map<int, std::unique_ptr<Connection>> connections_;
  std::atomic<bool> stopping_{false};
};

} // namespace qfd
