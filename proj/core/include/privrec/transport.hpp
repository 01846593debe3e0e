#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "privrec/protocol.hpp"

namespace privrec {

// Frame: u32 payload length, u8 message type, u32 session id, payload.
inline constexpr std::size_t kFrameHeaderBytes = 9;
inline constexpr std::uint16_t kDefaultPort = 7878;
inline constexpr const char* kPortEnv = "PRIVREC_PORT";

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws std::length_error above max_payload.
Bytes encode_frame(const Message& m, std::size_t max_payload = kDefaultMaxPayload);
// Exactly one frame; throws DecodeError on truncation, trailing bytes,
// unknown types or oversized payloads.
Message decode_frame(std::span<const std::uint8_t> bytes, std::size_t max_payload = kDefaultMaxPayload);

struct FrameHeader {
  std::uint32_t length = 0;
  MessageType type = MessageType::Error;
  std::uint32_t session = 0;
};
FrameHeader decode_header(std::span<const std::uint8_t> header, std::size_t max_payload);

// PRIVREC_PORT if set and valid, kDefaultPort otherwise.
std::uint16_t default_port();

// In-process channel; every frame still goes through encode/decode.
class LoopbackChannel final : public Channel {
 public:
  explicit LoopbackChannel(const PrivateServer& server, std::size_t max_payload = kDefaultMaxPayload)
      : endpoint_(server), max_payload_(max_payload) {}
  Message exchange(const Message& m) override;
  void send(const Message& m) override;
  ServerEndpoint& endpoint() { return endpoint_; }

 private:
  ServerEndpoint endpoint_;
  std::size_t max_payload_;
};

// Blocking stream socket helpers; throw TransportError on I/O failure or a
// closed peer.
void write_frame(int fd, const Message& m, std::size_t max_payload = kDefaultMaxPayload);
Message read_frame(int fd, std::size_t max_payload = kDefaultMaxPayload);

class TcpChannel final : public Channel {
 public:
  TcpChannel(const std::string& host, std::uint16_t port, std::size_t max_payload = kDefaultMaxPayload);
  ~TcpChannel() override;
  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  Message exchange(const Message& m) override;
  void send(const Message& m) override;

 private:
  int fd_ = -1;
  std::size_t max_payload_;
};

// Thread per connection; each connection owns its sessions.
class TcpServer {
 public:
  using Logger = std::function<void(const std::string&)>;

  // port 0 picks a free port.
  TcpServer(const PrivateServer& server, const std::string& host, std::uint16_t port,
            std::size_t max_payload = kDefaultMaxPayload, Logger log = {});
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  std::uint16_t port() const { return port_; }
  // Accept loop; returns after stop().
  void run();
  void stop();
  std::size_t connections_served() const { return served_; }

 private:
  void serve(int fd);

  const PrivateServer& server_;
  std::size_t max_payload_;
  Logger log_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::size_t> served_{0};
  std::mutex mu_;
  std::set<int> open_;
  std::vector<std::thread> workers_;
};

}  // namespace privrec
