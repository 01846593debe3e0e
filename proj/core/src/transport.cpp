#include "privrec/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <sstream>

namespace privrec {

namespace {

void put_header(std::uint8_t* h, const Message& m) {
  const auto len = static_cast<std::uint32_t>(m.payload.size());
  for (int i = 0; i < 4; ++i) h[i] = static_cast<std::uint8_t>(len >> (24 - 8 * i));
  h[4] = static_cast<std::uint8_t>(m.type);
  for (int i = 0; i < 4; ++i) h[5 + i] = static_cast<std::uint8_t>(m.session >> (24 - 8 * i));
}

void write_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n) {
    ssize_t k = ::send(fd, p, n, MSG_NOSIGNAL);
    if (k < 0 && errno == EINTR) continue;
    if (k <= 0) throw TransportError(std::string("send failed: ") + std::strerror(errno));
    p += k;
    n -= static_cast<std::size_t>(k);
  }
}

// false on a clean end of stream before any byte.
bool read_all(int fd, std::uint8_t* p, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    ssize_t k = ::recv(fd, p + got, n - got, 0);
    if (k < 0 && errno == EINTR) continue;
    if (k < 0) throw TransportError(std::string("recv failed: ") + std::strerror(errno));
    if (k == 0) {
      if (got == 0) return false;
      throw TransportError("truncated frame");
    }
    got += static_cast<std::size_t>(k);
  }
  return true;
}

std::string format_clock(std::uint32_t session, const StageClock& c) {
  std::ostringstream out;
  out << "session " << session;
  for (const auto& [k, v] : c.ms) out << ' ' << k << '=' << v << "ms";
  return out.str();
}

}  // namespace

Bytes encode_frame(const Message& m, std::size_t max_payload) {
  if (m.payload.size() > max_payload) throw std::length_error("frame payload exceeds the limit");
  Bytes out(kFrameHeaderBytes + m.payload.size());
  put_header(out.data(), m);
  std::copy(m.payload.begin(), m.payload.end(), out.begin() + kFrameHeaderBytes);
  return out;
}

FrameHeader decode_header(std::span<const std::uint8_t> h, std::size_t max_payload) {
  if (h.size() < kFrameHeaderBytes) throw DecodeError("truncated frame header");
  ByteReader r(h.first(kFrameHeaderBytes));
  FrameHeader f;
  f.length = r.u32();
  auto type = r.u8();
  if (!valid_message_type(type)) throw DecodeError("unknown message type");
  f.type = static_cast<MessageType>(type);
  f.session = r.u32();
  if (f.length > max_payload) throw DecodeError("frame payload exceeds the limit");
  return f;
}

Message decode_frame(std::span<const std::uint8_t> bytes, std::size_t max_payload) {
  auto h = decode_header(bytes, max_payload);
  if (bytes.size() - kFrameHeaderBytes < h.length) throw DecodeError("truncated frame payload");
  if (bytes.size() - kFrameHeaderBytes > h.length) throw DecodeError("trailing bytes after frame");
  auto p = bytes.subspan(kFrameHeaderBytes);
  return {h.type, h.session, Bytes(p.begin(), p.end())};
}

std::uint16_t default_port() {
  if (const char* v = std::getenv(kPortEnv)) {
    char* end = nullptr;
    long p = std::strtol(v, &end, 10);
    if (end && *end == '\0' && p > 0 && p < 65536) return static_cast<std::uint16_t>(p);
  }
  return kDefaultPort;
}

Message LoopbackChannel::exchange(const Message& m) {
  auto in = decode_frame(encode_frame(m, max_payload_), max_payload_);
  auto reply = endpoint_.handle(in);
  if (!reply) throw TransportError("server sent no reply");
  return decode_frame(encode_frame(*reply, max_payload_), max_payload_);
}

void LoopbackChannel::send(const Message& m) {
  endpoint_.handle(decode_frame(encode_frame(m, max_payload_), max_payload_));
}

void write_frame(int fd, const Message& m, std::size_t max_payload) {
  if (m.payload.size() > max_payload) throw std::length_error("frame payload exceeds the limit");
  std::uint8_t h[kFrameHeaderBytes];
  put_header(h, m);
  write_all(fd, h, sizeof h);
  write_all(fd, m.payload.data(), m.payload.size());
}

Message read_frame(int fd, std::size_t max_payload) {
  std::uint8_t h[kFrameHeaderBytes];
  if (!read_all(fd, h, sizeof h)) throw TransportError("connection closed");
  auto hdr = decode_header(h, max_payload);
  Message m{hdr.type, hdr.session, Bytes(hdr.length)};
  if (hdr.length && !read_all(fd, m.payload.data(), hdr.length)) throw TransportError("truncated frame");
  return m;
}

TcpChannel::TcpChannel(const std::string& host, std::uint16_t port, std::size_t max_payload)
    : max_payload_(max_payload) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res); rc != 0)
    throw TransportError(std::string("cannot resolve ") + host + ": " + ::gai_strerror(rc));
  for (auto* a = res; a; a = a->ai_next) {
    int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) {
      fd_ = fd;
      break;
    }
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) throw TransportError("cannot connect to " + host + ":" + std::to_string(port));
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpChannel::~TcpChannel() {
  if (fd_ >= 0) ::close(fd_);
}

Message TcpChannel::exchange(const Message& m) {
  write_frame(fd_, m, max_payload_);
  return read_frame(fd_, max_payload_);
}

void TcpChannel::send(const Message& m) { write_frame(fd_, m, max_payload_); }

TcpServer::TcpServer(const PrivateServer& server, const std::string& host, std::uint16_t port,
                     std::size_t max_payload, Logger log)
    : server_(server), max_payload_(max_payload), log_(std::move(log)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError("socket failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw TransportError("bind address must be an IPv4 literal: " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 64) != 0) {
    std::string err = std::strerror(errno);
    ::close(listen_fd_);
    throw TransportError("cannot listen on " + host + ":" + std::to_string(port) + ": " + err);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpServer::~TcpServer() {
  stop();
  for (auto& t : workers_)
    if (t.joinable()) t.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void TcpServer::run() {
  while (!stopping_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      if (stopping_) break;
      if (errno == EMFILE || errno == ENFILE || errno == ECONNABORTED) continue;
      break;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(mu_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    open_.insert(fd);
    workers_.emplace_back([this, fd] { serve(fd); });
  }
}

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  std::lock_guard lock(mu_);
  for (int fd : open_) ::shutdown(fd, SHUT_RDWR);
}

void TcpServer::serve(int fd) {
  ServerEndpoint ep(server_);
  const ServerSession* last = nullptr;
  try {
    for (;;) {
      Message m;
      try {
        m = read_frame(fd, max_payload_);
      } catch (const DecodeError& e) {
        write_frame(fd, error_message(0, ErrorCode::Malformed, e.what()), max_payload_);
        if (log_) log_(std::string("malformed frame: ") + e.what());
        break;
      }
      auto reply = ep.handle(m);
      if (reply) write_frame(fd, *reply, max_payload_);
      if (log_ && ep.last_closed() && ep.last_closed() != last) {
        last = ep.last_closed();
        log_(format_clock(last->id(), last->clock()));
      }
    }
  } catch (const TransportError&) {
    // peer went away
  } catch (const std::exception& e) {
    if (log_) log_(std::string("connection error: ") + e.what());
  }
  ::close(fd);
  ++served_;
  std::lock_guard lock(mu_);
  open_.erase(fd);
}

}  // namespace privrec
