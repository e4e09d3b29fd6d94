#pragma once

// Minimal blocking IPv4 UDP sockets for the real-time roles.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "npc/wire.hpp"

namespace npc::udp {

class SocketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Endpoint {
  sockaddr_in addr{};

  std::uint16_t port() const { return ntohs(addr.sin_port); }

  std::string to_string() const {
    char buf[INET_ADDRSTRLEN] = {};
    inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof buf);
    return std::string(buf) + ":" + std::to_string(port());
  }

  bool operator==(const Endpoint& o) const {
    return addr.sin_addr.s_addr == o.addr.sin_addr.s_addr && addr.sin_port == o.addr.sin_port;
  }
};

/// Resolves "host:port" (IPv4). An empty host means any address.
inline Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw SocketError("endpoint '" + text + "': expected host:port");
  const std::string host = text.substr(0, colon);
  const std::string portText = text.substr(colon + 1);
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(portText, &used);
    if (used != portText.size()) port = -1;
  } catch (const std::exception&) {
    port = -1;
  }
  if (port < 0 || port > 65535) throw SocketError("endpoint '" + text + "': bad port");

  Endpoint ep;
  ep.addr.sin_family = AF_INET;
  ep.addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (host.empty() || host == "*") {
    ep.addr.sin_addr.s_addr = htonl(INADDR_ANY);
    return ep;
  }
  if (inet_pton(AF_INET, host.c_str(), &ep.addr.sin_addr) == 1) return ep;

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  addrinfo* res = nullptr;
  if (const int rc = getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0 || !res) {
    throw SocketError("endpoint '" + text + "': " + gai_strerror(rc));
  }
  ep.addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return ep;
}

inline Endpoint with_port(Endpoint ep, std::uint16_t port) {
  ep.addr.sin_port = htons(port);
  return ep;
}

struct Datagram {
  wire::Bytes bytes;
  Endpoint from;
};

class Socket {
 public:
  explicit Socket(const Endpoint& bindTo) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) throw SocketError(std::string("socket: ") + std::strerror(errno));
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&bindTo.addr), sizeof bindTo.addr) != 0) {
      const std::string msg = std::strerror(errno);
      ::close(fd_);
      throw SocketError("bind " + bindTo.to_string() + ": " + msg);
    }
  }

  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { reset(); }

  /// Bound address; resolves port 0 to the ephemeral port chosen by the OS.
  Endpoint local() const {
    Endpoint ep;
    socklen_t len = sizeof ep.addr;
    if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&ep.addr), &len) != 0) {
      throw SocketError(std::string("getsockname: ") + std::strerror(errno));
    }
    return ep;
  }

  void send_to(const wire::Bytes& bytes, const Endpoint& to) const {
    const auto n = ::sendto(fd_, bytes.data(), bytes.size(), 0,
                            reinterpret_cast<const sockaddr*>(&to.addr), sizeof to.addr);
    // A full socket buffer or an unreachable peer drops the datagram like the network would.
    if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != ECONNREFUSED && errno != EINTR) {
      throw SocketError("sendto " + to.to_string() + ": " + std::strerror(errno));
    }
  }

  /// Waits up to `timeout` for one datagram.
  std::optional<Datagram> receive(std::chrono::milliseconds timeout) const {
    pollfd p{fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (ready < 0) {
      if (errno == EINTR) return std::nullopt;
      throw SocketError(std::string("poll: ") + std::strerror(errno));
    }
    if (ready == 0) return std::nullopt;

    Datagram d;
    d.bytes.resize(65536);
    socklen_t len = sizeof d.from.addr;
    const auto n = ::recvfrom(fd_, d.bytes.data(), d.bytes.size(), 0,
                              reinterpret_cast<sockaddr*>(&d.from.addr), &len);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN || errno == ECONNREFUSED) return std::nullopt;
      throw SocketError(std::string("recvfrom: ") + std::strerror(errno));
    }
    d.bytes.resize(static_cast<std::size_t>(n));
    return d;
  }

 private:
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  int fd_ = -1;
};

}  // namespace npc::udp
