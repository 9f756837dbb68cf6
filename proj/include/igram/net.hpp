#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace igram::net {

// Connected TCP stream socket (RAII).
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& other) noexcept;
  Socket& operator=(Socket&& other) noexcept;

  // `endpoint` is "host:port".
  static Socket connect(const std::string& endpoint);

  void write_all(std::span<const unsigned char> bytes);
  void write_all(const std::string& text);
  // Throws RemoteError if the peer closes before `out` is filled.
  void read_exact(std::span<unsigned char> out);
  // Reads through the next '\n' (excluded from the result).
  std::string read_line();

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

 private:
  int fd_ = -1;
};

// Listening socket bound to 127.0.0.1 (port 0 picks a free port).
class Listener {
 public:
  explicit Listener(std::uint16_t port = 0);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  std::uint16_t port() const { return port_; }
  std::string endpoint() const { return "127.0.0.1:" + std::to_string(port_); }
  Socket accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace igram::net
