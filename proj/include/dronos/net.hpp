#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dronos::net {

// Owns a file descriptor.
class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(Fd&& other) noexcept : fd_(other.release()) {}
  Fd& operator=(Fd&& other) noexcept {
    if (this != &other) {
      reset();
      fd_ = other.release();
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;

  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void reset();

 private:
  int fd_ = -1;
};

// All helpers throw Error(Io) with errno text on failure. Port 0 binds an
// ephemeral port; bound_port() reports it.
Fd tcp_listen(const std::string& host, int port, int backlog = 64);
Fd tcp_connect(const std::string& host, int port);
Fd udp_bind(const std::string& host, int port);
Fd udp_socket();
int bound_port(const Fd& fd);
void set_nonblocking(const Fd& fd);
void set_nodelay(const Fd& fd);

// Blocking write of the whole buffer.
void send_all(const Fd& fd, std::span<const std::uint8_t> bytes);
void send_all(const Fd& fd, const std::string& text);
void send_datagram(const Fd& fd, const std::string& host, int port, const std::string& payload);

// Reads one '\n'-terminated line from a blocking socket, buffering the rest.
class LineReader {
 public:
  explicit LineReader(const Fd& fd) : fd_(fd) {}
  // nullopt on EOF or when timeout_ms elapses (negative waits forever).
  std::optional<std::string> next(int timeout_ms = -1);

 private:
  const Fd& fd_;
  std::string buffer_;
};

// Port from an environment variable, or fallback when unset or invalid.
int env_port(const char* name, int fallback);

}  // namespace dronos::net
