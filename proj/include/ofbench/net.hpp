#pragma once

// Thin POSIX socket / epoll wrappers shared by the engine and the harness.

#include <sys/epoll.h>

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <utility>

namespace ofb::net {

class UniqueFd {
 public:
  UniqueFd() = default;
  explicit UniqueFd(int fd) noexcept : fd_(fd) {}
  UniqueFd(UniqueFd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  UniqueFd& operator=(UniqueFd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  UniqueFd(const UniqueFd&) = delete;
  UniqueFd& operator=(const UniqueFd&) = delete;
  ~UniqueFd() { reset(); }

  [[nodiscard]] int get() const noexcept { return fd_; }
  [[nodiscard]] bool valid() const noexcept { return fd_ >= 0; }
  void reset() noexcept;

 private:
  int fd_ = -1;
};

/// Binds and listens; throws std::system_error on failure.  Port 0 picks an
/// ephemeral port.
UniqueFd listen_tcp(const std::string& address, std::uint16_t port, int backlog = 1024);
std::uint16_t local_port(int fd);

/// Blocking connect with timeout; the returned socket is non-blocking with
/// TCP_NODELAY set.  Throws std::system_error.
UniqueFd connect_tcp(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout);

void set_nonblocking(int fd);
void set_nodelay(int fd);

/// "host:port" -> pair; throws std::invalid_argument.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text);

enum class IoResult { Ok, WouldBlock, Closed, Error };

/// recv/send on a non-blocking socket; `n` receives the byte count.
IoResult read_some(int fd, std::span<std::uint8_t> into, std::size_t& n) noexcept;
IoResult write_some(int fd, std::span<const std::uint8_t> from, std::size_t& n) noexcept;

/// Writes everything, waiting for writability up to `timeout`.
bool write_all(int fd, std::span<const std::uint8_t> data, std::chrono::milliseconds timeout) noexcept;

class Epoll {
 public:
  Epoll();
  [[nodiscard]] int fd() const noexcept { return fd_.get(); }
  void add(int fd, std::uint32_t events, void* tag);
  void modify(int fd, std::uint32_t events, void* tag);
  void remove(int fd) noexcept;
  int wait(std::span<epoll_event> events, int timeout_ms) noexcept;

 private:
  UniqueFd fd_;
};

class EventFd {
 public:
  EventFd();
  [[nodiscard]] int fd() const noexcept { return fd_.get(); }
  void notify() noexcept;
  void drain() noexcept;

 private:
  UniqueFd fd_;
};

}  // namespace ofb::net
