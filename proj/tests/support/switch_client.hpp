#pragma once

// Minimal blocking OpenFlow switch for tests: connects, completes the
// handshake, sends raw bytes and reads back whole messages.

#include <poll.h>

#include <chrono>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ofbench/bench.hpp"
#include "ofbench/net.hpp"
#include "ofbench/ofwire.hpp"

namespace ofb::gen {

class SwitchClient {
 public:
  using Clock = std::chrono::steady_clock;

  SwitchClient(std::uint16_t port, std::uint64_t switch_id)
      : fd_(net::connect_tcp("127.0.0.1", port, std::chrono::seconds(5))), switch_id_(switch_id) {}

  void send(std::span<const std::uint8_t> bytes) {
    if (!net::write_all(fd_.get(), bytes, std::chrono::seconds(5))) throw std::runtime_error("write failed");
  }
  void send(const wire::Message& m) { send(wire::encode(m)); }

  /// Next whole message, or nullopt on timeout or a closed connection.
  std::optional<wire::Message> recv(std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
    const auto deadline = Clock::now() + timeout;
    for (;;) {
      auto f = wire::next_frame(in_);
      if (!f.ok()) throw std::runtime_error("peer sent a malformed frame");
      if (f->has_value()) {
        const wire::Frame& fr = **f;
        auto m = wire::decode_message(fr.header, fr.body());
        const auto used = fr.bytes.size();
        in_.erase(in_.begin(), in_.begin() + static_cast<std::ptrdiff_t>(used));
        if (!m.ok()) throw std::runtime_error("undecodable message");
        return *m;
      }
      if (!wait_readable(deadline)) return std::nullopt;
      std::uint8_t buf[4096];
      std::size_t n = 0;
      const auto r = net::read_some(fd_.get(), buf, n);
      if (r == net::IoResult::Closed || r == net::IoResult::Error) {
        closed_ = true;
        return std::nullopt;
      }
      in_.insert(in_.end(), buf, buf + n);
    }
  }

  /// HELLO, expect HELLO + FEATURES_REQUEST, answer FEATURES_REPLY.
  void handshake() {
    send(wire::Hello{1});
    bool hello = false;
    while (true) {
      auto m = recv();
      if (!m) throw std::runtime_error("handshake timed out");
      if (std::holds_alternative<wire::Hello>(*m)) hello = true;
      if (const auto* fr = std::get_if<wire::FeaturesRequest>(&*m)) {
        if (!hello) throw std::runtime_error("FEATURES_REQUEST before HELLO");
        send(bench::features_for(switch_id_, fr->xid));
        return;
      }
    }
  }

  /// True once the peer has closed; waits up to `timeout`.
  bool wait_closed(std::chrono::milliseconds timeout) {
    const auto deadline = Clock::now() + timeout;
    while (!closed_) {
      if (!wait_readable(deadline)) return false;
      std::uint8_t buf[4096];
      std::size_t n = 0;
      const auto r = net::read_some(fd_.get(), buf, n);
      if (r == net::IoResult::Closed || r == net::IoResult::Error) closed_ = true;
    }
    return true;
  }

  [[nodiscard]] std::uint64_t datapath_id() const { return bench::datapath_id_for(switch_id_); }

 private:
  bool wait_readable(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) return false;
    pollfd p{fd_.get(), POLLIN, 0};
    return ::poll(&p, 1, static_cast<int>(left)) > 0;
  }

  net::UniqueFd fd_;
  std::uint64_t switch_id_;
  std::vector<std::uint8_t> in_;
  bool closed_ = false;
};

}  // namespace ofb::gen
