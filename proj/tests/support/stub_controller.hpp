#pragma once

// Scripted OpenFlow controller for harness tests.  Completes the handshake,
// then answers every packet-in after `delay` according to `reply`.

#include <poll.h>
#include <sys/socket.h>

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>
#include <vector>

#include "ofbench/net.hpp"
#include "ofbench/ofwire.hpp"

namespace ofb::gen {

class StubController {
 public:
  enum class Reply { FlowMod, PacketOut, TwoFlowMods, Nothing };

  StubController(Reply reply, std::chrono::microseconds delay)
      : reply_(reply), delay_(delay), listener_(net::listen_tcp("127.0.0.1", 0)) {
    acceptor_ = std::thread([this] { accept_loop(); });
  }
  ~StubController() {
    stop_ = true;
    acceptor_.join();
    std::lock_guard lock(mu_);
    for (auto& t : conns_) t.join();
  }

  [[nodiscard]] std::uint16_t port() const { return net::local_port(listener_.get()); }

 private:
  void accept_loop() {
    while (!stop_) {
      pollfd p{listener_.get(), POLLIN, 0};
      if (::poll(&p, 1, 20) <= 0) continue;
      const int fd = ::accept(listener_.get(), nullptr, nullptr);
      if (fd < 0) continue;
      std::lock_guard lock(mu_);
      conns_.emplace_back([this, fd] { serve(net::UniqueFd(fd)); });
    }
  }

  void serve(net::UniqueFd fd) {
    net::set_nonblocking(fd.get());
    net::set_nodelay(fd.get());
    std::vector<std::uint8_t> in;
    auto send = [&](const wire::Message& m) {
      const auto b = wire::encode(m);
      return net::write_all(fd.get(), b, std::chrono::seconds(2));
    };
    while (!stop_) {
      pollfd p{fd.get(), POLLIN, 0};
      if (::poll(&p, 1, 20) <= 0) continue;
      std::uint8_t buf[8192];
      std::size_t n = 0;
      const auto r = net::read_some(fd.get(), buf, n);
      if (r == net::IoResult::Closed || r == net::IoResult::Error) return;
      in.insert(in.end(), buf, buf + n);
      std::size_t used = 0;
      for (;;) {
        auto f = wire::next_frame(std::span(in).subspan(used), true);
        if (!f.ok()) return;
        if (!f->has_value()) break;
        const wire::Frame fr = **f;
        used += fr.bytes.size();
        auto m = wire::decode_message(fr.header, fr.body());
        if (!m.ok()) return;
        if (std::holds_alternative<wire::Hello>(*m)) {
          send(wire::Hello{fr.header.xid});
          send(wire::FeaturesRequest{1});
        } else if (const auto* echo = std::get_if<wire::EchoRequest>(&*m)) {
          send(wire::EchoReply{echo->xid, echo->data});
        } else if (const auto* pin = std::get_if<wire::PacketIn>(&*m)) {
          if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
          answer(*pin, send);
        }
      }
      in.erase(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(used));
    }
  }

  template <typename Send>
  void answer(const wire::PacketIn& pin, Send& send) {
    wire::LearnedFlow flow{pin.xid, pin.buffer_id, pin.in_port, pin.src_mac().to_u64(), pin.dst_mac().to_u64(),
                           wire::port::kFlood};
    switch (reply_) {
      case Reply::FlowMod: send(wire::make_flow_mod(flow)); break;
      case Reply::TwoFlowMods:
        send(wire::make_flow_mod(flow));
        send(wire::make_flow_mod(flow));
        break;
      case Reply::PacketOut: {
        wire::PacketOut po;
        po.xid = pin.xid;
        po.buffer_id = pin.buffer_id;
        po.in_port = pin.in_port;
        po.actions.push_back({wire::port::kFlood, 0});
        send(po);
        break;
      }
      case Reply::Nothing: break;
    }
  }

  Reply reply_;
  std::chrono::microseconds delay_;
  net::UniqueFd listener_;
  std::atomic<bool> stop_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> conns_;
};

}  // namespace ofb::gen
