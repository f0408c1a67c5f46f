#pragma once

#include <memory>

#include "session.hpp"

namespace ofb::engine::detail {

/// A threading model.  adopt() is called from the listener thread with a
/// connection that has completed its handshake; from then on the runtime
/// owns it.
class Runtime {
 public:
  virtual ~Runtime() = default;
  virtual void start() = 0;
  /// Flushes and closes every connection, joins all threads.
  virtual void stop() = 0;
  virtual void adopt(std::unique_ptr<Connection> conn) = 0;
  virtual void collect(EngineStats& into) const = 0;
};

std::unique_ptr<Runtime> make_run_to_completion(const StrategyMatrix& m, learn::MacTable& table);
std::unique_ptr<Runtime> make_shared_pool_queue(const StrategyMatrix& m, learn::MacTable& table);
std::unique_ptr<Runtime> make_single_io_queue(const StrategyMatrix& m, learn::MacTable& table);

}  // namespace ofb::engine::detail
