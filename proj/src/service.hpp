#pragma once

// HTTP inference service.
//
//   GET  /health      200 {"status":"ok"} | 503 {"status":"loading"} | 500 {"status":"error"}
//   GET  /meta        input dims and checkpoint metadata (503 while loading)
//   POST /synthesize  JSON SynthesisRequest -> image/png
//                     400 malformed, 413 too large, 422 degenerate transform,
//                     503 while loading
//
// The listener comes up before the checkpoint is loaded; loading happens on
// a background thread and requests are answered with 503 until it is done.

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "synthesis.hpp"

namespace httplib {
class Server;
}

namespace retarget {

struct ServiceOptions {
  int64_t max_output_side = kDefaultMaxOutputSide;
  size_t worker_threads = 8;
  /// Runs on the loader thread before the checkpoint is read.
  std::function<void()> before_load;
};

class Service {
 public:
  explicit Service(std::filesystem::path checkpoint, ServiceOptions options = {});
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds host:port (port 0 picks a free port), starts serving and kicks
  /// off loading. Returns the bound port. Throws IoError if binding fails.
  int start(const std::string& host, int port);
  /// Blocks until stop() is called.
  void wait();
  void stop();

  bool ready() const noexcept { return state_.load() == State::Ready; }
  /// Blocks until loading finished (successfully or not).
  bool wait_until_loaded() const;

 private:
  enum class State { Loading, Ready, Failed };

  void install_routes();
  void load();

  std::filesystem::path checkpoint_;
  ServiceOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::shared_ptr<const Model> model_;
  std::string load_error_;
  std::atomic<State> state_{State::Loading};
  std::thread listener_;
  std::thread loader_;
  std::mutex stop_mutex_;
  bool started_ = false;
};

}  // namespace retarget
