#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "duetml/agents.hpp"
#include "duetml/mllm_client.hpp"
#include "duetml/session.hpp"

namespace httplib {
class Server;
}

namespace duetml {

struct ServiceConfig {
  std::string data_dir = "./data";
  SessionConfig session;
  BackendConfig backend;
  std::optional<MockScript> mock;  // offline mode when set
  std::chrono::milliseconds active_interval{60000};  // 0 disables the timers
  Clock clock;                                       // defaults to the system clock
  bool persist = true;
};

/// Session registry behind the HTTP layer. Sessions live in memory and are
/// written through to `data_dir` after every mutation; unknown ids are
/// looked up on disk before giving up.
class Workbench {
 public:
  explicit Workbench(ServiceConfig config);
  ~Workbench();

  /// Creates, starts and persists a session.
  std::shared_ptr<Session> create_session(std::optional<std::string> id = std::nullopt,
                                          std::optional<std::uint64_t> seed = std::nullopt);
  std::shared_ptr<Session> get(const std::string& id);  // throws UnknownSession
  void save(const Session& session);

  /// Runs one proactive evaluation now (the timers call this too).
  TickResult tick(const std::string& id);

  const ServiceConfig& config() const { return config_; }

 private:
  struct Entry {
    std::shared_ptr<Session> session;
    std::unique_ptr<PeriodicTimer> timer;
  };

  std::unique_ptr<MllmBackend> make_backend(AgentId agent) const;
  Entry& install(std::shared_ptr<Session> session);

  ServiceConfig config_;
  std::mutex mutex_;
  std::map<std::string, Entry> sessions_;
};

/// JSON-over-HTTP front end plus the server-push event stream.
class HttpService {
 public:
  explicit HttpService(ServiceConfig config);
  ~HttpService();

  /// Binds and serves on a background thread. Port 0 picks a free port.
  int start(const std::string& host, int port);
  /// Blocks serving on the calling thread.
  bool listen(const std::string& host, int port);
  void stop();

  Workbench& workbench() { return workbench_; }

 private:
  void routes();

  Workbench workbench_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::atomic<bool> stopping_{false};
};

}  // namespace duetml
