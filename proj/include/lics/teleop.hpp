#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lics/demo.hpp"
#include "lics/safety.hpp"
#include "lics/session.hpp"
#include "lics/world.hpp"

namespace lics {

/// Root for default data paths: $LICS_DATA_DIR, else "./data".
std::filesystem::path data_dir();

struct TeleopConfig {
  std::vector<World> worlds;  // the first one is loaded at start
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  SessionConfig session;
  SafetyConfig safety;
  double rate = 10.0;          // state frames and simulation ticks per second
  double deadman = 0.5;        // s; older commands decay to (0, 0)
  int stream_beams = 180;
  std::filesystem::path record_path;  // empty: data_dir()/recordings/human.ndjson
  std::optional<std::filesystem::path> ui_dir;  // static files served over plain HTTP
};

/// Protocol state machine without any I/O: one simulation, one driver slot,
/// latest-wins command mailbox and the recording buffer. Times are seconds on
/// any monotonic clock.
class TeleopCore {
 public:
  explicit TeleopCore(TeleopConfig cfg);

  struct Reply {
    std::vector<nlohmann::json> frames;  // to the sender
    bool close = false;                  // protocol violation: close after sending
    bool world_changed = false;          // every client should get a new hello
  };

  nlohmann::json hello(bool driver) const;

  /// Handles one client text frame.
  Reply handle(const std::string& text, bool is_driver, double now);

  /// Advances the simulation one control period (unless the episode is over)
  /// and returns the state frame.
  nlohmann::json tick(double now);

  const NavSession& session() const { return *session_; }
  bool recording() const { return recording_; }
  std::size_t recorded_records() const { return writer_ ? writer_->record_count() : 0; }
  std::filesystem::path record_path() const;

 private:
  void reset(const World& world);
  void finish_episode();
  static nlohmann::json error_frame(const std::string& message);

  TeleopConfig cfg_;
  std::unique_ptr<NavSession> session_;
  std::size_t world_index_ = 0;
  Action command_;
  double command_time_ = -1e300;
  bool recording_ = false;
  std::vector<DemoRecord> buffer_;
  std::unique_ptr<DatasetWriter> writer_;
  int episode_ = 0;
  std::int64_t frames_ = 0;
  bool episode_closed_ = false;
};

/// WebSocket bridge around TeleopCore on a single-threaded event loop.
class TeleopServer {
 public:
  /// Binds immediately; throws PortInUse when the port is taken.
  explicit TeleopServer(TeleopConfig cfg);
  ~TeleopServer();

  unsigned short port() const;
  /// Serves until stop() is called.
  void run();
  /// Safe to call from any thread.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lics
