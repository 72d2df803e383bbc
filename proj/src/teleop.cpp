#include "lics/teleop.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <sstream>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "lics/error.hpp"

namespace lics {

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("LICS_DATA_DIR"); env && *env) return env;
  return "data";
}

// ---- protocol core ----------------------------------------------------------

TeleopCore::TeleopCore(TeleopConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.worlds.empty()) throw InvalidConfig("teleop needs at least one world");
  if (!(cfg_.rate > 0.0)) throw InvalidConfig("teleop rate must be > 0");
  if (cfg_.stream_beams < 2) throw InvalidConfig("stream_beams must be >= 2");
  reset(cfg_.worlds.front());
}

std::filesystem::path TeleopCore::record_path() const {
  return cfg_.record_path.empty() ? data_dir() / "recordings" / "human.ndjson" : cfg_.record_path;
}

void TeleopCore::reset(const World& world) {
  session_ = std::make_unique<NavSession>(world, cfg_.session);
  buffer_.clear();
  command_ = {};
  episode_closed_ = false;
  ++episode_;
}

nlohmann::json TeleopCore::error_frame(const std::string& message) {
  return {{"type", "error"}, {"message", message}};
}

nlohmann::json TeleopCore::hello(bool driver) const {
  const World& w = session_->world();
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < w.height; ++r) {
    std::string row(static_cast<std::size_t>(w.width), '.');
    for (int c = 0; c < w.width; ++c)
      if (w.occupied(c, r)) row[static_cast<std::size_t>(c)] = '#';
    rows.push_back(row);
  }
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& world : cfg_.worlds) ids.push_back(world.id);
  const auto& lim = cfg_.session.limits;
  return {{"type", "hello"},
          {"driver", driver},
          {"rate", cfg_.rate},
          {"deadman", cfg_.deadman},
          {"limits", {{"v_max", lim.v_max}, {"w_max", lim.w_max}}},
          {"footprint", {cfg_.session.footprint.length, cfg_.session.footprint.width}},
          {"lidar",
           {{"beams", cfg_.stream_beams},
            {"angle_min", cfg_.session.lidar.angle_min},
            {"angle_max", cfg_.session.lidar.angle_max},
            {"max_range", cfg_.session.lidar.max_range}}},
          {"worlds", ids},
          {"world",
           {{"id", w.id},
            {"resolution", w.resolution},
            {"width", w.width},
            {"height", w.height},
            {"rows", rows},
            {"start", {w.start.x, w.start.y, w.start.theta}},
            {"goal", {w.goal.x(), w.goal.y()}}}}};
}

TeleopCore::Reply TeleopCore::handle(const std::string& text, bool is_driver, double now) {
  Reply reply;
  auto violation = [&](const std::string& msg) {
    reply.frames.push_back(error_frame(msg));
    reply.close = true;
    return reply;
  };
  nlohmann::json msg;
  try {
    msg = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    return violation("malformed JSON");
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
    return violation("message needs a string 'type'");
  const std::string type = msg["type"].get<std::string>();

  if (type == "list_worlds") {
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& w : cfg_.worlds) ids.push_back(w.id);
    reply.frames.push_back({{"type", "worlds"}, {"ids", ids}});
    return reply;
  }
  if (type == "cmd") {
    const auto v = msg.find("v");
    const auto w = msg.find("w");
    if (v == msg.end() || w == msg.end() || !v->is_number() || !w->is_number())
      return violation("cmd needs numeric 'v' and 'w'");
    const Action a{v->get<double>(), w->get<double>()};
    if (!std::isfinite(a.v) || !std::isfinite(a.w)) return violation("cmd values must be finite");
    if (!is_driver) {
      reply.frames.push_back(error_frame("another client is driving"));
      return reply;
    }
    command_ = cfg_.session.limits.clamp(a);
    command_time_ = now;
    return reply;
  }
  if (type == "record") {
    const auto on = msg.find("on");
    if (on == msg.end() || !on->is_boolean()) return violation("record needs boolean 'on'");
    if (!is_driver) {
      reply.frames.push_back(error_frame("another client is driving"));
      return reply;
    }
    const bool want = on->get<bool>();
    if (want && !writer_)
      writer_ = std::make_unique<DatasetWriter>(
          record_path(), make_manifest(cfg_.session.lidar.beam_count, 0.0, cfg_.session.limits,
                                       "human"));
    if (want != recording_) buffer_.clear();
    recording_ = want;
    reply.frames.push_back({{"type", "ack"}, {"what", "record"}, {"on", recording_}});
    return reply;
  }
  if (type == "reset") {
    if (!is_driver) {
      reply.frames.push_back(error_frame("another client is driving"));
      return reply;
    }
    std::size_t index = world_index_;
    if (msg.contains("world")) {
      if (!msg["world"].is_string()) return violation("reset 'world' must be a string");
      const std::string id = msg["world"].get<std::string>();
      const auto it = std::find_if(cfg_.worlds.begin(), cfg_.worlds.end(),
                                   [&](const World& w) { return w.id == id; });
      if (it == cfg_.worlds.end()) {
        reply.frames.push_back(error_frame("unknown world '" + id + "'"));
        return reply;
      }
      index = static_cast<std::size_t>(it - cfg_.worlds.begin());
    }
    if (!episode_closed_ && recording_ && !buffer_.empty() && writer_)
      writer_->discard_episode(session_->world().id, Outcome::kRunning);
    world_index_ = index;
    reset(cfg_.worlds[index]);
    reply.world_changed = true;
    return reply;
  }
  return violation("unknown message type '" + type + "'");
}

void TeleopCore::finish_episode() {
  if (episode_closed_) return;
  episode_closed_ = true;
  if (!recording_ || !writer_ || buffer_.empty()) return;
  if (session_->outcome() == Outcome::kSuccess)
    writer_->append_episode(buffer_, session_->time());
  else
    writer_->discard_episode(session_->world().id, session_->outcome());
  buffer_.clear();
}

nlohmann::json TeleopCore::tick(double now) {
  NavSession& sim = *session_;
  const bool fresh = now - command_time_ <= cfg_.deadman;
  const Action cmd = fresh && sim.outcome() == Outcome::kRunning ? command_ : Action{};

  SafetyVerdict verdict;
  Pose2 verdict_pose = sim.state().pose;
  if (sim.outcome() == Outcome::kRunning) {
    Observation obs = sim.observe();
    verdict = check_action(scan_to_points(obs.scan, obs.lidar), cmd, cfg_.safety);
    if (recording_) {
      DemoRecord rec;
      rec.t = sim.time();
      rec.world_id = sim.world().id;
      rec.episode_id = episode_;
      rec.goal = obs.goal.unit;
      rec.a_star = cmd;
      rec.a_exec = cmd;
      rec.scan = std::move(obs.scan);
      buffer_.push_back(std::move(rec));
    }
    sim.apply(cmd);
    if (sim.outcome() != Outcome::kRunning) finish_episode();
  }

  const Pose2& pose = sim.state().pose;
  LidarScan scan;
  if (sim.world().contains(to_world_frame(pose, cfg_.session.lidar.mount_offset)))
    scan = resample_scan(render_scan(sim.world(), pose, cfg_.session.lidar), cfg_.stream_beams);
  else
    scan.assign(static_cast<std::size_t>(cfg_.stream_beams), cfg_.session.lidar.max_range);

  nlohmann::json path = nlohmann::json::array();
  for (const auto& p : sim.path().points) path.push_back({p.x(), p.y()});
  nlohmann::json roi = nlohmann::json::array();
  for (const auto& p : verdict.roi.polygon) {
    const Vec2 w = to_world_frame(verdict_pose, p);
    roi.push_back({w.x(), w.y()});
  }
  const Outcome out = sim.outcome();
  return {{"type", "state"},
          {"t", static_cast<double>(++frames_) / cfg_.rate},
          {"sim_t", sim.time()},
          {"world", sim.world().id},
          {"pose", {pose.x, pose.y, pose.theta}},
          {"velocity", {sim.state().v, sim.state().w}},
          {"cmd", {cmd.v, cmd.w}},
          {"scan", scan},
          {"goal", {sim.world().goal.x(), sim.world().goal.y()}},
          {"path", path},
          {"verdict", {{"safe", verdict.safe}, {"roi", roi}, {"class", to_string(verdict.motion)}}},
          {"recording", recording_},
          {"recorded", recorded_records()},
          {"outcome", out == Outcome::kRunning ? nlohmann::json() : nlohmann::json(to_string(out))}};
}

// ---- network layer ----------------------------------------------------------

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

std::string mime_type(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

}  // namespace

struct TeleopServer::Impl {
  class Client;

  explicit Impl(TeleopConfig cfg)
      : ioc(1),
        acceptor(ioc),
        timer(ioc),
        ui_dir(cfg.ui_dir),
        period(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / cfg.rate))),
        core(std::move(cfg)) {}

  double now() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }

  void bind(const std::string& address, unsigned short port) {
    beast::error_code ec;
    const tcp::endpoint ep(net::ip::make_address(address, ec), port);
    if (ec) throw InvalidConfig("bad bind address '" + address + "'");
    acceptor.open(ep.protocol());
    acceptor.set_option(net::socket_base::reuse_address(true));
    acceptor.bind(ep, ec);
    if (ec == net::error::address_in_use) throw PortInUse("port " + std::to_string(port) + " is in use");
    if (ec) throw Error("bind failed: " + ec.message());
    acceptor.listen();
  }

  void accept();
  void schedule_tick();
  void on_tick();
  void attach(const std::shared_ptr<Client>& c);
  void detach(const Client* c);
  void on_message(const std::shared_ptr<Client>& c, const std::string& text);
  void serve_http(tcp::socket socket);

  net::io_context ioc;
  tcp::acceptor acceptor;
  net::steady_timer timer;
  std::optional<std::filesystem::path> ui_dir;
  std::chrono::steady_clock::duration period;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
  TeleopCore core;
  std::vector<std::shared_ptr<Client>> clients;
  const Client* driver = nullptr;
  bool stopping = false;
};

class TeleopServer::Impl::Client : public std::enable_shared_from_this<Client> {
 public:
  Client(Impl& server, tcp::socket socket) : server_(server), ws_(std::move(socket)) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->server_.attach(self);
      self->read();
    });
  }

  void send(std::shared_ptr<const std::string> text, bool droppable = false) {
    if (closing_) return;
    if (droppable && queue_.size() > 8) return;  // slow reader: drop stale state frames
    queue_.push_back(std::move(text));
    if (!writing_) write();
  }

  void close_after_flush() {
    close_pending_ = true;
    if (!writing_) do_close();
  }

  void close_now() {
    if (closing_) return;
    closing_ = true;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->server_.detach(self.get());
        return;
      }
      if (!self->ws_.got_text()) {
        self->buffer_.consume(self->buffer_.size());
        self->send(std::make_shared<std::string>(
            R"({"type":"error","message":"binary frames are not supported"})"));
        self->close_after_flush();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->server_.on_message(self, text);
      if (!self->close_pending_) self->read();
    });
  }

  void write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->writing_ = false;
                      if (ec) {
                        self->server_.detach(self.get());
                        return;
                      }
                      self->queue_.pop_front();
                      if (!self->queue_.empty() && !self->closing_) {
                        self->write();
                      } else if (self->close_pending_) {
                        self->do_close();
                      }
                    });
  }

  void do_close() {
    if (closing_) return;
    closing_ = true;
    ws_.async_close(websocket::close_code::policy_error,
                    [self = shared_from_this()](beast::error_code) {
                      self->server_.detach(self.get());
                    });
  }

  Impl& server_;
  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool writing_ = false;
  bool close_pending_ = false;
  bool closing_ = false;
};

void TeleopServer::Impl::accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    serve_http(std::move(socket));
    accept();
  });
}

void TeleopServer::Impl::serve_http(tcp::socket socket) {
  struct Pending {
    beast::tcp_stream stream;
    beast::flat_buffer buffer;
    http::request<http::string_body> req;
    explicit Pending(tcp::socket s) : stream(std::move(s)) {}
  };
  auto p = std::make_shared<Pending>(std::move(socket));
  p->stream.expires_after(std::chrono::seconds(10));
  http::async_read(p->stream, p->buffer, p->req, [this, p](beast::error_code ec, std::size_t) {
    if (ec) return;
    if (websocket::is_upgrade(p->req)) {
      p->stream.expires_never();
      auto client = std::make_shared<Client>(*this, p->stream.release_socket());
      client->start(std::move(p->req));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(p->req.version());
    res->keep_alive(false);
    std::string target(p->req.target());
    if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
    std::filesystem::path file;
    if (ui_dir && target.find("..") == std::string::npos && !target.empty() && target[0] == '/') {
      file = *ui_dir / target.substr(1);
      if (target == "/") file = *ui_dir / "index.html";
    }
    std::ifstream in(file, std::ios::binary);
    if (!file.empty() && std::filesystem::is_regular_file(file) && in) {
      std::ostringstream body;
      body << in.rdbuf();
      res->result(http::status::ok);
      res->set(http::field::content_type, mime_type(file));
      res->body() = body.str();
    } else {
      res->result(http::status::not_found);
      res->set(http::field::content_type, "text/plain");
      res->body() = "not found\n";
    }
    res->prepare_payload();
    http::async_write(p->stream, *res, [p, res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      p->stream.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  });
}

void TeleopServer::Impl::attach(const std::shared_ptr<Client>& c) {
  if (stopping) {
    c->close_now();
    return;
  }
  clients.push_back(c);
  if (!driver) driver = c.get();
  c->send(std::make_shared<std::string>(core.hello(driver == c.get()).dump()));
}

void TeleopServer::Impl::detach(const Client* c) {
  const auto it = std::find_if(clients.begin(), clients.end(),
                               [&](const auto& p) { return p.get() == c; });
  if (it == clients.end()) return;
  const auto keep = *it;  // stays alive until this handler returns
  clients.erase(it);
  if (driver == c) {
    driver = clients.empty() ? nullptr : clients.front().get();
    if (driver) clients.front()->send(std::make_shared<std::string>(core.hello(true).dump()));
  }
}

void TeleopServer::Impl::on_message(const std::shared_ptr<Client>& c, const std::string& text) {
  TeleopCore::Reply reply = core.handle(text, driver == c.get(), now());
  for (const auto& f : reply.frames) c->send(std::make_shared<std::string>(f.dump()));
  if (reply.world_changed)
    for (const auto& other : clients)
      other->send(std::make_shared<std::string>(core.hello(driver == other.get()).dump()));
  if (reply.close) c->close_after_flush();
}

void TeleopServer::Impl::schedule_tick() {
  timer.expires_at(timer.expiry() + period);
  timer.async_wait([this](beast::error_code ec) {
    if (!ec) on_tick();
  });
}

void TeleopServer::Impl::on_tick() {
  const auto frame = std::make_shared<const std::string>(core.tick(now()).dump());
  for (const auto& c : clients) c->send(frame, true);
  schedule_tick();
}

TeleopServer::TeleopServer(TeleopConfig cfg) {
  const std::string address = cfg.address;
  const unsigned short port = cfg.port;
  impl_ = std::make_unique<Impl>(std::move(cfg));
  impl_->bind(address, port);
}

TeleopServer::~TeleopServer() = default;

unsigned short TeleopServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void TeleopServer::run() {
  impl_->accept();
  impl_->timer.expires_after(std::chrono::steady_clock::duration::zero());
  impl_->schedule_tick();
  impl_->ioc.run();
}

void TeleopServer::stop() {
  net::post(impl_->ioc, [impl = impl_.get()] {
    impl->stopping = true;
    beast::error_code ec;
    impl->acceptor.close(ec);
    impl->timer.cancel();
    for (const auto& c : impl->clients) c->close_now();
    impl->ioc.stop();
  });
}

}  // namespace lics
