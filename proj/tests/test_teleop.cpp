#include <chrono>
#include <filesystem>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "doctest.h"
#include "lics/error.hpp"
#include "lics/teleop.hpp"
#include "lics/trainer.hpp"
#include "fixtures.hpp"

using namespace lics;
using nlohmann::json;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("lics_teleop_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TeleopConfig box_config(const std::filesystem::path& dir) {
  TeleopConfig cfg;
  cfg.worlds = {fixture::open_box("box_a", 3.0), fixture::open_box("box_b", 2.0)};
  cfg.port = 0;
  cfg.session.timeout = 30.0;
  cfg.record_path = dir / "human.ndjson";
  return cfg;
}

json only_frame(const TeleopCore::Reply& r) {
  REQUIRE(r.frames.size() == 1);
  return r.frames.front();
}

}  // namespace

TEST_SUITE("teleop") {

TEST_CASE("hello describes the world and the limits") {
  const auto dir = scratch_dir("hello");
  TeleopCore core(box_config(dir));
  const json h = core.hello(true);
  CHECK(h["type"] == "hello");
  CHECK(h["driver"] == true);
  CHECK(core.hello(false)["driver"] == false);
  CHECK(h["rate"] == 10.0);
  CHECK(h["deadman"] == 0.5);
  CHECK(h["limits"]["v_max"] == SessionConfig{}.limits.v_max);
  CHECK(h["lidar"]["beams"] == 180);
  CHECK(h["worlds"] == json({"box_a", "box_b"}));
  const json& w = h["world"];
  CHECK(w["id"] == "box_a");
  CHECK(w["rows"].size() == static_cast<std::size_t>(w["height"].get<int>()));
  CHECK(w["rows"][0].get<std::string>() == std::string(30, '#'));
  CHECK(w["rows"][5].get<std::string>() == "#" + std::string(28, '.') + "#");
  CHECK(w["goal"][1].get<double>() == doctest::Approx(3.975));
}

TEST_CASE("list_worlds, cmd clamping and the driver slot") {
  const auto dir = scratch_dir("cmd");
  TeleopCore core(box_config(dir));
  const json ids = only_frame(core.handle(R"({"type":"list_worlds"})", false, 0.0));
  CHECK(ids == json({{"type", "worlds"}, {"ids", {"box_a", "box_b"}}}));

  const auto lim = SessionConfig{}.limits;
  const auto r = core.handle(R"({"type":"cmd","v":99,"w":-99})", true, 0.0);
  CHECK(r.frames.empty());
  CHECK_FALSE(r.close);
  const json f = core.tick(0.0);
  CHECK(f["cmd"][0].get<double>() == lim.v_max);
  CHECK(f["cmd"][1].get<double>() == -lim.w_max);

  const auto other = core.handle(R"({"type":"cmd","v":0.1,"w":0})", false, 0.0);
  CHECK(only_frame(other)["message"] == "another client is driving");
  CHECK_FALSE(other.close);
}

TEST_CASE("protocol violations close the connection") {
  const auto dir = scratch_dir("violations");
  TeleopCore core(box_config(dir));
  for (const char* bad : {"not json", "[1,2]", R"({"kind":"cmd"})", R"({"type":"fly"})",
                          R"({"type":"cmd","v":"fast","w":0})", R"({"type":"cmd","v":1})",
                          R"({"type":"record","on":1})", R"({"type":"reset","world":3})"}) {
    CAPTURE(bad);
    const auto r = core.handle(bad, true, 0.0);
    CHECK(r.close);
    CHECK(only_frame(r)["type"] == "error");
  }
}

TEST_CASE("reset switches worlds and rejects unknown ids") {
  const auto dir = scratch_dir("reset");
  TeleopCore core(box_config(dir));
  const auto bad = core.handle(R"({"type":"reset","world":"nowhere"})", true, 0.0);
  CHECK_FALSE(bad.close);
  CHECK(only_frame(bad)["type"] == "error");
  CHECK(core.session().world().id == "box_a");

  const auto ok = core.handle(R"({"type":"reset","world":"box_b"})", true, 0.0);
  CHECK(ok.world_changed);
  CHECK(core.session().world().id == "box_b");
  CHECK(core.hello(true)["world"]["id"] == "box_b");
  CHECK(core.session().time() == 0.0);
}

TEST_CASE("deadman decays stale commands to zero") {
  const auto dir = scratch_dir("deadman");
  TeleopCore core(box_config(dir));
  core.handle(R"({"type":"cmd","v":0.5,"w":0.2})", true, 0.0);
  CHECK(core.tick(0.4)["cmd"] == json({0.5, 0.2}));
  CHECK(core.tick(0.6)["cmd"] == json({0.0, 0.0}));
  core.handle(R"({"type":"cmd","v":0.3,"w":0})", true, 0.7);
  CHECK(core.tick(0.8)["cmd"] == json({0.3, 0.0}));
}

TEST_CASE("state frames follow the wire schema") {
  const auto dir = scratch_dir("frames");
  TeleopCore core(box_config(dir));
  double last_t = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double now = 0.1 * i;
    core.handle(R"({"type":"cmd","v":0.6,"w":0.3})", true, now);
    NavSession before = core.session();
    const Observation obs = before.observe();
    const auto expected = check_action(scan_to_points(obs.scan, obs.lidar), {0.6, 0.3}, SafetyConfig{});

    const json f = core.tick(now);
    CHECK(f["type"] == "state");
    CHECK(f["t"].get<double>() > last_t);
    last_t = f["t"].get<double>();
    CHECK(f["world"] == "box_a");
    CHECK(f["pose"].size() == 3);
    CHECK(f["velocity"].size() == 2);
    CHECK(f["scan"].size() == 180);
    CHECK(f["goal"].size() == 2);
    CHECK(f["path"].size() >= 2);
    CHECK(f["recording"] == false);
    CHECK(f["recorded"] == 0);
    CHECK(f["outcome"].is_null());
    CHECK(f["verdict"]["safe"].get<bool>() == expected.safe);
    CHECK(f["verdict"]["class"] == to_string(expected.motion));
    CHECK(f["verdict"]["roi"].size() == expected.roi.polygon.size());
  }
  CHECK(core.session().time() == doctest::Approx(2.0));
}

TEST_CASE("recording writes a dataset the trainer accepts") {
  const auto dir = scratch_dir("record");
  TeleopCore core(box_config(dir));
  CHECK(only_frame(core.handle(R"({"type":"record","on":true})", true, 0.0)) ==
        json({{"type", "ack"}, {"what", "record"}, {"on", true}}));
  CHECK(core.recording());

  json f;
  for (int i = 0; i < 100; ++i) {
    const double now = 0.1 * i;
    core.handle(R"({"type":"cmd","v":1.0,"w":0})", true, now);
    f = core.tick(now);
    if (!f["outcome"].is_null()) break;
  }
  REQUIRE(f["outcome"] == "success");
  const std::size_t n = core.recorded_records();
  CHECK(n >= 25);
  CHECK(f["recorded"] == n);

  const Dataset ds = read_dataset(core.record_path());
  REQUIRE(ds.records.size() == n);
  for (const auto& r : ds.records) {
    CHECK(r.world_id == "box_a");
    CHECK(r.scan.size() == 720);
    CHECK(r.a_star == r.a_exec);
  }
  CHECK(ds.records.back().a_star.v == doctest::Approx(1.0));

  ModelConfig mc = ModelConfig::tiny();
  mc.scan_size = 720;
  mc.max_range = 20.0;
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.threads = 1;
  const TrainResult res = train(ds.records, mc, tc);
  CHECK(res.report.train_mse.size() == 1);
  CHECK(std::isfinite(res.report.train_mse[0]));

  // A reset mid-episode discards the unfinished buffer.
  core.handle(R"({"type":"reset"})", true, 20.0);
  for (int i = 0; i < 5; ++i) {
    core.handle(R"({"type":"cmd","v":0.5,"w":0})", true, 20.0 + 0.1 * i);
    core.tick(20.0 + 0.1 * i);
  }
  core.handle(R"({"type":"reset"})", true, 21.0);
  CHECK(core.recorded_records() == n);
  CHECK(read_dataset(core.record_path()).records.size() == n);
}

TEST_CASE("invalid configurations") {
  TeleopConfig cfg;
  CHECK_THROWS_AS(TeleopCore{cfg}, InvalidConfig);
  cfg.worlds = {fixture::open_box("b", 2.0)};
  cfg.rate = 0.0;
  CHECK_THROWS_AS(TeleopCore{cfg}, InvalidConfig);
}

TEST_CASE("websocket round trip") {
  namespace net = boost::asio;
  namespace beast = boost::beast;
  namespace websocket = beast::websocket;
  using tcp = net::ip::tcp;

  const auto dir = scratch_dir("server");
  TeleopServer server(box_config(dir));
  const unsigned short port = server.port();
  REQUIRE(port != 0);
  std::thread loop([&] { server.run(); });

  net::io_context ioc;
  auto connect = [&] {
    auto ws = std::make_unique<websocket::stream<tcp::socket>>(ioc);
    ws->next_layer().connect({net::ip::make_address("127.0.0.1"), port});
    ws->handshake("127.0.0.1:" + std::to_string(port), "/");
    return ws;
  };
  auto read = [](websocket::stream<tcp::socket>& ws) {
    beast::flat_buffer buf;
    ws.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  };
  auto next_of = [&](websocket::stream<tcp::socket>& ws, const std::string& type) {
    for (;;) {
      json f = read(ws);
      if (f["type"] == type) return f;
    }
  };

  auto driver = connect();
  const json hello = next_of(*driver, "hello");
  CHECK(hello["driver"] == true);
  CHECK(hello["world"]["id"] == "box_a");

  auto watcher = connect();
  CHECK(next_of(*watcher, "hello")["driver"] == false);

  driver->write(net::buffer(std::string(R"({"type":"list_worlds"})")));
  CHECK(next_of(*driver, "worlds")["ids"] == json({"box_a", "box_b"}));

  watcher->write(net::buffer(std::string(R"({"type":"cmd","v":0.2,"w":0})")));
  CHECK(next_of(*watcher, "error")["message"] == "another client is driving");

  driver->write(net::buffer(std::string(R"({"type":"cmd","v":0.4,"w":0})")));
  bool moving = false;
  for (int i = 0; i < 20 && !moving; ++i) moving = next_of(*driver, "state")["cmd"][0] == 0.4;
  CHECK(moving);

  // A violation gets an error frame and then a close; the watcher takes over.
  driver->write(net::buffer(std::string("{oops")));
  CHECK(next_of(*driver, "error")["message"] == "malformed JSON");
  beast::flat_buffer buf;
  beast::error_code ec;
  for (int i = 0; i < 50 && !ec; ++i) {
    buf.consume(buf.size());
    driver->read(buf, ec);
  }
  CHECK(ec == websocket::error::closed);
  CHECK(next_of(*watcher, "hello")["driver"] == true);

  server.stop();
  loop.join();
}

TEST_CASE("a taken port is reported") {
  const auto dir = scratch_dir("port");
  TeleopServer first(box_config(dir));
  TeleopConfig cfg = box_config(dir);
  cfg.port = first.port();
  CHECK_THROWS_AS(TeleopServer{cfg}, PortInUse);
}

}  // TEST_SUITE
