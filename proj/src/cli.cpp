#include "lics/cli.hpp"

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lics/bench.hpp"
#include "lics/demo.hpp"
#include "lics/error.hpp"
#include "lics/expert.hpp"
#include "lics/safety.hpp"
#include "lics/teleop.hpp"
#include "lics/trainer.hpp"
#include "lics/world.hpp"

namespace lics {

namespace {

namespace fs = std::filesystem;

struct WorldSelection {
  std::string dir;
  std::string split = "all";
  double train_fraction = kDefaultTrainFraction;
  std::uint64_t split_seed = 0;

  void add_options(CLI::App* app) {
    app->add_option("--worlds", dir, "Directory of .world files");
    app->add_option("--split", split, "Which part of the seeded split to use")
        ->check(CLI::IsMember({"all", "train", "test"}));
    app->add_option("--train-fraction", train_fraction, "Train share of the split")
        ->check(CLI::Range(0.0, 1.0));
    app->add_option("--split-seed", split_seed, "Seed of the split");
  }

  std::vector<World> load() const {
    const fs::path path = dir.empty() ? data_dir() / "worlds" : fs::path(dir);
    if (!fs::is_directory(path)) throw Error("world directory " + path.string() + " not found");
    std::vector<World> worlds = load_world_dir(path);
    if (worlds.empty()) throw Error("no .world files in " + path.string());
    if (split == "all") return worlds;
    WorldSplit parts = split_worlds(worlds, train_fraction, split_seed);
    return split == "train" ? parts.train : parts.test;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

nlohmann::json read_json(std::istream& in) {
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad JSON input: ") + e.what());
  }
}

LidarConfig lidar_from_json(const nlohmann::json& j, int default_beams) {
  LidarConfig c;
  c.beam_count = default_beams;
  if (j.is_object()) {
    c.beam_count = j.value("beam_count", c.beam_count);
    c.angle_min = j.value("angle_min", c.angle_min);
    c.angle_max = j.value("angle_max", c.angle_max);
    c.max_range = j.value("max_range", c.max_range);
    if (j.contains("mount_offset"))
      c.mount_offset = {j["mount_offset"].at(0).get<double>(), j["mount_offset"].at(1).get<double>()};
  }
  c.validate();
  return c;
}

SafetyConfig safety_from_json(const nlohmann::json& j) {
  SafetyConfig c;
  if (j.is_object()) {
    c.footprint.length = j.value("length", c.footprint.length);
    c.footprint.width = j.value("width", c.footprint.width);
    c.epsilon_w = j.value("epsilon_w", c.epsilon_w);
    c.horizon = j.value("horizon", c.horizon);
    c.margin = j.value("margin", c.margin);
    c.a_max = j.value("a_max", c.a_max);
    c.recovery_w = j.value("recovery_w", c.recovery_w);
  }
  if (!(c.horizon > 0.0) || c.margin < 0.0 || !(c.a_max > 0.0))
    throw InvalidConfig("safety config needs horizon > 0, margin >= 0, a_max > 0");
  return c;
}

int safety_check(std::istream& in, std::ostream& out, bool filter) {
  const nlohmann::json req = read_json(in);
  if (!req.is_object() || !req.contains("scan") || !req.contains("action"))
    throw ParseError("safety-check input needs 'scan' and 'action'");
  const auto scan = req["scan"].get<std::vector<double>>();
  const LidarConfig lidar = lidar_from_json(req.value("lidar", nlohmann::json()),
                                            static_cast<int>(scan.size()));
  if (static_cast<int>(scan.size()) != lidar.beam_count)
    throw ShapeMismatch("scan has " + std::to_string(scan.size()) + " beams, lidar expects " +
                        std::to_string(lidar.beam_count));
  const auto& a = req["action"];
  Action action;
  if (a.is_array()) {
    action = {a.at(0).get<double>(), a.at(1).get<double>()};
  } else {
    action = {a.at("v").get<double>(), a.at("w").get<double>()};
  }
  const SafetyConfig cfg = safety_from_json(req.value("config", nlohmann::json()));
  const auto points = scan_to_points(scan, lidar);
  const SafetyVerdict verdict = check_action(points, action, cfg);
  nlohmann::json result = verdict_to_json(verdict);
  if (filter || req.value("filter", false)) {
    std::optional<Vec2> goal;
    if (req.contains("goal")) goal = Vec2(req["goal"].at(0).get<double>(), req["goal"].at(1).get<double>());
    const Action f = filter_action(points, action, cfg, goal);
    result["filtered"] = {f.v, f.w};
  }
  out << result.dump() << '\n';
  return 0;
}

TeleopServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"LiCS navigation workbench", "lics"};
  app.require_subcommand(1);

  // worldgen
  auto* gen = app.add_subcommand("worldgen", "Generate cluttered grid worlds");
  int gen_count = 10;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  WorldgenConfig gen_cfg;
  gen->add_option("--count", gen_count, "Number of worlds")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Master seed");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--fill", gen_cfg.fill_probability, "Initial fill probability");
  gen->add_option("--smoothing", gen_cfg.smoothing_iterations, "Majority smoothing passes");
  gen->add_option("--width", gen_cfg.width, "Width in cells");
  gen->add_option("--height", gen_cfg.height, "Height in cells");
  gen->add_option("--resolution", gen_cfg.resolution, "Meters per cell");

  // record
  auto* rec = app.add_subcommand("record", "Record noisy expert demonstrations");
  WorldSelection rec_worlds;
  rec_worlds.add_options(rec);
  std::string rec_out;
  std::string rec_expert = "dwa";
  DatasetConfig rec_cfg;
  double rec_max_v = rec_cfg.session.limits.v_max;
  rec->add_option("--out", rec_out, "Records file (.ndjson)");
  rec->add_option("--expert", rec_expert, "Expert policy")->check(CLI::IsMember({"dwa", "human"}));
  rec->add_option("--sigma", rec_cfg.sigma, "Noise std on v and w")->check(CLI::NonNegativeNumber);
  rec->add_option("--episodes", rec_cfg.episodes_per_world, "Successful episodes per world");
  rec->add_option("--retries", rec_cfg.retry_budget, "Attempts per world");
  rec->add_option("--seed", rec_cfg.seed, "Master seed");
  rec->add_option("--max-v", rec_max_v, "Linear velocity limit")->check(CLI::PositiveNumber);
  rec->add_option("--threads", rec_cfg.threads, "Worker threads (0 = all cores)");
  unsigned short rec_port = 8765;
  rec->add_option("--port", rec_port, "Teleop port for --expert human");

  // train
  auto* tr = app.add_subcommand("train", "Behavior cloning on a dataset");
  std::string tr_data;
  std::string tr_out;
  std::string tr_report;
  std::string tr_variant = "transformer";
  ModelConfig tr_model;
  TrainConfig tr_cfg;
  bool tr_quiet = false;
  tr->add_option("--data", tr_data, "Records file (.ndjson)");
  tr->add_option("--out", tr_out, "Checkpoint path");
  tr->add_option("--report", tr_report, "Training report JSON");
  tr->add_option("--variant", tr_variant, "Network variant")->check(CLI::IsMember({"transformer", "mlp"}));
  tr->add_option("--patches", tr_model.patch_count, "Patch count N");
  tr->add_option("--d-model", tr_model.d_model, "Embedding width");
  tr->add_option("--heads", tr_model.heads, "Attention heads");
  tr->add_option("--d-ff", tr_model.d_ff, "Feed-forward width");
  tr->add_option("--mlp-hidden", tr_model.mlp_hidden, "MLP hidden width");
  tr->add_option("--epochs", tr_cfg.epochs, "Epochs")->check(CLI::PositiveNumber);
  tr->add_option("--batch", tr_cfg.batch_size, "Batch size")->check(CLI::PositiveNumber);
  tr->add_option("--lr", tr_cfg.learning_rate, "Learning rate")->check(CLI::NonNegativeNumber);
  tr->add_option("--seed", tr_cfg.seed, "Initialization and shuffle seed");
  tr->add_option("--val-fraction", tr_cfg.validation_fraction, "Validation share")
      ->check(CLI::Range(0.0, 0.99));
  tr->add_option("--threads", tr_cfg.threads, "Worker threads (0 = all cores)");
  tr->add_flag("--quiet", tr_quiet, "No per-epoch log");

  // eval
  auto* ev = app.add_subcommand("eval", "Closed-loop benchmark");
  WorldSelection ev_worlds;
  ev_worlds.add_options(ev);
  std::string ev_policy = "dwa";
  std::string ev_report;
  std::string ev_csv;
  std::string ev_traces;
  EvalConfig ev_cfg;
  ev->add_option("--policy", ev_policy, "Checkpoint path, 'dwa' or 'stop'");
  ev->add_option("--trials", ev_cfg.trials, "Trials per world")->check(CLI::PositiveNumber);
  ev->add_option("--max-v", ev_cfg.max_v, "Linear velocity limit")->check(CLI::PositiveNumber);
  ev->add_option("--report", ev_report, "Report JSON");
  ev->add_option("--csv", ev_csv, "Report CSV");
  ev->add_option("--trace-dir", ev_traces, "Directory for per-trial trajectory traces");
  ev->add_flag("--safety", ev_cfg.safety, "Filter actions through the safety layer");
  ev->add_option("--seed", ev_cfg.seed, "Master seed");
  ev->add_option("--threads", ev_cfg.threads, "Worker threads (0 = all cores)");

  // safety-check
  auto* sc = app.add_subcommand("safety-check", "Verdict for {scan, lidar, action, config} on stdin");
  bool sc_filter = false;
  sc->add_flag("--filter", sc_filter, "Also report the recovery cascade output");

  // teleop
  auto* tp = app.add_subcommand("teleop", "WebSocket bridge for the browser UI");
  WorldSelection tp_worlds;
  tp_worlds.add_options(tp);
  std::string tp_world_file;
  TeleopConfig tp_cfg;
  std::string tp_ui;
  std::string tp_record;
  tp->add_option("--world", tp_world_file, "Single .world file");
  tp->add_option("--port", tp_cfg.port, "TCP port");
  tp->add_option("--address", tp_cfg.address, "Bind address");
  tp->add_option("--ui-dir", tp_ui, "Static UI files to serve");
  tp->add_option("--record-out", tp_record, "Human demonstration records file");
  tp->add_flag("--empty", "Serve a single obstacle-free world");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  auto run_teleop = [&](TeleopConfig cfg) {
    TeleopServer server(std::move(cfg));
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    err << "teleop listening on port " << server.port() << std::endl;
    server.run();
    g_server = nullptr;
    return 0;
  };

  try {
    if (*gen) {
      const fs::path dir = gen_out.empty() ? data_dir() / "worlds" : fs::path(gen_out);
      fs::create_directories(dir);
      for (int i = 0; i < gen_count; ++i) {
        WorldgenConfig c = gen_cfg;
        c.seed = derive_seed(gen_seed, static_cast<std::uint64_t>(i));
        char id[32];
        std::snprintf(id, sizeof id, "world_%03d", i);
        c.id = id;
        save_world_file(generate_world(c), dir / (c.id + ".world"));
      }
      out << "wrote " << gen_count << " worlds to " << dir.string() << '\n';
      return 0;
    }
    if (*rec) {
      rec_cfg.session.limits.v_max = rec_max_v;
      const fs::path path = rec_out.empty() ? data_dir() / "demos" / "dataset.ndjson" : fs::path(rec_out);
      if (rec_expert == "human") {
        TeleopConfig cfg;
        cfg.worlds = rec_worlds.load();
        cfg.port = rec_port;
        cfg.session = rec_cfg.session;
        cfg.record_path = path;
        return run_teleop(std::move(cfg));
      }
      const std::vector<World> worlds = rec_worlds.load();
      const DwaExpert expert;
      const Dataset ds = build_dataset(worlds, expert, rec_cfg);
      write_dataset(ds, path);
      out << "wrote " << ds.records.size() << " records to " << path.string() << '\n';
      for (const auto& w : ds.manifest["warnings"]) err << "warning: " << w.dump() << '\n';
      return 0;
    }
    if (*tr) {
      const fs::path data = tr_data.empty() ? data_dir() / "demos" / "dataset.ndjson" : fs::path(tr_data);
      if (!fs::exists(data)) throw Error("dataset " + data.string() + " not found");
      const Dataset ds = read_dataset(data);
      if (ds.records.empty()) throw Error("dataset " + data.string() + " has no records");
      tr_model.variant = parse_variant(tr_variant);
      tr_model.scan_size = static_cast<int>(ds.records.front().scan.size());
      const fs::path ckpt = tr_out.empty() ? data_dir() / "models" / (tr_variant + ".ckpt") : fs::path(tr_out);
      if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
      tr_cfg.checkpoint = ckpt;
      auto log = [&](int epoch, double train_mse, double val_mse) {
        if (!tr_quiet)
          err << "epoch " << epoch + 1 << " train " << train_mse << " val " << val_mse << std::endl;
      };
      const TrainResult result = train(ds.records, tr_model, tr_cfg, log);
      nlohmann::json report = result.report.to_json();
      report["model"] = tr_model.to_json();
      report["parameters"] = result.model.params().scalar_count();
      if (!tr_report.empty()) write_text(tr_report, report.dump(2) + '\n');
      out << "checkpoint " << ckpt.string() << " best epoch " << result.report.best_epoch + 1 << '\n';
      if (result.report.aborted) {
        err << "training stopped early: non-finite loss\n";
        return 1;
      }
      return 0;
    }
    if (*ev) {
      const std::vector<World> worlds = ev_worlds.load();
      std::unique_ptr<Policy> policy;
      if (ev_policy == "dwa") {
        policy = std::make_unique<DwaExpert>();
      } else if (ev_policy == "stop") {
        policy = std::make_unique<ConstantPolicy>(Action{}, "stop");
      } else {
        if (!fs::exists(ev_policy)) throw Error("checkpoint " + ev_policy + " not found");
        policy = std::make_unique<LearnedPolicy>(load_checkpoint<float>(ev_policy));
      }
      ev_cfg.keep_trace = !ev_traces.empty();
      const auto results = run_evaluation(worlds, *policy, ev_cfg);
      const fs::path report = ev_report.empty() ? data_dir() / "reports" / "eval.json" : fs::path(ev_report);
      write_text(report, report_json(results).dump(2) + '\n');
      if (!ev_csv.empty()) write_text(ev_csv, report_csv(results));
      if (!ev_traces.empty())
        for (const auto& r : results)
          write_text(fs::path(ev_traces) / (r.world_id + "_" + std::to_string(r.trial) + ".jsonl"),
                     trace_jsonl(r));
      out << aggregate(results).to_json().dump() << '\n';
      return 0;
    }
    if (*sc) return safety_check(in, out, sc_filter);
    if (*tp) {
      if (!tp_world_file.empty()) {
        tp_cfg.worlds.push_back(load_world_file(tp_world_file));
      } else if (tp->count("--empty") > 0) {
        World w = World::empty("empty", 30, 30, 0.15);
        w.start = {2.25, 0.45, std::numbers::pi / 2};
        w.goal = {2.25, 3.9};
        w.shortest_path_length = shortest_path_length(w, Footprint{}.circumscribed_radius());
        tp_cfg.worlds.push_back(w);
      } else {
        tp_cfg.worlds = tp_worlds.load();
      }
      if (!tp_ui.empty()) tp_cfg.ui_dir = fs::path(tp_ui);
      if (!tp_record.empty()) tp_cfg.record_path = tp_record;
      return run_teleop(std::move(tp_cfg));
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cin, std::cout, std::cerr);
}

}  // namespace lics
