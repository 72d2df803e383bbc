#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "lics/cli.hpp"
#include "lics/demo.hpp"
#include "lics/model.hpp"
#include "lics/world.hpp"

using namespace lics;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = run_cli(args, in, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lics_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json scan_request(double front_range, double v) {
  std::vector<double> scan(720, 20.0);
  for (int i = 340; i < 380; ++i) scan[static_cast<std::size_t>(i)] = front_range;
  return {{"scan", scan}, {"action", {{"v", v}, {"w", 0.0}}}};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"fly"}).code == 2);
  CHECK(cli({"worldgen", "--bogus"}).code == 2);
  CHECK(cli({"worldgen", "--count", "0"}).code == 2);
  CHECK(cli({"train", "--variant", "rnn"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("worldgen writes reproducible worlds") {
  const auto a = scratch_dir("gen_a");
  const auto b = scratch_dir("gen_b");
  const Run r = cli({"worldgen", "--out", a.string(), "--seed", "7"});
  CHECK(r.code == 0);
  CHECK(cli({"worldgen", "--out", b.string(), "--seed", "7"}).code == 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    CHECK(e.path().extension() == ".world");
    CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
  }
  CHECK(files == 10);
  const auto worlds = load_world_dir(a);
  REQUIRE(worlds.size() == 10);
  CHECK(worlds.front().id == "world_000");
  CHECK(worlds.front().shortest_path_length > 0.0);
}

TEST_CASE("runtime failures exit with 1") {
  const auto dir = scratch_dir("fail");
  const Run r = cli({"train", "--data", (dir / "missing.ndjson").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("not found") != std::string::npos);
  CHECK(cli({"eval", "--worlds", (dir / "nothing").string()}).code == 1);
  CHECK(cli({"safety-check"}, "{not json").code == 1);
  CHECK(cli({"safety-check"}, R"({"scan":[1,2,3]})").code == 1);
}

TEST_CASE("safety-check reads a request from stdin") {
  const Run blocked = cli({"safety-check"}, scan_request(0.5, 1.0).dump());
  REQUIRE(blocked.code == 0);
  const auto v = nlohmann::json::parse(blocked.out);
  CHECK(v["safe"] == false);
  CHECK(v["class"] == "linear");
  CHECK_FALSE(v["offending"].empty());

  const auto clear = nlohmann::json::parse(cli({"safety-check"}, scan_request(20.0, 1.0).dump()).out);
  CHECK(clear["safe"] == true);

  const Run f = cli({"safety-check", "--filter"}, scan_request(0.5, 1.0).dump());
  REQUIRE(f.code == 0);
  const auto filtered = nlohmann::json::parse(f.out)["filtered"];
  CHECK(filtered[0].get<double>() < 1.0);
}

TEST_CASE("record, train and eval chain through files") {
  const auto dir = scratch_dir("chain");
  const auto worlds = dir / "worlds";
  REQUIRE(cli({"worldgen", "--out", worlds.string(), "--count", "2", "--seed", "3"}).code == 0);

  const auto data = dir / "demo.ndjson";
  const Run rec = cli({"record", "--worlds", worlds.string(), "--out", data.string(), "--episodes",
                       "1", "--max-v", "1.0", "--threads", "1", "--seed", "5"});
  REQUIRE(rec.code == 0);
  const Dataset ds = read_dataset(data);
  CHECK_FALSE(ds.records.empty());

  const auto ckpt = dir / "tiny.ckpt";
  const auto train_report = dir / "train.json";
  const Run tr = cli({"train", "--data", data.string(), "--out", ckpt.string(), "--report",
                      train_report.string(), "--patches", "4", "--d-model", "8", "--heads", "2",
                      "--d-ff", "16", "--epochs", "2", "--threads", "1", "--quiet"});
  REQUIRE(tr.code == 0);
  CHECK(tr.err.empty());
  const auto rep = nlohmann::json::parse(slurp(train_report));
  CHECK(rep["train_mse"].size() == 2);
  CHECK(rep["model"]["scan_size"] == 720);
  const Model<float> model = load_checkpoint<float>(ckpt);
  CHECK(model.config().d_model == 8);

  const auto eval_report = dir / "eval.json";
  const auto csv = dir / "eval.csv";
  const Run ev = cli({"eval", "--worlds", worlds.string(), "--policy", ckpt.string(), "--trials",
                      "1", "--max-v", "1.0", "--threads", "1", "--report", eval_report.string(),
                      "--csv", csv.string(), "--trace-dir", (dir / "traces").string()});
  REQUIRE(ev.code == 0);
  const auto overall = nlohmann::json::parse(ev.out);
  CHECK(overall["trials"] == 2);
  const auto full = nlohmann::json::parse(slurp(eval_report));
  CHECK(full["trials"].size() == 2);
  CHECK(full["overall"] == overall);
  CHECK(slurp(csv).rfind("world_id,trial,policy,outcome,T,score\n", 0) == 0);
  CHECK(fs::exists(dir / "traces" / "world_000_0.jsonl"));

  const Run split = cli({"eval", "--worlds", worlds.string(), "--policy", "stop", "--split", "test",
                         "--train-fraction", "0.5", "--report", (dir / "stop.json").string()});
  REQUIRE(split.code == 0);
  CHECK(nlohmann::json::parse(split.out)["trials"] == 3);
}

}  // TEST_SUITE
