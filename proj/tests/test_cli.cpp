#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "rga/cli.hpp"
#include "rga/errors.hpp"
#include "rga/fixtures.hpp"
#include "rga/io.hpp"

using namespace rga;
using namespace rga::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rga_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// two small inputs: the 16x16 fixture and an odd-sized crop of another one
fs::path write_inputs(const fs::path& dir) {
  const auto fx = fixture_suite();
  fs::create_directories(dir / "in");
  io::write_png(dir / "in" / "a.png", fx[0].image);
  io::write_png(dir / "in" / "b.png", io::crop(fx[2].image, 14, 11));
  return dir / "in";
}

RunConfig base_config(const fs::path& dir, int iters = 6) {
  RunConfig c;
  c.inputs = {write_inputs(dir)};
  c.output_dir = dir / "out";
  c.attack.iterations = iters;
  return c;
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
  return out;
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "rga-forge");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return main_entry(static_cast<int>(argv.size()), argv.data());
}

json read_json(const fs::path& p) { return json::parse(io::read_file(p)); }

}  // namespace

TEST_CASE("config parsing") {
  const json j = json::parse(R"({
    "schema_version": 1, "inputs": ["imgs"], "output_dir": "o", "method": "dim",
    "attack": {"epsilon": 0.02, "alpha": 0.01, "iterations": 7, "target": "white", "grad_normalization": "l1"},
    "sad": {"gamma": 0.5, "n_dilate": 2, "order": "area_desc"},
    "transform": {"scale_range": [0.95, 1.05], "si_scales": [1, 0.5]},
    "victim": {"kind": "toy", "seed": 3},
    "sweep": {"parameter": "epsilon", "values": [0, 0.01]}
  })");
  const RunConfig c = config_from_json(j, "/base");
  CHECK(c.inputs.at(0) == fs::path("/base/imgs"));
  CHECK(c.output_dir == fs::path("/base/o"));
  CHECK(c.method == Method::DIM);
  CHECK(c.attack.iterations == 7);
  CHECK(c.attack.target == TargetKind::White);
  CHECK(c.attack.grad_normalization == GradNormalization::L1);
  CHECK(c.attack.sad.order == MaskOrder::AreaDescending);
  CHECK(c.attack.transform.scale_hi == 1.05);
  CHECK(c.victim.seed == 3);
  CHECK(c.sweep->values.size() == 2);
  CHECK_THROWS_AS(c.validate(), ConfigError);  // /base/imgs does not exist
  RunConfig here = c;
  here.inputs = {fs::temp_directory_path()};
  CHECK_NOTHROW(here.validate());

  // round trip through the echo
  const RunConfig back = config_from_json(config_to_json(c), "/base");
  CHECK(back.attack.epsilon == c.attack.epsilon);
  CHECK(back.attack.sad.n_dilate == 2);
  CHECK(back.method == Method::DIM);

  CHECK_THROWS_AS(config_from_json(json::parse(R"({"bogus": 1})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"attack": {"eps": 1}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"schema_version": 2})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"attack": {"target": "gray"}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"attack": {"iterations": "x"}})")), ConfigError);

  RunConfig bad = here;
  bad.attack.alpha = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = here;
  bad.sweep = SweepSpec{"T", {0.5}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.sweep = SweepSpec{"beta", {1}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.sweep = SweepSpec{"epsilon", {-0.1}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("rgm command writes maps whose support matches the masks") {
  const auto dir = scratch("rgm");
  RunConfig c = base_config(dir);
  c.inputs = {dir / "in" / "a.png"};
  std::ostringstream log;
  REQUIRE(cmd_rgm(c, log) == 0);
  const json doc = read_json(c.output_dir / "a.masks.json");
  CHECK(doc["schema_version"] == 1);
  const Image rgm = io::read_png(c.output_dir / "a.rgm.png");
  const Index h = rgm.dim(0), w = rgm.dim(1);
  const int grid = doc["grid_size"].get<int>(), n = doc["n_dilate"].get<int>();

  // oracle: small masks reach Chebyshev distance n, large masks exactly cover themselves
  std::vector<char> expect(static_cast<std::size_t>(h * w), 0);
  for (const auto& m : doc["masks"]) {
    const Image mi = io::read_png(c.output_dir / m["file"].get<std::string>());
    const bool small = m["area"].get<Index>() <= Index(grid) * grid;
    for (Index r = 0; r < h; ++r)
      for (Index col = 0; col < w; ++col) {
        if (mi(r, col, 0) == 0.f) continue;
        const int k = small ? n : 0;
        for (Index dr = -k; dr <= k; ++dr)
          for (Index dc = -k; dc <= k; ++dc) {
            const Index rr = r + dr, cc = col + dc;
            if (rr >= 0 && cc >= 0 && rr < h && cc < w) expect[rr * w + cc] = 1;
          }
      }
  }
  for (Index r = 0; r < h; ++r)
    for (Index col = 0; col < w; ++col) {
      const bool colored = rgm(r, col, 0) + rgm(r, col, 1) + rgm(r, col, 2) > 0.f;
      CHECK(colored == bool(expect[r * w + col]));
    }
  fs::remove_all(dir);
}

TEST_CASE("attack command") {
  const auto dir = scratch("attack");
  RunConfig c = base_config(dir, 40);
  std::ostringstream log;
  REQUIRE(cmd_attack(c, log) == 0);

  SUBCASE("budget holds on the written PNGs") {
    for (const char* stem : {"a", "b"}) {
      const Image x = io::read_png(dir / "in" / (std::string(stem) + ".png"));
      const Image adv = io::read_png(c.output_dir / (std::string(stem) + ".adv.png"));
      REQUIRE(adv.shape() == x.shape());
      const int bound = int(std::lround(c.attack.epsilon * 255.0));
      const auto lv = [](const Image& im) { return (im.array() * 255.f).round().cast<int>(); };
      CHECK((lv(adv) - lv(x)).abs().maxCoeff() <= bound);
      CHECK(fs::exists(c.output_dir / (std::string(stem) + ".delta.png")));
      CHECK(fs::exists(c.output_dir / (std::string(stem) + ".rgm.png")));
      const json meta = read_json(c.output_dir / (std::string(stem) + ".meta.json"));
      CHECK(meta["schema_version"] == 1);
      CHECK(meta.dump().find(dir.string()) == std::string::npos);
      const json trace = read_json(c.output_dir / (std::string(stem) + ".trace.json"));
      CHECK(trace["schema_version"] == 1);
      CHECK(trace["loss"].size() == 40);
    }
  }
  SUBCASE("reruns are byte identical") {
    RunConfig again = c;
    again.output_dir = dir / "again";
    REQUIRE(cmd_attack(again, log) == 0);
    CHECK(tree(c.output_dir) == tree(again.output_dir));
  }
  SUBCASE("evaluation report") {
    RunConfig e = c;
    e.adversarial_dir = c.output_dir;
    e.output_dir = dir / "eval";
    REQUIRE(cmd_evaluate(e, log) == 0);
    const json r = read_json(e.output_dir / "evaluation.json");
    CHECK(r["schema_version"] == 1);
    CHECK(r["images"].size() == 2);
    CHECK(r["missing"].empty());
    for (const char* key : {"miou", "miou_std", "asr50", "asr10", "n_masks", "per_mask_iou"})
      CHECK(r["pooled"].contains(key));
    CHECK(r["pooled"]["miou"].get<double>() < 1.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("epsilon zero leaves the quantized input") {
  const auto dir = scratch("eps0");
  RunConfig c = base_config(dir, 3);
  c.attack.epsilon = 0.0;
  std::ostringstream log;
  REQUIRE(cmd_attack(c, log) == 0);
  for (const char* stem : {"a", "b"})
    CHECK(io::read_png(c.output_dir / (std::string(stem) + ".adv.png"))
              .identical(io::read_png(dir / "in" / (std::string(stem) + ".png"))));
  fs::remove_all(dir);
}

TEST_CASE("evaluate") {
  const auto dir = scratch("evaluate");
  RunConfig c = base_config(dir);
  fs::create_directories(dir / "adv");
  // clean images as their own adversarial versions
  fs::copy_file(dir / "in" / "a.png", dir / "adv" / "a.adv.png");
  c.adversarial_dir = dir / "adv";
  std::ostringstream log;
  CHECK(cmd_evaluate(c, log) == 0);
  const json r = read_json(c.output_dir / "evaluation.json");
  CHECK(r["pooled"]["miou"] == 1.0);
  CHECK(r["pooled"]["asr50"] == 0.0);
  REQUIRE(r["missing"].size() == 1);
  CHECK(r["missing"][0] == "b.adv.png");
  CHECK(r["errors"].empty());
  fs::remove_all(dir);
}

TEST_CASE("sweep") {
  const auto dir = scratch("sweep");
  RunConfig c = base_config(dir, 5);
  c.sweep = SweepSpec{"epsilon", {0.0, 8.0 / 255.0}};
  std::ostringstream log;
  REQUIRE(cmd_sweep(c, log) == 0);
  const json r = read_json(c.output_dir / "sweep.json");
  CHECK(r["schema_version"] == 1);
  REQUIRE(r["rows"].size() == 2);
  CHECK(r["rows"][0]["miou"] == 1.0);
  CHECK(r["rows"][1]["miou"].get<double>() < 1.0);
  const std::string csv = io::read_file(c.output_dir / "sweep.csv");
  CHECK(csv.rfind("param_value,miou,asr50,asr10\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  c.sweep.reset();
  CHECK_THROWS_AS(cmd_sweep(c, log), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("exit codes") {
  const auto dir = scratch("exit");
  write_inputs(dir);
  io::write_file_atomic(dir / "ok.json",
                        std::string(R"({"inputs": ["in"], "output_dir": "out", "attack": {"iterations": 2}})"));
  io::write_file_atomic(dir / "bad.json", std::string(R"({"attack": {"iterations": 0}})"));
  io::write_file_atomic(dir / "broken.json", std::string("{"));
  CHECK(run({"attack", "--config", (dir / "ok.json").string()}) == 0);
  CHECK(fs::exists(dir / "out" / "a.adv.png"));
  CHECK(run({"attack", "--config", (dir / "ok.json").string(), "--epsilon", "0", "--out", (dir / "o2").string()}) == 0);
  CHECK(run({"attack", "--config", (dir / "bad.json").string()}) == 2);
  CHECK(run({"attack", "--config", (dir / "broken.json").string()}) == 2);
  CHECK(run({"attack", "--config", (dir / "ok.json").string(), "--victim", "bogus"}) == 2);
  CHECK(run({"attack"}) != 0);

  // an unreadable input is a per-file error
  io::write_file_atomic(dir / "in" / "c.png", std::string("garbage"));
  CHECK(run({"attack", "--config", (dir / "ok.json").string()}) == 1);
  fs::remove_all(dir);
}
