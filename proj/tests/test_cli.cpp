// Drives the vpx executable as a subprocess. VPX_CLI_PATH is injected by the
// build; scratch directories live under the test working directory.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;

  explicit Scratch(const std::string& name) : dir(name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }

  std::string path(const std::string& rel) const { return (dir / rel).string(); }
};

int run_cli(const Scratch& s, const std::string& args) {
  const std::string cmd =
      std::string(VPX_CLI_PATH) + " " + args + " >> " + s.path("cli.log") + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::vector<char> file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return std::vector<char>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

std::string file_text(const std::string& path) {
  const std::vector<char> b = file_bytes(path);
  return std::string(b.begin(), b.end());
}

// Small-profile overrides so subprocess training stays in seconds: the 3D
// grid shrinks to 8x8 columns over 12 bins and the conv widths divide by 32.
void write_small_config(const std::string& path) {
  std::ofstream out(path);
  out << "{\"profile.grid_xy\": 8, \"profile.grid_bins\": 12, \"profile.grid_crop_bins\": 8,\n"
      << " \"profile.vnet_div\": 32, \"validation_fraction\": 0.0, \"log_every\": 1}\n";
}

}  // namespace

TEST_CASE("dataset rendering is deterministic per seed") {
  Scratch s("cli_scratch_synth");
  CHECK(run_cli(s, "synth --out " + s.path("a") + " --frames 4 --seed 9") == 0);
  CHECK(run_cli(s, "synth --out " + s.path("b") + " --frames 4 --seed 9") == 0);
  CHECK(run_cli(s, "synth --out " + s.path("c") + " --frames 4 --seed 10") == 0);

  CHECK(file_bytes(s.path("a/data.tdf")) == file_bytes(s.path("b/data.tdf")));
  CHECK(file_bytes(s.path("a/manifest.json")) == file_bytes(s.path("b/manifest.json")));
  CHECK(file_bytes(s.path("a/data.tdf")) != file_bytes(s.path("c/data.tdf")));
  CHECK(fs::exists(s.path("a/run.json")));
}

TEST_CASE("malformed invocations exit with the usage code") {
  Scratch s("cli_scratch_errors");
  CHECK(run_cli(s, "synth --out " + s.path("x") + " --no-such-flag") == 2);
  CHECK(run_cli(s, "synth") == 2);                 // missing required --out
  CHECK(run_cli(s, "no-such-command") == 2);
  CHECK(run_cli(s, "synth --out " + s.path("x") + " --set bogus_key=1") == 2);
  CHECK(run_cli(s, "synth --out " + s.path("x") + " --set profile.bogus=1") == 2);
  CHECK(run_cli(s, "synth --out " + s.path("x") + " --set no_equals_sign") == 2);
  CHECK(run_cli(s, "synth --out " + s.path("x") + " --profile huge") == 2);
}

TEST_CASE("the full pipeline runs end to end from the command line") {
  Scratch s("cli_scratch_pipeline");
  const std::string cfg = " --config " + s.path("cfg.json");
  write_small_config(s.path("cfg.json"));

  REQUIRE(run_cli(s, "synth --out " + s.path("ds") + " --frames 6 --seed 5" + cfg) == 0);

  // Mixing resolution tiers is refused before any work happens.
  CHECK(run_cli(s, "train-pnet --profile paper --data " + s.path("ds") + " --out " +
                       s.path("nope")) == 2);

  REQUIRE(run_cli(s, "train-pnet --data " + s.path("ds") + " --out " + s.path("pnet") + cfg +
                         " --set iterations=4") == 0);
  CHECK(fs::exists(s.path("pnet/pnet_final.tdf")));
  CHECK(fs::exists(s.path("pnet/pnet_best.tdf")));
  CHECK(fs::exists(s.path("pnet/log.jsonl")));
  CHECK(fs::exists(s.path("pnet/run.json")));

  REQUIRE(run_cli(s, "gen-crops --data " + s.path("ds") + " --out " + s.path("crops") +
                         " --locate pnet --pnet " + s.path("pnet/pnet_best.tdf") + cfg) == 0);
  CHECK(fs::exists(s.path("crops/manifest.json")));

  REQUIRE(run_cli(s, "train-vnet --crops " + s.path("crops") + " --out " + s.path("vnet") + cfg +
                         " --set iterations=4") == 0);
  CHECK(fs::exists(s.path("vnet/vnet_final.tdf")));
  CHECK(fs::exists(s.path("vnet/vnet_best.tdf")));

  // A checkpoint from the wrong stage is rejected.
  CHECK(run_cli(s, "infer --data " + s.path("ds") + " --pnet " + s.path("vnet/vnet_best.tdf") +
                       " --vnet " + s.path("vnet/vnet_best.tdf") + " --out " +
                       s.path("bad.jsonl") + cfg) == 2);

  REQUIRE(run_cli(s, "infer --data " + s.path("ds") + " --pnet " + s.path("pnet/pnet_best.tdf") +
                         " --vnet " + s.path("vnet/vnet_best.tdf") + " --out " +
                         s.path("preds.jsonl") + cfg) == 0);
  CHECK(fs::exists(s.path("preds.jsonl")));
  CHECK(fs::exists(s.path("preds.jsonl.log.jsonl")));
  CHECK(fs::exists(s.path("preds.jsonl.run.json")));

  CHECK(run_cli(s, "eval --data " + s.path("ds") + " --preds " + s.path("missing.jsonl")) == 1);
  REQUIRE(run_cli(s, "eval --data " + s.path("ds") + " --preds " + s.path("preds.jsonl") +
                         " --out " + s.path("report.json") + cfg) == 0);
  const std::string report = file_text(s.path("report.json"));
  CHECK(report.find("map_10cm") != std::string::npos);
  CHECK(report.find("pckh_05") != std::string::npos);

  REQUIRE(run_cli(s, "ablate 2d-co --crops " + s.path("crops") + " --out " + s.path("co") + cfg +
                         " --set iterations=4 --eval-data " + s.path("ds") + " --pnet " +
                         s.path("pnet/pnet_best.tdf") + " --limit 3") == 0);
  CHECK(fs::exists(s.path("co/co2d_final.tdf")));
  CHECK(fs::exists(s.path("co/preds.jsonl")));
  CHECK(fs::exists(s.path("co/report.json")));

  REQUIRE(run_cli(s, "export-heatmaps --data " + s.path("ds") + " --frame 0 --out " +
                         s.path("maps") + cfg) == 0);
  CHECK(fs::exists(s.path("maps/frame0_head.pgm")));
  CHECK(file_text(s.path("maps/frame0_head.pgm")).rfind("P5", 0) == 0);

  REQUIRE(run_cli(s, "voxelize --data " + s.path("ds") + " --frame 0 --joint 0 --locate gt" +
                         " --out " + s.path("vox") + cfg) == 0);
  CHECK(fs::exists(s.path("vox/run.json")));
  bool any_grid = false;
  for (const auto& entry : fs::directory_iterator(s.path("vox")))
    any_grid = any_grid || entry.path().extension() == ".tdf";
  CHECK(any_grid);

  REQUIRE(run_cli(s, "export-plots --report " + s.path("report.json") + " --report " +
                         s.path("co/report.json") + " --label two-stage --label regression" +
                         " --out " + s.path("plots.csv")) == 0);
  const std::string csv = file_text(s.path("plots.csv"));
  CHECK(csv.rfind("label,metric,row,value", 0) == 0);
  CHECK(csv.find("two-stage") != std::string::npos);
  CHECK(csv.find("regression") != std::string::npos);
}
