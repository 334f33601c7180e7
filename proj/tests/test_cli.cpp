#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "detdisc/io.hpp"
#include "detdisc/mining.hpp"

using namespace detdisc;
namespace fs = std::filesystem;

namespace {

const char* kCli = DETDISC_CLI_PATH;

struct Run {
  int exit_code = -1;
  std::string output;
};

Run run(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "cli_out.txt";
  const std::string cmd = std::string(kCli) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& body) {
  std::ofstream out(p);
  out << body;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmallSynth =
    R"({"seed": 3, "num_categories_strong": 2, "num_categories_weak": 2,
        "bags_per_category": 5, "regions_per_bag": 8, "feature_dim": 8})";
const char* kSmallTrain =
    R"({"seed": 3, "epochs_init": 4, "epochs_strong": 4, "epochs_joint": 3,
        "outer_rounds": 1})";

// One shared generated dataset + training run for the read-only checks.
struct Workspace {
  fs::path dir, data, gt, run_dir;
  Workspace() {
    dir = fresh_dir("cli_ws");
    write_file(dir / "synth.json", kSmallSynth);
    write_file(dir / "train.json", kSmallTrain);
    REQUIRE(run("gen-synth --config " + (dir / "synth.json").string() + " --out " +
                (dir / "data").string())
                .exit_code == 0);
    data = dir / "data" / "dataset.jsonl";
    gt = dir / "data" / "ground_truth.jsonl";
    run_dir = dir / "run";
    REQUIRE(run("train --data " + data.string() + " --config " +
                (dir / "train.json").string() + " --out " + run_dir.string())
                .exit_code == 0);
  }
};

Workspace& workspace() {
  static Workspace ws;
  return ws;
}

}  // namespace

TEST_CASE("gen-synth writes a valid dataset and is reproducible") {
  Workspace& ws = workspace();
  CHECK(fs::exists(ws.data));
  CHECK(fs::exists(ws.gt));
  CHECK(fs::exists(ws.dir / "data" / "manifest.json"));
  CHECK(validate_dataset(read_dataset(ws.data.string())).empty());

  const fs::path again = fresh_dir("cli_gen2");
  REQUIRE(run("gen-synth --config " + (ws.dir / "synth.json").string() + " --out " +
              again.string())
              .exit_code == 0);
  CHECK(slurp(again / "dataset.jsonl") == slurp(ws.data));
}

TEST_CASE("gen-synth rejects an infeasible config with exit code 2") {
  const fs::path dir = fresh_dir("cli_bad");
  write_file(dir / "bad.json", R"({"regions_per_bag": 0})");
  const Run r =
      run("gen-synth --config " + (dir / "bad.json").string() + " --out " + dir.string());
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("regions_per_bag") != std::string::npos);
}

TEST_CASE("unknown config keys and missing files exit with code 2") {
  const fs::path dir = fresh_dir("cli_bad2");
  write_file(dir / "bad.json", R"({"seeed": 1})");
  CHECK(run("gen-synth --config " + (dir / "bad.json").string() + " --out " + dir.string())
            .exit_code == 2);
  CHECK(run("train --data /nonexistent.jsonl --out " + dir.string()).exit_code == 2);
}

TEST_CASE("train writes every stage artifact and is seed-reproducible") {
  Workspace& ws = workspace();
  for (const char* name :
       {"stageA.ckpt", "stageB.ckpt", "round1.mined", "round1.ckpt", "final.ckpt",
        "report.txt", "manifest.json"}) {
    CHECK(fs::exists(ws.run_dir / name));
  }

  // report has a finite objective column per stage
  std::ifstream rep(ws.run_dir / "report.txt");
  std::string line;
  int objective_rows = 0;
  while (std::getline(rep, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string stage;
    double a = 0;
    if (ss >> stage >> a && std::isfinite(a)) ++objective_rows;
  }
  CHECK(objective_rows > 0);

  const fs::path rerun = fresh_dir("cli_rerun");
  REQUIRE(run("train --data " + ws.data.string() + " --config " +
              (ws.dir / "train.json").string() + " --out " + rerun.string())
              .exit_code == 0);
  CHECK(slurp(rerun / "final.ckpt") == slurp(ws.run_dir / "final.ckpt"));
  CHECK(file_hash((rerun / "final.ckpt").string()) ==
        file_hash((ws.run_dir / "final.ckpt").string()));
}

TEST_CASE("mine emits one assignment per positive pair; top_k=1 is the argmax") {
  Workspace& ws = workspace();
  const fs::path out = fresh_dir("cli_mine");
  REQUIRE(run("mine --data " + ws.data.string() + " --model " +
              (ws.run_dir / "stageB.ckpt").string() + " --out " + out.string())
              .exit_code == 0);
  const auto mined = read_assignments((out / "mined.jsonl").string());

  const Dataset d = read_dataset(ws.data.string());
  std::size_t positives = 0;
  for (const Bag& b : d.weak_bags)
    for (const auto& [cat, y] : b.weak_labels) positives += y == 1;
  CHECK(mined.size() == positives);

  write_file(out / "k1.json", R"({"top_k": 1})");
  const fs::path out1 = fresh_dir("cli_mine1");
  REQUIRE(run("mine --data " + ws.data.string() + " --model " +
              (ws.run_dir / "stageB.ckpt").string() + " --config " +
              (out / "k1.json").string() + " --out " + out1.string())
              .exit_code == 0);
  const auto mined1 = read_assignments((out1 / "mined.jsonl").string());

  const Model m = read_model((ws.run_dir / "stageB.ckpt").string());
  MiningConfig k1;
  k1.top_k = 1;
  const auto expected = mine_dataset(m, d, k1);
  REQUIRE(mined1.size() == expected.size());
  for (std::size_t i = 0; i < mined1.size(); ++i) {
    CHECK(mined1[i].bag_id == expected[i].bag_id);
    CHECK(mined1[i].region_index == expected[i].region_index);
  }
}

TEST_CASE("eval reports per-category AP, mAP and mined precision") {
  Workspace& ws = workspace();
  const fs::path mine_out = fresh_dir("cli_eval_mine");
  REQUIRE(run("mine --data " + ws.data.string() + " --model " +
              (ws.run_dir / "final.ckpt").string() + " --out " + mine_out.string())
              .exit_code == 0);
  const fs::path out = fresh_dir("cli_eval");
  const Run r = run("eval --data " + ws.data.string() + " --model " +
                    (ws.run_dir / "final.ckpt").string() + " --gt " + ws.gt.string() +
                    " --mined " + (mine_out / "mined.jsonl").string() + " --pr-curve --out " +
                    out.string());
  REQUIRE(r.exit_code == 0);
  const std::string metrics = slurp(out / "metrics.txt");
  CHECK(metrics.find("map\t") != std::string::npos);
  CHECK(metrics.find("ap\t") != std::string::npos);
  CHECK(metrics.find("mined_precision\t") != std::string::npos);
  CHECK(fs::exists(out / "pr_curves.txt"));

  // empty assignments report mined precision as absent
  const fs::path empty = out / "empty.jsonl";
  write_file(empty, "");
  const fs::path out2 = fresh_dir("cli_eval2");
  REQUIRE(run("eval --data " + ws.data.string() + " --model " +
              (ws.run_dir / "final.ckpt").string() + " --gt " + ws.gt.string() +
              " --mined " + empty.string() + " --out " + out2.string())
              .exit_code == 0);
  CHECK(slurp(out2 / "metrics.txt").find("mined_precision\tabsent") != std::string::npos);
}

TEST_CASE("grad-check passes by default and fails under the corrupt control") {
  const Run ok = run("grad-check --fixtures 2");
  CHECK(ok.exit_code == 0);
  CHECK(ok.output.find("max_rel_error") != std::string::npos);
  CHECK(ok.output.find("FAIL") == std::string::npos);

  const Run bad = run("grad-check --fixtures 1 --corrupt");
  CHECK(bad.exit_code == 0);  // the control is expected to detect the corruption
  CHECK(bad.output.find("FAIL") != std::string::npos);
}

TEST_CASE("thread count does not change training results") {
  Workspace& ws = workspace();
  const fs::path t1 = fresh_dir("cli_t1"), t4 = fresh_dir("cli_t4");
  REQUIRE(run("--threads 1 train --data " + ws.data.string() + " --config " +
              (ws.dir / "train.json").string() + " --out " + t1.string())
              .exit_code == 0);
  REQUIRE(run("--threads 4 train --data " + ws.data.string() + " --config " +
              (ws.dir / "train.json").string() + " --out " + t4.string())
              .exit_code == 0);
  CHECK(slurp(t1 / "final.ckpt") == slurp(t4 / "final.ckpt"));
}
