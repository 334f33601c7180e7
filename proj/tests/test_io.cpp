#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "detdisc/io.hpp"
#include "detdisc/synth.hpp"
#include "helpers.hpp"

using namespace detdisc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / name; }

std::pair<Dataset, SynthGroundTruth> sample() {
  SynthConfig c;
  c.seed = 8;
  c.num_categories_strong = 2;
  c.num_categories_weak = 2;
  c.bags_per_category = 3;
  c.regions_per_bag = 8;
  c.feature_dim = 6;
  c.enable_transform = true;
  return generate(c);
}

}  // namespace

TEST_CASE("dataset serialization round-trips byte for byte") {
  const auto [d, gt] = sample();
  const auto p1 = tmp("ds1.jsonl"), p2 = tmp("ds2.jsonl");
  write_dataset(p1.string(), d);
  const Dataset back = read_dataset(p1.string());
  write_dataset(p2.string(), back);
  CHECK(slurp(p1) == slurp(p2));
  CHECK(validate_dataset(back).empty());
  CHECK(back.feature_dim == d.feature_dim);
  CHECK(back.strong_bags.size() == d.strong_bags.size());
  CHECK(back.weak_bags[0].regions[0].feature == d.weak_bags[0].regions[0].feature);
}

TEST_CASE("model serialization round-trips byte for byte") {
  Model m;
  m.repr = init_repr(3, {4, 5, 4}, {Activation::RectifiedLinear, Activation::Identity});
  m.detectors["a"] = testutil::detector({0.25, -1.5, 3.0, 0.125}, 7.0);
  m.detectors[kBackground] = testutil::detector({1, 2, 3, 4}, -0.5);
  m.hyper.lambda = 0.003;

  const auto p1 = tmp("m1.json"), p2 = tmp("m2.json");
  write_model(p1.string(), m);
  const Model back = read_model(p1.string());
  write_model(p2.string(), back);
  CHECK(slurp(p1) == slurp(p2));
  CHECK(back.detectors.at("a") == m.detectors.at("a"));
  CHECK(back.repr.layers[0].weight == m.repr.layers[0].weight);
  CHECK(back.hyper.lambda == m.hyper.lambda);
  CHECK(model_to_string(back) == model_to_string(m));
}

TEST_CASE("assignments and ground truth round-trip") {
  std::vector<MiningAssignment> a(2);
  a[0] = {"w0", "p", 3, 1.25, 1};
  a[1] = {"w1", "q", 0, -0.5, 2};
  const auto pa = tmp("a.jsonl");
  write_assignments(pa.string(), a);
  const auto back = read_assignments(pa.string());
  REQUIRE(back.size() == 2);
  CHECK(back[0].bag_id == "w0");
  CHECK(back[0].region_index == 3);
  CHECK(back[0].score == 1.25);
  CHECK(back[1].round == 2);

  const auto [d, gt] = sample();
  const auto pg1 = tmp("gt1.jsonl"), pg2 = tmp("gt2.jsonl");
  write_ground_truth(pg1.string(), gt);
  const SynthGroundTruth gback = read_ground_truth(pg1.string());
  write_ground_truth(pg2.string(), gback);
  CHECK(slurp(pg1) == slurp(pg2));
  CHECK(gback.planted == gt.planted);
  CHECK(gback.noise_sigma == gt.noise_sigma);
  REQUIRE(gback.transform.has_value());
  CHECK(*gback.transform == *gt.transform);
}

TEST_CASE("config readers apply defaults and reject unknown keys") {
  const auto p = tmp("cfg.json");
  {
    std::ofstream out(p);
    out << R"({"seed": 12, "learning_rate": 0.5})";
  }
  const TrainConfig cfg = read_train_config(p.string());
  CHECK(cfg.seed == 12);
  CHECK(cfg.learning_rate == 0.5);
  CHECK(cfg.momentum == 0.9);        // default kept
  CHECK(cfg.epochs.strong == 20);    // default kept

  {
    std::ofstream out(p);
    out << R"({"seed": 12, "learningrate": 0.5})";
  }
  CHECK_THROWS_AS(read_train_config(p.string()), ConfigError);

  {
    std::ofstream out(p);
    out << R"({"noise_sigma": 0.25, "bags_per_category": 7})";
  }
  const SynthConfig sc = read_synth_config(p.string());
  CHECK(sc.noise_sigma == 0.25);
  CHECK(sc.bags_per_category == 7);
  CHECK(sc.feature_dim == 16);

  {
    std::ofstream out(p);
    out << R"({"top_k": 4})";
  }
  CHECK(read_mining_config(p.string()).top_k == 4);

  {
    std::ofstream out(p);
    out << R"({"iou_match": 0.6, "split": "all"})";
  }
  const EvalConfig ec = read_eval_config(p.string());
  CHECK(ec.iou_match == 0.6);
  CHECK(ec.split == "all");
  CHECK(ec.nms_threshold == 0.3);

  CHECK_THROWS_AS(read_train_config("/nonexistent/x.json"), ConfigError);
}

TEST_CASE("file_hash is stable and content addressed") {
  const auto p = tmp("hash.bin");
  {
    std::ofstream out(p, std::ios::binary);
    out << "hello";
  }
  const std::string h1 = file_hash(p.string());
  CHECK(h1.rfind("fnv1a:", 0) == 0);
  CHECK(h1.size() == 6 + 16);
  CHECK(file_hash(p.string()) == h1);
  {
    std::ofstream out(p, std::ios::binary);
    out << "hello!";
  }
  CHECK(file_hash(p.string()) != h1);
}

TEST_CASE("reports carry objective traces and mined counts") {
  TrainReport r;
  StageTrace t;
  t.stage = "stageA";
  t.objective = {3.0, 2.5, 2.25};
  t.seconds = 0.5;
  r.traces.push_back(t);
  MiningAssignment a{"w0", "p", 1, 0.0, 1};
  r.mined[1] = {a};

  const auto p = tmp("report.txt");
  write_report(p.string(), r);
  const std::string body = slurp(p);
  CHECK(body.find("stageA") != std::string::npos);
  CHECK(body.find("2.25") != std::string::npos);
  CHECK(!body.empty());
}
