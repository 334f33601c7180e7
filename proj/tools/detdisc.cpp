#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "detdisc/eval.hpp"
#include "detdisc/gradcheck.hpp"
#include "detdisc/io.hpp"
#include "detdisc/mining.hpp"
#include "detdisc/parallel.hpp"
#include "detdisc/synth.hpp"
#include "detdisc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

std::string utc_timestamp() {
  char buf[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Records what a run consumed and produced, with content hashes.
struct Manifest {
  json j;

  explicit Manifest(const std::string& command) {
    j["command"] = command;
    j["timestamp"] = utc_timestamp();
    j["inputs"] = json::object();
    j["outputs"] = json::object();
  }
  void input(const std::string& path) {
    if (!path.empty()) j["inputs"][path] = detdisc::file_hash(path);
  }
  void output(const std::string& path) { j["outputs"][path] = detdisc::file_hash(path); }
  void write(const fs::path& dir) const {
    std::ofstream out(dir / "manifest.json");
    out << j.dump(2) << "\n";
  }
};

fs::path resolve_out(const std::string& flag) {
  std::string dir = flag;
  if (dir.empty()) {
    if (const char* env = std::getenv("DETDISC_OUT")) dir = env;
  }
  if (dir.empty()) throw detdisc::ConfigError("no output directory (use --out or DETDISC_OUT)");
  fs::create_directories(dir);
  return dir;
}

std::vector<const detdisc::Bag*> select_bags(const detdisc::Dataset& d,
                                             const std::string& split) {
  std::vector<const detdisc::Bag*> bags;
  if (split == "strong" || split == "all")
    for (const auto& b : d.strong_bags) bags.push_back(&b);
  if (split == "weak" || split == "all")
    for (const auto& b : d.weak_bags) bags.push_back(&b);
  if (bags.empty() && split != "strong" && split != "weak" && split != "all")
    throw detdisc::ConfigError("unknown split: " + split);
  return bags;
}

std::vector<std::string> select_categories(const detdisc::Dataset& d,
                                           const std::string& which) {
  std::vector<std::string> cats;
  if (which == "strong" || which == "all")
    cats.insert(cats.end(), d.categories_strong.begin(), d.categories_strong.end());
  if (which == "weak" || which == "all")
    cats.insert(cats.end(), d.categories_weak.begin(), d.categories_weak.end());
  if (which != "strong" && which != "weak" && which != "all")
    throw detdisc::ConfigError("unknown category set: " + which);
  return cats;
}

int cmd_gen_synth(const std::string& config_path, const std::string& out_flag,
                  const std::optional<std::uint64_t>& seed_flag) {
  detdisc::SynthConfig cfg;
  if (!config_path.empty()) cfg = detdisc::read_synth_config(config_path);
  if (seed_flag) cfg.seed = *seed_flag;
  cfg.validate();
  const auto [dataset, gt] = detdisc::generate(cfg);

  const fs::path out = resolve_out(out_flag);
  const auto data_path = (out / "dataset.jsonl").string();
  const auto gt_path = (out / "ground_truth.jsonl").string();
  detdisc::write_dataset(data_path, dataset);
  detdisc::write_ground_truth(gt_path, gt);

  Manifest m("gen-synth");
  m.j["seed"] = cfg.seed;
  m.input(config_path);
  m.output(data_path);
  m.output(gt_path);
  m.write(out);
  std::printf("wrote %s (%zu strong bags, %zu weak bags)\n", data_path.c_str(),
              dataset.strong_bags.size(), dataset.weak_bags.size());
  return kExitOk;
}

int cmd_train(const std::string& data_path, const std::string& config_path,
              const std::string& out_flag, const std::optional<std::uint64_t>& seed_flag) {
  detdisc::TrainConfig cfg;
  if (!config_path.empty()) cfg = detdisc::read_train_config(config_path);
  if (seed_flag) cfg.seed = *seed_flag;
  cfg.validate();
  const detdisc::Dataset dataset = detdisc::read_dataset(data_path);
  const auto problems = detdisc::validate_dataset(dataset);
  if (!problems.empty()) throw detdisc::ValidationError(problems.front());

  const fs::path out = resolve_out(out_flag);
  Manifest m("train");
  m.j["seed"] = cfg.seed;
  m.input(config_path);
  m.input(data_path);

  detdisc::ArtifactSink sink;
  sink.checkpoint = [&](const std::string& name, const detdisc::Model& model) {
    const auto p = (out / (name + ".ckpt")).string();
    detdisc::write_model(p, model);
    m.output(p);
  };
  sink.mined = [&](const std::string& name,
                   const std::vector<detdisc::MiningAssignment>& a) {
    const auto p = (out / (name + ".mined")).string();
    detdisc::write_assignments(p, a);
    m.output(p);
  };

  detdisc::TrainReport report;
  try {
    report = detdisc::run_pipeline(dataset, cfg, &sink);
  } catch (const detdisc::TrainAbort& e) {
    const auto rp = (out / "report.txt").string();
    detdisc::write_report(rp, e.partial);
    m.output(rp);
    m.j["aborted"] = e.what();
    m.write(out);
    std::cerr << "training aborted: " << e.what() << "\n";
    return kExitNumeric;
  }

  const auto final_path = (out / "final.ckpt").string();
  const auto report_path = (out / "report.txt").string();
  detdisc::write_model(final_path, report.final_model);
  detdisc::write_report(report_path, report);
  m.output(final_path);
  m.output(report_path);
  m.write(out);
  for (const auto& t : report.traces) {
    std::printf("%-16s %10.4f -> %10.4f  (%.2fs)\n", t.stage.c_str(), t.objective.front(),
                t.objective.back(), t.seconds);
  }
  std::printf("wrote %s\n", final_path.c_str());
  return kExitOk;
}

int cmd_mine(const std::string& data_path, const std::string& model_path,
             const std::string& config_path, int round, const std::string& out_flag) {
  detdisc::MiningConfig cfg;
  if (!config_path.empty()) cfg = detdisc::read_mining_config(config_path);
  const detdisc::Dataset dataset = detdisc::read_dataset(data_path);
  const detdisc::Model model = detdisc::read_model(model_path);
  detdisc::check_model(model);

  const auto assignments = detdisc::mine_dataset(model, dataset, cfg, round);

  const fs::path out = resolve_out(out_flag);
  const auto mined_path = (out / "mined.jsonl").string();
  detdisc::write_assignments(mined_path, assignments);

  Manifest m("mine");
  m.input(config_path);
  m.input(data_path);
  m.input(model_path);
  m.output(mined_path);
  m.write(out);
  std::printf("mined %zu assignments -> %s\n", assignments.size(), mined_path.c_str());
  return kExitOk;
}

int cmd_eval(const std::string& data_path, const std::string& model_path,
             const std::string& gt_path, const std::string& mined_path,
             const std::string& config_path, bool pr_curve, const std::string& out_flag) {
  detdisc::EvalConfig cfg;
  if (!config_path.empty()) cfg = detdisc::read_eval_config(config_path);
  const detdisc::Dataset dataset = detdisc::read_dataset(data_path);
  const detdisc::Model model = detdisc::read_model(model_path);
  detdisc::check_model(model);
  const detdisc::SynthGroundTruth gt = detdisc::read_ground_truth(gt_path);

  const auto bags = select_bags(dataset, cfg.split);
  const auto cats = select_categories(dataset, cfg.categories);
  const detdisc::EvalResult res = detdisc::evaluate_map(model, bags, gt.boxes, cats,
                                                        cfg.iou_match, cfg.nms_threshold);

  const fs::path out = resolve_out(out_flag);
  const auto metrics_path = (out / "metrics.txt").string();
  {
    std::ofstream f(metrics_path);
    for (const auto& c : cats) {
      auto it = res.per_category_ap.find(c);
      if (it == res.per_category_ap.end())
        f << "ap\t" << c << "\tabsent\n";
      else
        f << "ap\t" << c << "\t" << it->second << "\n";
    }
    f << "map\t" << res.mean_ap << "\n";
    if (!mined_path.empty()) {
      const auto assignments = detdisc::read_assignments(mined_path);
      const auto prec = detdisc::mined_precision(dataset, assignments, gt.boxes, cfg.iou_match);
      if (prec)
        f << "mined_precision\t" << *prec << "\n";
      else
        f << "mined_precision\tabsent\n";
    }
  }

  Manifest m("eval");
  m.input(config_path);
  m.input(data_path);
  m.input(model_path);
  m.input(gt_path);
  m.input(mined_path);
  m.output(metrics_path);

  if (pr_curve) {
    const auto pr_path = (out / "pr_curves.txt").string();
    std::ofstream f(pr_path);
    for (const auto& [cat, points] : res.pr_curves)
      for (const auto& p : points)
        f << cat << "\t" << p.recall << "\t" << p.precision << "\n";
    m.output(pr_path);
  }
  m.write(out);

  std::ifstream echo(metrics_path);
  std::cout << echo.rdbuf();
  return kExitOk;
}

int cmd_grad_check(std::uint64_t seed, int fixtures, double tolerance, bool corrupt) {
  const auto results = detdisc::run_grad_checks(seed, fixtures, tolerance, corrupt);
  bool any_fail = false;
  for (const auto& r : results) {
    std::printf("%-26s max_rel_error=%.3e  %s\n", r.name.c_str(), r.max_rel_error,
                r.pass ? "pass" : "FAIL");
    if (!r.pass) any_fail = true;
  }
  if (corrupt) {
    // negative control: the corrupted gradients are expected to fail
    std::printf("corrupt control %s\n", any_fail ? "detected" : "NOT detected");
    return any_fail ? kExitOk : kExitNumeric;
  }
  return any_fail ? kExitNumeric : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"detector discovery pipeline"};
  app.require_subcommand(1);

  int threads = 0;
  if (const char* env = std::getenv("DETDISC_THREADS")) threads = std::atoi(env);
  app.add_option("--threads", threads, "worker threads (0 = hardware)");

  std::string config, out_dir, data, model_path, gt_path, mined_path;
  int round = 0;
  bool pr_curve = false, corrupt = false;
  std::uint64_t seed = 0;
  int fixtures = 3;
  double tolerance = 1e-4;

  std::optional<std::uint64_t> seed_override;

  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic benchmark");
  gen->add_option("--config", config, "generator config (json)");
  gen->add_option("--seed", seed_override, "override the config seed");
  gen->add_option("--out", out_dir, "output directory");

  auto* train = app.add_subcommand("train", "run the staged training pipeline");
  train->add_option("--data", data, "dataset (jsonl)")->required();
  train->add_option("--config", config, "training config (json)");
  train->add_option("--seed", seed_override, "override the config seed");
  train->add_option("--out", out_dir, "output directory");

  auto* mine = app.add_subcommand("mine", "discover positive regions in weak bags");
  mine->add_option("--data", data, "dataset (jsonl)")->required();
  mine->add_option("--model", model_path, "model checkpoint")->required();
  mine->add_option("--config", config, "mining config (json)");
  mine->add_option("--round", round, "round tag recorded on assignments");
  mine->add_option("--out", out_dir, "output directory");

  auto* eval = app.add_subcommand("eval", "detection metrics against ground truth");
  eval->add_option("--data", data, "dataset (jsonl)")->required();
  eval->add_option("--model", model_path, "model checkpoint")->required();
  eval->add_option("--gt", gt_path, "ground truth (jsonl)")->required();
  eval->add_option("--mined", mined_path, "mined assignments (jsonl)");
  eval->add_option("--config", config, "eval config (json)");
  eval->add_flag("--pr-curve", pr_curve, "also write precision/recall points");
  eval->add_option("--out", out_dir, "output directory");

  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient audit");
  gc->add_option("--seed", seed, "fixture seed");
  gc->add_option("--fixtures", fixtures, "fixtures per check");
  gc->add_option("--tolerance", tolerance, "max relative error");
  gc->add_flag("--corrupt", corrupt, "negative control: perturb one analytic entry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
  }

  detdisc::set_thread_count(threads);
  try {
    if (gen->parsed()) return cmd_gen_synth(config, out_dir, seed_override);
    if (train->parsed()) return cmd_train(data, config, out_dir, seed_override);
    if (mine->parsed()) return cmd_mine(data, model_path, config, round, out_dir);
    if (eval->parsed())
      return cmd_eval(data, model_path, gt_path, mined_path, config, pr_curve, out_dir);
    if (gc->parsed()) return cmd_grad_check(seed, fixtures, tolerance, corrupt);
  } catch (const detdisc::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
