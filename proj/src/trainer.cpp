#include "detdisc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "detdisc/parallel.hpp"

namespace detdisc {

namespace {
constexpr std::size_t kGradChunk = 16;  // fixed so results don't depend on threads

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stage, std::uint64_t epoch) {
  std::uint64_t h = seed;
  h ^= 0x9e3779b97f4a7c15ULL + stage + (h << 6) + (h >> 2);
  h ^= 0x9e3779b97f4a7c15ULL + epoch + (h << 6) + (h >> 2);
  return h;
}

class StageTimer {
 public:
  explicit StageTimer(StageTrace* trace) : trace_(trace) {
    start_ = std::chrono::steady_clock::now();
  }
  ~StageTimer() {
    if (trace_) {
      trace_->seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
  }

 private:
  StageTrace* trace_;
  std::chrono::steady_clock::time_point start_;
};

void record(StageTrace* trace, const std::string& stage, double value) {
  if (!trace) return;
  if (trace->stage.empty()) trace->stage = stage;
  if (!std::isfinite(value))
    throw NumericError("stage " + stage + ": non-finite objective");
  trace->objective.push_back(value);
}

}  // namespace

void TrainConfig::validate() const {
  if (learning_rate <= 0) throw ConfigError("train: learning_rate must be positive");
  if (momentum < 0 || momentum >= 1) throw ConfigError("train: momentum must be in [0,1)");
  if (epochs.init < 0 || epochs.strong < 0 || epochs.joint < 0)
    throw ConfigError("train: epochs must be non-negative");
  if (outer_rounds < 1) throw ConfigError("train: outer_rounds must be >= 1");
  if (batch_bags < 1 || batch_regions < 1) throw ConfigError("train: batch sizes must be >= 1");
  if (alpha <= 0 || lambda <= 0) throw ConfigError("train: alpha and lambda must be positive");
  if (mining.top_k < 1) throw ConfigError("train: mining.top_k must be >= 1");
  if (mining.max_latent_iters < 1)
    throw ConfigError("train: mining.max_latent_iters must be >= 1");
  if (!(iou_bg_threshold > 0 && iou_bg_threshold <= 1))
    throw ConfigError("train: iou_bg_threshold must be in (0,1]");
  if (repr_dims.size() != 0 && repr_activations.size() + 1 != repr_dims.size())
    throw ConfigError("train: repr dims/activations mismatch");
}

void sgd_step(Model& m, const ModelGrad& grad, OptState& state, double lr, double momentum) {
  for (const auto& [cat, g] : grad.detectors) {
    auto wit = m.detectors.find(cat);
    if (wit == m.detectors.end())
      throw ValidationError("sgd_step: gradient for unknown detector " + cat);
    if (wit->second.size() != g.size()) throw ValidationError("sgd_step: shape mismatch");
    auto vit = state.detector_velocity.find(cat);
    if (vit == state.detector_velocity.end()) {
      vit = state.detector_velocity.emplace(cat, Eigen::VectorXd::Zero(g.size())).first;
    }
    vit->second = momentum * vit->second - lr * g;
    wit->second += vit->second;
  }
  if (!grad.repr.layers.empty()) {
    if (state.repr_velocity.layers.empty()) state.repr_velocity = zero_grad(m.repr);
    if (state.repr_velocity.layers.size() != grad.repr.layers.size())
      throw ValidationError("sgd_step: repr shape mismatch");
    for (std::size_t l = 0; l < grad.repr.layers.size(); ++l) {
      LayerGrad& v = state.repr_velocity.layers[l];
      v.weight = momentum * v.weight - lr * grad.repr.layers[l].weight;
      v.bias = momentum * v.bias - lr * grad.repr.layers[l].bias;
      m.repr.layers[l].weight += v.weight;
      m.repr.layers[l].bias += v.bias;
    }
  }
}

Model init_model(const Dataset& d, const TrainConfig& cfg) {
  cfg.validate();
  Model m;
  std::vector<int> dims = cfg.repr_dims;
  std::vector<Activation> acts = cfg.repr_activations;
  if (dims.empty()) {
    dims = {d.feature_dim, d.feature_dim, d.feature_dim};
    acts = {Activation::RectifiedLinear, Activation::Identity};
  }
  if (dims.front() != d.feature_dim)
    throw ConfigError("init_model: repr input dim must equal dataset feature_dim");
  m.repr = init_repr(cfg.seed, dims, acts);
  m.hyper.alpha = cfg.alpha;
  m.hyper.lambda = cfg.lambda;
  const int dim = m.detector_dim();
  for (const std::string& c : d.categories_strong)
    m.detectors[c] = Eigen::VectorXd::Zero(dim);
  for (const std::string& c : d.categories_weak)
    m.detectors[c] = Eigen::VectorXd::Zero(dim);
  m.detectors[kBackground] = Eigen::VectorXd::Zero(dim);
  return m;
}

namespace {

// Deterministic chunked data-gradient over one batch of items.
template <typename Accumulate>
ModelGrad batch_data_grad(const Model& m, std::size_t batch_size, Accumulate&& acc_item) {
  std::vector<ModelGrad> slots(num_chunks(batch_size, kGradChunk));
  parallel_chunks(batch_size, kGradChunk,
                  [&](std::size_t c, std::size_t begin, std::size_t end) {
                    slots[c] = zero_model_grad(m);
                    for (std::size_t i = begin; i < end; ++i) acc_item(i, slots[c]);
                  });
  ModelGrad total = zero_model_grad(m);
  for (const ModelGrad& s : slots) add_scaled(total, s, 1.0);
  return total;
}

// One SGD epoch over shuffled items. The full gradient estimate is
// (1/N) * regularizer-grad + alpha * batch mean of data grads, i.e. the
// size-normalized objective; traces still report the unnormalized value.
template <typename Accumulate>
void run_epoch(Model& m, OptState& state, const TrainConfig& cfg, std::size_t n_items,
               std::size_t batch_size, std::uint64_t epoch_seed,
               const std::vector<std::string>& reg_cats, Accumulate&& acc_item) {
  std::vector<std::size_t> order(n_items);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(order.begin(), order.end(), rng);

  for (std::size_t start = 0; start < n_items; start += batch_size) {
    const std::size_t end = std::min(n_items, start + batch_size);
    const std::size_t bsz = end - start;
    ModelGrad data = batch_data_grad(
        m, bsz, [&](std::size_t i, ModelGrad& out) { acc_item(order[start + i], out); });

    ModelGrad step = zero_model_grad(m);
    const double inv_n = 1.0 / static_cast<double>(n_items);
    for (const std::string& q : reg_cats) {
      step.detectors[q] = inv_n * regularizer_grad(m.detectors.at(q), m.hyper.lambda);
    }
    add_scaled(step, data, m.hyper.alpha / static_cast<double>(bsz));
    sgd_step(m, step, state, cfg.learning_rate, cfg.momentum);
  }
}

std::vector<std::string> classification_categories(const Dataset& d) {
  std::vector<std::string> cats;
  cats.insert(cats.end(), d.categories_strong.begin(), d.categories_strong.end());
  for (const std::string& c : d.categories_weak) {
    if (d.categories_strong.count(c) == 0) cats.push_back(c);
  }
  std::sort(cats.begin(), cats.end());
  return cats;
}

}  // namespace

Model run_stage_init(Model m, const Dataset& d, const TrainConfig& cfg, StageTrace* trace) {
  StageTimer timer(trace);
  const std::vector<std::string> cats = classification_categories(d);
  std::vector<const Bag*> bags;
  for (const Bag& b : d.strong_bags) bags.push_back(&b);
  for (const Bag& b : d.weak_bags) bags.push_back(&b);

  record(trace, "stageA", classification_objective(m, d).total);
  OptState state;
  for (int epoch = 0; epoch < cfg.epochs.init; ++epoch) {
    run_epoch(m, state, cfg, bags.size(), cfg.batch_bags, mix_seed(cfg.seed, 1, epoch), cats,
              [&](std::size_t i, ModelGrad& out) {
                accumulate_classification_bag(m, *bags[i], cats, out);
              });
    record(trace, "stageA", classification_objective(m, d).total);
  }
  return m;
}

Model run_stage_strong(Model m, const Dataset& d, const TrainConfig& cfg, StageTrace* trace) {
  StageTimer timer(trace);
  const std::vector<RegionExample> examples = strong_region_examples(d);
  std::vector<std::string> cats(d.categories_strong.begin(), d.categories_strong.end());
  cats.push_back(kBackground);

  record(trace, "stageB", strong_objective(m, d).total);
  OptState state;
  for (int epoch = 0; epoch < cfg.epochs.strong; ++epoch) {
    run_epoch(m, state, cfg, examples.size(), cfg.batch_regions, mix_seed(cfg.seed, 2, epoch),
              cats, [&](std::size_t i, ModelGrad& out) {
                accumulate_region_example(m, examples[i], out);
              });
    record(trace, "stageB", strong_objective(m, d).total);
  }
  return m;
}

Model run_stage_joint(Model m, const Dataset& d,
                      const std::vector<MiningAssignment>& assignments,
                      const TrainConfig& cfg, StageTrace* trace) {
  StageTimer timer(trace);
  const std::vector<RegionExample> examples = joint_region_examples(d, assignments);
  std::vector<std::string> cats;
  for (const auto& [cat, w] : m.detectors) cats.push_back(cat);

  record(trace, "stageD", joint_objective(m, d, assignments).total);
  OptState state;
  for (int epoch = 0; epoch < cfg.epochs.joint; ++epoch) {
    run_epoch(m, state, cfg, examples.size(), cfg.batch_regions, mix_seed(cfg.seed, 3, epoch),
              cats, [&](std::size_t i, ModelGrad& out) {
                accumulate_region_example(m, examples[i], out);
              });
    record(trace, "stageD", joint_objective(m, d, assignments).total);
  }
  return m;
}

TrainReport run_pipeline(const Dataset& d, const TrainConfig& cfg, const ArtifactSink* sink) {
  cfg.validate();
  TrainReport report;
  try {
    const Dataset labeled = assign_background_strong(d, cfg.iou_bg_threshold);
    Model m = init_model(labeled, cfg);

    report.traces.push_back({});
    m = run_stage_init(std::move(m), labeled, cfg, &report.traces.back());
    if (sink && sink->checkpoint) sink->checkpoint("stageA", m);

    report.traces.push_back({});
    m = run_stage_strong(std::move(m), labeled, cfg, &report.traces.back());
    if (sink && sink->checkpoint) sink->checkpoint("stageB", m);

    for (int t = 1; t <= cfg.outer_rounds; ++t) {
      std::vector<MiningAssignment> mined = mine_dataset(m, labeled, cfg.mining, t);
      if (sink && sink->mined) sink->mined("round" + std::to_string(t), mined);
      report.mined[t] = mined;

      report.traces.push_back({});
      m = run_stage_joint(std::move(m), labeled, mined, cfg, &report.traces.back());
      report.traces.back().stage = "stageD_round" + std::to_string(t);
      if (sink && sink->checkpoint) sink->checkpoint("round" + std::to_string(t), m);
    }
    report.final_model = std::move(m);
  } catch (const NumericError& e) {
    throw TrainAbort(e.what(), std::move(report));
  }
  return report;
}

}  // namespace detdisc
