#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "detdisc/core.hpp"
#include "detdisc/mining.hpp"
#include "detdisc/objective.hpp"

namespace detdisc {

struct StageEpochs {
  int init = 20;    // Stage A
  int strong = 20;  // Stage B
  int joint = 15;   // Stage D, per outer round
};

struct TrainConfig {
  std::uint64_t seed = 0;
  double learning_rate = 0.02;
  double momentum = 0.9;
  StageEpochs epochs;
  int outer_rounds = 2;  // T
  int batch_bags = 32;      // Stage A
  int batch_regions = 128;  // Stages B, D
  MiningConfig mining;
  double alpha = 1.0;
  double lambda = 1e-3;
  double iou_bg_threshold = 0.3;
  // phi architecture; empty dims means the default one-hidden-layer stack
  // D -> D (rectified) -> D.
  std::vector<int> repr_dims;
  std::vector<Activation> repr_activations;

  void validate() const;
};

struct StageTrace {
  std::string stage;
  std::vector<double> objective;  // index 0 is the pre-training value
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<StageTrace> traces;
  std::map<int, std::vector<MiningAssignment>> mined;  // keyed by outer round (1-based)
  Model final_model;
};

// Thrown when an objective goes non-finite; carries whatever completed.
struct TrainAbort : NumericError {
  TrainAbort(const std::string& msg, TrainReport partial_report)
      : NumericError(msg), partial(std::move(partial_report)) {}
  TrainReport partial;
};

// Receives artifacts as the pipeline produces them; entries may be null.
struct ArtifactSink {
  std::function<void(const std::string& name, const Model&)> checkpoint;
  std::function<void(const std::string& name, const std::vector<MiningAssignment>&)> mined;
};

// Momentum state mirroring the model parameter structure.
struct OptState {
  std::map<std::string, Eigen::VectorXd> detector_velocity;
  ReprGrad repr_velocity;
};

// velocity = momentum * velocity - lr * grad; params += velocity.
// Only parameters present in `grad` are touched.
void sgd_step(Model& m, const ModelGrad& grad, OptState& state, double lr, double momentum);

Model init_model(const Dataset& d, const TrainConfig& cfg);

// Stage A: image-level classification fine-tuning (phi + all category
// detectors; background untouched).
Model run_stage_init(Model m, const Dataset& d, const TrainConfig& cfg, StageTrace* trace);

// Stage B: strong region-level refinement (phi, C_S detectors, background);
// C_W detectors are bit-identical before and after.
Model run_stage_strong(Model m, const Dataset& d, const TrainConfig& cfg, StageTrace* trace);

// Stage D: joint refinement of everything with mined labels fixed.
Model run_stage_joint(Model m, const Dataset& d,
                      const std::vector<MiningAssignment>& assignments,
                      const TrainConfig& cfg, StageTrace* trace);

// A -> B -> T x { mine -> D }. Deterministic per (dataset, cfg), independent
// of the worker thread count.
TrainReport run_pipeline(const Dataset& d, const TrainConfig& cfg,
                         const ArtifactSink* sink = nullptr);

}  // namespace detdisc
