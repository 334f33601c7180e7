#pragma once

#include <string>
#include <vector>

#include "detdisc/core.hpp"
#include "detdisc/eval.hpp"
#include "detdisc/synth.hpp"
#include "detdisc/trainer.hpp"

namespace detdisc {

// Canonical line-delimited dataset format: a header record followed by one
// record per bag. Serialization is deterministic; reals use the shortest
// round-trip decimal form.
void write_dataset(const std::string& path, const Dataset& d);
Dataset read_dataset(const std::string& path);

std::string model_to_string(const Model& m);
void write_model(const std::string& path, const Model& m);
Model read_model(const std::string& path);

void write_assignments(const std::string& path, const std::vector<MiningAssignment>& a);
std::vector<MiningAssignment> read_assignments(const std::string& path);

void write_ground_truth(const std::string& path, const SynthGroundTruth& gt);
SynthGroundTruth read_ground_truth(const std::string& path);

void write_report(const std::string& path, const TrainReport& report);

// Config files are JSON mirroring the config structs one field to one key.
// Unknown keys are rejected. Missing keys keep their defaults.
SynthConfig read_synth_config(const std::string& path);
TrainConfig read_train_config(const std::string& path);
MiningConfig read_mining_config(const std::string& path);

struct EvalConfig {
  double iou_match = 0.5;
  double nms_threshold = 0.3;
  std::string split = "weak";       // weak | strong | all
  std::string categories = "weak";  // weak | strong | all
};
EvalConfig read_eval_config(const std::string& path);

// FNV-1a over the file bytes, for run manifests.
std::string file_hash(const std::string& path);

}  // namespace detdisc
