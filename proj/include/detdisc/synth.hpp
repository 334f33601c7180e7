#pragma once

#include <cstdint>
#include <optional>

#include "detdisc/core.hpp"
#include "detdisc/eval.hpp"

namespace detdisc {

// Desk-scale stand-in for a detection corpus: Gaussian object clusters shared
// between the strong and weak splits, plus context clusters that appear as
// background in strong bags and as distractors in weak bags, plus isotropic
// background noise. The optional domain-shift transform mangles the weak
// bags' classification-style whole-image features relative to their region
// (detection) features.
struct SynthConfig {
  std::uint64_t seed = 0;
  int num_categories_strong = 5;
  int num_categories_weak = 5;
  int bags_per_category = 40;
  int regions_per_bag = 20;
  int feature_dim = 16;
  double cluster_separation = 4.0;
  double noise_sigma = 0.5;
  int num_context_clusters = 5;
  int context_regions_per_bag = 3;
  int positives_per_strong_bag = 2;
  bool enable_transform = false;
  std::optional<Eigen::MatrixXd> transform;  // default: seeded random rotation

  void validate() const;
};

// Hidden generating parameters; consumed only by tests and eval.
struct SynthGroundTruth {
  std::map<std::string, Eigen::VectorXd> means;  // object category -> mean
  std::vector<Eigen::VectorXd> context_means;
  double noise_sigma = 0.0;
  std::optional<Eigen::MatrixXd> transform;
  // weak bag id -> category -> planted region index
  std::map<std::string, std::map<std::string, int>> planted;
  GroundTruthBoxes boxes;  // all bags, positive categories only
};

std::pair<Dataset, SynthGroundTruth> generate(const SynthConfig& cfg);

// Argmax over regions of the true class-conditional log-density ratio
// (category cluster vs background noise), from the generating parameters.
int bayes_oracle(const SynthGroundTruth& gt, const Bag& b, const std::string& category);

}  // namespace detdisc
