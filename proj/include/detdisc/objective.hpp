#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "detdisc/core.hpp"

namespace detdisc {

struct ObjectiveValue {
  double total = 0;
  double regularization = 0;
  double data_loss = 0;
  std::map<std::string, double> per_category;  // data-loss share per category
};

// max(0, 1 - y*s)
double hinge_loss(int y, double s);
// subgradient w.r.t. s: -y when y*s < 1, else 0 (kink included)
double hinge_subgrad(int y, double s);

// (lambda/2) * ||w||^2 with the trailing bias coordinate excluded.
double regularizer(const Eigen::VectorXd& w, double lambda);
Eigen::VectorXd regularizer_grad(const Eigen::VectorXd& w, double lambda);

// Gradient of an objective w.r.t. detector weights and representation params.
struct ModelGrad {
  std::map<std::string, Eigen::VectorXd> detectors;
  ReprGrad repr;
};

ModelGrad zero_model_grad(const Model& m);
void add_scaled(ModelGrad& acc, const ModelGrad& g, double scale);

// One region-level training example: a feature plus its (category, +/-1) labels.
struct RegionExample {
  const Bag* bag = nullptr;
  int region_index = -1;
  std::vector<std::pair<std::string, int>> labels;
};

// Region examples over S with labels for all q in C_S plus background.
// Throws ValidationError when a strong region lacks a required label.
std::vector<RegionExample> strong_region_examples(const Dataset& d);

// Region examples over W u S for the joint objective: strong labels on S,
// mined assignments on W. A weak region selected for category p is +1 for p
// and -1 for background; unselected weak regions are -1 for every p in C_W
// and +1 for background. Throws ValidationError on incomplete assignments.
std::vector<RegionExample> joint_region_examples(
    const Dataset& d, const std::vector<MiningAssignment>& assignments);

// Image-level classification loss over W u S, all k in C_S u C_W.
ObjectiveValue classification_objective(const Model& m, const Dataset& d);

// Region-level loss over S for q in C_S u {background}.
ObjectiveValue strong_objective(const Model& m, const Dataset& d);

// Multiple-instance loss for a single category p in C_W u {background}: bag score is the max
// region score, ties broken by lowest region index. For the background
// category every weak bag counts as positive.
double weak_objective(const Model& m, const Dataset& d, const std::string& category);

// Joint region-level loss over W u S with latent labels fixed by the assignments.
ObjectiveValue joint_objective(const Model& m, const Dataset& d,
                               const std::vector<MiningAssignment>& assignments);

// Data-term gradient contributions (no regularizer, no alpha scaling).
void accumulate_classification_bag(const Model& m, const Bag& b,
                                   const std::vector<std::string>& categories,
                                   ModelGrad& acc);
void accumulate_region_example(const Model& m, const RegionExample& ex, ModelGrad& acc);

enum class ObjectiveId { Classification, Strong, Weak, Joint };

// Exact subgradients of the named full objective (regularizer included,
// data term scaled by alpha). `category` is required for Weak; `assignments`
// for Joint.
ModelGrad gradients(ObjectiveId id, const Model& m, const Dataset& d,
                    const std::vector<MiningAssignment>* assignments = nullptr,
                    const std::string* category = nullptr);

}  // namespace detdisc
