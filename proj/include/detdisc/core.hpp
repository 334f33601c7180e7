#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "detdisc/common.hpp"
#include "detdisc/repr.hpp"

namespace detdisc {

// Axis-aligned box in image coordinates. Valid iff x_min < x_max and y_min < y_max.
struct Box {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  bool valid() const { return x_min < x_max && y_min < y_max; }
  double area() const { return (x_max - x_min) * (y_max - y_min); }
};

// Region-level labels are {+1, -1}; a category absent from the map means -1.
using Labels = std::map<std::string, int>;

struct Region {
  Box box;
  Eigen::VectorXd feature;
  std::optional<Labels> strong_labels;  // present iff the owning bag is in S
};

enum class Source { Strong, Weak };

// One image: a set of region proposals plus image-level labels.
struct Bag {
  std::string id;
  std::vector<Region> regions;
  Labels weak_labels;  // Y_I per category
  std::optional<Eigen::VectorXd> whole_image_feature;
  Source source = Source::Weak;
};

struct Dataset {
  std::vector<Bag> strong_bags;
  std::vector<Bag> weak_bags;
  std::set<std::string> categories_strong;
  std::set<std::string> categories_weak;
  int feature_dim = 0;
};

struct Hyperparams {
  double alpha = 1.0;
  double lambda = 1e-3;
};

// Representation parameters plus one weight vector per category (and background).
// Detector vectors have dimension F+1; the trailing coordinate is the bias.
struct Model {
  ReprParams repr;
  std::map<std::string, Eigen::VectorXd> detectors;
  Hyperparams hyper;

  int detector_dim() const { return repr.output_dim + 1; }
};

// Per (weak bag, positive category): the region currently treated as the
// positive training instance.
struct MiningAssignment {
  std::string bag_id;
  std::string category;
  int region_index = -1;
  double score = 0.0;
  int round = 0;
};

// Label lookup with absence meaning -1.
inline int label_of(const Labels& labels, const std::string& category) {
  auto it = labels.find(category);
  return it == labels.end() ? -1 : it->second;
}

// Returns one human-readable entry per invariant violation; empty means valid.
std::vector<std::string> validate_dataset(const Dataset& d);

// Explicit whole-image feature when present, else the mean of region features.
Eigen::VectorXd whole_image_feature(const Bag& b);

// w.head(F) . phi + bias coordinate.
double detector_score(const Eigen::VectorXd& w, const Eigen::VectorXd& phi);

// Throws ConfigError when the model is inconsistent (mixed detector dims,
// non-positive hyperparameters, bad repr chain).
void check_model(const Model& m);

}  // namespace detdisc
