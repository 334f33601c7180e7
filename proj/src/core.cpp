#include "detdisc/core.hpp"

#include <algorithm>
#include <unordered_set>

namespace detdisc {

static void validate_bag(const Dataset& d, const Bag& b, bool strong,
                         std::vector<std::string>& out) {
  const std::string where = "bag " + b.id;
  if (b.regions.empty()) {
    out.push_back(where + ": regions empty");
    return;
  }
  if (b.whole_image_feature && b.whole_image_feature->size() != d.feature_dim)
    out.push_back(where + ": whole_image_feature dimension != feature_dim");

  auto known_category = [&](const std::string& c) {
    return c == kBackground || d.categories_strong.count(c) > 0 ||
           d.categories_weak.count(c) > 0;
  };

  for (const auto& [cat, y] : b.weak_labels) {
    if (!known_category(cat))
      out.push_back(where + ": weak label references unknown category " + cat);
    if (y != 1 && y != -1)
      out.push_back(where + ": weak label for " + cat + " must be +1 or -1");
  }

  for (std::size_t i = 0; i < b.regions.size(); ++i) {
    const Region& r = b.regions[i];
    const std::string rwhere = where + " region " + std::to_string(i);
    if (r.feature.size() != d.feature_dim)
      out.push_back(rwhere + ": feature dimension != feature_dim");
    if (!r.feature.allFinite()) out.push_back(rwhere + ": non-finite feature");
    if (!r.box.valid()) out.push_back(rwhere + ": degenerate box");
    if (strong && !r.strong_labels)
      out.push_back(rwhere + ": strong bag region lacks strong labels");
    if (!strong && r.strong_labels)
      out.push_back(rwhere + ": weak bag region carries strong labels");
    if (r.strong_labels) {
      for (const auto& [cat, y] : *r.strong_labels) {
        if (!known_category(cat))
          out.push_back(rwhere + ": strong label references unknown category " + cat);
        if (y != 1 && y != -1)
          out.push_back(rwhere + ": strong label for " + cat + " must be +1 or -1");
      }
    }
  }

  if (strong) {
    // Image-level label consistency: Y_I^k == max over regions of y_i^k.
    std::set<std::string> cats;
    for (const auto& [cat, y] : b.weak_labels) cats.insert(cat);
    for (const Region& r : b.regions) {
      if (!r.strong_labels) continue;
      for (const auto& [cat, y] : *r.strong_labels) cats.insert(cat);
    }
    for (const std::string& cat : cats) {
      if (cat == kBackground) continue;
      int derived = -1;
      for (const Region& r : b.regions) {
        if (r.strong_labels && label_of(*r.strong_labels, cat) == 1) derived = 1;
      }
      if (label_of(b.weak_labels, cat) != derived)
        out.push_back(where + ": image-level label for " + cat +
                      " inconsistent with region labels");
    }
  }
}

std::vector<std::string> validate_dataset(const Dataset& d) {
  std::vector<std::string> out;
  if (d.feature_dim <= 0) out.push_back("dataset: feature_dim must be positive");
  std::unordered_set<std::string> ids;
  for (const Bag& b : d.strong_bags) {
    if (b.source != Source::Strong)
      out.push_back("bag " + b.id + ": listed in strong set but source != Strong");
    if (!ids.insert(b.id).second) out.push_back("bag " + b.id + ": duplicate id");
    validate_bag(d, b, /*strong=*/true, out);
  }
  for (const Bag& b : d.weak_bags) {
    if (b.source != Source::Weak)
      out.push_back("bag " + b.id + ": listed in weak set but source != Weak");
    if (!ids.insert(b.id).second) out.push_back("bag " + b.id + ": duplicate id");
    validate_bag(d, b, /*strong=*/false, out);
  }
  return out;
}

Eigen::VectorXd whole_image_feature(const Bag& b) {
  if (b.whole_image_feature) return *b.whole_image_feature;
  if (b.regions.empty()) throw ValidationError("whole_image_feature: bag has no regions");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(b.regions.front().feature.size());
  for (const Region& r : b.regions) sum += r.feature;
  return sum / static_cast<double>(b.regions.size());
}

double detector_score(const Eigen::VectorXd& w, const Eigen::VectorXd& phi) {
  if (w.size() != phi.size() + 1)
    throw ValidationError("detector_score: weight/feature dimension mismatch");
  return w.head(phi.size()).dot(phi) + w(w.size() - 1);
}

void check_model(const Model& m) {
  check_repr(m.repr);
  const int dim = m.detector_dim();
  for (const auto& [cat, w] : m.detectors) {
    if (w.size() != dim)
      throw ConfigError("model: detector " + cat + " has wrong dimension");
    if (!w.allFinite()) throw ConfigError("model: detector " + cat + " is non-finite");
  }
  if (m.hyper.alpha <= 0) throw ConfigError("model: alpha must be positive");
  if (m.hyper.lambda <= 0) throw ConfigError("model: lambda must be positive");
}

}  // namespace detdisc
