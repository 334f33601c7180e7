#include "detdisc/objective.hpp"

#include <algorithm>

namespace detdisc {

double hinge_loss(int y, double s) { return std::max(0.0, 1.0 - y * s); }

double hinge_subgrad(int y, double s) { return y * s < 1.0 ? -static_cast<double>(y) : 0.0; }

double regularizer(const Eigen::VectorXd& w, double lambda) {
  const Eigen::Index n = w.size();
  if (n == 0) return 0.0;
  return 0.5 * lambda * w.head(n - 1).squaredNorm();
}

Eigen::VectorXd regularizer_grad(const Eigen::VectorXd& w, double lambda) {
  Eigen::VectorXd g = lambda * w;
  if (g.size() > 0) g(g.size() - 1) = 0.0;  // bias slot
  return g;
}

ModelGrad zero_model_grad(const Model& m) {
  ModelGrad g;
  g.repr = zero_grad(m.repr);
  return g;
}

void add_scaled(ModelGrad& acc, const ModelGrad& g, double scale) {
  for (const auto& [cat, dg] : g.detectors) {
    auto it = acc.detectors.find(cat);
    if (it == acc.detectors.end()) {
      acc.detectors[cat] = scale * dg;
    } else {
      it->second += scale * dg;
    }
  }
  add_scaled(acc.repr, g.repr, scale);
}

static Eigen::VectorXd& detector_grad_slot(ModelGrad& acc, const Model& m,
                                           const std::string& cat) {
  auto it = acc.detectors.find(cat);
  if (it == acc.detectors.end()) {
    it = acc.detectors.emplace(cat, Eigen::VectorXd::Zero(m.detector_dim())).first;
  }
  return it->second;
}

static const Eigen::VectorXd& detector_of(const Model& m, const std::string& cat) {
  auto it = m.detectors.find(cat);
  if (it == m.detectors.end())
    throw ValidationError("unknown category in model: " + cat);
  return it->second;
}

std::vector<RegionExample> strong_region_examples(const Dataset& d) {
  std::vector<RegionExample> out;
  std::vector<std::string> cats(d.categories_strong.begin(), d.categories_strong.end());
  cats.push_back(kBackground);
  for (const Bag& b : d.strong_bags) {
    for (std::size_t i = 0; i < b.regions.size(); ++i) {
      const Region& r = b.regions[i];
      if (!r.strong_labels)
        throw ValidationError("bag " + b.id + ": strong region lacks labels");
      RegionExample ex;
      ex.bag = &b;
      ex.region_index = static_cast<int>(i);
      for (const std::string& q : cats) {
        auto it = r.strong_labels->find(q);
        if (it == r.strong_labels->end())
          throw ValidationError("bag " + b.id + ": missing strong label for " + q);
        ex.labels.emplace_back(q, it->second);
      }
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<RegionExample> joint_region_examples(
    const Dataset& d, const std::vector<MiningAssignment>& assignments) {
  // selected[bag_id][category] = region index
  std::map<std::string, std::map<std::string, int>> selected;
  for (const MiningAssignment& a : assignments) {
    selected[a.bag_id][a.category] = a.region_index;
  }

  std::vector<RegionExample> out = strong_region_examples(d);
  for (const Bag& b : d.weak_bags) {
    const auto sel_it = selected.find(b.id);
    for (const auto& [cat, y] : b.weak_labels) {
      if (y != 1 || d.categories_weak.count(cat) == 0) continue;
      if (sel_it == selected.end() || sel_it->second.count(cat) == 0)
        throw ValidationError("bag " + b.id + ": no assignment for positive category " + cat);
    }
    for (std::size_t i = 0; i < b.regions.size(); ++i) {
      RegionExample ex;
      ex.bag = &b;
      ex.region_index = static_cast<int>(i);
      bool selected_by_any = false;
      for (const std::string& p : d.categories_weak) {
        int y = -1;
        if (sel_it != selected.end()) {
          auto c = sel_it->second.find(p);
          if (c != sel_it->second.end() && c->second == static_cast<int>(i)) {
            y = 1;
            selected_by_any = true;
          }
        }
        ex.labels.emplace_back(p, y);
      }
      ex.labels.emplace_back(kBackground, selected_by_any ? -1 : 1);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

ObjectiveValue classification_objective(const Model& m, const Dataset& d) {
  ObjectiveValue v;
  std::vector<std::string> cats;
  cats.insert(cats.end(), d.categories_strong.begin(), d.categories_strong.end());
  for (const std::string& c : d.categories_weak) {
    if (d.categories_strong.count(c) == 0) cats.push_back(c);
  }
  std::sort(cats.begin(), cats.end());

  for (const std::string& k : cats) {
    v.regularization += regularizer(detector_of(m, k), m.hyper.lambda);
  }
  auto add_bag = [&](const Bag& b) {
    const Eigen::VectorXd phi = repr_forward(m.repr, whole_image_feature(b));
    for (const std::string& k : cats) {
      const int y = label_of(b.weak_labels, k);
      const double l = hinge_loss(y, detector_score(detector_of(m, k), phi));
      v.data_loss += l;
      v.per_category[k] += l;
    }
  };
  for (const Bag& b : d.weak_bags) add_bag(b);
  for (const Bag& b : d.strong_bags) add_bag(b);
  v.total = v.regularization + m.hyper.alpha * v.data_loss;
  return v;
}

static ObjectiveValue region_level_objective(const Model& m,
                                             const std::vector<RegionExample>& examples,
                                             const std::vector<std::string>& reg_cats) {
  ObjectiveValue v;
  for (const std::string& q : reg_cats) {
    v.regularization += regularizer(detector_of(m, q), m.hyper.lambda);
  }
  for (const RegionExample& ex : examples) {
    const Eigen::VectorXd phi =
        repr_forward(m.repr, ex.bag->regions[ex.region_index].feature);
    for (const auto& [q, y] : ex.labels) {
      const double l = hinge_loss(y, detector_score(detector_of(m, q), phi));
      v.data_loss += l;
      v.per_category[q] += l;
    }
  }
  v.total = v.regularization + m.hyper.alpha * v.data_loss;
  return v;
}

ObjectiveValue strong_objective(const Model& m, const Dataset& d) {
  std::vector<std::string> cats(d.categories_strong.begin(), d.categories_strong.end());
  cats.push_back(kBackground);
  return region_level_objective(m, strong_region_examples(d), cats);
}

ObjectiveValue joint_objective(const Model& m, const Dataset& d,
                               const std::vector<MiningAssignment>& assignments) {
  std::vector<std::string> cats;
  for (const auto& [cat, w] : m.detectors) cats.push_back(cat);
  return region_level_objective(m, joint_region_examples(d, assignments), cats);
}

// Max region score with lowest-index tie-break; also reports the argmax.
static double bag_max_score(const Model& m, const Eigen::VectorXd& w, const Bag& b,
                            int* argmax) {
  double best = 0;
  int best_i = -1;
  for (std::size_t i = 0; i < b.regions.size(); ++i) {
    const double s = detector_score(w, repr_forward(m.repr, b.regions[i].feature));
    if (best_i < 0 || s > best) {
      best = s;
      best_i = static_cast<int>(i);
    }
  }
  if (argmax) *argmax = best_i;
  return best;
}

static int weak_bag_label(const Dataset& d, const Bag& b, const std::string& category) {
  if (category == kBackground) return 1;  // every image contains background
  return label_of(b.weak_labels, category);
}

double weak_objective(const Model& m, const Dataset& d, const std::string& category) {
  if (category != kBackground && d.categories_weak.count(category) == 0)
    throw ValidationError("weak_objective: category not in C_W: " + category);
  const Eigen::VectorXd& w = detector_of(m, category);
  double v = regularizer(w, m.hyper.lambda);
  double data = 0;
  for (const Bag& b : d.weak_bags) {
    data += hinge_loss(weak_bag_label(d, b, category), bag_max_score(m, w, b, nullptr));
  }
  return v + m.hyper.alpha * data;
}

void accumulate_classification_bag(const Model& m, const Bag& b,
                                   const std::vector<std::string>& categories,
                                   ModelGrad& acc) {
  const Eigen::VectorXd x = whole_image_feature(b);
  const Eigen::VectorXd phi = repr_forward(m.repr, x);
  const int F = m.repr.output_dim;
  Eigen::VectorXd upstream = Eigen::VectorXd::Zero(F);
  bool any = false;
  for (const std::string& k : categories) {
    const Eigen::VectorXd& w = detector_of(m, k);
    const int y = label_of(b.weak_labels, k);
    const double g = hinge_subgrad(y, detector_score(w, phi));
    if (g == 0.0) continue;
    any = true;
    Eigen::VectorXd& dw = detector_grad_slot(acc, m, k);
    dw.head(F) += g * phi;
    dw(F) += g;
    upstream += g * w.head(F);
  }
  if (any && !m.repr.layers.empty()) {
    add_scaled(acc.repr, repr_backward(m.repr, x, upstream).params, 1.0);
  }
}

void accumulate_region_example(const Model& m, const RegionExample& ex, ModelGrad& acc) {
  const Eigen::VectorXd& x = ex.bag->regions[ex.region_index].feature;
  const Eigen::VectorXd phi = repr_forward(m.repr, x);
  const int F = m.repr.output_dim;
  Eigen::VectorXd upstream = Eigen::VectorXd::Zero(F);
  bool any = false;
  for (const auto& [q, y] : ex.labels) {
    const Eigen::VectorXd& w = detector_of(m, q);
    const double g = hinge_subgrad(y, detector_score(w, phi));
    if (g == 0.0) continue;
    any = true;
    Eigen::VectorXd& dw = detector_grad_slot(acc, m, q);
    dw.head(F) += g * phi;
    dw(F) += g;
    upstream += g * w.head(F);
  }
  if (any && !m.repr.layers.empty()) {
    add_scaled(acc.repr, repr_backward(m.repr, x, upstream).params, 1.0);
  }
}

static ModelGrad compose(const Model& m, const std::vector<std::string>& reg_cats,
                         const ModelGrad& data) {
  ModelGrad out = zero_model_grad(m);
  for (const std::string& q : reg_cats) {
    out.detectors[q] = regularizer_grad(detector_of(m, q), m.hyper.lambda);
  }
  add_scaled(out, data, m.hyper.alpha);
  return out;
}

ModelGrad gradients(ObjectiveId id, const Model& m, const Dataset& d,
                    const std::vector<MiningAssignment>* assignments,
                    const std::string* category) {
  switch (id) {
    case ObjectiveId::Classification: {
      std::vector<std::string> cats;
      cats.insert(cats.end(), d.categories_strong.begin(), d.categories_strong.end());
      for (const std::string& c : d.categories_weak) {
        if (d.categories_strong.count(c) == 0) cats.push_back(c);
      }
      std::sort(cats.begin(), cats.end());
      ModelGrad data = zero_model_grad(m);
      for (const Bag& b : d.weak_bags) accumulate_classification_bag(m, b, cats, data);
      for (const Bag& b : d.strong_bags) accumulate_classification_bag(m, b, cats, data);
      return compose(m, cats, data);
    }
    case ObjectiveId::Strong: {
      std::vector<std::string> cats(d.categories_strong.begin(), d.categories_strong.end());
      cats.push_back(kBackground);
      ModelGrad data = zero_model_grad(m);
      for (const RegionExample& ex : strong_region_examples(d))
        accumulate_region_example(m, ex, data);
      return compose(m, cats, data);
    }
    case ObjectiveId::Weak: {
      if (!category) throw ValidationError("gradients: weak objective needs a category");
      const Eigen::VectorXd& w = detector_of(m, *category);
      const int F = m.repr.output_dim;
      ModelGrad data = zero_model_grad(m);
      for (const Bag& b : d.weak_bags) {
        int argmax = -1;
        const double s = bag_max_score(m, w, b, &argmax);
        const double g = hinge_subgrad(weak_bag_label(d, b, *category), s);
        if (g == 0.0) continue;
        const Eigen::VectorXd& x = b.regions[argmax].feature;
        const Eigen::VectorXd phi = repr_forward(m.repr, x);
        Eigen::VectorXd& dw = detector_grad_slot(data, m, *category);
        dw.head(F) += g * phi;
        dw(F) += g;
        if (!m.repr.layers.empty()) {
          add_scaled(data.repr, repr_backward(m.repr, x, g * w.head(F)).params, 1.0);
        }
      }
      return compose(m, {*category}, data);
    }
    case ObjectiveId::Joint: {
      if (!assignments) throw ValidationError("gradients: joint objective needs assignments");
      std::vector<std::string> cats;
      for (const auto& [cat, w] : m.detectors) cats.push_back(cat);
      ModelGrad data = zero_model_grad(m);
      for (const RegionExample& ex : joint_region_examples(d, *assignments))
        accumulate_region_example(m, ex, data);
      return compose(m, cats, data);
    }
  }
  throw ValidationError("gradients: unknown objective id");
}

}  // namespace detdisc
