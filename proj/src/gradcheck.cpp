#include "detdisc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace detdisc {

namespace {

constexpr double kKinkMargin = 1e-3;  // keep fixtures this far from hinge/relu kinks

double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
}

// Minimum distance of any hinge margin, rectifier pre-activation, or weak
// argmax gap from its kink across everything the objectives evaluate.
double kink_distance(const GradCheckFixture& fx) {
  const Model& m = fx.model;
  const Dataset& d = fx.dataset;
  double dist = std::numeric_limits<double>::infinity();

  auto preact_dist = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd h = x;
    for (const Layer& l : m.repr.layers) {
      Eigen::VectorXd pre = l.weight * h + l.bias;
      if (l.activation == Activation::RectifiedLinear) {
        for (Eigen::Index i = 0; i < pre.size(); ++i)
          dist = std::min(dist, std::abs(pre(i)));
      }
      h = pre;
      if (l.activation == Activation::RectifiedLinear) h = h.cwiseMax(0.0);
    }
    return h;
  };
  auto hinge_dist = [&](int y, double s) { dist = std::min(dist, std::abs(1.0 - y * s)); };

  std::vector<std::string> cats;
  cats.insert(cats.end(), d.categories_strong.begin(), d.categories_strong.end());
  cats.insert(cats.end(), d.categories_weak.begin(), d.categories_weak.end());
  auto all_bags = [&](auto&& fn) {
    for (const Bag& b : d.strong_bags) fn(b);
    for (const Bag& b : d.weak_bags) fn(b);
  };

  // classification terms
  all_bags([&](const Bag& b) {
    const Eigen::VectorXd phi = preact_dist(whole_image_feature(b));
    for (const std::string& k : cats)
      hinge_dist(label_of(b.weak_labels, k), detector_score(m.detectors.at(k), phi));
  });
  // region-level terms (strong + joint labelings)
  for (const RegionExample& ex : joint_region_examples(d, fx.assignments)) {
    const Eigen::VectorXd phi = preact_dist(ex.bag->regions[ex.region_index].feature);
    for (const auto& [q, y] : ex.labels)
      hinge_dist(y, detector_score(m.detectors.at(q), phi));
  }
  // weak objective: margins at the max plus the argmax gap
  const Eigen::VectorXd& wu = m.detectors.at(fx.weak_category);
  for (const Bag& b : d.weak_bags) {
    std::vector<double> scores;
    for (const Region& r : b.regions)
      scores.push_back(detector_score(wu, preact_dist(r.feature)));
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    hinge_dist(label_of(b.weak_labels, fx.weak_category), sorted[0]);
    if (sorted.size() > 1) dist = std::min(dist, sorted[0] - sorted[1]);
  }
  return dist;
}

GradCheckFixture try_fixture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> feat(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1);

  GradCheckFixture fx;
  Dataset& d = fx.dataset;
  d.feature_dim = 4;
  d.categories_strong = {"A", "B"};
  d.categories_weak = {"U", "V"};
  fx.weak_category = "U";

  auto rand_vec = [&](int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = feat(rng);
    return v;
  };

  const std::vector<std::string> strong_cats = {"A", "B"};
  for (int bi = 0; bi < 2; ++bi) {
    Bag b;
    b.id = "s" + std::to_string(bi);
    b.source = Source::Strong;
    for (int ri = 0; ri < 3; ++ri) {
      Region r;
      r.feature = rand_vec(4);
      r.box = {10.0 * ri, 10.0 * bi, 10.0 * ri + 5.0, 10.0 * bi + 5.0};
      Labels labels;
      for (const std::string& q : strong_cats) labels[q] = coin(rng) ? 1 : -1;
      labels[kBackground] = coin(rng) ? 1 : -1;
      r.strong_labels = std::move(labels);
      b.regions.push_back(std::move(r));
    }
    for (const std::string& q : strong_cats) {
      int derived = -1;
      for (const Region& r : b.regions)
        if (label_of(*r.strong_labels, q) == 1) derived = 1;
      b.weak_labels[q] = derived;
    }
    d.strong_bags.push_back(std::move(b));
  }

  std::uniform_int_distribution<int> pick_region(0, 2);
  for (int bi = 0; bi < 2; ++bi) {
    Bag b;
    b.id = "w" + std::to_string(bi);
    b.source = Source::Weak;
    for (int ri = 0; ri < 3; ++ri) {
      Region r;
      r.feature = rand_vec(4);
      r.box = {10.0 * ri, 10.0 * bi, 10.0 * ri + 5.0, 10.0 * bi + 5.0};
      b.regions.push_back(std::move(r));
    }
    for (const std::string& p : {"U", "V"}) {
      const int y = (bi == 0 && p == std::string("U")) ? 1 : (coin(rng) ? 1 : -1);
      b.weak_labels[p] = y;
      if (y == 1) {
        MiningAssignment a;
        a.bag_id = b.id;
        a.category = p;
        a.region_index = pick_region(rng);
        fx.assignments.push_back(std::move(a));
      }
    }
    d.weak_bags.push_back(std::move(b));
  }

  Model& m = fx.model;
  m.repr = init_repr(seed ^ 0x5bf03635ULL, {4, 5, 3},
                     {Activation::RectifiedLinear, Activation::Identity});
  std::normal_distribution<double> wd(0.0, 0.6);
  const std::vector<std::string> all_cats = {"A", "B", "U", "V", kBackground};
  for (const std::string& c : all_cats) {
    Eigen::VectorXd w(4);
    for (int i = 0; i < 4; ++i) w(i) = wd(rng);
    m.detectors[c] = w;
  }
  m.hyper.alpha = 1.3;
  m.hyper.lambda = 0.7;
  return fx;
}

double objective_value(ObjectiveId id, const GradCheckFixture& fx, const Model& m) {
  switch (id) {
    case ObjectiveId::Classification:
      return classification_objective(m, fx.dataset).total;
    case ObjectiveId::Strong:
      return strong_objective(m, fx.dataset).total;
    case ObjectiveId::Weak:
      return weak_objective(m, fx.dataset, fx.weak_category);
    case ObjectiveId::Joint:
      return joint_objective(m, fx.dataset, fx.assignments).total;
  }
  throw ValidationError("objective_value: unknown id");
}

}  // namespace

GradCheckFixture random_fixture(std::uint64_t seed) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    GradCheckFixture fx = try_fixture(seed + 1000003ULL * attempt);
    if (kink_distance(fx) > kKinkMargin) return fx;
  }
  throw NumericError("random_fixture: could not find a kink-free fixture");
}

double repr_backward_max_error(std::uint64_t seed, double h) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  ReprParams p = init_repr(seed, {4, 6, 3},
                           {Activation::RectifiedLinear, Activation::Identity});
  Eigen::VectorXd x(4), upstream(3);

  // resample until pre-activations are away from the rectifier kink
  for (int attempt = 0;; ++attempt) {
    for (int i = 0; i < 4; ++i) x(i) = n(rng);
    double kink = std::numeric_limits<double>::infinity();
    Eigen::VectorXd hdd = x;
    for (const Layer& l : p.layers) {
      Eigen::VectorXd pre = l.weight * hdd + l.bias;
      if (l.activation == Activation::RectifiedLinear)
        for (Eigen::Index i = 0; i < pre.size(); ++i) kink = std::min(kink, std::abs(pre(i)));
      hdd = l.activation == Activation::RectifiedLinear ? pre.cwiseMax(0.0) : pre;
    }
    if (kink > kKinkMargin) break;
    if (attempt > 100) throw NumericError("repr_backward_max_error: no kink-free input");
  }
  for (int i = 0; i < 3; ++i) upstream(i) = n(rng);

  const BackwardResult analytic = repr_backward(p, x, upstream);
  const auto f = [&](const ReprParams& q, const Eigen::VectorXd& xx) {
    return upstream.dot(repr_forward(q, xx));
  };
  double max_err = 0.0;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    for (Eigen::Index r = 0; r < p.layers[l].weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.layers[l].weight.cols(); ++c) {
        ReprParams q = p;
        q.layers[l].weight(r, c) += h;
        const double fp = f(q, x);
        q.layers[l].weight(r, c) -= 2 * h;
        const double fm = f(q, x);
        max_err = std::max(max_err,
                           rel_error(analytic.params.layers[l].weight(r, c), (fp - fm) / (2 * h)));
      }
      ReprParams q = p;
      q.layers[l].bias(r) += h;
      const double fp = f(q, x);
      q.layers[l].bias(r) -= 2 * h;
      const double fm = f(q, x);
      max_err =
          std::max(max_err, rel_error(analytic.params.layers[l].bias(r), (fp - fm) / (2 * h)));
    }
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    max_err = std::max(max_err, rel_error(analytic.input(i), (f(p, xp) - f(p, xm)) / (2 * h)));
  }
  return max_err;
}

double objective_max_error(ObjectiveId id, const GradCheckFixture& fx, double h,
                           bool corrupt_one_entry) {
  ModelGrad analytic =
      gradients(id, fx.model, fx.dataset, &fx.assignments, &fx.weak_category);
  if (corrupt_one_entry && !analytic.detectors.empty()) {
    analytic.detectors.begin()->second(0) += 0.5;
  }

  double max_err = 0.0;
  for (const auto& [cat, w] : fx.model.detectors) {
    const auto git = analytic.detectors.find(cat);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      Model mp = fx.model;
      mp.detectors[cat](i) += h;
      const double fp = objective_value(id, fx, mp);
      mp.detectors[cat](i) -= 2 * h;
      const double fm = objective_value(id, fx, mp);
      const double a = git == analytic.detectors.end() ? 0.0 : git->second(i);
      max_err = std::max(max_err, rel_error(a, (fp - fm) / (2 * h)));
    }
  }
  for (std::size_t l = 0; l < fx.model.repr.layers.size(); ++l) {
    const Layer& layer = fx.model.repr.layers[l];
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        Model mp = fx.model;
        mp.repr.layers[l].weight(r, c) += h;
        const double fp = objective_value(id, fx, mp);
        mp.repr.layers[l].weight(r, c) -= 2 * h;
        const double fm = objective_value(id, fx, mp);
        max_err = std::max(
            max_err, rel_error(analytic.repr.layers[l].weight(r, c), (fp - fm) / (2 * h)));
      }
      Model mp = fx.model;
      mp.repr.layers[l].bias(r) += h;
      const double fp = objective_value(id, fx, mp);
      mp.repr.layers[l].bias(r) -= 2 * h;
      const double fm = objective_value(id, fx, mp);
      max_err =
          std::max(max_err, rel_error(analytic.repr.layers[l].bias(r), (fp - fm) / (2 * h)));
    }
  }
  return max_err;
}

std::vector<GradCheckResult> run_grad_checks(std::uint64_t seed, int fixtures,
                                             double tolerance, bool corrupt) {
  constexpr double kStep = 1e-5;
  std::vector<GradCheckResult> out;

  GradCheckResult repr_res{"repr.backward", 0.0, false};
  for (int i = 0; i < fixtures; ++i) {
    repr_res.max_rel_error =
        std::max(repr_res.max_rel_error, repr_backward_max_error(seed + i, kStep));
  }
  repr_res.pass = repr_res.max_rel_error < tolerance;
  out.push_back(repr_res);

  const std::pair<ObjectiveId, const char*> objectives[] = {
      {ObjectiveId::Classification, "objective.classification"},
      {ObjectiveId::Strong, "objective.strong"},
      {ObjectiveId::Weak, "objective.weak"},
      {ObjectiveId::Joint, "objective.joint"},
  };
  for (const auto& [id, name] : objectives) {
    GradCheckResult res{name, 0.0, false};
    for (int i = 0; i < fixtures; ++i) {
      const GradCheckFixture fx = random_fixture(seed + 7919ULL * (i + 1));
      res.max_rel_error =
          std::max(res.max_rel_error, objective_max_error(id, fx, kStep, corrupt));
    }
    res.pass = res.max_rel_error < tolerance;
    out.push_back(res);
  }
  return out;
}

}  // namespace detdisc
