#include "detdisc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

namespace detdisc {

namespace {

constexpr double kCanvas = 1000.0;

Eigen::VectorXd random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = n(rng);
  const double norm = v.norm();
  return norm > 0 ? Eigen::VectorXd(v / norm) : random_unit(rng, dim);
}

Eigen::VectorXd gaussian(std::mt19937_64& rng, const Eigen::VectorXd& mean, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  Eigen::VectorXd v = mean;
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += n(rng);
  return v;
}

Box random_gt_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> size(100.0, 220.0);
  const double w = size(rng);
  const double h = size(rng);
  std::uniform_real_distribution<double> px(0.0, kCanvas - w);
  std::uniform_real_distribution<double> py(0.0, kCanvas - h);
  const double x = px(rng);
  const double y = py(rng);
  return {x, y, x + w, y + h};
}

// Jitter around gt keeping IoU >= 0.7.
Box jitter_box(std::mt19937_64& rng, const Box& gt) {
  const double w = gt.x_max - gt.x_min;
  const double h = gt.y_max - gt.y_min;
  std::uniform_real_distribution<double> shift(-0.06, 0.06);
  std::uniform_real_distribution<double> scale(0.95, 1.05);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double nw = w * scale(rng);
    const double nh = h * scale(rng);
    const double nx = gt.x_min + shift(rng) * w;
    const double ny = gt.y_min + shift(rng) * h;
    Box b{nx, ny, nx + nw, ny + nh};
    if (b.x_min >= 0 && b.y_min >= 0 && b.x_max <= kCanvas && b.y_max <= kCanvas &&
        iou(b, gt) >= 0.7) {
      return b;
    }
  }
  return gt;
}

// A box overlapping every ground-truth box below IoU 0.3.
Box background_box(std::mt19937_64& rng, const std::vector<Box>& gt_boxes) {
  std::uniform_real_distribution<double> size(60.0, 180.0);
  for (int attempt = 0; attempt < 500; ++attempt) {
    const double w = size(rng);
    const double h = size(rng);
    std::uniform_real_distribution<double> px(0.0, kCanvas - w);
    std::uniform_real_distribution<double> py(0.0, kCanvas - h);
    const double x = px(rng);
    const double y = py(rng);
    Box b{x, y, x + w, y + h};
    bool ok = true;
    for (const Box& g : gt_boxes) {
      if (iou(b, g) >= 0.3) {
        ok = false;
        break;
      }
    }
    if (ok) return b;
  }
  throw ConfigError("synth: could not place a background box away from ground truth");
}

Eigen::MatrixXd random_rotation(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd g(dim, dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) g(r, c) = n(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  // fix column signs so the factorization is unique
  Eigen::MatrixXd rmat = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < dim; ++c) {
    if (rmat(c, c) < 0) q.col(c) = -q.col(c);
  }
  return q;
}

struct MeanBank {
  Eigen::VectorXd objectness;  // shared component of every object category
  std::vector<Eigen::VectorXd> object_means;
  std::vector<Eigen::VectorXd> context_means;
};

MeanBank sample_means(std::mt19937_64& rng, const SynthConfig& cfg) {
  MeanBank bank;
  const int d = cfg.feature_dim;
  const double sep = cfg.cluster_separation;
  bank.objectness = random_unit(rng, d);

  const int num_objects = cfg.num_categories_strong + cfg.num_categories_weak;
  auto far_enough = [&](const Eigen::VectorXd& mu, const std::vector<Eigen::VectorXd>& set) {
    for (const Eigen::VectorXd& other : set) {
      if ((mu - other).norm() < sep) return false;
    }
    return true;
  };

  for (int k = 0; k < num_objects; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 2000; ++attempt) {
      Eigen::VectorXd mu = sep * bank.objectness + sep * random_unit(rng, d);
      if (far_enough(mu, bank.object_means)) {
        bank.object_means.push_back(std::move(mu));
        placed = true;
        break;
      }
    }
    if (!placed)
      throw ConfigError(
          "synth: infeasible geometry, cannot separate object clusters at "
          "separation " +
          std::to_string(sep) + " in " + std::to_string(d) + " dims");
  }

  for (int g = 0; g < cfg.num_context_clusters; ++g) {
    bool placed = false;
    for (int attempt = 0; attempt < 2000; ++attempt) {
      Eigen::VectorXd v = random_unit(rng, d);
      v -= v.dot(bank.objectness) * bank.objectness;  // no objectness component
      if (v.norm() < 1e-9) continue;
      v.normalize();
      Eigen::VectorXd nu = 1.25 * sep * v;
      if (far_enough(nu, bank.context_means) && far_enough(nu, bank.object_means)) {
        bank.context_means.push_back(std::move(nu));
        placed = true;
        break;
      }
    }
    if (!placed)
      throw ConfigError(
          "synth: infeasible geometry, cannot separate context clusters at "
          "separation " +
          std::to_string(sep) + " in " + std::to_string(d) + " dims");
  }
  return bank;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_categories_strong < 1 || num_categories_weak < 1)
    throw ConfigError("synth: need at least one category per split");
  if (bags_per_category < 1) throw ConfigError("synth: bags_per_category must be >= 1");
  if (feature_dim < 2) throw ConfigError("synth: feature_dim must be >= 2");
  if (cluster_separation <= 0) throw ConfigError("synth: cluster_separation must be positive");
  if (noise_sigma <= 0) throw ConfigError("synth: noise_sigma must be positive");
  if (num_context_clusters < 0 || context_regions_per_bag < 0)
    throw ConfigError("synth: context counts must be non-negative");
  if (num_context_clusters == 0 && context_regions_per_bag > 0)
    throw ConfigError("synth: context regions requested without context clusters");
  if (positives_per_strong_bag < 1)
    throw ConfigError("synth: positives_per_strong_bag must be >= 1");
  if (regions_per_bag < positives_per_strong_bag + context_regions_per_bag + 1)
    throw ConfigError("synth: regions_per_bag too small for positives + context + noise");
  if (transform && (transform->rows() != feature_dim || transform->cols() != feature_dim))
    throw ConfigError("synth: transform must be feature_dim x feature_dim");
}

std::pair<Dataset, SynthGroundTruth> generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 master(cfg.seed);

  Dataset d;
  d.feature_dim = cfg.feature_dim;
  SynthGroundTruth gt;
  gt.noise_sigma = cfg.noise_sigma;

  const MeanBank bank = sample_means(master, cfg);
  std::vector<std::string> strong_cats, weak_cats;
  for (int k = 0; k < cfg.num_categories_strong; ++k) {
    strong_cats.push_back("aux" + std::to_string(k));
    d.categories_strong.insert(strong_cats.back());
    gt.means[strong_cats.back()] = bank.object_means[k];
  }
  for (int k = 0; k < cfg.num_categories_weak; ++k) {
    weak_cats.push_back("novel" + std::to_string(k));
    d.categories_weak.insert(weak_cats.back());
    gt.means[weak_cats.back()] = bank.object_means[cfg.num_categories_strong + k];
  }
  gt.context_means = bank.context_means;

  std::optional<Eigen::MatrixXd> transform;
  if (cfg.enable_transform) {
    transform = cfg.transform ? *cfg.transform : random_rotation(master, cfg.feature_dim);
    gt.transform = transform;
  }

  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(cfg.feature_dim);
  std::uniform_int_distribution<int> pick_context(
      0, std::max(0, cfg.num_context_clusters - 1));

  std::uint64_t bag_counter = 0;
  auto bag_rng = [&]() {
    std::uint64_t s = cfg.seed;
    s ^= 0x9e3779b97f4a7c15ULL + (++bag_counter) + (s << 6) + (s >> 2);
    return std::mt19937_64(s);
  };

  char idbuf[64];

  // Strong split: per-region labels plus ground-truth boxes.
  for (int k = 0; k < cfg.num_categories_strong; ++k) {
    const std::string& cat = strong_cats[k];
    for (int n = 0; n < cfg.bags_per_category; ++n) {
      std::mt19937_64 rng = bag_rng();
      std::snprintf(idbuf, sizeof(idbuf), "S_%s_%03d", cat.c_str(), n);
      Bag b;
      b.id = idbuf;
      b.source = Source::Strong;

      std::vector<Box> gt_boxes;
      for (int pidx = 0; pidx < cfg.positives_per_strong_bag; ++pidx) {
        gt_boxes.push_back(random_gt_box(rng));
      }
      gt.boxes[b.id][cat] = gt_boxes;

      for (int pidx = 0; pidx < cfg.positives_per_strong_bag; ++pidx) {
        Region r;
        r.feature = gaussian(rng, gt.means.at(cat), cfg.noise_sigma);
        r.box = jitter_box(rng, gt_boxes[pidx]);
        Labels labels;
        for (const std::string& q : strong_cats) labels[q] = (q == cat) ? 1 : -1;
        r.strong_labels = std::move(labels);
        b.regions.push_back(std::move(r));
      }
      for (int c = 0; c < cfg.context_regions_per_bag; ++c) {
        Region r;
        r.feature = gaussian(rng, bank.context_means[pick_context(rng)], cfg.noise_sigma);
        r.box = background_box(rng, gt_boxes);
        Labels labels;
        for (const std::string& q : strong_cats) labels[q] = -1;
        r.strong_labels = std::move(labels);
        b.regions.push_back(std::move(r));
      }
      while (static_cast<int>(b.regions.size()) < cfg.regions_per_bag) {
        Region r;
        r.feature = gaussian(rng, origin, cfg.noise_sigma);
        r.box = background_box(rng, gt_boxes);
        Labels labels;
        for (const std::string& q : strong_cats) labels[q] = -1;
        r.strong_labels = std::move(labels);
        b.regions.push_back(std::move(r));
      }
      std::shuffle(b.regions.begin(), b.regions.end(), rng);

      for (const std::string& q : strong_cats) b.weak_labels[q] = (q == cat) ? 1 : -1;
      d.strong_bags.push_back(std::move(b));
    }
  }

  // Weak split: image-level labels only; planted index kept in the sidecar.
  for (int k = 0; k < cfg.num_categories_weak; ++k) {
    const std::string& cat = weak_cats[k];
    for (int n = 0; n < cfg.bags_per_category; ++n) {
      std::mt19937_64 rng = bag_rng();
      std::snprintf(idbuf, sizeof(idbuf), "W_%s_%03d", cat.c_str(), n);
      Bag b;
      b.id = idbuf;
      b.source = Source::Weak;

      const Box gt_box = random_gt_box(rng);
      gt.boxes[b.id][cat] = {gt_box};

      std::vector<std::pair<Region, bool>> regions;  // (region, is_planted)
      {
        Region r;
        r.feature = gaussian(rng, gt.means.at(cat), cfg.noise_sigma);
        r.box = jitter_box(rng, gt_box);
        regions.emplace_back(std::move(r), true);
      }
      for (int c = 0; c < cfg.context_regions_per_bag; ++c) {
        Region r;
        r.feature = gaussian(rng, bank.context_means[pick_context(rng)], cfg.noise_sigma);
        r.box = background_box(rng, {gt_box});
        regions.emplace_back(std::move(r), false);
      }
      while (static_cast<int>(regions.size()) < cfg.regions_per_bag) {
        Region r;
        r.feature = gaussian(rng, origin, cfg.noise_sigma);
        r.box = background_box(rng, {gt_box});
        regions.emplace_back(std::move(r), false);
      }
      std::shuffle(regions.begin(), regions.end(), rng);

      int planted_index = -1;
      for (std::size_t i = 0; i < regions.size(); ++i) {
        if (regions[i].second) planted_index = static_cast<int>(i);
        b.regions.push_back(std::move(regions[i].first));
      }
      gt.planted[b.id][cat] = planted_index;

      // Classification-style whole-image feature; the domain-shift transform
      // applies here, in the classification domain, not to region features.
      Eigen::VectorXd img = Eigen::VectorXd::Zero(cfg.feature_dim);
      for (const Region& r : b.regions) img += r.feature;
      img /= static_cast<double>(b.regions.size());
      b.whole_image_feature = transform ? Eigen::VectorXd(*transform * img) : img;

      for (const std::string& p : weak_cats) b.weak_labels[p] = (p == cat) ? 1 : -1;
      d.weak_bags.push_back(std::move(b));
    }
  }

  return {std::move(d), std::move(gt)};
}

int bayes_oracle(const SynthGroundTruth& gt, const Bag& b, const std::string& category) {
  auto it = gt.means.find(category);
  if (it == gt.means.end()) throw ValidationError("bayes_oracle: unknown category " + category);
  const Eigen::VectorXd& mu = it->second;
  const double two_sigma_sq = 2.0 * gt.noise_sigma * gt.noise_sigma;
  int best = -1;
  double best_ratio = 0;
  for (std::size_t i = 0; i < b.regions.size(); ++i) {
    const Eigen::VectorXd& x = b.regions[i].feature;
    const double ratio = (x.squaredNorm() - (x - mu).squaredNorm()) / two_sigma_sq;
    if (best < 0 || ratio > best_ratio) {
      best_ratio = ratio;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace detdisc
