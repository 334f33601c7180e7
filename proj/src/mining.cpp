#include "detdisc/mining.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "detdisc/eval.hpp"
#include "detdisc/objective.hpp"
#include "detdisc/parallel.hpp"

namespace detdisc {

static const Eigen::VectorXd& detector_of(const Model& m, const std::string& cat) {
  auto it = m.detectors.find(cat);
  if (it == m.detectors.end()) throw ValidationError("unknown category: " + cat);
  return it->second;
}

Eigen::VectorXd score_regions(const Model& m, const Bag& b, const std::string& category,
                              bool use_background_margin) {
  Eigen::VectorXd w = detector_of(m, category);
  if (use_background_margin) {
    auto bg = m.detectors.find(kBackground);
    if (bg != m.detectors.end()) w -= bg->second;
  }
  Eigen::VectorXd scores(b.regions.size());
  for (std::size_t i = 0; i < b.regions.size(); ++i) {
    scores(i) = detector_score(w, repr_forward(m.repr, b.regions[i].feature));
  }
  return scores;
}

std::vector<int> narrow_candidates(const Eigen::VectorXd& scores, int k) {
  if (scores.size() == 0) throw ValidationError("narrow_candidates: empty score vector");
  if (k < 1) throw ValidationError("narrow_candidates: k must be >= 1");
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return scores(a) > scores(b); });
  if (static_cast<int>(idx.size()) > k) idx.resize(k);
  return idx;
}

namespace {

// Flattened weak-split view in phi space for one category's refinement.
struct WeakMatrix {
  Eigen::MatrixXd phi_aug;          // n x (F+1), rows are [phi(x); 1]
  std::vector<int> bag_of_row;      // index into positive_bags, -1 for negatives
  std::vector<int> region_of_row;
  std::vector<const Bag*> positive_bags;
  std::vector<int> row_offset;      // first row of each positive bag
  std::vector<std::vector<int>> candidates;  // per positive bag, sorted ascending
};

WeakMatrix build_weak_matrix(const Model& m, const Dataset& d, const std::string& category,
                             const std::map<std::string, std::vector<int>>& candidates) {
  WeakMatrix wm;
  std::size_t n = 0;
  for (const Bag& b : d.weak_bags) n += b.regions.size();
  const int F = m.repr.output_dim;
  wm.phi_aug.resize(n, F + 1);

  // positive bags first so selection rows are contiguous per bag
  std::vector<const Bag*> positives, negatives;
  for (const Bag& b : d.weak_bags) {
    (label_of(b.weak_labels, category) == 1 ? positives : negatives).push_back(&b);
  }
  std::size_t row = 0;
  auto add_bag = [&](const Bag* b, int pos_index) {
    if (pos_index >= 0) wm.row_offset.push_back(static_cast<int>(row));
    for (std::size_t i = 0; i < b->regions.size(); ++i) {
      wm.phi_aug.row(row).head(F) = repr_forward(m.repr, b->regions[i].feature).transpose();
      wm.phi_aug(row, F) = 1.0;
      wm.bag_of_row.push_back(pos_index);
      wm.region_of_row.push_back(static_cast<int>(i));
      ++row;
    }
  };
  for (std::size_t p = 0; p < positives.size(); ++p) {
    const Bag* b = positives[p];
    auto it = candidates.find(b->id);
    if (it == candidates.end() || it->second.empty())
      throw ValidationError("latent_refine: positive bag " + b->id + " has no candidates");
    std::vector<int> cand = it->second;
    std::sort(cand.begin(), cand.end());
    for (int c : cand) {
      if (c < 0 || c >= static_cast<int>(b->regions.size()))
        throw ValidationError("latent_refine: candidate index out of range in bag " + b->id);
    }
    wm.positive_bags.push_back(b);
    wm.candidates.push_back(std::move(cand));
    add_bag(b, static_cast<int>(p));
  }
  for (const Bag* b : negatives) add_bag(b, -1);
  return wm;
}

// Argmax candidate per positive bag; ties resolved by lowest region index.
std::vector<int> select_candidates(const WeakMatrix& wm, const Eigen::VectorXd& w) {
  std::vector<int> sel(wm.positive_bags.size(), -1);
  for (std::size_t p = 0; p < wm.positive_bags.size(); ++p) {
    double best = 0;
    for (int c : wm.candidates[p]) {  // ascending, so strict > keeps lowest index
      const double s = wm.phi_aug.row(wm.row_offset[p] + c).dot(w);
      if (sel[p] < 0 || s > best) {
        best = s;
        sel[p] = c;
      }
    }
  }
  return sel;
}

Eigen::VectorXd labels_for(const WeakMatrix& wm, const std::vector<int>& sel) {
  Eigen::VectorXd y = Eigen::VectorXd::Constant(wm.phi_aug.rows(), -1.0);
  for (std::size_t p = 0; p < sel.size(); ++p) {
    y(wm.row_offset[p] + sel[p]) = 1.0;
  }
  return y;
}

// Size-normalized multiple-instance surrogate with selections fixed.
double surrogate_value(const WeakMatrix& wm, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, double lambda, double alpha) {
  const Eigen::Index n = wm.phi_aug.rows();
  const Eigen::VectorXd s = wm.phi_aug * w;
  double data = 0;
  for (Eigen::Index i = 0; i < n; ++i) data += std::max(0.0, 1.0 - y(i) * s(i));
  Eigen::VectorXd wt = w;
  wt(wt.size() - 1) = 0.0;
  return 0.5 * lambda * wt.squaredNorm() + alpha * data / static_cast<double>(n);
}

// Full-batch subgradient descent with Pegasos step 1/(lambda*t); returns the
// best iterate visited, so the surrogate never increases relative to w0.
Eigen::VectorXd fit_detector(const WeakMatrix& wm, const Eigen::VectorXd& y,
                             Eigen::VectorXd w, double lambda, double alpha,
                             bool* converged) {
  constexpr int kMaxSteps = 500;
  constexpr double kRelTol = 1e-6;
  const double n = static_cast<double>(wm.phi_aug.rows());

  Eigen::VectorXd best_w = w;
  double best_j = surrogate_value(wm, y, w, lambda, alpha);
  double prev_j = best_j;
  *converged = false;
  for (int t = 1; t <= kMaxSteps; ++t) {
    const Eigen::VectorXd s = wm.phi_aug * w;
    Eigen::VectorXd coeff(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      coeff(i) = y(i) * s(i) < 1.0 ? -y(i) : 0.0;
    }
    Eigen::VectorXd g = (alpha / n) * (wm.phi_aug.transpose() * coeff);
    Eigen::VectorXd wt = w;
    wt(wt.size() - 1) = 0.0;
    g += lambda * wt;
    w -= (1.0 / (lambda * t)) * g;

    const double j = surrogate_value(wm, y, w, lambda, alpha);
    if (j < best_j) {
      best_j = j;
      best_w = w;
    }
    if (std::abs(j - prev_j) < kRelTol * std::max(1.0, std::abs(prev_j))) {
      *converged = true;
      break;
    }
    prev_j = j;
  }
  return best_w;
}

}  // namespace

LatentRefineResult latent_refine(const Model& m, const Dataset& d,
                                 const std::string& category,
                                 const std::map<std::string, std::vector<int>>& candidates,
                                 const MiningConfig& cfg, int round) {
  if (cfg.max_latent_iters < 1)
    throw ConfigError("latent_refine: max_latent_iters must be >= 1");
  const WeakMatrix wm = build_weak_matrix(m, d, category, candidates);

  Eigen::VectorXd w = detector_of(m, category);
  if (cfg.use_background_margin) {
    auto bg = m.detectors.find(kBackground);
    if (bg != m.detectors.end()) w -= bg->second;
  }
  const double lambda = m.hyper.lambda;
  const double alpha = m.hyper.alpha;

  LatentRefineResult res;
  std::vector<int> sel = select_candidates(wm, w);
  res.surrogate_trace.push_back(surrogate_value(wm, labels_for(wm, sel), w, lambda, alpha));

  for (int iter = 0; iter < cfg.max_latent_iters; ++iter) {
    const Eigen::VectorXd y = labels_for(wm, sel);
    bool fit_ok = false;
    w = fit_detector(wm, y, w, lambda, alpha, &fit_ok);
    if (!fit_ok) res.inner_fit_converged = false;
    res.surrogate_trace.push_back(surrogate_value(wm, y, w, lambda, alpha));

    const std::vector<int> new_sel = select_candidates(wm, w);
    if (new_sel == sel) {
      res.selections_converged = true;
      break;
    }
    sel = new_sel;
    res.surrogate_trace.push_back(
        surrogate_value(wm, labels_for(wm, sel), w, lambda, alpha));
  }

  for (std::size_t p = 0; p < wm.positive_bags.size(); ++p) {
    MiningAssignment a;
    a.bag_id = wm.positive_bags[p]->id;
    a.category = category;
    a.region_index = sel[p];
    a.score = wm.phi_aug.row(wm.row_offset[p] + sel[p]).dot(w);
    a.round = round;
    res.assignments.push_back(std::move(a));
  }
  return res;
}

std::vector<MiningAssignment> mine_dataset(const Model& m, const Dataset& d,
                                           const MiningConfig& cfg, int round) {
  const std::vector<std::string> cats(d.categories_weak.begin(), d.categories_weak.end());
  std::vector<std::vector<MiningAssignment>> per_cat(cats.size());

  parallel_chunks(cats.size(), 1, [&](std::size_t c, std::size_t, std::size_t) {
    const std::string& p = cats[c];
    std::map<std::string, std::vector<int>> candidates;
    for (const Bag& b : d.weak_bags) {
      if (label_of(b.weak_labels, p) != 1) continue;
      candidates[b.id] =
          narrow_candidates(score_regions(m, b, p, cfg.use_background_margin), cfg.top_k);
    }
    if (candidates.empty()) return;
    per_cat[c] = latent_refine(m, d, p, candidates, cfg, round).assignments;
  });

  std::vector<MiningAssignment> out;
  for (std::vector<MiningAssignment>& v : per_cat) {
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

Dataset assign_background_strong(const Dataset& d, double iou_bg_threshold) {
  Dataset out = d;
  for (Bag& b : out.strong_bags) {
    std::vector<Box> positive_boxes;
    for (const Region& r : b.regions) {
      if (!r.strong_labels) throw ValidationError("bag " + b.id + ": strong region lacks labels");
      for (const auto& [cat, y] : *r.strong_labels) {
        if (cat != kBackground && y == 1) {
          positive_boxes.push_back(r.box);
          break;
        }
      }
    }
    for (Region& r : b.regions) {
      double max_iou = 0.0;
      for (const Box& pb : positive_boxes) max_iou = std::max(max_iou, iou(r.box, pb));
      (*r.strong_labels)[kBackground] = max_iou < iou_bg_threshold ? 1 : -1;
    }
  }
  return out;
}

}  // namespace detdisc
