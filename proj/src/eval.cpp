#include "detdisc/eval.hpp"

#include <algorithm>

namespace detdisc {

double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) throw ValidationError("iou: degenerate box");
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    throw ValidationError("nms: threshold must be in (0,1]");
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (iou(d.box, k.box) >= iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::optional<double> average_precision(std::vector<Detection> dets,
                                        const std::map<std::string, std::vector<Box>>& gt,
                                        double iou_match) {
  if (!(iou_match > 0.0 && iou_match <= 1.0))
    throw ValidationError("average_precision: iou_match must be in (0,1]");
  std::size_t num_gt = 0;
  for (const auto& [bag, boxes] : gt) num_gt += boxes.size();
  if (num_gt == 0) return std::nullopt;
  if (dets.empty()) return 0.0;

  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });

  std::map<std::string, std::vector<bool>> matched;
  for (const auto& [bag, boxes] : gt) matched[bag].assign(boxes.size(), false);

  std::vector<int> is_tp(dets.size(), 0);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    auto it = gt.find(dets[i].bag_id);
    if (it == gt.end()) continue;
    double best = 0.0;
    int best_j = -1;
    std::vector<bool>& used = matched[dets[i].bag_id];
    for (std::size_t j = 0; j < it->second.size(); ++j) {
      if (used[j]) continue;
      const double v = iou(dets[i].box, it->second[j]);
      if (v >= iou_match && v > best) {
        best = v;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j >= 0) {
      is_tp[i] = 1;
      used[best_j] = true;
    }
  }

  // All-points interpolation: area under the precision envelope. The sum is
  // kept as an exact rational so small fixtures come out bit-exact; extended
  // precision takes over if the running denominator overflows.
  using i128 = __int128;
  const auto gcd128 = [](i128 a, i128 b) {
    while (b != 0) {
      const i128 t = a % b;
      a = b;
      b = t;
    }
    return a < 0 ? -a : a;
  };
  const std::size_t n = dets.size();
  const long long total_gt = static_cast<long long>(num_gt);
  std::vector<long long> pr_num(n), pr_den(n);
  long long tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += is_tp[i];
    pr_num[i] = tp;
    pr_den[i] = static_cast<long long>(i + 1);
  }
  for (std::size_t i = n - 1; i-- > 0;) {
    if (static_cast<i128>(pr_num[i]) * pr_den[i + 1] <
        static_cast<i128>(pr_num[i + 1]) * pr_den[i]) {
      pr_num[i] = pr_num[i + 1];
      pr_den[i] = pr_den[i + 1];
    }
  }

  constexpr i128 kLimit = static_cast<i128>(1) << 100;
  i128 num = 0, den = 1;
  bool exact = true;
  for (std::size_t i = 0; i < n && exact; ++i) {
    if (!is_tp[i]) continue;  // recall only moves at true positives
    const i128 term_den = static_cast<i128>(total_gt) * pr_den[i];
    const i128 g = gcd128(den, term_den);
    const i128 scale = term_den / g;
    if (den > kLimit / scale) {
      exact = false;
      break;
    }
    num = num * scale + static_cast<i128>(pr_num[i]) * (den / g);
    den *= scale;
    const i128 r = gcd128(num, den);
    if (r > 1) {
      num /= r;
      den /= r;
    }
  }
  if (exact) {
    return static_cast<double>(static_cast<long double>(num) /
                               static_cast<long double>(den));
  }
  long double ap = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_tp[i]) continue;
    ap += static_cast<long double>(pr_num[i]) /
          (static_cast<long double>(total_gt) * static_cast<long double>(pr_den[i]));
  }
  return static_cast<double>(ap);
}

EvalResult evaluate_map(const Model& m, const std::vector<const Bag*>& bags,
                        const GroundTruthBoxes& gt,
                        const std::vector<std::string>& categories, double iou_match,
                        double nms_threshold) {
  // phi once per region, shared across categories
  std::vector<std::vector<Eigen::VectorXd>> phis(bags.size());
  for (std::size_t bi = 0; bi < bags.size(); ++bi) {
    phis[bi].reserve(bags[bi]->regions.size());
    for (const Region& r : bags[bi]->regions) {
      phis[bi].push_back(repr_forward(m.repr, r.feature));
    }
  }

  EvalResult res;
  double ap_sum = 0.0;
  for (const std::string& cat : categories) {
    auto wit = m.detectors.find(cat);
    if (wit == m.detectors.end())
      throw ValidationError("evaluate_map: unknown category " + cat);
    std::vector<Detection> dets;
    for (std::size_t bi = 0; bi < bags.size(); ++bi) {
      const Bag& b = *bags[bi];
      std::vector<Detection> bag_dets;
      for (std::size_t i = 0; i < b.regions.size(); ++i) {
        bag_dets.push_back(
            {b.id, cat, b.regions[i].box, detector_score(wit->second, phis[bi][i])});
      }
      std::vector<Detection> kept = nms(std::move(bag_dets), nms_threshold);
      dets.insert(dets.end(), kept.begin(), kept.end());
    }
    std::map<std::string, std::vector<Box>> cat_gt;
    for (const auto& [bag_id, per_cat] : gt) {
      auto it = per_cat.find(cat);
      if (it != per_cat.end() && !it->second.empty()) cat_gt[bag_id] = it->second;
    }
    const std::optional<double> ap = average_precision(dets, cat_gt, iou_match);
    if (!ap) continue;
    res.per_category_ap[cat] = *ap;
    ap_sum += *ap;
    ++res.categories_with_gt;

    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    std::size_t num_gt = 0;
    for (const auto& [bag, boxes] : cat_gt) num_gt += boxes.size();
    std::map<std::string, std::vector<bool>> matched;
    for (const auto& [bag, boxes] : cat_gt) matched[bag].assign(boxes.size(), false);
    int tp = 0;
    std::vector<PrPoint>& curve = res.pr_curves[cat];
    for (std::size_t i = 0; i < dets.size(); ++i) {
      auto it = cat_gt.find(dets[i].bag_id);
      if (it != cat_gt.end()) {
        double best = 0.0;
        int best_j = -1;
        std::vector<bool>& used = matched[dets[i].bag_id];
        for (std::size_t j = 0; j < it->second.size(); ++j) {
          if (used[j]) continue;
          const double v = iou(dets[i].box, it->second[j]);
          if (v >= iou_match && v > best) {
            best = v;
            best_j = static_cast<int>(j);
          }
        }
        if (best_j >= 0) {
          ++tp;
          used[best_j] = true;
        }
      }
      curve.push_back({static_cast<double>(tp) / static_cast<double>(num_gt),
                       static_cast<double>(tp) / static_cast<double>(i + 1)});
    }
  }
  res.mean_ap = res.categories_with_gt > 0 ? ap_sum / res.categories_with_gt : 0.0;
  return res;
}

std::optional<double> mined_precision(const Dataset& d,
                                      const std::vector<MiningAssignment>& assignments,
                                      const GroundTruthBoxes& gt, double iou_match) {
  if (assignments.empty()) return std::nullopt;
  std::map<std::string, const Bag*> bags;
  for (const Bag& b : d.weak_bags) bags[b.id] = &b;
  for (const Bag& b : d.strong_bags) bags[b.id] = &b;

  std::size_t hits = 0;
  for (const MiningAssignment& a : assignments) {
    auto bit = bags.find(a.bag_id);
    if (bit == bags.end()) throw ValidationError("mined_precision: unknown bag " + a.bag_id);
    const Bag& b = *bit->second;
    if (a.region_index < 0 || a.region_index >= static_cast<int>(b.regions.size()))
      throw ValidationError("mined_precision: region index out of range in bag " + a.bag_id);
    const Box& box = b.regions[a.region_index].box;
    auto git = gt.find(a.bag_id);
    if (git == gt.end()) continue;
    auto cit = git->second.find(a.category);
    if (cit == git->second.end()) continue;
    for (const Box& g : cit->second) {
      if (iou(box, g) >= iou_match) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(assignments.size());
}

}  // namespace detdisc
