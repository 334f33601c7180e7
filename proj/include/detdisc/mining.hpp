#pragma once

#include <map>
#include <string>
#include <vector>

#include "detdisc/core.hpp"

namespace detdisc {

struct MiningConfig {
  int top_k = 10;              // candidate narrowing size
  int max_latent_iters = 20;   // alternation cap in latent_refine
  bool use_background_margin = true;
};

// w_p . phi(x_i) per region; with use_background_margin and a background
// detector present, (w_p - w_b) . phi(x_i).
Eigen::VectorXd score_regions(const Model& m, const Bag& b, const std::string& category,
                              bool use_background_margin);

// Indices of the k highest scores, descending, ties by lowest index.
std::vector<int> narrow_candidates(const Eigen::VectorXd& scores, int k);

struct LatentRefineResult {
  std::vector<MiningAssignment> assignments;
  // Size-normalized multiple-instance surrogate after every selection / re-fit half step;
  // non-increasing when the inner fit is solved to tolerance.
  std::vector<double> surrogate_trace;
  bool selections_converged = false;
  bool inner_fit_converged = true;
};

// Alternating latent-SVM refinement for one category over its positive weak
// bags, restricted to the given candidate index sets (keyed by bag id).
// The model is never mutated; the detector is a local copy, initialized from
// the margin detector w_p - w_b when the config asks for margin scoring.
LatentRefineResult latent_refine(const Model& m, const Dataset& d,
                                 const std::string& category,
                                 const std::map<std::string, std::vector<int>>& candidates,
                                 const MiningConfig& cfg, int round = 0);

// Full Stage-C discovery: for every (weak bag, category with Y=+1) score,
// narrow to top_k, refine; exactly one assignment per pair. Categories are
// mined concurrently and merged in lexicographic category order.
std::vector<MiningAssignment> mine_dataset(const Model& m, const Dataset& d,
                                           const MiningConfig& cfg, int round = 0);

// Adds a background strong label to every strong region: +1 iff the region's
// IoU with every positively-labeled box in its bag is strictly below the
// threshold, else -1.
Dataset assign_background_strong(const Dataset& d, double iou_bg_threshold);

}  // namespace detdisc
