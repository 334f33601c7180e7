#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "detdisc/core.hpp"

namespace detdisc {

struct Detection {
  std::string bag_id;
  std::string category;
  Box box;
  double score = 0.0;
};

// Ground-truth positive boxes per bag per category.
using GroundTruthBoxes = std::map<std::string, std::map<std::string, std::vector<Box>>>;

double iou(const Box& a, const Box& b);

// Greedy NMS for one bag+category, stable by (score desc, original order).
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

// All-points interpolated AP with greedy matching at iou_match. The per-bag
// map holds this category's ground-truth boxes. Returns nullopt when there is
// no ground truth at all.
std::optional<double> average_precision(std::vector<Detection> dets,
                                        const std::map<std::string, std::vector<Box>>& gt,
                                        double iou_match);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct EvalResult {
  std::map<std::string, double> per_category_ap;
  std::map<std::string, std::vector<PrPoint>> pr_curves;
  double mean_ap = 0.0;
  int categories_with_gt = 0;
};

// Scores every region of every bag with each requested detector, applies NMS
// per bag+category, and computes per-category AP plus the mean over
// categories that have ground truth.
EvalResult evaluate_map(const Model& m, const std::vector<const Bag*>& bags,
                        const GroundTruthBoxes& gt,
                        const std::vector<std::string>& categories, double iou_match,
                        double nms_threshold);

// Fraction of assignments whose region box overlaps a same-category
// ground-truth box in its bag at IoU >= iou_match. Empty input -> nullopt.
std::optional<double> mined_precision(const Dataset& d,
                                      const std::vector<MiningAssignment>& assignments,
                                      const GroundTruthBoxes& gt, double iou_match);

}  // namespace detdisc
