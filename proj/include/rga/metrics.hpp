#pragma once

#include <utility>
#include <vector>

#include "rga/regions.hpp"
#include "rga/victim.hpp"

namespace rga {

/// Per-mask IoUs plus aggregates. miou_std is the population standard
/// deviation (divisor N).
struct EvalRecord {
  std::vector<double> per_mask_iou;
  double miou = 0.0;
  double miou_std = 0.0;
  double asr50 = 0.0;
  double asr10 = 0.0;
  std::size_t n_masks = 0;

  /// Recomputes the aggregates from per_mask_iou. An empty list yields the
  /// "evaluation skipped" record (all zeros, n_masks = 0).
  static EvalRecord from_ious(std::vector<double> ious);
};

/// |p ∩ g| / |p ∪ g|; 1.0 when both masks are empty.
double iou(const BinaryMask& p, const BinaryMask& g);

/// Mean and population standard deviation.
std::pair<double, double> miou(const std::vector<double>& ious);

/// Fraction of IoUs <= threshold.
double asr_at(const std::vector<double>& ious, double threshold);

/// Point prompt for a mask: its rounded pixel centroid, or the nearest set
/// pixel to it (scan order breaks ties) when the centroid is not in the mask.
PointPrompt mask_prompt(const BinaryMask& m);

/// Clean-image masks act as ground truth. Each is matched by prompting the
/// victim at the mask's centroid on the adversarial image.
EvalRecord evaluate_attack(const VictimModel& victim, const Image& clean, const Image& adversarial);

/// Pools records by concatenating their per-mask IoUs in the given order.
EvalRecord pool_records(const std::vector<EvalRecord>& records);

}  // namespace rga
