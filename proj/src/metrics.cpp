#include "rga/metrics.hpp"

#include <cmath>
#include <limits>
#include <tuple>

#include "rga/errors.hpp"

namespace rga {

double iou(const BinaryMask& p, const BinaryMask& g) {
  if (!p.same_size(g)) throw ContractError("iou: masks differ in size");
  const Index inter = (p.bits() && g.bits()).count();
  const Index uni = (p.bits() || g.bits()).count();
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::pair<double, double> miou(const std::vector<double>& ious) {
  if (ious.empty()) throw ContractError("miou: empty IoU list");
  const auto v = Eigen::Map<const Eigen::ArrayXd>(ious.data(), static_cast<Index>(ious.size()));
  const double mean = v.mean();
  const double var = (v - mean).square().mean();
  return {mean, std::sqrt(var)};
}

double asr_at(const std::vector<double>& ious, double threshold) {
  if (ious.empty()) throw ContractError("asr_at: empty IoU list");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ContractError("asr_at: threshold must lie in [0, 1]");
  std::size_t hits = 0;
  for (double v : ious) hits += v <= threshold ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ious.size());
}

EvalRecord EvalRecord::from_ious(std::vector<double> ious) {
  EvalRecord r;
  r.per_mask_iou = std::move(ious);
  r.n_masks = r.per_mask_iou.size();
  if (r.n_masks == 0) return r;
  std::tie(r.miou, r.miou_std) = rga::miou(r.per_mask_iou);
  r.asr50 = asr_at(r.per_mask_iou, 0.50);
  r.asr10 = asr_at(r.per_mask_iou, 0.10);
  return r;
}

PointPrompt mask_prompt(const BinaryMask& m) {
  if (m.empty()) throw ContractError("mask_prompt: empty mask");
  double sr = 0, sc = 0;
  for (Index r = 0; r < m.height(); ++r)
    for (Index c = 0; c < m.width(); ++c)
      if (m(r, c)) {
        sr += static_cast<double>(r);
        sc += static_cast<double>(c);
      }
  const auto n = static_cast<double>(m.area());
  const auto cr = static_cast<Index>(std::lround(sr / n));
  const auto cc = static_cast<Index>(std::lround(sc / n));
  if (m(cr, cc)) return {cc, cr};
  PointPrompt best{};
  Index best_d2 = std::numeric_limits<Index>::max();
  for (Index r = 0; r < m.height(); ++r)
    for (Index c = 0; c < m.width(); ++c) {
      if (!m(r, c)) continue;
      const Index d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = {c, r};
      }
    }
  return best;
}

EvalRecord evaluate_attack(const VictimModel& victim, const Image& clean, const Image& adversarial) {
  if (!(clean.shape() == adversarial.shape()))
    throw ContractError("evaluate_attack: clean " + clean.shape().str() + " vs adversarial " +
                        adversarial.shape().str());
  const MaskSet truth = victim.segment_everything(clean);
  std::vector<double> ious;
  ious.reserve(truth.size());
  for (const auto& g : truth.masks) ious.push_back(iou(victim.segment_point(adversarial, mask_prompt(g)), g));
  return EvalRecord::from_ious(std::move(ious));
}

EvalRecord pool_records(const std::vector<EvalRecord>& records) {
  std::vector<double> all;
  for (const auto& r : records) all.insert(all.end(), r.per_mask_iou.begin(), r.per_mask_iou.end());
  return EvalRecord::from_ious(std::move(all));
}

}  // namespace rga
