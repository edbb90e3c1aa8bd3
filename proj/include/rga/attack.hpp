#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rga/autodiff.hpp"
#include "rga/regions.hpp"
#include "rga/rng.hpp"
#include "rga/tensor.hpp"
#include "rga/transforms.hpp"
#include "rga/victim.hpp"

namespace rga {

enum class TargetKind { RGM, Black, White, RandomNoise, SampleImage };

enum class GradNormalization {
  None,  ///< momentum sums raw gradients
  L1,    ///< g' divided by its L1 norm before the momentum sum
};

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double alpha = 2.0 / 255.0;
  int iterations = 40;
  double mu = 1.0;
  double lambda = 1.0;
  SadConfig sad;
  TransformConfig transform;
  TargetKind target = TargetKind::RGM;
  std::uint64_t seed = 0;
  ad::NormMode norm_mode = ad::NormMode::NormProduct;
  GradNormalization grad_normalization = GradNormalization::None;
  /// Keep g'_t and g_{t+1} for every iteration in the result.
  bool record_gradients = false;

  /// Throws ConfigError. Requires 0 < alpha <= epsilon <= 1 unless epsilon
  /// is 0, which is accepted as a no-op budget.
  void validate() const;
};

struct AttackResult {
  Tensor delta;
  Image adversarial;
  /// Mean loss over the augmented copies at each iterate, before its update.
  std::vector<double> loss_trace;
  /// |g'_t|_2 per iteration.
  std::vector<double> grad_norm_trace;
  /// Untransformed loss at the first and last iterate (NaN when no loss is
  /// defined, e.g. the noise baseline).
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::optional<RegionGuidedMap> rgm_used;
  std::size_t n_source_masks = 0;
  /// Target was RGM but the victim returned no masks; RandomNoise was used.
  bool fallback_to_noise = false;
  /// Target features had zero norm; the guidance term was dropped.
  bool guidance_degenerate = false;
  std::vector<Tensor> grad_trace;      ///< g'_t (record_gradients)
  std::vector<Tensor> momentum_trace;  ///< g_{t+1} (record_gradients)
};

/// cos(y_a, y_s) - lambda · cos(y_a, y_g). The attack moves features away
/// from the source and toward the guidance, i.e. it drives this value down.
template <typename Scalar>
ad::Var rga_loss(ad::Tape<Scalar>& tape, ad::Var y_a, ad::Var y_s, ad::Var y_g, Scalar lambda,
                 ad::NormMode mode = ad::NormMode::NormProduct) {
  const ad::Var source_term = ad::cosine_similarity(tape, y_a, y_s, mode);
  const ad::Var guide_term = ad::cosine_similarity(tape, y_a, y_g, mode);
  return ad::sub(tape, source_term, ad::scale(tape, guide_term, lambda));
}

double rga_loss(const FeatureVector& y_a, const FeatureVector& y_s, const FeatureVector& y_g, double lambda,
                ad::NormMode mode = ad::NormMode::NormProduct);

/// Bilinear resize with half-pixel centers.
Image resize_bilinear(const Image& image, Index height, Index width);

Image make_target(TargetKind kind, const Image& x, const MaskSet& masks, const SadConfig& sad, Rng& rng,
                  const std::vector<Image>* sample_pool = nullptr);

/// Region-guided attack: momentum sign ascent of the feature divergence
/// with one random similarity warp and intensity-scale averaging per step.
AttackResult rga_attack(const VictimModel& victim, const Image& x, const AttackConfig& cfg,
                        const std::vector<Image>* sample_pool = nullptr);

/// Momentum iterative attack without input diversity. use_rgm = false
/// optimizes the source-divergence term only (lambda = 0).
AttackResult mim_attack(const VictimModel& victim, const Image& x, const AttackConfig& cfg, bool use_rgm,
                        const std::vector<Image>* sample_pool = nullptr);

/// mim_attack with a DIM resize-and-pad draw applied before every encode.
AttackResult dim_attack(const VictimModel& victim, const Image& x, const AttackConfig& cfg, bool use_rgm,
                        const std::vector<Image>* sample_pool = nullptr);

/// Uniform ±epsilon noise, clipped to the image range.
AttackResult noise_baseline(const Image& x, double epsilon, Rng& rng);

/// Round every intensity to the nearest multiple of 1/255.
Image quantize_8bit(const Image& image);

std::string to_string(TargetKind kind);
TargetKind target_kind_from_string(const std::string& s);

}  // namespace rga
