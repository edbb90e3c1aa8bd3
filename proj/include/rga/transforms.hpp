#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "rga/autodiff.hpp"
#include "rga/rng.hpp"
#include "rga/tensor.hpp"

namespace rga {

/// Similarity transform about the image center.
struct SimilarityTransform {
  double tx = 0.0;     ///< columns
  double ty = 0.0;     ///< rows
  double theta = 0.0;  ///< radians
  double s = 1.0;

  bool is_identity() const noexcept { return tx == 0.0 && ty == 0.0 && theta == 0.0 && s == 1.0; }
};

struct TransformConfig {
  double max_translate_frac = 0.1;
  double max_rotate_rad = 15.0 * std::numbers::pi / 180.0;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  std::vector<double> si_scales{1.0, 0.5, 0.25};
  double dim_prob = 0.5;
  double dim_pad_max_frac = 0.1;

  void validate() const;
};

SimilarityTransform sample_rst(Rng& rng, const TransformConfig& cfg, Index width, Index height);

/// Inverse-mapping grid for `t`: output pixel q samples the source at
/// R(-theta)(q - center - translation) / s + center.
ad::SampleGrid warp_grid(Index height, Index width, const SimilarityTransform& t);

/// Parameters of one DIM draw: the image is shrunk to new_height×new_width and
/// placed at (offset_row, offset_col) inside a zero canvas.
struct DimDraw {
  bool applied = false;
  Index new_height = 0, new_width = 0;
  Index offset_row = 0, offset_col = 0;
};

DimDraw sample_dim(Rng& rng, const TransformConfig& cfg, Index height, Index width);
ad::SampleGrid dim_grid(Index height, Index width, const DimDraw& draw);

namespace ad {

/// Bilinear similarity warp with zero fill; the identity transform is an
/// exact copy.
template <typename Scalar>
Var warp(Tape<Scalar>& tape, Var image, const SimilarityTransform& t) {
  const auto& v = tape.value(image);
  if (v.rank() != 3) throw DimensionError("warp: expected [H,W,C], got " + v.shape().str());
  if (t.is_identity()) return reshape(tape, image, v.shape());
  return resample(tape, image, warp_grid(v.dim(0), v.dim(1), t));
}

/// DIM resize-and-pad; identity when the draw was not applied or keeps size.
template <typename Scalar>
Var dim_apply(Tape<Scalar>& tape, Var image, const DimDraw& draw) {
  const auto& v = tape.value(image);
  if (!draw.applied || (draw.new_height == v.dim(0) && draw.new_width == v.dim(1)))
    return reshape(tape, image, v.shape());
  return resample(tape, image, dim_grid(v.dim(0), v.dim(1), draw));
}

/// Intensity-scaled copies factor·image, one per factor.
template <typename Scalar>
std::vector<Var> scale_copies(Tape<Scalar>& tape, Var image, const std::vector<double>& factors) {
  std::vector<Var> out;
  out.reserve(factors.size());
  for (double f : factors) out.push_back(scale(tape, image, static_cast<Scalar>(f)));
  return out;
}

}  // namespace ad

/// Tape-free conveniences for whole images.
Image warp(const Image& image, const SimilarityTransform& t);
Image dim_transform(Rng& rng, const Image& image, const TransformConfig& cfg);

}  // namespace rga
