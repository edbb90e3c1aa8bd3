#include "rga/transforms.hpp"

#include <algorithm>

#include "rga/errors.hpp"

namespace rga {

void TransformConfig::validate() const {
  if (!(max_translate_frac >= 0.0 && max_translate_frac < 1.0))
    throw ConfigError("transform.max_translate_frac must lie in [0, 1)");
  if (!(max_rotate_rad >= 0.0)) throw ConfigError("transform.max_rotate_rad must be >= 0");
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi)) throw ConfigError("transform.scale_range must satisfy 0 < lo <= hi");
  if (si_scales.empty()) throw ConfigError("transform.si_scales must be nonempty");
  for (double s : si_scales)
    if (!(s > 0.0 && s <= 1.0)) throw ConfigError("transform.si_scales entries must lie in (0, 1]");
  if (!(dim_prob >= 0.0 && dim_prob <= 1.0)) throw ConfigError("transform.dim_prob must lie in [0, 1]");
  if (!(dim_pad_max_frac >= 0.0 && dim_pad_max_frac < 1.0))
    throw ConfigError("transform.dim_pad_max_frac must lie in [0, 1)");
}

SimilarityTransform sample_rst(Rng& rng, const TransformConfig& cfg, Index width, Index height) {
  const double tmax = cfg.max_translate_frac * static_cast<double>(std::min(width, height));
  SimilarityTransform t;
  t.tx = rng.uniform(-tmax, tmax);
  t.ty = rng.uniform(-tmax, tmax);
  t.theta = rng.uniform(-cfg.max_rotate_rad, cfg.max_rotate_rad);
  t.s = rng.uniform(cfg.scale_lo, cfg.scale_hi);
  return t;
}

ad::SampleGrid warp_grid(Index height, Index width, const SimilarityTransform& t) {
  if (!(t.s > 0.0)) throw ContractError("warp: scale must be > 0");
  ad::SampleGrid g{height, width, {}, {}};
  g.src_row.resize(static_cast<std::size_t>(height * width));
  g.src_col.resize(g.src_row.size());
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double c = std::cos(t.theta), s = std::sin(t.theta);
  for (Index i = 0; i < height; ++i)
    for (Index j = 0; j < width; ++j) {
      const double qx = static_cast<double>(j) - cx - t.tx;
      const double qy = static_cast<double>(i) - cy - t.ty;
      // rotate by -theta, then undo the scale
      const double px = (c * qx + s * qy) / t.s + cx;
      const double py = (-s * qx + c * qy) / t.s + cy;
      const auto p = static_cast<std::size_t>(i * width + j);
      g.src_row[p] = py;
      g.src_col[p] = px;
    }
  return g;
}

DimDraw sample_dim(Rng& rng, const TransformConfig& cfg, Index height, Index width) {
  DimDraw d;
  d.new_height = height;
  d.new_width = width;
  if (cfg.dim_prob <= 0.0 || !rng.bernoulli(cfg.dim_prob)) return d;
  d.applied = true;
  const auto max_h = static_cast<Index>(std::floor(cfg.dim_pad_max_frac * static_cast<double>(height)));
  const auto max_w = static_cast<Index>(std::floor(cfg.dim_pad_max_frac * static_cast<double>(width)));
  d.new_height = height - rng.uniform_int(0, max_h);
  d.new_width = width - rng.uniform_int(0, max_w);
  d.offset_row = rng.uniform_int(0, height - d.new_height);
  d.offset_col = rng.uniform_int(0, width - d.new_width);
  return d;
}

ad::SampleGrid dim_grid(Index height, Index width, const DimDraw& draw) {
  ad::SampleGrid g{height, width, {}, {}};
  g.src_row.resize(static_cast<std::size_t>(height * width));
  g.src_col.resize(g.src_row.size());
  const double sy = static_cast<double>(height) / static_cast<double>(draw.new_height);
  const double sx = static_cast<double>(width) / static_cast<double>(draw.new_width);
  for (Index i = 0; i < height; ++i)
    for (Index j = 0; j < width; ++j) {
      const auto p = static_cast<std::size_t>(i * width + j);
      const Index ri = i - draw.offset_row, rj = j - draw.offset_col;
      if (ri < 0 || ri >= draw.new_height || rj < 0 || rj >= draw.new_width) {
        // padding: a coordinate far enough outside that every tap is dropped
        g.src_row[p] = -2.0;
        g.src_col[p] = -2.0;
        continue;
      }
      // half-pixel centers; clamped so the shrunk image has no dark rim
      g.src_row[p] = std::clamp((static_cast<double>(ri) + 0.5) * sy - 0.5, 0.0, static_cast<double>(height - 1));
      g.src_col[p] = std::clamp((static_cast<double>(rj) + 0.5) * sx - 0.5, 0.0, static_cast<double>(width - 1));
    }
  return g;
}

Image warp(const Image& image, const SimilarityTransform& t) {
  ad::Tape<float> tape;
  return tape.value(ad::warp(tape, tape.leaf(image), t));
}

Image dim_transform(Rng& rng, const Image& image, const TransformConfig& cfg) {
  const auto draw = sample_dim(rng, cfg, image.dim(0), image.dim(1));
  ad::Tape<float> tape;
  return tape.value(ad::dim_apply(tape, tape.leaf(image), draw));
}

}  // namespace rga
