#include "rga/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rga/errors.hpp"

namespace rga {

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("attack.epsilon must lie in [0, 1]");
  if (epsilon > 0.0 && !(alpha > 0.0 && alpha <= epsilon))
    throw ConfigError("attack.alpha must satisfy 0 < alpha <= epsilon");
  if (iterations < 1) throw ConfigError("attack.iterations must be >= 1");
  if (!(mu >= 0.0)) throw ConfigError("attack.mu must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("attack.lambda must be >= 0");
  sad.validate();
  transform.validate();
}

double rga_loss(const FeatureVector& y_a, const FeatureVector& y_s, const FeatureVector& y_g, double lambda,
                ad::NormMode mode) {
  ad::Tape<double> tape;
  const auto a = tape.leaf(y_a.cast<double>());
  const auto s = tape.leaf(y_s.cast<double>());
  const auto g = tape.leaf(y_g.cast<double>());
  return tape.value(rga_loss(tape, a, s, g, lambda, mode))[0];
}

Image resize_bilinear(const Image& image, Index height, Index width) {
  require_image(image, "resize_bilinear");
  if (height < 1 || width < 1) throw ContractError("resize_bilinear: target size must be positive");
  const Index sh = image.dim(0), sw = image.dim(1);
  ad::SampleGrid grid{height, width, {}, {}};
  grid.src_row.resize(static_cast<std::size_t>(height * width));
  grid.src_col.resize(grid.src_row.size());
  const double fy = static_cast<double>(sh) / static_cast<double>(height);
  const double fx = static_cast<double>(sw) / static_cast<double>(width);
  for (Index i = 0; i < height; ++i)
    for (Index j = 0; j < width; ++j) {
      const auto p = static_cast<std::size_t>(i * width + j);
      grid.src_row[p] = std::clamp((static_cast<double>(i) + 0.5) * fy - 0.5, 0.0, static_cast<double>(sh - 1));
      grid.src_col[p] = std::clamp((static_cast<double>(j) + 0.5) * fx - 0.5, 0.0, static_cast<double>(sw - 1));
    }
  ad::Tape<float> tape;
  return tape.value(ad::resample(tape, tape.leaf(image), std::move(grid)));
}

Image make_target(TargetKind kind, const Image& x, const MaskSet& masks, const SadConfig& sad, Rng& rng,
                  const std::vector<Image>* sample_pool) {
  require_image(x, "make_target");
  const Index h = x.dim(0), w = x.dim(1);
  switch (kind) {
    case TargetKind::Black:
      return Image::Zero(x.shape());
    case TargetKind::White:
      return Image::Constant(x.shape(), 1.f);
    case TargetKind::RandomNoise: {
      Image out(x.shape());
      for (Index i = 0; i < out.size(); ++i) out[i] = static_cast<float>(rng.uniform());
      return out;
    }
    case TargetKind::SampleImage: {
      if (!sample_pool || sample_pool->empty()) throw ConfigError("sample_image target requires a nonempty sample pool");
      const auto idx = rng.uniform_int(0, static_cast<std::int64_t>(sample_pool->size()) - 1);
      return resize_bilinear((*sample_pool)[static_cast<std::size_t>(idx)], h, w);
    }
    case TargetKind::RGM:
      if (masks.empty()) throw ContractError("make_target: RGM target needs at least one mask");
      return build_rgm(masks, sad).pixels;
  }
  throw ContractError("make_target: unknown target kind");
}

namespace {

struct Variant {
  bool rst = false;
  bool si = false;
  bool dim = false;
  bool guidance = false;
};

ad::Var encode_node(ad::Tape<float>& tape, const VictimModel& victim, ad::Var image) {
  Image value = tape.value(image);
  FeatureVector features = victim.encode(value);
  return ad::custom(
      tape, image, std::move(features),
      [&victim, value = std::move(value)](const Tensor& g) { return victim.encode_vjp(value, g); }, "encode");
}

Image clamp_box(const Image& v, const Image& lo, const Image& hi) {
  return Image(v.shape(), v.array().max(lo.array()).min(hi.array()).max(0.f).min(1.f));
}

AttackResult run_iterative(const VictimModel& victim, const Image& x, const AttackConfig& cfg, Variant variant,
                           const std::vector<Image>* sample_pool) {
  cfg.validate();
  require_image(x, "attack");
  const Index h = x.dim(0), w = x.dim(1);
  const auto eps = static_cast<float>(cfg.epsilon);
  const auto alpha = static_cast<float>(cfg.alpha);
  const auto mu = static_cast<float>(cfg.mu);

  Rng init_rng(derive_seed(cfg.seed, 1));
  Rng target_rng(derive_seed(cfg.seed, 2));
  Rng aug_rng(derive_seed(cfg.seed, 3));

  AttackResult res;
  const Image lo(x.shape(), x.array() - eps);
  const Image hi(x.shape(), x.array() + eps);

  Image xbar(x.shape());
  for (Index i = 0; i < x.size(); ++i)
    xbar[i] = std::clamp(x[i] + static_cast<float>(init_rng.uniform(-cfg.epsilon, cfg.epsilon)), 0.f, 1.f);
  xbar = clamp_box(xbar, lo, hi);

  const FeatureVector y_s = victim.encode(x);
  std::optional<FeatureVector> y_g;
  if (variant.guidance && cfg.lambda > 0.0) {
    const MaskSet masks = victim.segment_everything(x);
    res.n_source_masks = masks.size();
    TargetKind kind = cfg.target;
    if (kind == TargetKind::RGM && masks.empty()) {
      res.fallback_to_noise = true;
      kind = TargetKind::RandomNoise;
    }
    Image target = make_target(kind, x, masks, cfg.sad, target_rng, sample_pool);
    FeatureVector g = victim.encode(target);
    if (kind == TargetKind::RGM) res.rgm_used = RegionGuidedMap{std::move(target)};
    if (g.array().matrix().norm() < ad::kDivisionGuard)
      res.guidance_degenerate = true;
    else
      y_g = std::move(g);
  }

  auto loss_of = [&](ad::Tape<float>& tape, ad::Var y_a) {
    const ad::Var ys = tape.leaf(y_s);
    if (!y_g) return ad::cosine_similarity(tape, y_a, ys, cfg.norm_mode);
    const ad::Var yg = tape.leaf(*y_g);
    return rga_loss(tape, y_a, ys, yg, static_cast<float>(cfg.lambda), cfg.norm_mode);
  };
  auto plain_loss = [&](const Image& img) {
    ad::Tape<float> tape;
    const ad::Var ya = tape.leaf(victim.encode(img));
    return static_cast<double>(tape.value(loss_of(tape, ya))[0]);
  };

  const std::vector<double> unit_scale{1.0};
  const auto& scales = variant.si ? cfg.transform.si_scales : unit_scale;

  res.initial_loss = plain_loss(xbar);
  Tensor g = Tensor::Zero(x.shape());
  for (int t = 0; t < cfg.iterations; ++t) {
    ad::Tape<float> tape;
    const ad::Var xv = tape.leaf(xbar);
    ad::Var aug = xv;
    if (variant.rst) aug = ad::warp(tape, aug, sample_rst(aug_rng, cfg.transform, w, h));
    if (variant.dim) aug = ad::dim_apply(tape, aug, sample_dim(aug_rng, cfg.transform, h, w));

    ad::Var total{};
    for (std::size_t k = 0; k < scales.size(); ++k) {
      const ad::Var copy = ad::scale(tape, aug, static_cast<float>(scales[k]));
      const ad::Var l = loss_of(tape, encode_node(tape, victim, copy));
      total = k == 0 ? l : ad::add(tape, total, l);
    }
    const ad::Var mean = ad::scale(tape, total, 1.f / static_cast<float>(scales.size()));
    res.loss_trace.push_back(tape.value(mean)[0]);

    // ascend the divergence, i.e. descend the loss
    Tensor grad = ad::backward(tape, ad::scale(tape, mean, -1.f), xv).value;
    res.grad_norm_trace.push_back(grad.array().matrix().norm());
    if (cfg.grad_normalization == GradNormalization::L1) {
      const float l1 = grad.array().abs().sum();
      if (l1 > 0.f) grad.array() /= l1;
    }
    g.array() = mu * g.array() + grad.array();
    if (cfg.record_gradients) {
      res.grad_trace.push_back(grad);
      res.momentum_trace.push_back(g);
    }
    xbar = clamp_box(Image(x.shape(), xbar.array() + alpha * g.array().sign()), lo, hi);
  }
  res.final_loss = plain_loss(xbar);
  res.delta = Tensor(x.shape(), xbar.array() - x.array());
  res.adversarial = std::move(xbar);
  return res;
}

}  // namespace

AttackResult rga_attack(const VictimModel& victim, const Image& x, const AttackConfig& cfg,
                        const std::vector<Image>* sample_pool) {
  return run_iterative(victim, x, cfg, {.rst = true, .si = true, .dim = false, .guidance = true}, sample_pool);
}

AttackResult mim_attack(const VictimModel& victim, const Image& x, const AttackConfig& cfg, bool use_rgm,
                        const std::vector<Image>* sample_pool) {
  return run_iterative(victim, x, cfg, {.rst = false, .si = false, .dim = false, .guidance = use_rgm}, sample_pool);
}

AttackResult dim_attack(const VictimModel& victim, const Image& x, const AttackConfig& cfg, bool use_rgm,
                        const std::vector<Image>* sample_pool) {
  return run_iterative(victim, x, cfg, {.rst = false, .si = false, .dim = true, .guidance = use_rgm}, sample_pool);
}

AttackResult noise_baseline(const Image& x, double epsilon, Rng& rng) {
  require_image(x, "noise_baseline");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("noise_baseline: epsilon must lie in [0, 1]");
  AttackResult res;
  Image adv(x.shape());
  for (Index i = 0; i < x.size(); ++i)
    adv[i] = std::clamp(x[i] + static_cast<float>(rng.uniform(-epsilon, epsilon)), 0.f, 1.f);
  res.delta = Tensor(x.shape(), adv.array() - x.array());
  res.adversarial = std::move(adv);
  res.initial_loss = res.final_loss = std::numeric_limits<double>::quiet_NaN();
  return res;
}

Image quantize_8bit(const Image& image) {
  return Image(image.shape(), (image.array().max(0.f).min(1.f) * 255.f).round() / 255.f);
}

std::string to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::RGM: return "rgm";
    case TargetKind::Black: return "black";
    case TargetKind::White: return "white";
    case TargetKind::RandomNoise: return "random_noise";
    case TargetKind::SampleImage: return "sample_image";
  }
  return "unknown";
}

TargetKind target_kind_from_string(const std::string& s) {
  if (s == "rgm") return TargetKind::RGM;
  if (s == "black") return TargetKind::Black;
  if (s == "white") return TargetKind::White;
  if (s == "random_noise" || s == "noise") return TargetKind::RandomNoise;
  if (s == "sample_image" || s == "sample") return TargetKind::SampleImage;
  throw ConfigError("unknown target kind '" + s + "' (expected rgm|black|white|random_noise|sample_image)");
}

}  // namespace rga
