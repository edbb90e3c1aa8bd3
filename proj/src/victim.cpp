#include "rga/victim.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "rga/errors.hpp"
#include "rga/rng.hpp"

namespace rga {

namespace {

Tensor uniform_kernel(Rng& rng, Index cin, Index cout) {
  Tensor k(Shape{3, 3, cin, cout});
  const double bound = std::sqrt(1.0 / static_cast<double>(3 * 3 * cin));
  for (Index i = 0; i < k.size(); ++i) k[i] = static_cast<float>(rng.uniform(-bound, bound));
  return k;
}

}  // namespace

ToyEncoderWeights make_toy_weights(std::uint64_t seed) {
  Rng rng(seed);
  ToyEncoderWeights w;
  w.conv1 = uniform_kernel(rng, 3, kToyChannels1);
  w.conv2 = uniform_kernel(rng, kToyChannels1, kToyChannels2);
  w.seed = seed;
  return w;
}

std::uint64_t weights_checksum(const ToyEncoderWeights& w) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const Tensor& t) {
    for (Index i = 0; i < t.size(); ++i) {
      std::uint32_t bits;
      const float v = t[i];
      std::memcpy(&bits, &v, sizeof bits);
      for (int b = 0; b < 4; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 0x100000001b3ULL;
      }
    }
  };
  feed(w.conv1);
  feed(w.conv2);
  return h;
}

void require_toy_dimensions(const Shape& shape) {
  if (shape.rank() != 3 || shape[2] != 3)
    throw DimensionError("toy encoder: expected an H×W×3 image, got " + shape.str());
  const Index h = shape[0], w = shape[1];
  if (h < kToyDownsample || w < kToyDownsample || h % kToyDownsample != 0 || w % kToyDownsample != 0)
    throw DimensionError("toy encoder: image is " + std::to_string(h) + "x" + std::to_string(w) +
                         "; height and width must be positive multiples of 4 (rga-forge reflect-pads inputs "
                         "automatically, pad manually when calling the library)");
}

FeatureVector toy_encode(const ToyEncoderWeights& w, const Image& image) {
  ad::Tape<float> tape;
  const auto nodes = ad::toy_encode(tape, w, tape.leaf(image));
  return tape.value(nodes.features);
}

Eigen::ArrayXXi toy_label_map(const ToyEncoderWeights& w, const Image& image) {
  ad::Tape<float> tape;
  const auto nodes = ad::toy_encode(tape, w, tape.leaf(image));
  const Tensor& pre = tape.value(nodes.pre_norm);
  Eigen::ArrayXXi labels(pre.dim(0), pre.dim(1));
  for (Index r = 0; r < pre.dim(0); ++r)
    for (Index c = 0; c < pre.dim(1); ++c) {
      int best = 0;
      for (Index k = 1; k < pre.dim(2); ++k)
        if (pre(r, c, k) > pre(r, c, best)) best = static_cast<int>(k);
      labels(r, c) = best;
    }
  return labels;
}

Eigen::ArrayXXi upsample_labels(const Eigen::ArrayXXi& labels, Index factor) {
  Eigen::ArrayXXi up(labels.rows() * factor, labels.cols() * factor);
  for (Index r = 0; r < up.rows(); ++r)
    for (Index c = 0; c < up.cols(); ++c) up(r, c) = labels(r / factor, c / factor);
  return up;
}

namespace {

BinaryMask label_mask(const Eigen::ArrayXXi& labels, int value) {
  BinaryMask m(labels.rows(), labels.cols());
  for (Index r = 0; r < labels.rows(); ++r)
    for (Index c = 0; c < labels.cols(); ++c) m(r, c) = labels(r, c) == value;
  return m;
}

}  // namespace

MaskSet toy_segment_everything(const ToyEncoderWeights& w, const Image& image, Index min_area) {
  if (min_area < 1) throw ContractError("toy_segment_everything: min_area must be >= 1");
  const auto labels = upsample_labels(toy_label_map(w, image), kToyDownsample);
  MaskSet out;
  for (int value = 0; value < static_cast<int>(kToyChannels2); ++value) {
    if (!(labels == value).any()) continue;
    for (auto& comp : connected_components(label_mask(labels, value), 4))
      if (comp.area() >= min_area) out.masks.push_back(std::move(comp));
  }
  return out;
}

BinaryMask toy_segment_point(const ToyEncoderWeights& w, const Image& image, PointPrompt p) {
  require_toy_dimensions(image.shape());
  if (p.x < 0 || p.x >= image.dim(1) || p.y < 0 || p.y >= image.dim(0))
    throw ContractError("toy_segment_point: prompt (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                        ") outside the image");
  const auto labels = upsample_labels(toy_label_map(w, image), kToyDownsample);
  for (auto& comp : connected_components(label_mask(labels, labels(p.y, p.x)), 4))
    if (comp(p.y, p.x)) return comp;
  throw ContractError("toy_segment_point: prompt pixel not covered by any component");
}

ToyVictim::ToyVictim(std::uint64_t seed, Index min_area) : ToyVictim(make_toy_weights(seed), min_area) {}

ToyVictim::ToyVictim(ToyEncoderWeights weights, Index min_area) : weights_(std::move(weights)), min_area_(min_area) {
  if (min_area_ < 1) throw ContractError("ToyVictim: min_area must be >= 1");
}

FeatureVector ToyVictim::encode(const Image& image) const { return toy_encode(weights_, image); }

Image ToyVictim::encode_vjp(const Image& image, const FeatureVector& cotangent) const {
  ad::Tape<float> tape;
  const ad::Var x = tape.leaf(image);
  const auto nodes = ad::toy_encode(tape, weights_, x);
  if (cotangent.size() != tape.value(nodes.features).size())
    throw DimensionError("encode_vjp: cotangent length " + std::to_string(cotangent.size()) + ", expected " +
                         std::to_string(tape.value(nodes.features).size()));
  const ad::Var ct = tape.leaf(cotangent.reshaped(tape.value(nodes.features).shape()));
  return ad::backward(tape, ad::dot(tape, nodes.features, ct), x).value;
}

MaskSet ToyVictim::segment_everything(const Image& image) const {
  return toy_segment_everything(weights_, image, min_area_);
}

BinaryMask ToyVictim::segment_point(const Image& image, PointPrompt p) const {
  return toy_segment_point(weights_, image, p);
}

}  // namespace rga
