#pragma once

#include <Eigen/Core>

#include <cstdint>

#include "rga/autodiff.hpp"
#include "rga/regions.hpp"
#include "rga/tensor.hpp"

namespace rga {

/// Pixel coordinate used as a point prompt.
struct PointPrompt {
  Index x = 0;  ///< column
  Index y = 0;  ///< row
};

/// Segmentation model under attack. Implementations must be safe for
/// concurrent read-only use.
class VictimModel {
 public:
  virtual ~VictimModel() = default;

  virtual FeatureVector encode(const Image& image) const = 0;
  /// Vector-Jacobian product of encode at `image`; same shape as `image`.
  virtual Image encode_vjp(const Image& image, const FeatureVector& cotangent) const = 0;
  /// Pairwise-disjoint masks in a stable order.
  virtual MaskSet segment_everything(const Image& image) const = 0;
  virtual BinaryMask segment_point(const Image& image, PointPrompt p) const = 0;
};

/// Two stride-2 convolutions, 3→8→16 channels, no biases.
template <typename Scalar>
struct BasicToyWeights {
  BasicTensor<Scalar> conv1;  ///< [3,3,3,8]
  BasicTensor<Scalar> conv2;  ///< [3,3,8,16]
  std::uint64_t seed = 0;

  template <typename Other>
  BasicToyWeights<Other> cast() const {
    return {conv1.template cast<Other>(), conv2.template cast<Other>(), seed};
  }
};

using ToyEncoderWeights = BasicToyWeights<float>;

inline constexpr Index kToyChannels1 = 8;
inline constexpr Index kToyChannels2 = 16;
inline constexpr Index kToyDownsample = 4;

/// Weights drawn from Rng(seed) (mt19937_64, 53-bit uniforms), conv1 then
/// conv2 in row-major kernel order, each uniform in ±sqrt(1/fan_in) with
/// fan_in = 3·3·Cin.
ToyEncoderWeights make_toy_weights(std::uint64_t seed);

/// FNV-1a 64 over the little-endian bytes of conv1 then conv2.
std::uint64_t weights_checksum(const ToyEncoderWeights& w);

/// Throws DimensionError unless `shape` is H×W×3 with H and W positive
/// multiples of 4.
void require_toy_dimensions(const Shape& shape);

namespace ad {

struct ToyEncoderNodes {
  Var pre_norm;  ///< [H/4, W/4, 16] after the second ReLU
  Var features;  ///< flattened, per-position L2-normalized
};

/// conv(3×3, stride 2) → relu → conv(3×3, stride 2) → relu → per-position
/// L2 normalization → flatten. Each convolution sees a one-pixel
/// replicated border, so a constant image yields a constant feature map.
template <typename Scalar>
ToyEncoderNodes toy_encode(Tape<Scalar>& tape, const BasicToyWeights<Scalar>& w, Var image) {
  require_toy_dimensions(tape.value(image).shape());
  const Var k1 = tape.leaf(w.conv1);
  const Var k2 = tape.leaf(w.conv2);
  Var h = pad_edge(tape, image, 1, 1, 1, 1);
  h = relu(tape, conv2d(tape, h, k1, 2, 0));
  h = pad_edge(tape, h, 1, 1, 1, 1);
  const Var pre = relu(tape, conv2d(tape, h, k2, 2, 0));
  const auto& pv = tape.value(pre);
  const Index positions = pv.dim(0) * pv.dim(1);
  Var rows = reshape(tape, pre, Shape{positions, pv.dim(2)});
  rows = l2_normalize_rows(tape, rows, static_cast<Scalar>(kDivisionGuard));
  return {pre, reshape(tape, rows, Shape{positions * pv.dim(2)})};
}

}  // namespace ad

FeatureVector toy_encode(const ToyEncoderWeights& w, const Image& image);

/// Channel argmax of the pre-normalization feature map, (H/4)×(W/4). Ties
/// resolve to the lowest channel.
Eigen::ArrayXXi toy_label_map(const ToyEncoderWeights& w, const Image& image);

/// Nearest-neighbour upsampling of a label map by `factor`.
Eigen::ArrayXXi upsample_labels(const Eigen::ArrayXXi& labels, Index factor);

/// 4-connected constant-label components with area >= min_area, ordered by
/// (label, scan position of first pixel).
MaskSet toy_segment_everything(const ToyEncoderWeights& w, const Image& image, Index min_area = 16);

/// The 4-connected constant-label component containing p.
BinaryMask toy_segment_point(const ToyEncoderWeights& w, const Image& image, PointPrompt p);

class ToyVictim final : public VictimModel {
 public:
  explicit ToyVictim(std::uint64_t seed, Index min_area = 16);
  ToyVictim(ToyEncoderWeights weights, Index min_area);

  FeatureVector encode(const Image& image) const override;
  Image encode_vjp(const Image& image, const FeatureVector& cotangent) const override;
  MaskSet segment_everything(const Image& image) const override;
  BinaryMask segment_point(const Image& image, PointPrompt p) const override;

  const ToyEncoderWeights& weights() const noexcept { return weights_; }
  Index min_area() const noexcept { return min_area_; }

 private:
  ToyEncoderWeights weights_;
  Index min_area_;
};

}  // namespace rga
