#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "rga/tensor.hpp"

namespace rga {

/// H×W boolean mask.
class BinaryMask {
 public:
  using Bits = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  BinaryMask() = default;
  BinaryMask(Index height, Index width) : bits_(Bits::Constant(height, width, false)) {}
  explicit BinaryMask(Bits bits) : bits_(std::move(bits)) {}

  Index height() const noexcept { return bits_.rows(); }
  Index width() const noexcept { return bits_.cols(); }
  bool same_size(const BinaryMask& o) const noexcept { return height() == o.height() && width() == o.width(); }

  bool operator()(Index row, Index col) const { return bits_(row, col); }
  Bits::Scalar& operator()(Index row, Index col) { return bits_(row, col); }

  Index area() const { return bits_.count(); }
  bool empty() const { return !bits_.any(); }

  const Bits& bits() const noexcept { return bits_; }
  Bits& bits() noexcept { return bits_; }

  bool operator==(const BinaryMask& o) const { return same_size(o) && (bits_ == o.bits_).all(); }

  /// this ⊆ other
  bool subset_of(const BinaryMask& o) const { return same_size(o) && (!bits_ || o.bits_).all(); }

 private:
  Bits bits_;
};

enum class MaskOrder {
  Given,        ///< iterate masks in the order supplied
  AreaDescending,
};

/// Ordered collection of equally sized masks.
struct MaskSet {
  std::vector<BinaryMask> masks;

  std::size_t size() const noexcept { return masks.size(); }
  bool empty() const noexcept { return masks.empty(); }
  /// Throws DimensionError unless all masks share dimensions.
  void validate() const;
};

/// H×W×3 color image; a pixel is uncolored iff all three channels are 0.
struct RegionGuidedMap {
  Image pixels;

  Index height() const { return pixels.dim(0); }
  Index width() const { return pixels.dim(1); }
  bool colored(Index row, Index col) const {
    return pixels(row, col, 0) != 0.f || pixels(row, col, 1) != 0.f || pixels(row, col, 2) != 0.f;
  }
  BinaryMask support() const;
};

struct SadConfig {
  double gamma = 0.1;       ///< grid granularity as a fraction of min(w, h)
  int n_dilate = 100;       ///< dilation iterations for small regions
  std::uint64_t seed = 0;   ///< color stream seed
  MaskOrder order = MaskOrder::Given;

  void validate() const;
};

/// Per-call instrumentation for build_rgm.
struct RgmTrace {
  Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> writes;
  /// true where the mask took the small (dilation) branch, in iteration order
  std::vector<bool> small_branch;
  /// index into the input MaskSet, in iteration order
  std::vector<std::size_t> visit_order;
  Index grid_size = 0;
  /// number of distinct colors applied
  int colors_drawn = 0;
};

/// floor(min(w, h) · gamma), clamped to at least 1.
Index compute_grid_size(Index width, Index height, double gamma);

/// n iterations of 3×3 square dilation.
BinaryMask dilate_region(const BinaryMask& mask, int iterations);

/// m ∩ tile for every grid_size×grid_size tile (anchored at the origin) that
/// contains at least one set pixel, in row-major tile order.
std::vector<BinaryMask> segment_grid(const BinaryMask& mask, Index grid_size);

/// Maximal connected components of the set pixels, ordered by the scan
/// position of their first pixel. `connectivity` is 4 or 8.
std::vector<BinaryMask> connected_components(const BinaryMask& mask, int connectivity = 4);

/// Segmentation-and-dilation region-guided map. Small masks
/// (area <= grid_size²) are dilated and painted with one color; larger masks
/// are cut into grid tiles, each painted with its own color. Paint is only
/// applied to pixels that are still uncolored.
RegionGuidedMap build_rgm(const MaskSet& masks, const SadConfig& cfg, RgmTrace* trace = nullptr);

}  // namespace rga
