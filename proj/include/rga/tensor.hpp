#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <string>
#include <vector>

#include "rga/errors.hpp"

namespace rga {

using Index = Eigen::Index;

/// Up to four extents, row-major.
class Shape {
 public:
  static constexpr int kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<Index> extents) {
    if (extents.size() > kMaxRank) throw DimensionError("Shape: rank exceeds 4");
    for (Index e : extents) {
      if (e < 0) throw DimensionError("Shape: negative extent");
      ext_[rank_++] = e;
    }
  }

  explicit Shape(const std::vector<Index>& extents) {
    if (extents.size() > kMaxRank) throw DimensionError("Shape: rank exceeds 4");
    for (Index e : extents) {
      if (e < 0) throw DimensionError("Shape: negative extent");
      ext_[rank_++] = e;
    }
  }

  int rank() const noexcept { return rank_; }
  Index operator[](int axis) const { return ext_.at(axis); }

  Index numel() const noexcept {
    Index n = 1;
    for (int i = 0; i < rank_; ++i) n *= ext_[i];
    return n;
  }

  bool operator==(const Shape& o) const noexcept {
    if (rank_ != o.rank_) return false;
    return std::equal(ext_.begin(), ext_.begin() + rank_, o.ext_.begin());
  }

  std::string str() const {
    std::string s = "[";
    for (int i = 0; i < rank_; ++i) {
      if (i) s += ",";
      s += std::to_string(ext_[i]);
    }
    return s + "]";
  }

 private:
  std::array<Index, kMaxRank> ext_{};
  int rank_ = 0;
};

/// Dense row-major tensor over Eigen storage.
template <typename Scalar_>
class BasicTensor {
 public:
  using Scalar = Scalar_;
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  BasicTensor() = default;
  explicit BasicTensor(const Shape& shape) : shape_(shape), data_(Storage::Zero(shape.numel())) {}
  BasicTensor(const Shape& shape, Storage data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel())
      throw DimensionError("BasicTensor: data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_.str());
  }

  static BasicTensor Zero(const Shape& shape) { return BasicTensor(shape); }
  static BasicTensor Constant(const Shape& shape, Scalar v) {
    return BasicTensor(shape, Storage::Constant(shape.numel(), v));
  }

  const Shape& shape() const noexcept { return shape_; }
  Index size() const noexcept { return data_.size(); }
  int rank() const noexcept { return shape_.rank(); }
  Index dim(int axis) const { return shape_[axis]; }

  Storage& array() noexcept { return data_; }
  const Storage& array() const noexcept { return data_; }
  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& operator()(Index i, Index j, Index k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  Scalar operator()(Index i, Index j, Index k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Row-major 2D view of the storage.
  Eigen::Map<MatrixRM> matrix(Index rows, Index cols) {
    check_view(rows, cols);
    return Eigen::Map<MatrixRM>(data_.data(), rows, cols);
  }
  Eigen::Map<const MatrixRM> matrix(Index rows, Index cols) const {
    check_view(rows, cols);
    return Eigen::Map<const MatrixRM>(data_.data(), rows, cols);
  }

  BasicTensor reshaped(const Shape& s) const {
    if (s.numel() != size()) throw DimensionError("reshape: " + shape_.str() + " -> " + s.str());
    return BasicTensor(s, data_);
  }

  template <typename Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.isFinite().all(); }

  /// Bitwise equality of shape and data.
  bool identical(const BasicTensor& o) const {
    return shape_ == o.shape_ &&
           std::equal(data_.data(), data_.data() + data_.size(), o.data_.data(),
                      [](Scalar a, Scalar b) {
                        return std::memcmp(&a, &b, sizeof(Scalar)) == 0;
                      });
  }

 private:
  void check_view(Index rows, Index cols) const {
    if (rows * cols != size()) throw DimensionError("matrix view does not cover tensor " + shape_.str());
  }

  Shape shape_;
  Storage data_;
};

using Tensor = BasicTensor<float>;

/// H×W×3 intensities in [0,1].
using Image = Tensor;
/// Flattened encoder features.
using FeatureVector = Tensor;

inline Image make_image(Index height, Index width) { return Image::Zero({height, width, 3}); }

inline bool is_image(const Tensor& t) { return t.rank() == 3 && t.dim(2) == 3; }

inline void require_image(const Tensor& t, const char* what) {
  if (!is_image(t))
    throw DimensionError(std::string(what) + ": expected an H×W×3 image, got " + t.shape().str());
}

}  // namespace rga
