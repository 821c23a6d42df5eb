#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>

#include "simt/errors.hpp"

namespace simt::ad {

// Row-major extents, rank 0 (scalar) through 4.
class Shape {
 public:
  static constexpr int kMaxRank = 4;

  Shape() : rank_(0) {}

  Shape(std::initializer_list<int64_t> dims) {
    if (dims.size() > kMaxRank) throw ShapeError("Shape: rank > 4");
    rank_ = static_cast<int>(dims.size());
    int i = 0;
    for (int64_t d : dims) {
      if (d < 1) throw ShapeError("Shape: non-positive extent " + std::to_string(d));
      dims_[i++] = d;
    }
  }

  int rank() const { return rank_; }
  int64_t dim(int i) const { return dims_[i]; }
  int64_t operator[](int i) const { return dims_[i]; }

  int64_t numel() const {
    int64_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  int64_t last() const { return rank_ == 0 ? 1 : dims_[rank_ - 1]; }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (dims_[i] != o.dims_[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  // True when `this` equals the trailing dims of `big`, i.e. `this` may be
  // broadcast across big's leading dims.
  bool is_trailing_of(const Shape& big) const {
    if (rank_ > big.rank_) return false;
    const int off = big.rank_ - rank_;
    for (int i = 0; i < rank_; ++i)
      if (dims_[i] != big.dims_[off + i]) return false;
    return true;
  }

  Shape drop_axis(int axis) const {
    Shape s;
    s.rank_ = rank_ - 1;
    int j = 0;
    for (int i = 0; i < rank_; ++i)
      if (i != axis) s.dims_[j++] = dims_[i];
    return s;
  }

  Shape insert_axis(int axis, int64_t n) const {
    if (rank_ + 1 > kMaxRank) throw ShapeError("Shape: rank > 4 after insert");
    Shape s;
    s.rank_ = rank_ + 1;
    int j = 0;
    for (int i = 0; i < s.rank_; ++i) s.dims_[i] = (i == axis) ? n : dims_[j++];
    return s;
  }

  Shape with_dim(int axis, int64_t n) const {
    Shape s = *this;
    s.dims_[axis] = n;
    return s;
  }

  std::string str() const {
    std::string out = "[";
    for (int i = 0; i < rank_; ++i) {
      if (i) out += ",";
      out += std::to_string(dims_[i]);
    }
    return out + "]";
  }

 private:
  int rank_;
  std::array<int64_t, kMaxRank> dims_{};
};

}  // namespace simt::ad
