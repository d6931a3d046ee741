#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "spq/error.hpp"

namespace spq {

// Dense row-major set of n vectors of dimension d (gallery, queries, training
// samples). Immutable after construction; all values are finite.
class VectorSet {
 public:
  VectorSet() = default;

  VectorSet(std::size_t n, std::size_t d, std::vector<float> data)
      : n_(n), d_(d), data_(std::move(data)) {
    if (d_ == 0) throw RangeError("VectorSet: dimension must be >= 1");
    if (data_.size() != n_ * d_) {
      throw DimensionMismatch("VectorSet: data length " + std::to_string(data_.size()) +
                              " != n*d = " + std::to_string(n_ * d_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i])) {
        throw RangeError("VectorSet: non-finite value at row " + std::to_string(i / d_));
      }
    }
  }

  std::size_t n() const { return n_; }
  std::size_t d() const { return d_; }
  bool empty() const { return n_ == 0; }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * d_, d_}; }
  std::span<const float> data() const { return data_; }

  // Rows [begin, end) as a new set.
  VectorSet slice_rows(std::size_t begin, std::size_t end) const {
    return VectorSet(end - begin, d_,
                     std::vector<float>(data_.begin() + static_cast<std::ptrdiff_t>(begin * d_),
                                        data_.begin() + static_cast<std::ptrdiff_t>(end * d_)));
  }

  // Columns [offset, offset + width) of every row.
  VectorSet slice_columns(std::size_t offset, std::size_t width) const {
    std::vector<float> out(n_ * width);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < width; ++j) out[i * width + j] = data_[i * d_ + offset + j];
    }
    return VectorSet(n_, width, std::move(out));
  }

  VectorSet select_rows(std::span<const std::size_t> rows) const {
    std::vector<float> out;
    out.reserve(rows.size() * d_);
    for (std::size_t r : rows) {
      auto v = row(r);
      out.insert(out.end(), v.begin(), v.end());
    }
    return VectorSet(rows.size(), d_, std::move(out));
  }

  friend bool operator==(const VectorSet&, const VectorSet&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 1;
  std::vector<float> data_;
};

}  // namespace spq
