#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spq/error.hpp"

namespace spq {

// A candidate with squared-distance semantics: lower score is better.
struct ScoredId {
  std::uint32_t id = 0;
  float score = 0.0f;

  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

// Total order used everywhere results are ranked: score, then lower id.
inline bool ranks_before(const ScoredId& a, const ScoredId& b) {
  return a.score < b.score || (a.score == b.score && a.id < b.id);
}

namespace kernels {

// The inner loops keep four independent double accumulators over contiguous
// float input so the compiler can vectorize without reassociation flags.
inline constexpr std::size_t kLanes = 4;

inline double dot_unchecked(const float* x, const float* y, std::size_t n) {
  double acc[kLanes] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      acc[l] += static_cast<double>(x[i + l]) * static_cast<double>(y[i + l]);
    }
  }
  for (std::size_t r = n - i; r > 0; --r, ++i) acc[0] += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

inline double sq_l2_unchecked(const float* x, const float* y, std::size_t n) {
  double acc[kLanes] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      const double diff = static_cast<double>(x[i + l]) - static_cast<double>(y[i + l]);
      acc[l] += diff * diff;
    }
  }
  for (std::size_t r = n - i; r > 0; --r, ++i) {
    const double diff = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    acc[0] += diff * diff;
  }
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

inline double sq_norm_unchecked(const float* x, std::size_t n) { return dot_unchecked(x, x, n); }

}  // namespace kernels

inline float sq_l2(std::span<const float> x, std::span<const float> y) {
  detail::require_same_dim(x.size(), y.size(), "sq_l2");
  return static_cast<float>(kernels::sq_l2_unchecked(x.data(), y.data(), x.size()));
}

inline float dot(std::span<const float> x, std::span<const float> y) {
  detail::require_same_dim(x.size(), y.size(), "dot");
  return static_cast<float>(kernels::dot_unchecked(x.data(), y.data(), x.size()));
}

inline float sq_norm(std::span<const float> x) {
  return static_cast<float>(kernels::sq_norm_unchecked(x.data(), x.size()));
}

// Squared norm of every row of a row-major n x d block.
inline std::vector<float> row_sq_norms(std::span<const float> rows, std::size_t d) {
  const std::size_t n = d == 0 ? 0 : rows.size() / d;
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<float>(kernels::sq_norm_unchecked(rows.data() + i * d, d));
  }
  return out;
}

// Bounded selection of the k best candidates from a stream.
//
// Keeps a max-heap (worst on top) of at most k entries under ranks_before, so
// the result is exactly the prefix of the fully sorted stream.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) {
    if (k_ == 0) throw RangeError("top_k: k must be >= 1");
    heap_.reserve(k_);
  }

  std::size_t capacity() const { return k_; }
  std::size_t size() const { return heap_.size(); }

  // Score that a new candidate must beat once the heap is full.
  bool full() const { return heap_.size() == k_; }
  const ScoredId& worst() const { return heap_.front(); }

  void push(ScoredId c) {
    if (heap_.size() < k_) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end(), ranks_before);
    } else if (ranks_before(c, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), ranks_before);
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end(), ranks_before);
    }
  }

  void push(std::uint32_t id, float score) { push(ScoredId{id, score}); }

  // Sorted best-first; leaves the collector empty.
  std::vector<ScoredId> take_sorted() {
    std::sort_heap(heap_.begin(), heap_.end(), ranks_before);
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  std::vector<ScoredId> heap_;
};

inline std::vector<ScoredId> top_k(std::span<const ScoredId> scores, std::size_t k) {
  TopK sel(k);
  for (const ScoredId& s : scores) sel.push(s);
  return sel.take_sorted();
}

}  // namespace spq
