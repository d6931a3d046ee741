#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spq/binary_io.hpp"
#include "spq/codebook.hpp"
#include "spq/error.hpp"
#include "spq/kernels.hpp"
#include "spq/parallel.hpp"
#include "spq/training.hpp"
#include "spq/vector_set.hpp"

namespace spq {

// Hard-assignment product quantizer over raw (unnormalized) k-means
// centroids, kept as the baseline the sparse variant is measured against.
class PQCodebook {
 public:
  PQCodebook() = default;

  PQCodebook(SubspaceLayout layout, std::size_t k, std::vector<std::vector<float>> centroids)
      : layout_(std::move(layout)), k_(k), centroids_(std::move(centroids)) {
    if (k_ == 0 || k_ > kMaxCodebookSize) throw RangeError("pq: k outside [1, 65536]");
    if (centroids_.size() != layout_.m()) throw DimensionMismatch("pq: m mismatch");
    for (std::size_t i = 0; i < layout_.m(); ++i) {
      if (centroids_[i].size() != k_ * layout_.width(i)) {
        throw DimensionMismatch("pq: centroid block " + std::to_string(i) + " has wrong size");
      }
    }
    build_sdc_tables();
  }

  std::size_t m() const { return layout_.m(); }
  std::size_t k() const { return k_; }
  std::size_t dim() const { return layout_.dim(); }
  const SubspaceLayout& layout() const { return layout_; }

  std::span<const float> centroids(std::size_t i) const { return centroids_[i]; }
  std::span<const float> centroid(std::size_t i, std::size_t j) const {
    return {centroids_[i].data() + j * layout_.width(i), layout_.width(i)};
  }

  // Squared distance between centroids a and b of subspace i.
  float sdc(std::size_t i, std::size_t a, std::size_t b) const { return sdc_[i][a * k_ + b]; }
  std::span<const float> sdc_table(std::size_t i) const { return sdc_[i]; }

  friend bool operator==(const PQCodebook& a, const PQCodebook& b) {
    return a.layout_ == b.layout_ && a.k_ == b.k_ && a.centroids_ == b.centroids_;
  }

 private:
  void build_sdc_tables() {
    sdc_.assign(m(), std::vector<float>(k_ * k_));
    for (std::size_t i = 0; i < m(); ++i) {
      for (std::size_t a = 0; a < k_; ++a) {
        for (std::size_t b = a; b < k_; ++b) {
          const float v = sq_l2(centroid(i, a), centroid(i, b));
          sdc_[i][a * k_ + b] = v;
          sdc_[i][b * k_ + a] = v;
        }
      }
    }
  }

  SubspaceLayout layout_;
  std::size_t k_ = 0;
  std::vector<std::vector<float>> centroids_;
  std::vector<std::vector<float>> sdc_;
};

inline PQCodebook train_pq_codebook(const VectorSet& train, const SubspaceLayout& layout,
                                    std::size_t k, std::size_t iters, std::uint64_t seed,
                                    std::size_t threads = 1) {
  detail::require_same_dim(train.d(), layout.dim(), "train_pq_codebook");
  std::vector<std::vector<float>> centroids(layout.m());
  parallel_for(layout.m(), threads, [&](std::size_t i) {
    const VectorSet slice = train.slice_columns(layout.offset(i), layout.width(i));
    centroids[i] = kmeans(slice, k, iters, derive_seed(seed, i)).centroids;
  });
  return PQCodebook(layout, k, std::move(centroids));
}

// One centroid id per subspace.
struct PQCode {
  std::vector<std::uint16_t> ids;

  friend bool operator==(const PQCode&, const PQCode&) = default;
};

namespace detail {

inline void pq_encode_into(std::span<const float> x, const PQCodebook& pcb, std::uint16_t* out) {
  for (std::size_t i = 0; i < pcb.m(); ++i) {
    const auto sub = x.subspan(pcb.layout().offset(i), pcb.layout().width(i));
    out[i] = static_cast<std::uint16_t>(
        nearest_row(sub.data(), pcb.centroids(i), pcb.k(), sub.size(), nullptr));
  }
}

}  // namespace detail

inline PQCode pq_encode(std::span<const float> x, const PQCodebook& pcb) {
  detail::require_same_dim(x.size(), pcb.dim(), "pq_encode");
  PQCode code;
  code.ids.resize(pcb.m());
  detail::pq_encode_into(x, pcb, code.ids.data());
  return code;
}

inline std::vector<float> pq_reconstruct(const PQCode& code, const PQCodebook& pcb) {
  std::vector<float> out;
  out.reserve(pcb.dim());
  for (std::size_t i = 0; i < pcb.m(); ++i) {
    if (code.ids[i] >= pcb.k()) throw RangeError("pq_reconstruct: id out of range");
    const auto c = pcb.centroid(i, code.ids[i]);
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

// Mean over the gallery of the summed per-subspace squared errors.
inline double pq_distortion(const VectorSet& gallery, const PQCodebook& pcb) {
  detail::require_same_dim(gallery.d(), pcb.dim(), "pq_distortion");
  if (gallery.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < gallery.n(); ++r) {
    const auto x = gallery.row(r);
    total += sq_l2(x, pq_reconstruct(pq_encode(x, pcb), pcb));
  }
  return total / static_cast<double>(gallery.n());
}

// n PQ codes stored row-major (m ids per item).
class PQIndex {
 public:
  PQIndex() = default;
  PQIndex(PQCodebook pcb, std::size_t n, std::vector<std::uint16_t> codes)
      : pcb_(std::move(pcb)), n_(n), codes_(std::move(codes)) {
    if (codes_.size() != n_ * pcb_.m()) throw DimensionMismatch("pq index: code array size");
    for (std::uint16_t id : codes_) {
      if (id >= pcb_.k()) throw FormatError("pq index: stored id out of range");
    }
  }

  static PQIndex build(const VectorSet& gallery, PQCodebook pcb, std::size_t threads = 1) {
    detail::require_same_dim(gallery.d(), pcb.dim(), "pq build");
    std::vector<std::uint16_t> codes(gallery.n() * pcb.m());
    parallel_for(gallery.n(), threads, [&](std::size_t r) {
      detail::pq_encode_into(gallery.row(r), pcb, codes.data() + r * pcb.m());
    });
    return PQIndex(std::move(pcb), gallery.n(), std::move(codes));
  }

  std::size_t size() const { return n_; }
  const PQCodebook& codebook() const { return pcb_; }
  std::span<const std::uint16_t> code(std::size_t r) const {
    return {codes_.data() + r * pcb_.m(), pcb_.m()};
  }
  std::span<const std::uint16_t> codes() const { return codes_; }

  // m x k table of squared distances from the query subvectors to centroids.
  std::vector<float> adc_table(std::span<const float> query) const {
    detail::require_same_dim(query.size(), pcb_.dim(), "pq adc");
    const std::size_t k = pcb_.k();
    std::vector<float> table(pcb_.m() * k);
    for (std::size_t i = 0; i < pcb_.m(); ++i) {
      const auto sub = query.subspan(pcb_.layout().offset(i), pcb_.layout().width(i));
      for (std::size_t j = 0; j < k; ++j) table[i * k + j] = sq_l2(sub, pcb_.centroid(i, j));
    }
    return table;
  }

  // Table-lookup distances of items [begin, end) into out.
  void scan(std::span<const float> table, std::size_t begin, std::size_t end, float* out) const {
    const std::size_t m = pcb_.m();
    const std::size_t k = pcb_.k();
    for (std::size_t r = begin; r < end; ++r) {
      const std::uint16_t* c = codes_.data() + r * m;
      float score = 0.0f;
      for (std::size_t i = 0; i < m; ++i) score += table[i * k + c[i]];
      out[r - begin] = score;
    }
  }

  std::vector<float> scan(std::span<const float> table) const {
    std::vector<float> scores(n_);
    scan(table, 0, n_, scores.data());
    return scores;
  }

  std::vector<ScoredId> search_with_table(std::span<const float> table, std::size_t p) const {
    if (p == 0) throw RangeError("search: p must be >= 1");
    const auto scores = scan(table);
    TopK sel(p);
    for (std::size_t r = 0; r < n_; ++r) sel.push(static_cast<std::uint32_t>(r), scores[r]);
    return sel.take_sorted();
  }

  // m x k table for SDC: row i is the distance row of the query's centroid.
  std::vector<float> sdc_table(std::span<const float> query) const {
    const PQCode qc = pq_encode(query, pcb_);
    const std::size_t k = pcb_.k();
    std::vector<float> table(pcb_.m() * k);
    for (std::size_t i = 0; i < pcb_.m(); ++i) {
      const auto row = pcb_.sdc_table(i).subspan(static_cast<std::size_t>(qc.ids[i]) * k, k);
      std::copy(row.begin(), row.end(), table.begin() + static_cast<std::ptrdiff_t>(i * k));
    }
    return table;
  }

  std::vector<ScoredId> adc_search(std::span<const float> query, std::size_t p) const {
    return search_with_table(adc_table(query), p);
  }

  // Query is quantized too; distances come from the centroid-centroid tables.
  std::vector<ScoredId> sdc_search(std::span<const float> query, std::size_t p) const {
    return search_with_table(sdc_table(query), p);
  }

 private:
  PQCodebook pcb_;
  std::size_t n_ = 0;
  std::vector<std::uint16_t> codes_;
};

inline std::vector<ScoredId> pq_adc_search(const PQIndex& index, std::span<const float> query,
                                           std::size_t p) {
  return index.adc_search(query, p);
}

inline std::vector<ScoredId> pq_sdc_search(const PQIndex& index, std::span<const float> query,
                                           std::size_t p) {
  return index.sdc_search(query, p);
}

// Raw k-means centroid file: "SPQK", u32 version, u32 m, u32 k, m x u32 dims,
// then each subspace's k x d_sub centroids (f32 LE).
inline void append_pq_codebook(io::ByteWriter& out, const PQCodebook& pcb) {
  out.magic("SPQK");
  out.u32(1);
  out.u32(static_cast<std::uint32_t>(pcb.m()));
  out.u32(static_cast<std::uint32_t>(pcb.k()));
  for (std::size_t d : pcb.layout().dims()) out.u32(static_cast<std::uint32_t>(d));
  for (std::size_t i = 0; i < pcb.m(); ++i) out.f32s(pcb.centroids(i));
}

inline PQCodebook parse_pq_codebook(io::ByteReader& in) {
  in.expect_magic("SPQK");
  const std::size_t at = in.offset();
  if (in.u32() != 1) throw FormatError("unsupported pq codebook version", at);
  const std::size_t m = in.u32();
  const std::size_t k = in.u32();
  if (m == 0 || k == 0 || k > kMaxCodebookSize) throw FormatError("pq codebook: bad m/k", in.offset());
  std::vector<std::size_t> dims(m);
  for (auto& d : dims) d = in.u32();
  SubspaceLayout layout(dims);
  std::vector<std::vector<float>> centroids(m);
  for (std::size_t i = 0; i < m; ++i) {
    centroids[i].resize(k * dims[i]);
    in.f32s(centroids[i]);
  }
  return PQCodebook(std::move(layout), k, std::move(centroids));
}

// PQ code file: "SPQP", u32 m, u32 k, u64 n, then n x m ids packed as u8 when
// k <= 256 and u16 LE otherwise. The raw-centroid block follows so the file
// is self-contained.
inline void append_pq_index(io::ByteWriter& out, const PQIndex& index) {
  const auto& pcb = index.codebook();
  out.magic("SPQP");
  out.u32(static_cast<std::uint32_t>(pcb.m()));
  out.u32(static_cast<std::uint32_t>(pcb.k()));
  out.u64(index.size());
  const bool narrow = pcb.k() <= 256;
  for (std::uint16_t id : index.codes()) {
    if (narrow) {
      out.u8(static_cast<std::uint8_t>(id));
    } else {
      out.u16(id);
    }
  }
  append_pq_codebook(out, pcb);
}

inline PQIndex parse_pq_index(io::ByteReader& in) {
  in.expect_magic("SPQP");
  const std::size_t m = in.u32();
  const std::size_t k = in.u32();
  const std::uint64_t n = in.u64();
  if (m == 0 || k == 0 || k > kMaxCodebookSize) throw FormatError("pq index: bad m/k", in.offset());
  const bool narrow = k <= 256;
  in.need(n * m * (narrow ? 1 : 2), "pq codes");
  std::vector<std::uint16_t> codes(n * m);
  for (auto& c : codes) c = narrow ? in.u8() : in.u16();
  PQCodebook pcb = parse_pq_codebook(in);
  if (pcb.m() != m || pcb.k() != k) throw FormatError("pq index header disagrees with codebook");
  return PQIndex(std::move(pcb), n, std::move(codes));
}

inline void save_pq_index(const std::string& path, const PQIndex& index) {
  io::ByteWriter out;
  append_pq_index(out, index);
  io::write_file(path, out.bytes());
}

inline PQIndex load_pq_index(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader in(bytes);
  auto index = parse_pq_index(in);
  if (!in.done()) throw FormatError(path + ": trailing bytes", in.offset());
  return index;
}

inline void save_pq_codebook(const std::string& path, const PQCodebook& pcb) {
  io::ByteWriter out;
  append_pq_codebook(out, pcb);
  io::write_file(path, out.bytes());
}

inline PQCodebook load_pq_codebook(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader in(bytes);
  auto pcb = parse_pq_codebook(in);
  if (!in.done()) throw FormatError(path + ": trailing bytes", in.offset());
  return pcb;
}

}  // namespace spq
