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
#include "spq/sparse_coder.hpp"
#include "spq/vector_set.hpp"

namespace spq {

// Per-subspace sparse codes of one vector plus its stored squared norm.
struct SPQCode {
  std::vector<SparseCode> parts;
  float x_sq_norm = 0.0f;
};

// Query-side tables: values[i * k + j] = <q^i, atom^i_j> for ADC, or the
// Gram-projected query code for SDC.
struct LookupTables {
  std::size_t m = 0;
  std::size_t k = 0;
  std::vector<float> values;
  float q_sq_norm = 0.0f;

  std::span<const float> table(std::size_t i) const { return {values.data() + i * k, k}; }
};

inline LookupTables adc_tables(std::span<const float> query, const ProductCodebook& pcb) {
  detail::require_same_dim(query.size(), pcb.dim(), "adc_tables");
  LookupTables t;
  t.m = pcb.m();
  t.k = pcb.k();
  t.values.resize(t.m * t.k);
  for (std::size_t i = 0; i < t.m; ++i) {
    const auto& book = pcb.book(i);
    const float* sub = query.data() + pcb.layout().offset(i);
    const std::size_t w = book.d_sub();
    for (std::size_t j = 0; j < t.k; ++j) {
      t.values[i * t.k + j] =
          static_cast<float>(kernels::dot_unchecked(sub, book.atoms().data() + j * w, w));
    }
  }
  t.q_sq_norm = sq_norm(query);
  return t;
}

// SDC tables: the query is OMP-coded at `level` (coefficients beta) and
// values[i * k + j] = sum_l beta_l * G^i[j][id_l], so the stored-code scan
// computes alpha^T G beta with the same m * L lookups as ADC.
inline LookupTables sdc_tables(std::span<const float> query, const ProductCodebook& pcb,
                               std::size_t level) {
  detail::require_same_dim(query.size(), pcb.dim(), "sdc_tables");
  LookupTables t;
  t.m = pcb.m();
  t.k = pcb.k();
  t.values.assign(t.m * t.k, 0.0f);
  OmpSolver omp;
  std::vector<std::uint16_t> ids(level);
  std::vector<float> beta(level);
  for (std::size_t i = 0; i < t.m; ++i) {
    const auto& book = pcb.book(i);
    const auto sub = query.subspan(pcb.layout().offset(i), book.d_sub());
    omp.encode(sub, book.atoms(), book.k(), level, ids.data(), beta.data());
    float* row = t.values.data() + i * t.k;
    for (std::size_t j = 0; j < t.k; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < level; ++l) acc += static_cast<double>(beta[l]) * book.gram(j, ids[l]);
      row[j] = static_cast<float>(acc);
    }
  }
  t.q_sq_norm = sq_norm(query);
  return t;
}

// Operation counting policies for the scan kernel.
struct NoMacCount {
  void add(std::size_t) {}
};

struct MacCount {
  std::uint64_t macs = 0;
  void add(std::size_t n) { macs += n; }
};

// n sparse codes in structure-of-arrays form: for subspace i the id plane and
// the coefficient plane each hold n * L contiguous entries (item-major), and
// ids are 8-bit when k <= 256, else 16-bit.
class SparseCodeStore {
 public:
  SparseCodeStore() = default;

  SparseCodeStore(std::size_t n, std::size_t m, std::size_t k, std::size_t level)
      : n_(n), m_(m), k_(k), level_(level), narrow_(k <= 256) {
    if (level_ == 0) throw RangeError("sparse level must be >= 1");
    if (narrow_) {
      ids8_.assign(n * m * level, 0);
    } else {
      ids16_.assign(n * m * level, 0);
    }
    coeffs_.assign(n * m * level, 0.0f);
    sq_norms_.assign(n, 0.0f);
  }

  std::size_t size() const { return n_; }
  std::size_t m() const { return m_; }
  std::size_t k() const { return k_; }
  std::size_t level() const { return level_; }
  bool narrow_ids() const { return narrow_; }

  std::span<const float> sq_norms() const { return sq_norms_; }
  float sq_norm(std::size_t r) const { return sq_norms_[r]; }
  std::span<const float> coeffs() const { return coeffs_; }
  std::span<const std::uint8_t> ids8() const { return ids8_; }
  std::span<const std::uint16_t> ids16() const { return ids16_; }

  std::size_t plane_offset(std::size_t i, std::size_t r) const { return (i * n_ + r) * level_; }

  std::uint16_t id(std::size_t i, std::size_t r, std::size_t l) const {
    const std::size_t at = plane_offset(i, r) + l;
    return narrow_ ? ids8_[at] : ids16_[at];
  }
  float coeff(std::size_t i, std::size_t r, std::size_t l) const {
    return coeffs_[plane_offset(i, r) + l];
  }

  // Encodes vector x (already split by `layout`) into slot r.
  void encode(std::size_t r, std::span<const float> x, const ProductCodebook& pcb, OmpSolver& omp,
              std::span<std::uint16_t> scratch_ids) {
    for (std::size_t i = 0; i < m_; ++i) {
      const auto& book = pcb.book(i);
      const auto sub = x.subspan(pcb.layout().offset(i), book.d_sub());
      const std::size_t at = plane_offset(i, r);
      omp.encode(sub, book.atoms(), book.k(), level_, scratch_ids.data(), coeffs_.data() + at);
      for (std::size_t l = 0; l < level_; ++l) {
        if (narrow_) {
          ids8_[at + l] = static_cast<std::uint8_t>(scratch_ids[l]);
        } else {
          ids16_[at + l] = scratch_ids[l];
        }
      }
    }
    sq_norms_[r] = spq::sq_norm(x);
  }

  // Direct slot assignment, used when loading and in tests.
  void set(std::size_t i, std::size_t r, std::size_t l, std::uint16_t id, float coeff) {
    const std::size_t at = plane_offset(i, r) + l;
    if (narrow_) {
      ids8_[at] = static_cast<std::uint8_t>(id);
    } else {
      ids16_[at] = id;
    }
    coeffs_[at] = coeff;
  }
  void set_sq_norm(std::size_t r, float v) { sq_norms_[r] = v; }

  // Writes x_sq_norm + q_sq_norm - 2 * sum_i sum_l coeff * T^i[id] for items
  // [begin, end) into out[0, end - begin). Exactly m * L multiply-adds per
  // item, reported through `counter`.
  template <typename Counter = NoMacCount>
  void scan(const LookupTables& tables, std::size_t begin, std::size_t end, float* out,
            Counter& counter) const {
    if (narrow_) {
      scan_impl(ids8_.data(), tables, begin, end, out, counter);
    } else {
      scan_impl(ids16_.data(), tables, begin, end, out, counter);
    }
  }

  void scan(const LookupTables& tables, std::size_t begin, std::size_t end, float* out) const {
    NoMacCount none;
    scan(tables, begin, end, out, none);
  }

  SPQCode code(std::size_t r) const {
    SPQCode c;
    c.x_sq_norm = sq_norms_[r];
    c.parts.resize(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      SparseCode& part = c.parts[i];
      part.ids.resize(level_);
      part.coeffs.resize(level_);
      part.used = 1;
      for (std::size_t l = 0; l < level_; ++l) {
        part.ids[l] = id(i, r, l);
        part.coeffs[l] = coeff(i, r, l);
        if (part.coeffs[l] != 0.0f) part.used = l + 1;
      }
    }
    return c;
  }

  friend bool operator==(const SparseCodeStore&, const SparseCodeStore&) = default;

 private:
  template <typename IdT, typename Counter>
  void scan_impl(const IdT* ids, const LookupTables& tables, std::size_t begin, std::size_t end,
                 float* out, Counter& counter) const {
    const std::size_t count = end - begin;
    for (std::size_t r = 0; r < count; ++r) out[r] = 0.0f;
    for (std::size_t i = 0; i < m_; ++i) {
      const float* table = tables.values.data() + i * tables.k;
      const std::size_t base = plane_offset(i, begin);
      const IdT* id_plane = ids + base;
      const float* coeff_plane = coeffs_.data() + base;
      if (level_ == 2) {
        for (std::size_t r = 0; r < count; ++r) {
          out[r] += coeff_plane[2 * r] * table[id_plane[2 * r]] +
                    coeff_plane[2 * r + 1] * table[id_plane[2 * r + 1]];
          counter.add(2);
        }
      } else {
        for (std::size_t r = 0; r < count; ++r) {
          float s = 0.0f;
          for (std::size_t l = 0; l < level_; ++l) {
            s += coeff_plane[r * level_ + l] * table[id_plane[r * level_ + l]];
          }
          counter.add(level_);
          out[r] += s;
        }
      }
    }
    const float* norms = sq_norms_.data() + begin;
    for (std::size_t r = 0; r < count; ++r) out[r] = norms[r] + tables.q_sq_norm - 2.0f * out[r];
  }

  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::size_t k_ = 0;
  std::size_t level_ = 1;
  bool narrow_ = true;
  std::vector<std::uint8_t> ids8_;
  std::vector<std::uint16_t> ids16_;
  std::vector<float> coeffs_;
  std::vector<float> sq_norms_;
};

enum class DistanceMode { adc, sdc };

inline std::string_view to_string(DistanceMode d) { return d == DistanceMode::adc ? "adc" : "sdc"; }

inline DistanceMode parse_distance_mode(std::string_view s) {
  if (s == "adc") return DistanceMode::adc;
  if (s == "sdc") return DistanceMode::sdc;
  throw ConfigError("unknown distance mode: " + std::string(s) + " (expected adc or sdc)");
}

// Scores items in blocks and keeps the best p.
inline std::vector<ScoredId> select_top(std::span<const float> scores, std::size_t p,
                                        std::uint32_t id_base = 0) {
  TopK sel(p);
  for (std::size_t r = 0; r < scores.size(); ++r) {
    sel.push(id_base + static_cast<std::uint32_t>(r), scores[r]);
  }
  return sel.take_sorted();
}

// SPQ-coded gallery answering top-p queries by ADC or SDC.
class SPQIndex {
 public:
  SPQIndex() = default;

  SPQIndex(ProductCodebook pcb, SparseCodeStore store)
      : pcb_(std::move(pcb)), store_(std::move(store)) {
    if (store_.m() != pcb_.m() || store_.k() != pcb_.k()) {
      throw DimensionMismatch("spq index: code store does not match codebook");
    }
  }

  static SPQIndex build(const VectorSet& gallery, ProductCodebook pcb, std::size_t level,
                        std::size_t threads = 1) {
    if (!gallery.empty()) detail::require_same_dim(gallery.d(), pcb.dim(), "spq build");
    if (level < 1 || level > pcb.k()) throw RangeError("spq build: sparse level outside [1, k]");
    SparseCodeStore store(gallery.n(), pcb.m(), pcb.k(), level);
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads == 0 ? default_threads() : threads, gallery.n()));
    const std::size_t chunk = gallery.n() == 0 ? 0 : (gallery.n() + workers - 1) / workers;
    parallel_for(workers, workers, [&](std::size_t w) {
      OmpSolver omp;
      std::vector<std::uint16_t> scratch(level);
      const std::size_t end = std::min(gallery.n(), (w + 1) * chunk);
      for (std::size_t r = w * chunk; r < end; ++r) store.encode(r, gallery.row(r), pcb, omp, scratch);
    });
    return SPQIndex(std::move(pcb), std::move(store));
  }

  std::size_t size() const { return store_.size(); }
  std::size_t level() const { return store_.level(); }
  const ProductCodebook& codebook() const { return pcb_; }
  const SparseCodeStore& store() const { return store_; }
  SPQCode code(std::size_t r) const { return store_.code(r); }

  LookupTables tables(std::span<const float> query, DistanceMode mode) const {
    return mode == DistanceMode::adc ? adc_tables(query, pcb_) : sdc_tables(query, pcb_, level());
  }

  // Raw approximate squared distances of every item; no clamping.
  std::vector<float> scan(const LookupTables& tables) const {
    std::vector<float> scores(size());
    store_.scan(tables, 0, size(), scores.data());
    return scores;
  }

  template <typename Counter>
  std::vector<float> scan(const LookupTables& tables, Counter& counter) const {
    std::vector<float> scores(size());
    store_.scan(tables, 0, size(), scores.data(), counter);
    return scores;
  }

  std::vector<ScoredId> search(std::span<const float> query, std::size_t p, DistanceMode mode) const {
    if (p == 0) throw RangeError("search: p must be >= 1");
    return select_top(scan(tables(query, mode)), p);
  }

  std::vector<ScoredId> adc_search(std::span<const float> query, std::size_t p) const {
    return search(query, p, DistanceMode::adc);
  }

  std::vector<ScoredId> sdc_search(std::span<const float> query, std::size_t p) const {
    return search(query, p, DistanceMode::sdc);
  }

 private:
  ProductCodebook pcb_;
  SparseCodeStore store_;
};

inline SPQIndex build(const VectorSet& gallery, ProductCodebook pcb, std::size_t level,
                      std::size_t threads = 1) {
  return SPQIndex::build(gallery, std::move(pcb), level, threads);
}

inline std::vector<ScoredId> adc_search(const SPQIndex& index, std::span<const float> query,
                                        std::size_t p) {
  return index.adc_search(query, p);
}

inline std::vector<ScoredId> sdc_search(const SPQIndex& index, std::span<const float> query,
                                        std::size_t p) {
  return index.sdc_search(query, p);
}

// Index file: "SPQI", u32 version, u64 n, u32 m, u32 k, u32 L, the id planes
// (u8 when k <= 256, else u16 LE), the coefficient planes (f32 LE), n
// x_sq_norm values (f32 LE), then an embedded "SPQB" codebook block.
inline constexpr std::uint32_t kIndexVersion = 1;

inline void append_code_store(io::ByteWriter& out, const SparseCodeStore& s) {
  if (s.narrow_ids()) {
    for (std::uint8_t id : s.ids8()) out.u8(id);
  } else {
    for (std::uint16_t id : s.ids16()) out.u16(id);
  }
  out.f32s(s.coeffs());
  out.f32s(s.sq_norms());
}

inline SparseCodeStore parse_code_store(io::ByteReader& in, std::size_t n, std::size_t m,
                                        std::size_t k, std::size_t level) {
  SparseCodeStore s(n, m, k, level);
  const std::size_t entries = n * m * level;
  in.need(entries * (s.narrow_ids() ? 1 : 2) + entries * 4 + n * 4, "code planes");
  std::vector<std::uint16_t> ids(entries);
  for (auto& id : ids) {
    const std::size_t at = in.offset();
    id = s.narrow_ids() ? in.u8() : in.u16();
    if (id >= k) throw FormatError("stored atom id out of range", at);
  }
  std::vector<float> coeffs(entries);
  in.f32s(coeffs);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t l = 0; l < level; ++l) {
        const std::size_t at = s.plane_offset(i, r) + l;
        s.set(i, r, l, ids[at], coeffs[at]);
      }
    }
  }
  for (std::size_t r = 0; r < n; ++r) s.set_sq_norm(r, in.f32());
  return s;
}

inline void append_spq_index(io::ByteWriter& out, const SPQIndex& index) {
  out.magic("SPQI");
  out.u32(kIndexVersion);
  out.u64(index.size());
  out.u32(static_cast<std::uint32_t>(index.codebook().m()));
  out.u32(static_cast<std::uint32_t>(index.codebook().k()));
  out.u32(static_cast<std::uint32_t>(index.level()));
  append_code_store(out, index.store());
  append_product_codebook(out, index.codebook());
}

inline SPQIndex parse_spq_index(io::ByteReader& in) {
  in.expect_magic("SPQI");
  const std::size_t at = in.offset();
  if (in.u32() != kIndexVersion) throw FormatError("unsupported index version", at);
  const std::uint64_t n = in.u64();
  const std::size_t m = in.u32();
  const std::size_t k = in.u32();
  const std::size_t level = in.u32();
  if (m == 0 || k == 0 || k > kMaxCodebookSize || level == 0 || level > k) {
    throw FormatError("index header has invalid m, k or L", in.offset());
  }
  SparseCodeStore store = parse_code_store(in, n, m, k, level);
  ProductCodebook pcb = parse_product_codebook(in);
  if (pcb.m() != m || pcb.k() != k) throw FormatError("index header disagrees with codebook");
  return SPQIndex(std::move(pcb), std::move(store));
}

inline void save_spq_index(const std::string& path, const SPQIndex& index) {
  io::ByteWriter out;
  append_spq_index(out, index);
  io::write_file(path, out.bytes());
}

inline SPQIndex load_spq_index(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader in(bytes);
  auto index = parse_spq_index(in);
  if (!in.done()) throw FormatError(path + ": trailing bytes after index", in.offset());
  return index;
}

}  // namespace spq
