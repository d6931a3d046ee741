#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spq/binary_io.hpp"
#include "spq/codebook.hpp"
#include "spq/error.hpp"
#include "spq/kernels.hpp"
#include "spq/parallel.hpp"
#include "spq/pq.hpp"
#include "spq/rng.hpp"
#include "spq/spq_index.hpp"
#include "spq/timing.hpp"
#include "spq/training.hpp"
#include "spq/vector_set.hpp"

namespace spq {

// k' raw k-means centroids over full vectors.
class CoarseQuantizer {
 public:
  CoarseQuantizer() = default;
  CoarseQuantizer(std::size_t cells, std::size_t dim, std::vector<float> centroids)
      : cells_(cells), dim_(dim), centroids_(std::move(centroids)) {
    if (cells_ == 0) throw RangeError("coarse quantizer needs at least one cell");
    if (centroids_.size() != cells_ * dim_) throw DimensionMismatch("coarse centroids size");
  }

  std::size_t cells() const { return cells_; }
  std::size_t dim() const { return dim_; }
  std::span<const float> centroids() const { return centroids_; }
  std::span<const float> centroid(std::size_t c) const { return {centroids_.data() + c * dim_, dim_}; }

  std::uint32_t assign(std::span<const float> x) const {
    return detail::nearest_row(x.data(), centroids_, cells_, dim_, nullptr);
  }

  // The w nearest cells, nearest first, ties to the lower cell id.
  std::vector<std::uint32_t> probe(std::span<const float> q, std::size_t w) const {
    TopK sel(std::min(w, cells_));
    for (std::size_t c = 0; c < cells_; ++c) {
      sel.push(static_cast<std::uint32_t>(c),
               static_cast<float>(kernels::sq_l2_unchecked(q.data(), centroids_.data() + c * dim_, dim_)));
    }
    std::vector<std::uint32_t> out;
    for (const auto& s : sel.take_sorted()) out.push_back(s.id);
    return out;
  }

  friend bool operator==(const CoarseQuantizer&, const CoarseQuantizer&) = default;

 private:
  std::size_t cells_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> centroids_;
};

struct IvfBuildOptions {
  std::size_t coarse_k = 256;
  std::size_t coarse_iters = 20;
  std::size_t m = 8;
  std::size_t k = 256;
  std::size_t level = 2;
  CodebookMethod method = CodebookMethod::odl;
  std::size_t kmeans_iters = 25;
  OdlOptions odl{};
  // Rows drawn from the gallery when no separate training set is given.
  std::size_t train_size = 100000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct IvfSearchOptions {
  std::size_t w = 8;
  std::size_t p = 100;
  // Exact re-ranking of the best `rerank` candidates against the raw gallery.
  std::optional<std::size_t> rerank;
  DistanceMode mode = DistanceMode::adc;
};

struct IvfSearchStats {
  std::size_t cells_probed = 0;
  std::size_t codes_scanned = 0;
  StageTimes times;
};

namespace detail {

// Inverted lists in CSR form: gallery ids of cell c are
// ids[offsets[c] .. offsets[c + 1]), ascending.
struct InvertedLists {
  std::vector<std::uint64_t> offsets;
  std::vector<std::uint32_t> ids;

  std::size_t cells() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t list_size(std::size_t c) const { return offsets[c + 1] - offsets[c]; }

  static InvertedLists from_assignment(std::span<const std::uint32_t> cell_of, std::size_t cells) {
    InvertedLists l;
    l.offsets.assign(cells + 1, 0);
    for (std::uint32_t c : cell_of) ++l.offsets[c + 1];
    for (std::size_t c = 0; c < cells; ++c) l.offsets[c + 1] += l.offsets[c];
    l.ids.resize(cell_of.size());
    std::vector<std::uint64_t> cursor(l.offsets.begin(), l.offsets.end() - 1);
    for (std::size_t r = 0; r < cell_of.size(); ++r) l.ids[cursor[cell_of[r]]++] = static_cast<std::uint32_t>(r);
    return l;
  }

  friend bool operator==(const InvertedLists&, const InvertedLists&) = default;
};

inline VectorSet training_sample(const VectorSet& gallery, std::size_t size, std::uint64_t seed) {
  if (size >= gallery.n()) return gallery;
  Rng rng(seed);
  auto rows = sample_distinct(gallery.n(), size, rng);
  std::sort(rows.begin(), rows.end());
  return gallery.select_rows(rows);
}

inline VectorSet residuals(const VectorSet& data, const CoarseQuantizer& coarse,
                           std::span<const std::uint32_t> cell_of, std::size_t threads) {
  std::vector<float> out(data.n() * data.d());
  parallel_for(data.n(), threads, [&](std::size_t r) {
    const auto x = data.row(r);
    const auto c = coarse.centroid(cell_of[r]);
    for (std::size_t t = 0; t < data.d(); ++t) out[r * data.d() + t] = x[t] - c[t];
  });
  return VectorSet(data.n(), data.d(), std::move(out));
}

inline std::vector<std::uint32_t> assign_all(const VectorSet& data, const CoarseQuantizer& coarse,
                                             std::size_t threads) {
  std::vector<std::uint32_t> cell_of(data.n());
  parallel_for(data.n(), threads, [&](std::size_t r) { cell_of[r] = coarse.assign(data.row(r)); });
  return cell_of;
}

inline CoarseQuantizer train_coarse(const VectorSet& train, const IvfBuildOptions& o) {
  auto km = kmeans(train, o.coarse_k, o.coarse_iters, derive_seed(o.seed, 1000), KMeansInit::plus_plus,
                   o.threads);
  return CoarseQuantizer(o.coarse_k, train.d(), std::move(km.centroids));
}

// Exact re-ranking: keeps the best `p` of `candidates` by true squared
// distance.
inline std::vector<ScoredId> rerank_exact(std::vector<ScoredId> candidates, std::span<const float> q,
                                          const VectorSet& gallery, std::size_t p) {
  for (auto& c : candidates) c.score = sq_l2(q, gallery.row(c.id));
  std::sort(candidates.begin(), candidates.end(), ranks_before);
  if (candidates.size() > p) candidates.resize(p);
  return candidates;
}

inline void check_search_options(const IvfSearchOptions& o, std::size_t cells, const VectorSet* gallery) {
  if (o.w < 1 || o.w > cells) {
    throw RangeError("ivf_search: probe width w=" + std::to_string(o.w) + " outside [1, " +
                     std::to_string(cells) + "]");
  }
  if (o.p == 0) throw RangeError("ivf_search: p must be >= 1");
  if (o.rerank && gallery == nullptr) throw ConfigError("ivf_search: rerank requires the raw gallery");
  if (o.rerank && *o.rerank == 0) throw RangeError("ivf_search: rerank count must be >= 1");
}

}  // namespace detail

// Inverted file over SPQ-coded residuals x - centroid(cell(x)), with one
// residual product codebook shared by all cells.
class IVFIndex {
 public:
  IVFIndex() = default;

  IVFIndex(CoarseQuantizer coarse, detail::InvertedLists lists, SPQIndex codes)
      : coarse_(std::move(coarse)), lists_(std::move(lists)), codes_(std::move(codes)) {
    if (lists_.cells() != coarse_.cells()) throw DimensionMismatch("ivf: list count != coarse cells");
    if (lists_.ids.size() != codes_.size()) throw DimensionMismatch("ivf: list ids != code count");
    if (codes_.codebook().dim() != coarse_.dim()) throw DimensionMismatch("ivf: codebook dim");
  }

  // `train` defaults to a random sample of opts.train_size gallery rows.
  static IVFIndex build(const VectorSet& gallery, const IvfBuildOptions& opts,
                        const VectorSet* train = nullptr) {
    if (gallery.n() < opts.coarse_k) {
      throw RangeError("build_ivf: gallery has " + std::to_string(gallery.n()) +
                       " vectors, fewer than k'=" + std::to_string(opts.coarse_k));
    }
    const VectorSet sample =
        train != nullptr ? *train : detail::training_sample(gallery, opts.train_size, derive_seed(opts.seed, 7));
    detail::require_same_dim(sample.d(), gallery.d(), "build_ivf training set");
    CoarseQuantizer coarse = detail::train_coarse(sample, opts);

    const auto sample_cells = detail::assign_all(sample, coarse, opts.threads);
    const VectorSet sample_res = detail::residuals(sample, coarse, sample_cells, opts.threads);
    ProductTrainOptions pto;
    pto.k = opts.k;
    pto.level = opts.level;
    pto.method = opts.method;
    pto.kmeans_iters = opts.kmeans_iters;
    pto.odl = opts.odl;
    pto.seed = derive_seed(opts.seed, 2000);
    pto.threads = opts.threads;
    ProductCodebook pcb =
        train_product_codebook(sample_res, SubspaceLayout::uniform(gallery.d(), opts.m), pto).codebook;

    const auto cell_of = detail::assign_all(gallery, coarse, opts.threads);
    auto lists = detail::InvertedLists::from_assignment(cell_of, coarse.cells());
    const VectorSet ordered = gallery.select_rows(std::vector<std::size_t>(lists.ids.begin(), lists.ids.end()));
    std::vector<std::uint32_t> ordered_cells(ordered.n());
    for (std::size_t r = 0; r < ordered.n(); ++r) ordered_cells[r] = cell_of[lists.ids[r]];
    const VectorSet res = detail::residuals(ordered, coarse, ordered_cells, opts.threads);
    SPQIndex codes = SPQIndex::build(res, std::move(pcb), opts.level, opts.threads);
    return IVFIndex(std::move(coarse), std::move(lists), std::move(codes));
  }

  std::size_t size() const { return lists_.ids.size(); }
  std::size_t cells() const { return coarse_.cells(); }
  std::size_t level() const { return codes_.level(); }
  const CoarseQuantizer& coarse() const { return coarse_; }
  const ProductCodebook& codebook() const { return codes_.codebook(); }
  const SPQIndex& residual_codes() const { return codes_; }
  const detail::InvertedLists& lists() const { return lists_; }

  std::span<const std::uint32_t> list(std::size_t c) const {
    return std::span<const std::uint32_t>(lists_.ids).subspan(lists_.offsets[c], lists_.list_size(c));
  }

  // Residual-code scores of every item of cell c against query q, in list
  // order.
  std::vector<float> scan_cell(std::span<const float> q, std::size_t c, DistanceMode mode) const {
    const auto tables = cell_tables(q, c, mode);
    std::vector<float> out(lists_.list_size(c));
    codes_.store().scan(tables, lists_.offsets[c], lists_.offsets[c + 1], out.data());
    return out;
  }

  std::vector<ScoredId> search(std::span<const float> q, const IvfSearchOptions& o,
                               const VectorSet* gallery = nullptr, IvfSearchStats* stats = nullptr) const {
    detail::require_same_dim(q.size(), coarse_.dim(), "ivf_search");
    detail::check_search_options(o, cells(), gallery);
    IvfSearchStats local;
    Stopwatch sw;
    const auto probed = coarse_.probe(q, o.w);
    local.times.tables_ms += sw.lap_ms();
    const std::size_t keep = o.rerank ? std::max(o.p, *o.rerank) : o.p;
    TopK sel(keep);
    std::vector<float> scores;
    for (std::uint32_t c : probed) {
      ++local.cells_probed;
      const std::size_t len = lists_.list_size(c);
      if (len == 0) continue;
      sw.reset();
      const auto tables = cell_tables(q, c, o.mode);
      local.times.tables_ms += sw.lap_ms();
      scores.resize(len);
      codes_.store().scan(tables, lists_.offsets[c], lists_.offsets[c + 1], scores.data());
      local.codes_scanned += len;
      local.times.scan_ms += sw.lap_ms();
      const auto ids = list(c);
      for (std::size_t r = 0; r < len; ++r) sel.push(ids[r], scores[r]);
      local.times.select_ms += sw.lap_ms();
    }
    sw.reset();
    auto out = sel.take_sorted();
    if (o.rerank) {
      out = detail::rerank_exact(std::move(out), q, *gallery, o.p);
      local.times.rerank_ms += sw.lap_ms();
    } else {
      local.times.select_ms += sw.lap_ms();
    }
    if (stats != nullptr) *stats = local;
    return out;
  }

 private:
  LookupTables cell_tables(std::span<const float> q, std::size_t c, DistanceMode mode) const {
    std::vector<float> shifted(q.begin(), q.end());
    const auto centre = coarse_.centroid(c);
    for (std::size_t t = 0; t < shifted.size(); ++t) shifted[t] -= centre[t];
    return codes_.tables(shifted, mode);
  }

  CoarseQuantizer coarse_;
  detail::InvertedLists lists_;
  SPQIndex codes_;
};

inline IVFIndex build_ivf(const VectorSet& gallery, const IvfBuildOptions& opts,
                          const VectorSet* train = nullptr) {
  return IVFIndex::build(gallery, opts, train);
}

inline std::vector<ScoredId> ivf_search(const IVFIndex& index, std::span<const float> q,
                                        const IvfSearchOptions& o, const VectorSet* gallery = nullptr,
                                        IvfSearchStats* stats = nullptr) {
  return index.search(q, o, gallery, stats);
}

// Inverted file over PQ-coded residuals (the hard-assignment counterpart).
class IVFPQIndex {
 public:
  IVFPQIndex() = default;

  IVFPQIndex(CoarseQuantizer coarse, detail::InvertedLists lists, PQIndex codes)
      : coarse_(std::move(coarse)), lists_(std::move(lists)), codes_(std::move(codes)) {
    if (lists_.cells() != coarse_.cells()) throw DimensionMismatch("ivfpq: list count != coarse cells");
    if (lists_.ids.size() != codes_.size()) throw DimensionMismatch("ivfpq: list ids != code count");
  }

  static IVFPQIndex build(const VectorSet& gallery, const IvfBuildOptions& opts,
                          const VectorSet* train = nullptr) {
    if (gallery.n() < opts.coarse_k) throw RangeError("build_ivf: gallery smaller than k'");
    const VectorSet sample =
        train != nullptr ? *train : detail::training_sample(gallery, opts.train_size, derive_seed(opts.seed, 7));
    CoarseQuantizer coarse = detail::train_coarse(sample, opts);
    const auto sample_cells = detail::assign_all(sample, coarse, opts.threads);
    const VectorSet sample_res = detail::residuals(sample, coarse, sample_cells, opts.threads);
    PQCodebook pcb = train_pq_codebook(sample_res, SubspaceLayout::uniform(gallery.d(), opts.m), opts.k,
                                       opts.kmeans_iters, derive_seed(opts.seed, 2000), opts.threads);
    const auto cell_of = detail::assign_all(gallery, coarse, opts.threads);
    auto lists = detail::InvertedLists::from_assignment(cell_of, coarse.cells());
    const VectorSet ordered = gallery.select_rows(std::vector<std::size_t>(lists.ids.begin(), lists.ids.end()));
    std::vector<std::uint32_t> ordered_cells(ordered.n());
    for (std::size_t r = 0; r < ordered.n(); ++r) ordered_cells[r] = cell_of[lists.ids[r]];
    const VectorSet res = detail::residuals(ordered, coarse, ordered_cells, opts.threads);
    PQIndex codes = PQIndex::build(res, std::move(pcb), opts.threads);
    return IVFPQIndex(std::move(coarse), std::move(lists), std::move(codes));
  }

  std::size_t size() const { return lists_.ids.size(); }
  std::size_t cells() const { return coarse_.cells(); }
  const CoarseQuantizer& coarse() const { return coarse_; }
  const detail::InvertedLists& lists() const { return lists_; }
  const PQIndex& residual_codes() const { return codes_; }

  std::vector<ScoredId> search(std::span<const float> q, const IvfSearchOptions& o,
                               const VectorSet* gallery = nullptr, IvfSearchStats* stats = nullptr) const {
    detail::require_same_dim(q.size(), coarse_.dim(), "ivf_search");
    detail::check_search_options(o, cells(), gallery);
    IvfSearchStats local;
    Stopwatch sw;
    const auto probed = coarse_.probe(q, o.w);
    local.times.tables_ms += sw.lap_ms();
    const std::size_t keep = o.rerank ? std::max(o.p, *o.rerank) : o.p;
    TopK sel(keep);
    std::vector<float> scores;
    std::vector<float> shifted(q.size());
    for (std::uint32_t c : probed) {
      ++local.cells_probed;
      const std::size_t len = lists_.list_size(c);
      if (len == 0) continue;
      sw.reset();
      const auto centre = coarse_.centroid(c);
      for (std::size_t t = 0; t < q.size(); ++t) shifted[t] = q[t] - centre[t];
      const auto table = o.mode == DistanceMode::adc ? codes_.adc_table(shifted) : codes_.sdc_table(shifted);
      local.times.tables_ms += sw.lap_ms();
      scores.resize(len);
      codes_.scan(table, lists_.offsets[c], lists_.offsets[c + 1], scores.data());
      local.codes_scanned += len;
      local.times.scan_ms += sw.lap_ms();
      const std::size_t base = lists_.offsets[c];
      for (std::size_t r = 0; r < len; ++r) sel.push(lists_.ids[base + r], scores[r]);
      local.times.select_ms += sw.lap_ms();
    }
    sw.reset();
    auto out = sel.take_sorted();
    if (o.rerank) {
      out = detail::rerank_exact(std::move(out), q, *gallery, o.p);
      local.times.rerank_ms += sw.lap_ms();
    }
    if (stats != nullptr) *stats = local;
    return out;
  }

 private:
  CoarseQuantizer coarse_;
  detail::InvertedLists lists_;
  PQIndex codes_;
};

namespace detail {

inline void append_ivf_header(io::ByteWriter& out, std::string_view magic, const CoarseQuantizer& coarse,
                              const InvertedLists& lists) {
  out.magic(magic);
  out.u32(1);
  out.u64(lists.ids.size());
  out.u32(static_cast<std::uint32_t>(coarse.cells()));
  out.u32(static_cast<std::uint32_t>(coarse.dim()));
  out.f32s(coarse.centroids());
  for (std::uint64_t o : lists.offsets) out.u64(o);
  for (std::uint32_t id : lists.ids) out.u32(id);
}

inline std::pair<CoarseQuantizer, InvertedLists> parse_ivf_header(io::ByteReader& in, std::string_view magic) {
  in.expect_magic(magic);
  const std::size_t at = in.offset();
  if (in.u32() != 1) throw FormatError("unsupported ivf index version", at);
  const std::uint64_t n = in.u64();
  const std::size_t cells = in.u32();
  const std::size_t dim = in.u32();
  if (cells == 0 || dim == 0) throw FormatError("ivf header has invalid cells or dim", in.offset());
  std::vector<float> centroids(cells * dim);
  in.f32s(centroids);
  InvertedLists lists;
  lists.offsets.resize(cells + 1);
  for (auto& o : lists.offsets) o = in.u64();
  if (lists.offsets.front() != 0 || lists.offsets.back() != n ||
      !std::is_sorted(lists.offsets.begin(), lists.offsets.end())) {
    throw FormatError("ivf list offsets are inconsistent", in.offset());
  }
  lists.ids.resize(n);
  for (auto& id : lists.ids) id = in.u32();
  return {CoarseQuantizer(cells, dim, std::move(centroids)), std::move(lists)};
}

}  // namespace detail

// IVF index file: "SPQV", u32 version, u64 n, u32 k', u32 D, k' x D coarse
// centroids (f32 LE), k'+1 list offsets (u64 LE), n gallery ids in list order
// (u32 LE), then an embedded "SPQI" block holding the residual codes in list
// order. The PQ-residual variant uses "SPQW" and an embedded "SPQP" block.
inline void save_ivf_index(const std::string& path, const IVFIndex& index) {
  io::ByteWriter out;
  detail::append_ivf_header(out, "SPQV", index.coarse(), index.lists());
  append_spq_index(out, index.residual_codes());
  io::write_file(path, out.bytes());
}

inline IVFIndex load_ivf_index(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader in(bytes);
  auto [coarse, lists] = detail::parse_ivf_header(in, "SPQV");
  SPQIndex codes = parse_spq_index(in);
  if (!in.done()) throw FormatError(path + ": trailing bytes", in.offset());
  return IVFIndex(std::move(coarse), std::move(lists), std::move(codes));
}

inline void save_ivfpq_index(const std::string& path, const IVFPQIndex& index) {
  io::ByteWriter out;
  detail::append_ivf_header(out, "SPQW", index.coarse(), index.lists());
  append_pq_index(out, index.residual_codes());
  io::write_file(path, out.bytes());
}

inline IVFPQIndex load_ivfpq_index(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader in(bytes);
  auto [coarse, lists] = detail::parse_ivf_header(in, "SPQW");
  PQIndex codes = parse_pq_index(in);
  if (!in.done()) throw FormatError(path + ": trailing bytes", in.offset());
  return IVFPQIndex(std::move(coarse), std::move(lists), std::move(codes));
}

}  // namespace spq
