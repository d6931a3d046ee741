#pragma once
#include <fstream>
#include <type_traits>

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "spq/binary_io.hpp"
#include "spq/config.hpp"
#include "spq/dataset_io.hpp"
#include "spq/eval.hpp"
#include "spq/ivf.hpp"
#include "spq/parallel.hpp"
#include "spq/pq.hpp"
#include "spq/spq_index.hpp"
#include "spq/timing.hpp"
#include "spq/training.hpp"

namespace spq {

// Any of the four searchable index kinds, as produced by `encode`.
using AnyIndex = std::variant<PQIndex, SPQIndex, IVFPQIndex, IVFIndex>;

inline Method method_of(const AnyIndex& index) {
  switch (index.index()) {
    case 0: return Method::pq;
    case 1: return Method::spq;
    case 2: return Method::ivfpq;
    default: return Method::ivfspq;
  }
}

inline std::size_t index_size(const AnyIndex& index) {
  return std::visit([](const auto& i) { return i.size(); }, index);
}

inline ProductTrainOptions train_options(const RunConfig& cfg) {
  ProductTrainOptions o;
  o.k = cfg.k;
  o.level = cfg.level;
  o.method = cfg.codebook_method;
  o.kmeans_iters = cfg.kmeans_iters;
  o.odl = {cfg.odl_batch, cfg.odl_epochs};
  o.seed = cfg.seed;
  o.threads = cfg.threads;
  return o;
}

inline IvfBuildOptions ivf_options(const RunConfig& cfg) {
  IvfBuildOptions o;
  o.coarse_k = cfg.coarse_k;
  o.m = cfg.m;
  o.k = cfg.k;
  o.level = cfg.level;
  o.method = cfg.codebook_method;
  o.kmeans_iters = cfg.kmeans_iters;
  o.odl = {cfg.odl_batch, cfg.odl_epochs};
  o.train_size = cfg.train_size;
  o.seed = cfg.seed;
  o.threads = cfg.threads;
  return o;
}

// Trains (on `train`) and encodes `gallery` with the configured method.
inline AnyIndex build_index(const RunConfig& cfg, const VectorSet& train, const VectorSet& gallery) {
  cfg.validate();
  cfg.validate_dim(gallery.d());
  const auto layout = SubspaceLayout::uniform(gallery.d(), cfg.m);
  switch (cfg.method) {
    case Method::pq:
      return PQIndex::build(gallery, train_pq_codebook(train, layout, cfg.k, cfg.kmeans_iters, cfg.seed, cfg.threads),
                            cfg.threads);
    case Method::spq:
      return SPQIndex::build(gallery, train_product_codebook(train, layout, train_options(cfg)).codebook, cfg.level,
                             cfg.threads);
    case Method::ivfpq:
      return IVFPQIndex::build(gallery, ivf_options(cfg), &train);
    case Method::ivfspq:
      return IVFIndex::build(gallery, ivf_options(cfg), &train);
  }
  throw ConfigError("unhandled method");
}

// Mean squared reconstruction error of the coded gallery.
inline double index_distortion(const AnyIndex& any, const VectorSet& gallery) {
  struct Visitor {
    const VectorSet& g;
    double operator()(const PQIndex& idx) const {
      double total = 0.0;
      for (std::size_t r = 0; r < g.n(); ++r) {
        total += sq_l2(g.row(r), pq_reconstruct(PQCode{{idx.code(r).begin(), idx.code(r).end()}}, idx.codebook()));
      }
      return total;
    }
    double spq_store(const SparseCodeStore& store, const ProductCodebook& pcb, std::size_t r,
                     std::span<const float> x) const {
      const SPQCode code = store.code(r);
      double err = 0.0;
      for (std::size_t i = 0; i < pcb.m(); ++i) {
        err += distortion(x.subspan(pcb.layout().offset(i), pcb.layout().width(i)), code.parts[i], pcb.book(i));
      }
      return err;
    }
    double operator()(const SPQIndex& idx) const {
      double total = 0.0;
      for (std::size_t r = 0; r < g.n(); ++r) total += spq_store(idx.store(), idx.codebook(), r, g.row(r));
      return total;
    }
    std::vector<float> residual(const CoarseQuantizer& coarse, std::uint32_t gid, std::size_t cell) const {
      const auto x = g.row(gid);
      const auto c = coarse.centroid(cell);
      std::vector<float> r(x.size());
      for (std::size_t t = 0; t < x.size(); ++t) r[t] = x[t] - c[t];
      return r;
    }
    double operator()(const IVFIndex& idx) const {
      double total = 0.0;
      for (std::size_t c = 0; c < idx.cells(); ++c) {
        const std::size_t base = idx.lists().offsets[c];
        const auto ids = idx.list(c);
        for (std::size_t j = 0; j < ids.size(); ++j) {
          total += spq_store(idx.residual_codes().store(), idx.codebook(), base + j, residual(idx.coarse(), ids[j], c));
        }
      }
      return total;
    }
    double operator()(const IVFPQIndex& idx) const {
      double total = 0.0;
      const auto& codes = idx.residual_codes();
      for (std::size_t c = 0; c < idx.cells(); ++c) {
        const std::size_t base = idx.lists().offsets[c];
        const auto& ids = idx.lists().ids;
        for (std::size_t j = base; j < idx.lists().offsets[c + 1]; ++j) {
          const auto code = codes.code(j);
          total += sq_l2(residual(idx.coarse(), ids[j], c),
                         pq_reconstruct(PQCode{{code.begin(), code.end()}}, codes.codebook()));
        }
      }
      return total;
    }
  };
  if (gallery.empty()) return 0.0;
  detail::require_same_dim(gallery.n(), index_size(any), "index_distortion gallery size");
  return std::visit(Visitor{gallery}, any) / static_cast<double>(gallery.n());
}

struct SearchRequest {
  std::size_t p = 100;
  DistanceMode mode = DistanceMode::adc;
  std::size_t w = 8;
  std::size_t rerank = 0;
  const VectorSet* gallery = nullptr;  // required when rerank > 0
};

inline SearchRequest search_request(const RunConfig& cfg, const VectorSet* gallery) {
  return {cfg.p, cfg.distance, cfg.w, cfg.rerank, gallery};
}

// One query against any index kind; stage times are accumulated into `times`.
inline std::vector<ScoredId> search_one(const AnyIndex& any, std::span<const float> q, const SearchRequest& req,
                                        StageTimes& times, std::size_t* scanned = nullptr) {
  if (req.rerank > 0 && req.gallery == nullptr) throw ConfigError("rerank requires the raw gallery (--base)");
  const std::size_t keep = req.rerank > 0 ? std::max(req.p, req.rerank) : req.p;
  auto finish = [&](std::vector<float> scores, Stopwatch& sw) {
    if (scanned != nullptr) *scanned += scores.size();
    auto top = select_top(scores, keep);
    times.select_ms += sw.lap_ms();
    if (req.rerank > 0) {
      top = detail::rerank_exact(std::move(top), q, *req.gallery, req.p);
      times.rerank_ms += sw.lap_ms();
    }
    return top;
  };
  if (const auto* pq = std::get_if<PQIndex>(&any)) {
    Stopwatch sw;
    const auto table = req.mode == DistanceMode::adc ? pq->adc_table(q) : pq->sdc_table(q);
    times.tables_ms += sw.lap_ms();
    auto scores = pq->scan(table);
    times.scan_ms += sw.lap_ms();
    return finish(std::move(scores), sw);
  }
  if (const auto* spq = std::get_if<SPQIndex>(&any)) {
    Stopwatch sw;
    const auto tables = spq->tables(q, req.mode);
    times.tables_ms += sw.lap_ms();
    auto scores = spq->scan(tables);
    times.scan_ms += sw.lap_ms();
    return finish(std::move(scores), sw);
  }
  IvfSearchOptions o;
  o.w = req.w;
  o.p = req.p;
  o.mode = req.mode;
  if (req.rerank > 0) o.rerank = req.rerank;
  IvfSearchStats stats;
  auto out = std::holds_alternative<IVFIndex>(any) ? std::get<IVFIndex>(any).search(q, o, req.gallery, &stats)
                                                   : std::get<IVFPQIndex>(any).search(q, o, req.gallery, &stats);
  times += stats.times;
  if (scanned != nullptr) *scanned += stats.codes_scanned;
  return out;
}

// All queries, parallel over queries.
inline RunResult search_all(const AnyIndex& any, const VectorSet& queries, const SearchRequest& req,
                            std::size_t threads, std::size_t* scanned_total = nullptr) {
  std::vector<std::vector<ScoredId>> lists(queries.n());
  std::vector<StageTimes> times(queries.n());
  std::vector<std::size_t> scanned(queries.n(), 0);
  parallel_for(queries.n(), threads, [&](std::size_t qi) {
    lists[qi] = search_one(any, queries.row(qi), req, times[qi], &scanned[qi]);
  });
  RunResult run = RunResult::from_scored(lists);
  for (const auto& t : times) run.times += t;
  if (scanned_total != nullptr) {
    *scanned_total = 0;
    for (std::size_t s : scanned) *scanned_total += s;
  }
  return run;
}

inline void save_index(const std::string& path, const AnyIndex& any) {
  std::visit(
      [&](const auto& idx) {
        using T = std::decay_t<decltype(idx)>;
        if constexpr (std::is_same_v<T, PQIndex>) save_pq_index(path, idx);
        else if constexpr (std::is_same_v<T, SPQIndex>) save_spq_index(path, idx);
        else if constexpr (std::is_same_v<T, IVFPQIndex>) save_ivfpq_index(path, idx);
        else save_ivf_index(path, idx);
      },
      any);
}

// Dispatches on the four-byte magic.
inline AnyIndex load_index(const std::string& path) {
  std::string magic(4, '\0');
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open index file: " + path);
    in.read(magic.data(), 4);
    if (in.gcount() != 4) throw FormatError(path + ": too short to be an index file", 0);
  }
  if (magic == "SPQP") return load_pq_index(path);
  if (magic == "SPQI") return load_spq_index(path);
  if (magic == "SPQW") return load_ivfpq_index(path);
  if (magic == "SPQV") return load_ivf_index(path);
  throw FormatError(path + ": unknown index magic \"" + magic + "\"", 0);
}

// Data for a synthetic benchmark: i.i.d. Gaussian gallery, queries and
// training sample from independent seeds, plus exact ground truth.
struct BenchData {
  VectorSet gallery;
  VectorSet queries;
  VectorSet train;
  GroundTruth gt;
};

inline BenchData synthetic_bench_data(const RunConfig& cfg, std::size_t gt_t) {
  BenchData data;
  data.gallery = gen_gaussian(cfg.n, cfg.d, derive_seed(cfg.seed, 1));
  data.queries = gen_gaussian(cfg.nq, cfg.d, derive_seed(cfg.seed, 2));
  data.train = gen_gaussian(std::min(cfg.train_size, cfg.n), cfg.d, derive_seed(cfg.seed, 3));
  data.gt = exact_knn(data.gallery, data.queries, std::min(gt_t, cfg.n), cfg.threads);
  return data;
}

inline constexpr std::size_t kMapTruthDepth = 50;

// Sweeps bits x methods; per setting emits distortion, recall@R for every R
// in cfg.r_list (t_eval = cfg.t_eval), mAP against the first min(50, gt.t)
// true neighbours over the full ranked list, and mean search time per query.
// m for a bit budget b is b / ceil(log2 k) for every method.
inline std::vector<MetricRow> run_bench(const RunConfig& base_cfg, const BenchData& data,
                                        const std::vector<Method>& methods, std::ostream* log = nullptr) {
  base_cfg.validate();
  const std::size_t id_bits = bits_for(base_cfg.k);
  if (id_bits == 0) throw ConfigError("bench needs k >= 2");
  std::size_t max_r = base_cfg.p;
  for (std::size_t r : base_cfg.r_list) max_r = std::max(max_r, r);
  max_r = std::min(max_r, data.gallery.n());
  const std::size_t map_t = std::min(kMapTruthDepth, data.gt.t);
  std::vector<MetricRow> rows;
  for (Method method : methods) {
    for (std::size_t bits : base_cfg.bits) {
      if (bits % id_bits != 0) {
        throw ConfigError("bit budget " + std::to_string(bits) + " is not a multiple of log2(k)=" +
                          std::to_string(id_bits));
      }
      RunConfig cfg = base_cfg;
      cfg.method = method;
      cfg.m = bits / id_bits;
      cfg.p = max_r;
      Stopwatch sw;
      const AnyIndex index = build_index(cfg, data.train, data.gallery);
      const double build_ms = sw.lap_ms();
      const double dist = index_distortion(index, data.gallery);
      const RunResult run = search_all(index, data.queries, search_request(cfg, &data.gallery), cfg.threads);
      const bool sparse = method == Method::spq || method == Method::ivfspq;
      MetricRow proto;
      proto.method = std::string(to_string(method));
      proto.code_bits = bits;
      proto.index_bits = cfg.m * (sparse ? cfg.level : 1) * id_bits;
      proto.coeff_bytes = sparse ? cfg.m * cfg.level * 4 : 0;
      auto push = [&](std::string metric, std::size_t param, double value) {
        MetricRow r = proto;
        r.metric = std::move(metric);
        r.param = param;
        r.value = value;
        rows.push_back(r);
      };
      push("distortion", 0, dist);
      for (std::size_t r : base_cfg.r_list) push("recall", r, recall_at_r(run, data.gt, std::min(r, max_r), cfg.t_eval));
      push("map", map_t, mean_average_precision(run, data.gt, map_t));
      push("search_ms", 0, run.times.total_ms() / static_cast<double>(std::max<std::size_t>(1, run.queries())));
      if (log != nullptr) {
        *log << to_string(method) << " bits=" << bits << " m=" << cfg.m << " build_ms=" << build_ms
             << " distortion=" << dist << "\n";
      }
    }
  }
  return rows;
}

inline std::map<std::string, std::string> bench_metadata(const RunConfig& cfg, const BenchData& data) {
  return {{"n", std::to_string(data.gallery.n())},
          {"nq", std::to_string(data.queries.n())},
          {"d", std::to_string(data.gallery.d())},
          {"k", std::to_string(cfg.k)},
          {"level", std::to_string(cfg.level)},
          {"seed", std::to_string(cfg.seed)},
          {"recall_t_eval", std::to_string(cfg.t_eval)},
          {"map_t_eval", std::to_string(std::min(kMapTruthDepth, data.gt.t))},
          {"map_depth", "full ranked list"},
          {"distance", std::string(to_string(cfg.distance))}};
}

}  // namespace spq
