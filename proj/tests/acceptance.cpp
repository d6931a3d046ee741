// Acceptance checks: one PASS/FAIL/SKIP line per criterion, exit status 1 if
// any criterion fails. Set SPQ_SIFT_DIR to a directory holding the SIFT1M
// files (sift_base.fvecs, sift_query.fvecs, sift_learn.fvecs,
// sift_groundtruth.ivecs) to run the full-scale check.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "spq/spq.hpp"
#include "test_util.hpp"

using namespace spq;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome verdict(bool ok, const std::string& detail) { return {ok ? Status::pass : Status::fail, detail}; }

double seconds_since(const Stopwatch& sw) { return sw.elapsed_ms() / 1000.0; }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Shared 100K x 128 Gaussian data used by criteria 4 and 5.
struct GaussianBench {
  RunConfig cfg;
  BenchData data;
  SPQIndex spq;
  double spq_recall = 0.0;
  bool ready = false;
};

GaussianBench& gaussian_bench() {
  static GaussianBench b;
  if (!b.ready) {
    b.cfg.n = 100000;
    b.cfg.nq = 1000;
    b.cfg.d = 128;
    b.cfg.m = 8;
    b.cfg.k = 256;
    b.cfg.level = 2;
    b.cfg.t_eval = 1;
    b.cfg.p = 100;
    b.cfg.threads = 1;
    b.data = synthetic_bench_data(b.cfg, 1);
    b.ready = true;
  }
  return b;
}

// Criterion 1: OMP coefficients, orthogonality and monotonicity.
Outcome omp_correctness() {
  Stopwatch sw;
  Rng rng(101);
  std::size_t coeff_bad = 0, ortho_bad = 0, mono_bad = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t d = 1 + rng.below(8);
    const std::size_t k = 1 + rng.below(16);
    const std::size_t max_level = 1 + rng.below(std::min<std::size_t>(3, k));
    const Codebook cb = spq_test::random_codebook(k, d, 1000 + static_cast<std::uint64_t>(inst));
    const auto x = spq_test::random_vector(rng, d);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t level = 1; level <= max_level; ++level) {
      const SparseCode code = omp_encode(x, cb, level);
      Eigen::MatrixXd a(d, code.used);
      for (std::size_t s = 0; s < code.used; ++s) {
        for (std::size_t t = 0; t < d; ++t) a(t, s) = cb.atom(code.ids[s])[t];
      }
      Eigen::VectorXd b(d);
      for (std::size_t t = 0; t < d; ++t) b(t) = x[t];
      const Eigen::VectorXd ls = a.colPivHouseholderQr().solve(b);
      for (std::size_t s = 0; s < code.used; ++s) {
        if (std::abs(code.coeffs[s] - ls(static_cast<Eigen::Index>(s))) > 1e-5 * std::max(1.0, std::abs(ls(static_cast<Eigen::Index>(s))))) ++coeff_bad;
      }
      const auto rec = reconstruct(code, cb);
      for (std::size_t s = 0; s < code.used; ++s) {
        double ip = 0.0;
        for (std::size_t t = 0; t < d; ++t) ip += (static_cast<double>(x[t]) - rec[t]) * cb.atom(code.ids[s])[t];
        if (std::abs(ip) > 1e-4) ++ortho_bad;
      }
      const double e = spq_test::naive_sq_l2(x, rec);
      if (e > prev + 1e-7 * std::max(1.0, prev)) ++mono_bad;
      prev = e;
    }
  }
  const double secs = seconds_since(sw);
  std::ostringstream os;
  os << "coeff mismatches " << coeff_bad << ", orthogonality violations " << ortho_bad
     << ", monotonicity violations " << mono_bad << ", " << fmt("%.2f s", secs);
  return verdict(coeff_bad == 0 && ortho_bad == 0 && mono_bad == 0 && secs < 10.0, os.str());
}

// Criterion 2: L=1 beats hard assignment and L=2 beats L=1 per vector.
Outcome distortion_dominance() {
  const std::size_t dim = 128, m = 8, k = 256;
  const VectorSet gallery = gen_gaussian(10000, dim, 202);
  const VectorSet train = gen_gaussian(5000, dim, 203);
  ProductTrainOptions o;
  o.k = k;
  o.level = 2;
  o.method = CodebookMethod::kmeans;
  o.kmeans_iters = 10;
  o.seed = 204;
  const auto layout = SubspaceLayout::uniform(dim, m);
  const ProductCodebook pcb = train_product_codebook(train, layout, o).codebook;
  std::size_t hard_bad = 0, level_bad = 0;
  double worst = 0.0;
  for (std::size_t r = 0; r < gallery.n(); ++r) {
    for (std::size_t i = 0; i < m; ++i) {
      const auto x = gallery.row(r).subspan(layout.offset(i), layout.width(i));
      const auto& book = pcb.book(i);
      double hard = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) hard = std::min(hard, spq_test::naive_sq_l2(x, book.atom(j)));
      const double e1 = spq_test::naive_sq_l2(x, reconstruct(omp_encode(x, book, 1), book));
      const double e2 = spq_test::naive_sq_l2(x, reconstruct(omp_encode(x, book, 2), book));
      if (e1 > hard + 1e-7) ++hard_bad, worst = std::max(worst, e1 - hard);
      if (e2 > e1 + 1e-7) ++level_bad, worst = std::max(worst, e2 - e1);
    }
  }
  std::ostringstream os;
  os << "L1>hard violations " << hard_bad << ", L2>L1 violations " << level_bad << " over 10000x" << m
     << " subvectors, worst excess " << worst;
  return verdict(hard_bad == 0 && level_bad == 0, os.str());
}

// Scores in `got` order must be non-decreasing in the oracle up to `tol`.
bool ranking_consistent(const std::vector<ScoredId>& got, const std::vector<double>& oracle, double tol) {
  for (std::size_t r = 1; r < got.size(); ++r) {
    const double a = oracle[got[r - 1].id], b = oracle[got[r].id];
    if (a > b + tol * std::max(1.0, std::abs(b))) return false;
  }
  return true;
}

// Criterion 3: table lookups against dense and Gram-expansion oracles.
Outcome adc_sdc_oracles() {
  Stopwatch sw;
  std::size_t adc_bad = 0, sdc_bad = 0, rank_bad = 0;
  const std::size_t dim = 16, n = 1000;
  for (std::size_t m : {2u, 4u}) {
    const ProductCodebook pcb = spq_test::random_product_codebook(dim, m, 16, 300 + m);
    const VectorSet g = gen_gaussian(n, dim, 310 + m);
    const VectorSet q = gen_gaussian(20, dim, 320 + m);
    const SPQIndex idx = SPQIndex::build(g, pcb, 2);
    std::vector<std::vector<float>> recs(n);
    for (std::size_t r = 0; r < n; ++r) {
      const SPQCode c = idx.code(r);
      for (std::size_t i = 0; i < m; ++i) {
        const auto part = reconstruct(c.parts[i], pcb.book(i));
        recs[r].insert(recs[r].end(), part.begin(), part.end());
      }
    }
    for (std::size_t qi = 0; qi < q.n(); ++qi) {
      const std::vector<float> qv(q.row(qi).begin(), q.row(qi).end());
      const double q2 = spq_test::naive_dot(qv, qv);
      std::vector<double> adc(n), sdc(n);
      std::vector<SparseCode> beta(m);
      for (std::size_t i = 0; i < m; ++i) {
        beta[i] = omp_encode(q.row(qi).subspan(pcb.layout().offset(i), pcb.layout().width(i)), pcb.book(i), 2);
      }
      for (std::size_t r = 0; r < n; ++r) {
        const SPQCode c = idx.code(r);
        adc[r] = c.x_sq_norm + q2 - 2.0 * spq_test::naive_dot(qv, recs[r]);
        double cross = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const auto& a = c.parts[i];
          for (std::size_t l = 0; l < a.used; ++l) {
            for (std::size_t l2 = 0; l2 < beta[i].used; ++l2) {
              double g = 0.0;
              const auto u = pcb.book(i).atom(a.ids[l]), v = pcb.book(i).atom(beta[i].ids[l2]);
              for (std::size_t t = 0; t < u.size(); ++t) g += static_cast<double>(u[t]) * v[t];
              cross += static_cast<double>(a.coeffs[l]) * beta[i].coeffs[l2] * g;
            }
          }
        }
        sdc[r] = c.x_sq_norm + q2 - 2.0 * cross;
      }
      for (DistanceMode mode : {DistanceMode::adc, DistanceMode::sdc}) {
        const auto& oracle = mode == DistanceMode::adc ? adc : sdc;
        const auto scores = idx.scan(idx.tables(q.row(qi), mode));
        for (std::size_t r = 0; r < n; ++r) {
          const double tol = 1e-4 * std::max(1.0, std::abs(oracle[r]));
          if (std::abs(scores[r] - oracle[r]) > tol) ++(mode == DistanceMode::adc ? adc_bad : sdc_bad);
        }
        if (!ranking_consistent(idx.search(q.row(qi), n, mode), oracle, 1e-5)) ++rank_bad;
      }
    }
  }
  const double secs = seconds_since(sw);
  std::ostringstream os;
  os << "adc mismatches " << adc_bad << ", sdc mismatches " << sdc_bad << ", ranking disagreements " << rank_bad
     << ", " << fmt("%.2f s", secs);
  return verdict(adc_bad == 0 && sdc_bad == 0 && rank_bad == 0 && secs < 30.0, os.str());
}

// Criterion 4: SPQ vs PQ at 64 bits on 100K Gaussian vectors.
Outcome recall_improvement() {
  Stopwatch sw;
  GaussianBench& b = gaussian_bench();
  RunConfig cfg = b.cfg;
  const SearchRequest req = search_request(cfg, nullptr);

  cfg.method = Method::pq;
  const AnyIndex pq = build_index(cfg, b.data.train, b.data.gallery);
  const double pq_dist = index_distortion(pq, b.data.gallery);
  const double pq_recall = recall_at_r(search_all(pq, b.data.queries, req, 1), b.data.gt, 100, 1);

  cfg.method = Method::spq;
  AnyIndex spq = build_index(cfg, b.data.train, b.data.gallery);
  const double spq_dist = index_distortion(spq, b.data.gallery);
  b.spq_recall = recall_at_r(search_all(spq, b.data.queries, req, 1), b.data.gt, 100, 1);
  b.spq = std::move(std::get<SPQIndex>(spq));

  const double secs = seconds_since(sw);
  std::ostringstream os;
  os << "recall@100 spq " << b.spq_recall << " pq " << pq_recall << ", distortion spq " << spq_dist << " pq "
     << pq_dist << ", " << fmt("%.1f s", secs);
  return verdict(b.spq_recall >= pq_recall + 0.02 && spq_dist < pq_dist && secs < 600.0, os.str());
}

// Criterion 5: IVF over SPQ at k'=256, w=8, plus full-probe equivalence.
Outcome ivf_fidelity() {
  GaussianBench& b = gaussian_bench();
  if (b.spq.size() == 0) recall_improvement();
  RunConfig cfg = b.cfg;
  cfg.method = Method::ivfspq;
  cfg.coarse_k = 256;
  cfg.w = 8;
  const IVFIndex idx = IVFIndex::build(b.data.gallery, ivf_options(cfg), &b.data.train);
  const AnyIndex any{idx};
  std::size_t scanned = 0;
  const double recall =
      recall_at_r(search_all(any, b.data.queries, search_request(cfg, nullptr), 1, &scanned), b.data.gt, 100, 1);
  const double frac = static_cast<double>(scanned) / (static_cast<double>(b.data.queries.n()) * b.data.gallery.n());

  IvfSearchOptions full;
  full.w = idx.cells();
  full.p = b.data.gallery.n();
  std::size_t score_bad = 0;
  for (std::size_t qi = 0; qi < 5; ++qi) {
    const auto q = b.data.queries.row(qi);
    std::vector<float> exhaustive(b.data.gallery.n());
    for (std::size_t c = 0; c < idx.cells(); ++c) {
      const auto scores = idx.scan_cell(q, c, DistanceMode::adc);
      const auto ids = idx.list(c);
      for (std::size_t j = 0; j < ids.size(); ++j) exhaustive[ids[j]] = scores[j];
    }
    for (const auto& s : idx.search(q, full)) {
      if (std::abs(s.score - exhaustive[s.id]) > 1e-4 * std::max(1.0f, std::abs(exhaustive[s.id]))) ++score_bad;
    }
  }
  std::ostringstream os;
  os << "recall@100 ivfspq " << recall << " vs exhaustive spq " << b.spq_recall << ", scanned "
     << fmt("%.2f%%", 100.0 * frac) << " of codes, full-probe score mismatches " << score_bad;
  return verdict(recall >= b.spq_recall - 0.05 && frac <= 0.10 && score_bad == 0, os.str());
}

// Criterion 6: exact MAC count and linear scan time in n.
Outcome complexity_contract() {
  const std::size_t dim = 128, m = 8, k = 256, level = 2;
  const ProductCodebook pcb = spq_test::random_product_codebook(dim, m, k, 600);
  const VectorSet big = gen_gaussian(200000, dim, 601);
  const SPQIndex idx_big = SPQIndex::build(big, pcb, level);
  const SPQIndex idx_small = SPQIndex::build(big.slice_rows(0, 100000), pcb, level);
  const VectorSet q = gen_gaussian(1, dim, 602);
  const LookupTables tables = idx_big.tables(q.row(0), DistanceMode::adc);

  MacCount count;
  (void)idx_big.scan(tables, count);
  const bool macs_ok = count.macs == 200000u * m * level;

  auto median_ms = [&](const SPQIndex& idx) {
    std::vector<double> ms;
    volatile float sink = 0.0f;
    for (int rep = 0; rep < 21; ++rep) {
      Stopwatch sw;
      const auto s = idx.scan(tables);
      ms.push_back(sw.elapsed_ms());
      sink = sink + s[rep];
    }
    std::nth_element(ms.begin(), ms.begin() + 10, ms.end());
    return ms[10];
  };
  median_ms(idx_small);  // warm-up
  const double t_small = median_ms(idx_small), t_big = median_ms(idx_big);
  const double ratio = t_big / t_small;
  std::ostringstream os;
  os << "macs " << count.macs << " (expected " << 200000u * m * level << "), scan ms n=100K "
     << fmt("%.3f", t_small) << " n=200K " << fmt("%.3f", t_big) << ", ratio " << fmt("%.3f", ratio);
  return verdict(macs_ok && ratio >= 1.5 && ratio <= 2.5, os.str());
}

// Criterion 7: SIFT1M 64-bit reproduction, only when the data is present.
Outcome sift_reproduction() {
  const char* dir = std::getenv("SPQ_SIFT_DIR");
  if (dir == nullptr) return {Status::skip, "set SPQ_SIFT_DIR to run on SIFT1M"};
  const std::filesystem::path root(dir);
  const VectorSet base = read_vecs((root / "sift_base.fvecs").string());
  const VectorSet queries = read_vecs((root / "sift_query.fvecs").string());
  const VectorSet learn = read_vecs((root / "sift_learn.fvecs").string());
  const GroundTruth gt = read_groundtruth((root / "sift_groundtruth.ivecs").string());
  RunConfig cfg;
  cfg.m = 8;
  cfg.k = 256;
  cfg.level = 2;
  cfg.threads = 0;
  cfg.p = base.n();
  const SearchRequest req = search_request(cfg, nullptr);
  double r1[2], map_spq = 0.0;
  for (Method method : {Method::pq, Method::spq}) {
    cfg.method = method;
    const AnyIndex idx = build_index(cfg, learn, base);
    const RunResult run = search_all(idx, queries, req, cfg.threads);
    r1[method == Method::spq] = 100.0 * recall_at_r(run, gt, 1, 1);
    if (method == Method::spq) map_spq = 100.0 * mean_average_precision(run, gt, std::min(kMapTruthDepth, gt.t));
  }
  std::ostringstream os;
  os << "recall@1 spq " << r1[1] << " pq " << r1[0] << ", spq mAP " << map_spq;
  return verdict(std::abs(r1[1] - 51.9) <= 5.0 && std::abs(r1[0] - 23.0) <= 5.0 && std::abs(map_spq - 69.47) <= 5.0,
                 os.str());
}

// Criterion 8: metrics against literal definitions.
Outcome metric_oracles() {
  Rng rng(808);
  std::size_t bad = 0, checks = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t nq = 1 + rng.below(4);
    const std::size_t universe = 4 + rng.below(16);
    const std::size_t t = 1 + rng.below(4);
    const std::size_t len = t + rng.below(universe - t + 1);
    GroundTruth gt;
    gt.t = t;
    RunResult run;
    for (std::size_t q = 0; q < nq; ++q) {
      std::vector<std::uint32_t> perm(universe);
      std::iota(perm.begin(), perm.end(), 0u);
      rng.shuffle(perm.begin(), perm.end());
      gt.ids.emplace_back(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(t));
      rng.shuffle(perm.begin(), perm.end());
      run.ranked.emplace_back(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(len));
    }
    for (std::size_t te = 1; te <= t; ++te) {
      for (std::size_t r = 1; r <= len; ++r) {
        double total = 0.0;
        for (std::size_t q = 0; q < nq; ++q) {
          std::size_t hits = 0;
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < te; ++j) hits += run.ranked[q][i] == gt.ids[q][j];
          }
          total += static_cast<double>(hits) / static_cast<double>(te);
        }
        ++checks;
        bad += recall_at_r(run, gt, r, te) != total / static_cast<double>(nq);
      }
      double total = 0.0;
      for (std::size_t q = 0; q < nq; ++q) {
        auto rel = [&](std::uint32_t id) {
          for (std::size_t j = 0; j < te; ++j) {
            if (gt.ids[q][j] == id) return true;
          }
          return false;
        };
        double ap = 0.0;
        for (std::size_t rank = 1; rank <= len; ++rank) {
          if (!rel(run.ranked[q][rank - 1])) continue;
          std::size_t h = 0;
          for (std::size_t i = 0; i < rank; ++i) h += rel(run.ranked[q][i]);
          ap += static_cast<double>(h) / static_cast<double>(rank);
        }
        total += ap / static_cast<double>(te);
      }
      ++checks;
      bad += mean_average_precision(run, gt, te) != total / static_cast<double>(nq);
    }
  }
  std::ostringstream os;
  os << bad << " mismatches in " << checks << " metric evaluations";
  return verdict(bad == 0, os.str());
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, omp_correctness},     {2, distortion_dominance}, {3, adc_sdc_oracles},   {4, recall_improvement},
      {5, ivf_fidelity},        {6, complexity_contract},  {7, sift_reproduction}, {8, metric_oracles}};
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  bool failed = false;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out = {Status::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = out.status == Status::pass ? "PASS" : out.status == Status::fail ? "FAIL" : "SKIP";
    std::cout << tag << " criterion " << id << ": " << out.detail << std::endl;
    failed |= out.status == Status::fail;
  }
  return failed ? 1 : 0;
}
