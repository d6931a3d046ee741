#include <catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "spq/dataset_io.hpp"
#include "spq/ivf.hpp"
#include "test_util.hpp"

using namespace spq;

namespace {

IvfBuildOptions small_options(std::size_t cells) {
  IvfBuildOptions o;
  o.coarse_k = cells;
  o.m = 4;
  o.k = 16;
  o.level = 2;
  o.kmeans_iters = 10;
  o.odl = {128, 2};
  o.seed = 5;
  return o;
}

// Exhaustive scan of every list, merged with the shared tie rule.
std::vector<ScoredId> scan_all_cells(const IVFIndex& idx, std::span<const float> q, std::size_t p) {
  TopK sel(p);
  for (std::size_t c = 0; c < idx.cells(); ++c) {
    const auto scores = idx.scan_cell(q, c, DistanceMode::adc);
    const auto ids = idx.list(c);
    for (std::size_t r = 0; r < ids.size(); ++r) sel.push(ids[r], scores[r]);
  }
  return sel.take_sorted();
}

}  // namespace

TEST_CASE("one point per cell when n equals k'", "[ivf]") {
  const VectorSet g = spq_test::random_set(16, 8, 1, 10.0);
  auto o = small_options(16);
  o.k = 4;
  o.level = 1;
  const IVFIndex idx = IVFIndex::build(g, o);
  for (std::size_t c = 0; c < 16; ++c) CHECK(idx.list(c).size() == 1);
  const auto& store = idx.residual_codes().store();
  for (std::size_t r = 0; r < g.n(); ++r) CHECK(store.sq_norm(r) == 0.0f);
}

TEST_CASE("lists partition the gallery by nearest centroid", "[ivf]") {
  const VectorSet g = spq_test::random_set(800, 16, 2);
  const IVFIndex idx = IVFIndex::build(g, small_options(12));
  std::vector<int> seen(g.n(), 0);
  for (std::size_t c = 0; c < idx.cells(); ++c) {
    const auto ids = idx.list(c);
    CHECK(std::is_sorted(ids.begin(), ids.end()));
    for (std::uint32_t id : ids) {
      ++seen[id];
      CHECK(idx.coarse().assign(g.row(id)) == c);
    }
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
}

TEST_CASE("full probe equals an exhaustive residual scan", "[ivf]") {
  const VectorSet g = spq_test::random_set(600, 16, 3);
  const IVFIndex idx = IVFIndex::build(g, small_options(10));
  IvfSearchOptions o;
  o.w = 10;
  o.p = 600;
  for (std::size_t qi = 0; qi < 20; ++qi) {
    const auto got = idx.search(g.row(qi), o);
    const auto want = scan_all_cells(idx, g.row(qi), 600);
    REQUIRE(got.size() == want.size());
    for (std::size_t r = 0; r < got.size(); ++r) {
      CHECK(got[r].id == want[r].id);
      CHECK(got[r].score == want[r].score);
    }
  }
}

TEST_CASE("full-probe scores equal the dense residual oracle", "[ivf]") {
  const VectorSet g = spq_test::random_set(300, 8, 4);
  const IVFIndex idx = IVFIndex::build(g, small_options(6));
  const VectorSet q = spq_test::random_set(5, 8, 5);
  const auto& pcb = idx.codebook();
  for (std::size_t qi = 0; qi < q.n(); ++qi) {
    for (std::size_t c = 0; c < idx.cells(); ++c) {
      const auto scores = idx.scan_cell(q.row(qi), c, DistanceMode::adc);
      const auto centre = idx.coarse().centroid(c);
      std::vector<float> shifted(8);
      for (std::size_t t = 0; t < 8; ++t) shifted[t] = q.row(qi)[t] - centre[t];
      for (std::size_t j = 0; j < scores.size(); ++j) {
        const std::size_t slot = idx.lists().offsets[c] + j;
        const SPQCode code = idx.residual_codes().code(slot);
        std::vector<float> rec;
        for (std::size_t i = 0; i < pcb.m(); ++i) {
          const auto part = reconstruct(code.parts[i], pcb.book(i));
          rec.insert(rec.end(), part.begin(), part.end());
        }
        const double ref = code.x_sq_norm + spq_test::naive_dot(shifted, shifted) - 2.0 * spq_test::naive_dot(shifted, rec);
        CHECK(std::abs(scores[j] - ref) <= 1e-4 * std::max(1.0, std::abs(ref)));
        // The stored norm is that of the residual.
        std::vector<float> res(8);
        const auto x = g.row(idx.list(c)[j]);
        for (std::size_t t = 0; t < 8; ++t) res[t] = x[t] - centre[t];
        CHECK(code.x_sq_norm == Catch::Approx(spq_test::naive_dot(res, res)).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("candidate sets grow with the probe width", "[ivf]") {
  const VectorSet g = spq_test::random_set(500, 8, 6);
  const IVFIndex idx = IVFIndex::build(g, small_options(8));
  IvfSearchOptions o;
  o.p = 500;
  for (std::size_t qi = 0; qi < 10; ++qi) {
    std::set<std::uint32_t> prev;
    for (std::size_t w = 1; w <= 8; ++w) {
      o.w = w;
      IvfSearchStats stats;
      std::set<std::uint32_t> cur;
      for (const auto& s : idx.search(g.row(qi), o, nullptr, &stats)) cur.insert(s.id);
      CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
      CHECK(stats.cells_probed == w);
      CHECK(stats.codes_scanned == cur.size());
      prev = std::move(cur);
    }
    CHECK(prev.size() == 500);
  }
}

TEST_CASE("rerank over the whole gallery reproduces exact_knn", "[ivf]") {
  const VectorSet g = spq_test::random_set(400, 8, 7);
  const VectorSet q = spq_test::random_set(10, 8, 8);
  const IVFIndex idx = IVFIndex::build(g, small_options(8));
  const GroundTruth gt = exact_knn(g, q, 20);
  IvfSearchOptions o;
  o.w = 8;
  o.p = 20;
  o.rerank = 400;
  for (std::size_t qi = 0; qi < q.n(); ++qi) {
    const auto got = idx.search(q.row(qi), o, &g);
    REQUIRE(got.size() == 20);
    for (std::size_t r = 0; r < 20; ++r) CHECK(got[r].id == gt.ids[qi][r]);
  }
}

TEST_CASE("empty cells are skipped", "[ivf]") {
  // Training rows include a far-away cluster that the gallery never visits.
  VectorSet g = spq_test::random_set(200, 4, 9);
  std::vector<float> train_data(g.data().begin(), g.data().end());
  for (int i = 0; i < 50; ++i) {
    for (int t = 0; t < 4; ++t) train_data.push_back(1000.0f + static_cast<float>(i % 3));
  }
  const VectorSet train(250, 4, train_data);
  auto opts = small_options(6);
  opts.m = 2;
  opts.k = 8;
  const IVFIndex idx = IVFIndex::build(g, opts, &train);
  std::size_t empty = 0;
  for (std::size_t c = 0; c < idx.cells(); ++c) empty += idx.list(c).empty();
  CHECK(empty >= 1);
  IvfSearchOptions o;
  o.w = 6;
  o.p = 200;
  CHECK(idx.search(g.row(0), o).size() == 200);
}

TEST_CASE("ivf argument errors", "[ivf]") {
  const VectorSet g = spq_test::random_set(50, 8, 10);
  CHECK_THROWS_AS(IVFIndex::build(g.slice_rows(0, 5), small_options(6)), RangeError);
  const IVFIndex idx = IVFIndex::build(g, small_options(6));
  IvfSearchOptions o;
  o.w = 0;
  CHECK_THROWS_AS(idx.search(g.row(0), o), RangeError);
  o.w = 7;
  CHECK_THROWS_AS(idx.search(g.row(0), o), RangeError);
  o.w = 2;
  o.rerank = 10;
  CHECK_THROWS_AS(idx.search(g.row(0), o), ConfigError);
  CHECK_THROWS_AS(idx.search(std::vector<float>(7, 0.0f), IvfSearchOptions{}), DimensionMismatch);
}

TEST_CASE("ivf-pq full probe matches an exhaustive pq residual scan", "[ivf]") {
  const VectorSet g = spq_test::random_set(400, 8, 11);
  const IVFPQIndex idx = IVFPQIndex::build(g, small_options(5));
  IvfSearchOptions o;
  o.w = 5;
  o.p = 400;
  const auto& codes = idx.residual_codes();
  for (std::size_t qi = 0; qi < 5; ++qi) {
    const auto got = idx.search(g.row(qi), o);
    std::vector<ScoredId> want;
    for (std::size_t c = 0; c < idx.cells(); ++c) {
      std::vector<float> shifted(8);
      for (std::size_t t = 0; t < 8; ++t) shifted[t] = g.row(qi)[t] - idx.coarse().centroid(c)[t];
      for (std::size_t j = idx.lists().offsets[c]; j < idx.lists().offsets[c + 1]; ++j) {
        const auto rec = pq_reconstruct(PQCode{{codes.code(j).begin(), codes.code(j).end()}}, codes.codebook());
        want.push_back({idx.lists().ids[j], static_cast<float>(spq_test::naive_sq_l2(shifted, rec))});
      }
    }
    std::sort(want.begin(), want.end(), ranks_before);
    REQUIRE(got.size() == want.size());
    for (std::size_t r = 0; r < got.size(); ++r) {
      CHECK(std::abs(got[r].score - want[r].score) <= 1e-4 * std::max(1.0f, want[r].score));
    }
  }
}

TEST_CASE("ivf index files round-trip", "[ivf]") {
  spq_test::TempDir dir;
  const VectorSet g = spq_test::random_set(300, 8, 12);
  const IVFIndex idx = IVFIndex::build(g, small_options(4));
  save_ivf_index(dir.file("v.spqv"), idx);
  const IVFIndex back = load_ivf_index(dir.file("v.spqv"));
  CHECK(back.coarse() == idx.coarse());
  CHECK(back.lists() == idx.lists());
  CHECK(back.residual_codes().store() == idx.residual_codes().store());
  save_ivf_index(dir.file("v2.spqv"), back);
  CHECK(io::read_file(dir.file("v.spqv")) == io::read_file(dir.file("v2.spqv")));

  const IVFPQIndex pidx = IVFPQIndex::build(g, small_options(4));
  save_ivfpq_index(dir.file("w.spqw"), pidx);
  const IVFPQIndex pback = load_ivfpq_index(dir.file("w.spqw"));
  CHECK(pback.lists() == pidx.lists());
  save_ivfpq_index(dir.file("w2.spqw"), pback);
  CHECK(io::read_file(dir.file("w.spqw")) == io::read_file(dir.file("w2.spqw")));
  CHECK_THROWS_AS(load_ivf_index(dir.file("w.spqw")), FormatError);
}

TEST_CASE("ivf build is deterministic across thread counts", "[ivf]") {
  const VectorSet g = spq_test::random_set(500, 8, 13);
  auto o = small_options(6);
  const IVFIndex a = IVFIndex::build(g, o);
  o.threads = 3;
  const IVFIndex b = IVFIndex::build(g, o);
  CHECK(a.coarse() == b.coarse());
  CHECK(a.residual_codes().store() == b.residual_codes().store());
}
