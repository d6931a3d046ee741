#include <catch_amalgamated.hpp>

#include <algorithm>

#include "spq/kernels.hpp"
#include "spq/parallel.hpp"
#include "test_util.hpp"

using namespace spq;

TEST_CASE("sq_l2 trivial cases", "[kernels]") {
  const std::vector<float> x{1.5f, -2.0f, 3.0f};
  CHECK(sq_l2(x, x) == 0.0f);
  CHECK(sq_l2(std::vector<float>{0, 0}, std::vector<float>{3, 4}) == 25.0f);
  CHECK_THROWS_AS(sq_l2(std::vector<float>{1}, std::vector<float>{1, 2}), DimensionMismatch);
}

TEST_CASE("dot trivial cases", "[kernels]") {
  CHECK(dot(std::vector<float>{1, 0, 0}, std::vector<float>{0, 1, 0}) == 0.0f);
  const std::vector<float> x{0.5f, 2.0f, -1.0f};
  CHECK(dot(x, x) == Catch::Approx(sq_l2(x, std::vector<float>(3, 0.0f))));
  CHECK(sq_norm(x) == Catch::Approx(dot(x, x)));
  CHECK_THROWS_AS(dot(std::vector<float>{1}, std::vector<float>{}), DimensionMismatch);
}

TEST_CASE("kernels match naive loops on random 128-d pairs", "[kernels]") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = trial < 100 ? 128 : 1 + rng.below(300);
    const auto x = spq_test::random_vector(rng, d, 3.0);
    const auto y = spq_test::random_vector(rng, d, 3.0);
    const double l2 = spq_test::naive_sq_l2(x, y);
    const double dp = spq_test::naive_dot(x, y);
    CHECK(std::abs(sq_l2(x, y) - l2) <= 1e-6 * std::max(1.0, l2));
    CHECK(std::abs(dot(x, y) - dp) <= 1e-6 * std::max(1.0, std::abs(dp) + l2));
  }
}

TEST_CASE("sq_l2 polarization identity", "[kernels]") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = spq_test::random_vector(rng, 64);
    const auto y = spq_test::random_vector(rng, 64);
    const double lhs = sq_l2(x, y);
    const double rhs = static_cast<double>(dot(x, x)) + dot(y, y) - 2.0 * dot(x, y);
    CHECK(std::abs(lhs - rhs) <= 1e-5 * std::max(1.0, lhs));
  }
}

TEST_CASE("row_sq_norms", "[kernels]") {
  const std::vector<float> rows{3, 4, 1, 0, 0, 0};
  CHECK(row_sq_norms(rows, 2) == std::vector<float>{25, 1, 0});
}

TEST_CASE("top_k small examples", "[kernels]") {
  const std::vector<ScoredId> s{{0, 5.0f}, {1, 1.0f}, {2, 3.0f}};
  const auto top = top_k(s, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0].id == 1);
  CHECK(top[1].id == 2);
  const auto all = top_k(s, 10);
  REQUIRE(all.size() == 3);
  CHECK(all[2].id == 0);
  CHECK_THROWS_AS(top_k(s, 0), RangeError);
}

TEST_CASE("top_k ties go to the lower id", "[kernels]") {
  const std::vector<ScoredId> s{{9, 1.0f}, {4, 1.0f}, {6, 0.5f}, {2, 1.0f}};
  const auto top = top_k(s, 3);
  CHECK(top[0].id == 6);
  CHECK(top[1].id == 2);
  CHECK(top[2].id == 4);
}

TEST_CASE("top_k equals the full-sort prefix", "[kernels]") {
  Rng rng(17);
  std::vector<ScoredId> s(10000);
  for (std::uint32_t i = 0; i < s.size(); ++i) {
    // Coarse scores force many ties.
    s[i] = {i, static_cast<float>(rng.below(500)) * 0.25f};
  }
  rng.shuffle(s.begin(), s.end());
  auto sorted = s;
  std::sort(sorted.begin(), sorted.end(), ranks_before);
  const auto top = top_k(s, 100);
  REQUIRE(top.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(top[i].id == sorted[i].id);
    CHECK(top[i].score == sorted[i].score);
  }
}

TEST_CASE("parallel_for covers every index once and rethrows", "[kernels]") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 7) throw RangeError("boom");
                  }),
                  RangeError);
}
