#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "spq/codebook.hpp"
#include "spq/error.hpp"
#include "spq/kernels.hpp"
#include "spq/parallel.hpp"
#include "spq/rng.hpp"
#include "spq/sparse_coder.hpp"
#include "spq/vector_set.hpp"

namespace spq {

enum class KMeansInit { plus_plus, random_rows };

// Raw (unnormalized) Lloyd output.
struct KMeansResult {
  std::size_t k = 0;
  std::size_t d = 0;
  std::vector<float> centroids;          // k x d
  std::vector<std::uint32_t> assignment;  // per training row
  std::vector<float> sq_dist;            // per row, to its assigned centroid
  // Mean squared distortion after every assignment step, initial one first.
  std::vector<double> history;

  std::span<const float> centroid(std::size_t j) const { return {centroids.data() + j * d, d}; }
};

namespace detail {

inline std::uint32_t nearest_row(const float* x, std::span<const float> rows, std::size_t k,
                                 std::size_t d, float* out_dist) {
  std::uint32_t best = 0;
  double best_dist = kernels::sq_l2_unchecked(x, rows.data(), d);
  for (std::size_t j = 1; j < k; ++j) {
    const double dist = kernels::sq_l2_unchecked(x, rows.data() + j * d, d);
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<std::uint32_t>(j);
    }
  }
  if (out_dist != nullptr) *out_dist = static_cast<float>(best_dist);
  return best;
}

inline std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(perm[i], perm[j]);
  }
  perm.resize(k);
  return perm;
}

// D^2 seeding: each new centre is drawn with probability proportional to the
// squared distance to the closest centre chosen so far.
inline std::vector<float> plus_plus_seeds(const VectorSet& data, std::size_t k, Rng& rng) {
  const std::size_t n = data.n();
  const std::size_t d = data.d();
  std::vector<float> centres;
  centres.reserve(k * d);
  const std::size_t first = static_cast<std::size_t>(rng.below(n));
  centres.insert(centres.end(), data.row(first).begin(), data.row(first).end());
  std::vector<double> closest(n);
  for (std::size_t i = 0; i < n; ++i) {
    closest[i] = kernels::sq_l2_unchecked(data.row(i).data(), centres.data(), d);
  }
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(closest.begin(), closest.end(), 0.0);
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        target -= closest[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(n));
    }
    const float* chosen = data.row(pick).data();
    centres.insert(centres.end(), chosen, chosen + d);
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], kernels::sq_l2_unchecked(data.row(i).data(), chosen, d));
    }
  }
  return centres;
}

}  // namespace detail

// Lloyd's algorithm. Empty clusters are re-seeded with the point farthest
// from its current centroid, so the recorded distortion never increases.
inline KMeansResult kmeans(const VectorSet& data, std::size_t k, std::size_t iters,
                           std::uint64_t seed, KMeansInit init = KMeansInit::plus_plus,
                           std::size_t threads = 1) {
  if (k == 0) throw RangeError("kmeans: k must be >= 1");
  if (data.n() < k) {
    throw RangeError("kmeans: need at least k=" + std::to_string(k) + " points, got " +
                     std::to_string(data.n()));
  }
  if (iters == 0) throw RangeError("kmeans: iters must be >= 1");
  const std::size_t n = data.n();
  const std::size_t d = data.d();
  Rng rng(seed);

  KMeansResult r;
  r.k = k;
  r.d = d;
  if (init == KMeansInit::plus_plus) {
    r.centroids = detail::plus_plus_seeds(data, k, rng);
  } else {
    r.centroids.reserve(k * d);
    for (std::size_t row : detail::sample_distinct(n, k, rng)) {
      r.centroids.insert(r.centroids.end(), data.row(row).begin(), data.row(row).end());
    }
  }
  r.assignment.assign(n, 0);
  r.sq_dist.assign(n, 0.0f);

  auto assign = [&]() {
    std::vector<std::uint8_t> changed(n, 0);
    parallel_for(n, threads, [&](std::size_t i) {
      const auto a = detail::nearest_row(data.row(i).data(), r.centroids, k, d, &r.sq_dist[i]);
      changed[i] = a != r.assignment[i];
      r.assignment[i] = a;
    });
    double total = 0.0;
    for (float v : r.sq_dist) total += v;
    r.history.push_back(total / static_cast<double>(n));
    return std::any_of(changed.begin(), changed.end(), [](std::uint8_t c) { return c != 0; });
  };

  assign();
  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  for (std::size_t it = 0; it < iters; ++it) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = r.assignment[i];
      ++counts[a];
      const auto x = data.row(i);
      for (std::size_t t = 0; t < d; ++t) sums[a * d + t] += x[t];
    }
    std::vector<float> far = r.sq_dist;
    for (std::size_t j = 0; j < k; ++j) {
      float* c = r.centroids.data() + j * d;
      if (counts[j] > 0) {
        for (std::size_t t = 0; t < d; ++t) {
          c[t] = static_cast<float>(sums[j * d + t] / static_cast<double>(counts[j]));
        }
      } else {
        const auto it_far = std::max_element(far.begin(), far.end());
        const auto row = static_cast<std::size_t>(it_far - far.begin());
        std::copy(data.row(row).begin(), data.row(row).end(), c);
        *it_far = -1.0f;
      }
    }
    if (!assign()) break;
  }
  return r;
}

// k-means codebook with L2-normalized atoms. A centroid of zero norm is
// replaced by the farthest non-zero training point not already used; the run
// fails only after k consecutive unusable candidates.
inline Codebook kmeans_train(const VectorSet& data, std::size_t k, std::size_t iters,
                             std::uint64_t seed, std::size_t threads = 1) {
  KMeansResult r = kmeans(data, k, iters, seed, KMeansInit::plus_plus, threads);
  const std::size_t d = data.d();
  std::vector<std::size_t> order(data.n());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return r.sq_dist[a] > r.sq_dist[b]; });
  std::size_t next = 0;
  for (std::size_t j = 0; j < k; ++j) {
    float* c = r.centroids.data() + j * d;
    if (kernels::sq_norm_unchecked(c, d) > 0.0) continue;
    std::size_t failures = 0;
    for (;;) {
      if (next >= order.size() || failures >= k) {
        throw RangeError("kmeans_train: could not re-seed zero-norm centroid " + std::to_string(j));
      }
      const auto row = data.row(order[next++]);
      if (kernels::sq_norm_unchecked(row.data(), d) > 0.0) {
        std::copy(row.begin(), row.end(), c);
        break;
      }
      ++failures;
    }
  }
  return Codebook::from_atoms(k, d, std::move(r.centroids));
}

struct OdlOptions {
  std::size_t batch = 256;
  std::size_t epochs = 5;
};

struct OdlResult {
  Codebook codebook;
  // 0.5 * sum of squared OMP residuals over the monitoring slice, one entry
  // per finished epoch.
  std::vector<double> objective;
  std::size_t reseeded_atoms = 0;
};

namespace detail {

inline double half_sparse_objective(const VectorSet& data, std::span<const std::size_t> rows,
                                    std::span<const float> atoms, std::size_t k,
                                    std::size_t level) {
  OmpSolver omp;
  std::vector<std::uint16_t> ids(level);
  std::vector<float> coeffs(level);
  const std::size_t d = data.d();
  double total = 0.0;
  for (std::size_t row : rows) {
    const auto x = data.row(row);
    omp.encode(x, atoms, k, level, ids.data(), coeffs.data());
    for (std::size_t t = 0; t < d; ++t) {
      double approx = 0.0;
      for (std::size_t l = 0; l < level; ++l) approx += coeffs[l] * atoms[ids[l] * d + t];
      const double diff = x[t] - approx;
      total += 0.5 * diff * diff;
    }
  }
  return total;
}

inline bool load_unit_row(std::span<const float> row, float* dst) {
  const double norm = std::sqrt(kernels::sq_norm_unchecked(row.data(), row.size()));
  if (!(norm > 0.0)) return false;
  for (std::size_t t = 0; t < row.size(); ++t) dst[t] = static_cast<float>(row[t] / norm);
  return true;
}

}  // namespace detail

// Online dictionary learning with an L0 (OMP) sparse coding step.
//
// Mini-batches are OMP-coded against the current atoms; the sufficient
// statistics A += a a^T and B += x a^T accumulate over the whole run and each
// batch ends with one block-coordinate-descent sweep over the atoms, each
// re-normalized to unit length. Atoms unused for a full epoch are re-seeded
// from random training rows.
inline OdlResult odl_train(const VectorSet& data, std::size_t k, std::size_t level,
                           std::uint64_t seed, OdlOptions opts = {}) {
  if (k == 0 || k > kMaxCodebookSize) throw RangeError("odl_train: k outside [1, 65536]");
  if (data.n() < k) {
    throw RangeError("odl_train: need at least k=" + std::to_string(k) + " points, got " +
                     std::to_string(data.n()));
  }
  if (level < 1 || level > k) throw RangeError("odl_train: sparse level outside [1, k]");
  if (opts.epochs == 0 || opts.batch == 0) throw RangeError("odl_train: epochs and batch >= 1");

  const std::size_t n = data.n();
  const std::size_t d = data.d();
  Rng rng(seed);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  // Monitoring slice: held out when the data is plentiful, else the training
  // rows themselves.
  const std::size_t held = n >= 10 * k + 10 ? std::min<std::size_t>(n / 10, 2000) : 0;
  std::vector<std::size_t> monitor(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
  if (monitor.empty()) monitor = train;

  std::vector<float> atoms(k * d);
  std::size_t cursor = 0;
  for (std::size_t j = 0; j < k; ++j) {
    bool ok = false;
    while (!ok && cursor < train.size()) ok = detail::load_unit_row(data.row(train[cursor++]), &atoms[j * d]);
    while (!ok) {
      std::vector<float> g(d);
      for (float& v : g) v = static_cast<float>(rng.normal());
      ok = detail::load_unit_row(g, &atoms[j * d]);
    }
  }

  std::vector<double> stat_a(k * k, 0.0);
  std::vector<double> stat_b(k * d, 0.0);
  std::vector<double> reconstructed(d);
  std::vector<std::uint16_t> ids(level);
  std::vector<float> coeffs(level);
  std::vector<std::uint8_t> touched(k);
  OmpSolver omp;
  OdlResult result;

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(train.begin(), train.end());
    std::fill(touched.begin(), touched.end(), 0);
    for (std::size_t start = 0; start < train.size(); start += opts.batch) {
      const std::size_t stop = std::min(train.size(), start + opts.batch);
      for (std::size_t s = start; s < stop; ++s) {
        const auto x = data.row(train[s]);
        const std::size_t used = omp.encode(x, atoms, k, level, ids.data(), coeffs.data());
        for (std::size_t a = 0; a < used; ++a) {
          if (coeffs[a] == 0.0f) continue;
          touched[ids[a]] = 1;
          for (std::size_t b = 0; b < used; ++b) {
            stat_a[ids[a] * k + ids[b]] += static_cast<double>(coeffs[a]) * coeffs[b];
          }
          for (std::size_t t = 0; t < d; ++t) stat_b[ids[a] * d + t] += static_cast<double>(coeffs[a]) * x[t];
        }
      }
      // One BCD sweep: u_j = d_j + (b_j - D a_j) / A_jj, then normalize.
      for (std::size_t j = 0; j < k; ++j) {
        const double ajj = stat_a[j * k + j];
        if (!(ajj > 1e-12)) continue;
        std::fill(reconstructed.begin(), reconstructed.end(), 0.0);
        for (std::size_t l = 0; l < k; ++l) {
          const double w = stat_a[l * k + j];
          if (w == 0.0) continue;
          const float* atom = &atoms[l * d];
          for (std::size_t t = 0; t < d; ++t) reconstructed[t] += w * atom[t];
        }
        double norm2 = 0.0;
        float* atom = &atoms[j * d];
        std::vector<double> u(d);
        for (std::size_t t = 0; t < d; ++t) {
          u[t] = atom[t] + (stat_b[j * d + t] - reconstructed[t]) / ajj;
          norm2 += u[t] * u[t];
        }
        if (!(norm2 > 1e-24)) continue;
        const double inv = 1.0 / std::sqrt(norm2);
        for (std::size_t t = 0; t < d; ++t) atom[t] = static_cast<float>(u[t] * inv);
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (touched[j]) continue;
      for (std::size_t tries = 0; tries < train.size(); ++tries) {
        const auto row = data.row(train[static_cast<std::size_t>(rng.below(train.size()))]);
        if (detail::load_unit_row(row, &atoms[j * d])) break;
      }
      for (std::size_t l = 0; l < k; ++l) {
        stat_a[j * k + l] = 0.0;
        stat_a[l * k + j] = 0.0;
      }
      std::fill(stat_b.begin() + static_cast<std::ptrdiff_t>(j * d),
                stat_b.begin() + static_cast<std::ptrdiff_t>((j + 1) * d), 0.0);
      ++result.reseeded_atoms;
    }
    result.objective.push_back(detail::half_sparse_objective(data, monitor, atoms, k, level));
  }
  result.codebook = Codebook::from_atoms(k, d, std::move(atoms));
  return result;
}

enum class CodebookMethod { kmeans, odl };

inline std::string_view to_string(CodebookMethod m) {
  return m == CodebookMethod::kmeans ? "kmeans" : "odl";
}

inline CodebookMethod parse_codebook_method(std::string_view s) {
  if (s == "kmeans") return CodebookMethod::kmeans;
  if (s == "odl") return CodebookMethod::odl;
  throw ConfigError("unknown codebook method: " + std::string(s) + " (expected kmeans or odl)");
}

struct ProductTrainOptions {
  std::size_t k = 256;
  std::size_t level = 2;
  CodebookMethod method = CodebookMethod::odl;
  std::size_t kmeans_iters = 25;
  OdlOptions odl{};
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct ProductTrainResult {
  ProductCodebook codebook;
  // Mean per-vector OMP distortion of each training slice at the target level.
  std::vector<double> subspace_distortion;
};

// Trains one codebook per column slice of `train`. Subspaces are independent
// and may run on separate threads; each uses a seed derived from opts.seed.
inline ProductTrainResult train_product_codebook(const VectorSet& train, const SubspaceLayout& layout,
                                                 const ProductTrainOptions& opts) {
  detail::require_same_dim(train.d(), layout.dim(), "train_product_codebook");
  const std::size_t m = layout.m();
  std::vector<Codebook> books(m);
  std::vector<double> dist(m, 0.0);
  parallel_for(m, opts.threads, [&](std::size_t i) {
    const VectorSet slice = train.slice_columns(layout.offset(i), layout.width(i));
    const std::uint64_t sub_seed = derive_seed(opts.seed, i);
    if (opts.method == CodebookMethod::kmeans) {
      books[i] = kmeans_train(slice, opts.k, opts.kmeans_iters, sub_seed);
    } else {
      books[i] = odl_train(slice, opts.k, opts.level, sub_seed, opts.odl).codebook;
    }
    OmpSolver omp;
    std::vector<std::uint16_t> ids(opts.level);
    std::vector<float> coeffs(opts.level);
    double total = 0.0;
    for (std::size_t r = 0; r < slice.n(); ++r) {
      omp.encode(slice.row(r), books[i].atoms(), opts.k, opts.level, ids.data(), coeffs.data());
      SparseCode code{ids, coeffs, 0};
      total += distortion(slice.row(r), code, books[i]);
    }
    dist[i] = slice.n() == 0 ? 0.0 : total / static_cast<double>(slice.n());
  });
  return {ProductCodebook(layout, std::move(books)), std::move(dist)};
}

}  // namespace spq
