#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "spq/dataset_io.hpp"
#include "spq/error.hpp"
#include "spq/kernels.hpp"
#include "spq/timing.hpp"
#include "spq/vector_set.hpp"

namespace spq {

// Ranked result lists of one search run plus per-stage timing.
struct RunResult {
  std::vector<std::vector<std::uint32_t>> ranked;
  StageTimes times;  // summed over all queries

  std::size_t queries() const { return ranked.size(); }

  std::size_t min_length() const {
    std::size_t len = ranked.empty() ? 0 : ranked.front().size();
    for (const auto& r : ranked) len = std::min(len, r.size());
    return len;
  }

  static RunResult from_scored(const std::vector<std::vector<ScoredId>>& lists) {
    RunResult run;
    run.ranked.reserve(lists.size());
    for (const auto& l : lists) {
      auto& row = run.ranked.emplace_back();
      row.reserve(l.size());
      for (const auto& s : l) row.push_back(s.id);
    }
    return run;
  }
};

namespace detail {

inline void check_run_against_gt(const RunResult& run, const GroundTruth& gt, std::size_t t_eval) {
  if (run.queries() != gt.queries()) {
    throw DimensionMismatch("run has " + std::to_string(run.queries()) + " queries, ground truth " +
                            std::to_string(gt.queries()));
  }
  if (t_eval < 1 || t_eval > gt.t) {
    throw RangeError("t_eval=" + std::to_string(t_eval) + " outside [1, " + std::to_string(gt.t) + "]");
  }
}

}  // namespace detail

// Mean over queries of |top-R results ∩ first t_eval true neighbours| / t_eval.
inline double recall_at_r(const RunResult& run, const GroundTruth& gt, std::size_t r, std::size_t t_eval) {
  detail::check_run_against_gt(run, gt, t_eval);
  if (run.queries() == 0) return 0.0;
  if (r < 1 || r > run.min_length()) {
    throw RangeError("R=" + std::to_string(r) + " outside [1, " + std::to_string(run.min_length()) + "]");
  }
  double total = 0.0;
  for (std::size_t q = 0; q < run.queries(); ++q) {
    const auto& truth = gt.ids[q];
    const std::unordered_set<std::uint32_t> relevant(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(t_eval));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < r; ++i) hits += relevant.count(run.ranked[q][i]);
    total += static_cast<double>(hits) / static_cast<double>(t_eval);
  }
  return total / static_cast<double>(run.queries());
}

// Mean over queries of AP = (1/t_eval) * sum over hits h at rank r_h of h/r_h,
// taken over the full ranked list; relevant items missing from the list add 0.
inline double mean_average_precision(const RunResult& run, const GroundTruth& gt, std::size_t t_eval) {
  detail::check_run_against_gt(run, gt, t_eval);
  if (run.queries() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t q = 0; q < run.queries(); ++q) {
    const auto& truth = gt.ids[q];
    const std::unordered_set<std::uint32_t> relevant(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(t_eval));
    std::size_t hits = 0;
    double ap = 0.0;
    for (std::size_t i = 0; i < run.ranked[q].size(); ++i) {
      if (relevant.count(run.ranked[q][i]) != 0) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(i + 1);
      }
    }
    total += ap / static_cast<double>(t_eval);
  }
  return total / static_cast<double>(run.queries());
}

// Mean per-vector distortion under `encoder`, which maps a vector to its
// squared reconstruction error.
inline double dataset_distortion(const VectorSet& gallery,
                                 const std::function<double(std::span<const float>)>& encoder) {
  if (gallery.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < gallery.n(); ++r) total += encoder(gallery.row(r));
  return total / static_cast<double>(gallery.n());
}

// One CSV row of benchmark output.
struct MetricRow {
  std::string method;
  std::size_t code_bits = 0;   // m * ceil(log2 k)
  std::size_t index_bits = 0;  // m * L * ceil(log2 k)
  std::size_t coeff_bytes = 0; // m * L * 4 per vector (0 for PQ)
  std::string metric;          // distortion | recall | map | search_ms
  std::size_t param = 0;       // R for recall, t_eval for map, else 0
  double value = 0.0;
};

inline constexpr std::string_view kCsvHeader = "method,code_bits,index_bits,coeff_bytes,metric,param,value";

// CSV with '#'-prefixed key=value metadata lines before the header.
inline std::string format_csv(const std::vector<MetricRow>& rows,
                              const std::map<std::string, std::string>& metadata = {}) {
  std::ostringstream out;
  for (const auto& [k, v] : metadata) out << "# " << k << "=" << v << "\n";
  out << kCsvHeader << "\n";
  out.precision(9);
  for (const auto& r : rows) {
    out << r.method << ',' << r.code_bits << ',' << r.index_bits << ',' << r.coeff_bytes << ',' << r.metric
        << ',' << r.param << ',' << r.value << "\n";
  }
  return out.str();
}

inline void write_csv(const std::string& path, const std::vector<MetricRow>& rows,
                      const std::map<std::string, std::string>& metadata = {}) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  out << format_csv(rows, metadata);
  if (!out) throw IoError("write failed: " + path);
}

inline std::size_t bits_for(std::size_t k) {
  std::size_t b = 0;
  while ((std::size_t{1} << b) < k) ++b;
  return b;
}

}  // namespace spq
