#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "spq/error.hpp"
#include "spq/spq_index.hpp"
#include "spq/training.hpp"

namespace spq {

enum class Method { pq, spq, ivfpq, ivfspq };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::pq: return "pq";
    case Method::spq: return "spq";
    case Method::ivfpq: return "ivfpq-style";
    case Method::ivfspq: return "ivfspq";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "pq") return Method::pq;
  if (s == "spq") return Method::spq;
  if (s == "ivfpq-style" || s == "ivfpq") return Method::ivfpq;
  if (s == "ivfspq") return Method::ivfspq;
  throw ConfigError("unknown method: " + std::string(s) + " (expected pq, spq, ivfpq-style or ivfspq)");
}

// Everything a CLI command needs. Serializes to `key = value` lines; list
// values are comma separated and '#' starts a comment.
struct RunConfig {
  // Files.
  std::string base;
  std::string queries;
  std::string train;
  std::string gt;
  std::string codebook;
  std::string index;
  std::string results;
  std::string out;
  std::string csv;

  // Synthetic data.
  std::size_t n = 10000;
  std::size_t nq = 100;
  std::size_t d = 128;

  // Quantizer.
  Method method = Method::spq;
  CodebookMethod codebook_method = CodebookMethod::odl;
  std::size_t m = 8;
  std::size_t k = 256;
  std::size_t level = 2;
  std::size_t kmeans_iters = 25;
  std::size_t odl_epochs = 5;
  std::size_t odl_batch = 256;
  std::size_t train_size = 100000;

  // Inverted file.
  std::size_t coarse_k = 256;
  std::size_t w = 8;
  std::size_t rerank = 0;  // 0 disables exact re-ranking

  // Search and evaluation.
  DistanceMode distance = DistanceMode::adc;
  std::size_t p = 100;
  std::size_t t = 100;
  std::vector<std::size_t> r_list{1, 10, 100};
  std::size_t t_eval = 1;
  std::vector<std::size_t> bits{32, 64, 128};
  std::vector<Method> bench_methods{Method::pq, Method::spq};

  std::uint64_t seed = 42;
  std::size_t threads = 0;  // 0 = all cores

  static const std::vector<std::string_view>& keys() {
    static const std::vector<std::string_view> k = {
        "base", "queries", "train", "gt", "codebook", "index", "results", "out", "csv",
        "n", "nq", "d", "method", "codebook_method", "m", "k", "level", "kmeans_iters",
        "odl_epochs", "odl_batch", "train_size", "coarse_k", "w", "rerank", "distance",
        "p", "t", "r_list", "t_eval", "bits", "bench_methods", "seed", "threads"};
    return k;
  }

  void set(std::string_view key, std::string_view value) {
    auto str = [&](std::string& f) { f = std::string(value); };
    auto num = [&](std::size_t& f) { f = parse_size(key, value); };
    if (key == "base") str(base);
    else if (key == "queries") str(queries);
    else if (key == "train") str(train);
    else if (key == "gt") str(gt);
    else if (key == "codebook") str(codebook);
    else if (key == "index") str(index);
    else if (key == "results") str(results);
    else if (key == "out") str(out);
    else if (key == "csv") str(csv);
    else if (key == "n") num(n);
    else if (key == "nq") num(nq);
    else if (key == "d") num(d);
    else if (key == "method") method = parse_method(value);
    else if (key == "codebook_method") codebook_method = parse_codebook_method(value);
    else if (key == "m") num(m);
    else if (key == "k") num(k);
    else if (key == "level" || key == "L") num(level);
    else if (key == "kmeans_iters") num(kmeans_iters);
    else if (key == "odl_epochs") num(odl_epochs);
    else if (key == "odl_batch") num(odl_batch);
    else if (key == "train_size") num(train_size);
    else if (key == "coarse_k") num(coarse_k);
    else if (key == "w") num(w);
    else if (key == "rerank") num(rerank);
    else if (key == "distance") distance = parse_distance_mode(value);
    else if (key == "p") num(p);
    else if (key == "t") num(t);
    else if (key == "r_list") r_list = parse_list(key, value);
    else if (key == "t_eval") num(t_eval);
    else if (key == "bits") bits = parse_list(key, value);
    else if (key == "bench_methods") bench_methods = parse_methods(value);
    else if (key == "seed") seed = parse_size(key, value);
    else if (key == "threads") num(threads);
    else throw ConfigError("unknown config key: " + std::string(key));
  }

  std::string get(std::string_view key) const {
    auto list = [](const std::vector<std::size_t>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s;
    };
    if (key == "base") return base;
    if (key == "queries") return queries;
    if (key == "train") return train;
    if (key == "gt") return gt;
    if (key == "codebook") return codebook;
    if (key == "index") return index;
    if (key == "results") return results;
    if (key == "out") return out;
    if (key == "csv") return csv;
    if (key == "n") return std::to_string(n);
    if (key == "nq") return std::to_string(nq);
    if (key == "d") return std::to_string(d);
    if (key == "method") return std::string(to_string(method));
    if (key == "codebook_method") return std::string(to_string(codebook_method));
    if (key == "m") return std::to_string(m);
    if (key == "k") return std::to_string(k);
    if (key == "level") return std::to_string(level);
    if (key == "kmeans_iters") return std::to_string(kmeans_iters);
    if (key == "odl_epochs") return std::to_string(odl_epochs);
    if (key == "odl_batch") return std::to_string(odl_batch);
    if (key == "train_size") return std::to_string(train_size);
    if (key == "coarse_k") return std::to_string(coarse_k);
    if (key == "w") return std::to_string(w);
    if (key == "rerank") return std::to_string(rerank);
    if (key == "distance") return std::string(to_string(distance));
    if (key == "p") return std::to_string(p);
    if (key == "t") return std::to_string(t);
    if (key == "r_list") return list(r_list);
    if (key == "t_eval") return std::to_string(t_eval);
    if (key == "bits") return list(bits);
    if (key == "bench_methods") {
      std::string s;
      for (std::size_t i = 0; i < bench_methods.size(); ++i) s += (i ? "," : "") + std::string(to_string(bench_methods[i]));
      return s;
    }
    if (key == "seed") return std::to_string(seed);
    if (key == "threads") return std::to_string(threads);
    throw ConfigError("unknown config key: " + std::string(key));
  }

  std::string to_text() const {
    std::ostringstream out;
    for (auto key : keys()) out << key << " = " << get(key) << "\n";
    return out.str();
  }

  static RunConfig parse_text(std::string_view text) {
    RunConfig cfg;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      const std::string_view key = trim(std::string_view(line).substr(0, eq));
      if (key.empty() && eq == std::string::npos) continue;
      if (eq == std::string::npos || key.empty()) {
        throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
      }
      cfg.set(key, trim(std::string_view(line).substr(eq + 1)));
    }
    return cfg;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
  }

  // Checks the invariants that do not depend on the data.
  void validate() const {
    if (k < 1 || k > kMaxCodebookSize) throw ConfigError("k must be in [1, 65536], got " + std::to_string(k));
    if (level < 1) throw ConfigError("level (sparse level L) must be >= 1");
    if (level > k) throw ConfigError("level must not exceed k");
    if (m < 1) throw ConfigError("m must be >= 1");
    if (p < 1) throw ConfigError("p must be >= 1");
    if (t_eval < 1) throw ConfigError("t_eval must be >= 1");
    if (w < 1) throw ConfigError("w must be >= 1");
    if (w > coarse_k) throw ConfigError("w must not exceed coarse_k");
  }

  // Dimension-dependent checks.
  void validate_dim(std::size_t dim) const {
    if (dim % m != 0) {
      throw ConfigError("dimension " + std::to_string(dim) + " is not divisible by m=" + std::to_string(m));
    }
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
  }

  static std::size_t parse_size(std::string_view key, std::string_view v) {
    v = trim(v);
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
      throw ConfigError("config key " + std::string(key) + ": expected a non-negative integer, got \"" +
                        std::string(v) + "\"");
    }
    return static_cast<std::size_t>(out);
  }

  static std::vector<Method> parse_methods(std::string_view v) {
    v = trim(v);
    std::vector<Method> out;
    while (!v.empty()) {
      const auto comma = v.find(',');
      out.push_back(parse_method(trim(v.substr(0, comma))));
      if (comma == std::string_view::npos) break;
      v.remove_prefix(comma + 1);
    }
    if (out.empty()) throw ConfigError("config key bench_methods: empty list");
    return out;
  }

  static std::vector<std::size_t> parse_list(std::string_view key, std::string_view v) {
    v = trim(v);
    if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
    std::vector<std::size_t> out;
    while (!v.empty()) {
      const auto comma = v.find(',');
      out.push_back(parse_size(key, v.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      v.remove_prefix(comma + 1);
    }
    if (out.empty()) throw ConfigError("config key " + std::string(key) + ": empty list");
    return out;
  }
};

}  // namespace spq
