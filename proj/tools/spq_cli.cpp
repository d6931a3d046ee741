// spq: command-line front end for training, encoding, searching and
// benchmarking sparse product quantization indexes.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spq/spq.hpp"

namespace {

using spq::RunConfig;

std::size_t effective_threads(const RunConfig& cfg) {
  return cfg.threads == 0 ? spq::default_threads() : cfg.threads;
}

void require_path(const std::string& value, const char* flag, const char* what) {
  if (value.empty()) throw spq::ConfigError(std::string("missing ") + what + ": pass --" + flag);
}

// Rows of `base` used for training: the training file when given, otherwise
// a seeded sample of at most train_size gallery rows.
spq::VectorSet load_training_set(const RunConfig& cfg) {
  if (!cfg.train.empty()) return spq::read_vecs(cfg.train);
  require_path(cfg.base, "base", "training data (--train or --base)");
  const auto base = spq::read_vecs(cfg.base);
  return spq::detail::training_sample(base, cfg.train_size, spq::derive_seed(cfg.seed, 7));
}

void print_config_summary(const RunConfig& cfg) {
  std::cerr << "method=" << spq::to_string(cfg.method) << " m=" << cfg.m << " k=" << cfg.k << " L=" << cfg.level
            << " seed=" << cfg.seed << " threads=" << effective_threads(cfg) << "\n";
}

int cmd_gen_data(const RunConfig& cfg) {
  if (cfg.base.empty() && cfg.queries.empty() && cfg.train.empty()) {
    throw spq::ConfigError("gen-data needs at least one of --base, --queries, --train");
  }
  if (!cfg.base.empty()) {
    spq::write_vecs(cfg.base, spq::format_from_path(cfg.base),
                    spq::gen_gaussian(cfg.n, cfg.d, spq::derive_seed(cfg.seed, 1)));
    std::cout << "wrote " << cfg.n << " x " << cfg.d << " gallery to " << cfg.base << "\n";
  }
  if (!cfg.queries.empty()) {
    spq::write_vecs(cfg.queries, spq::format_from_path(cfg.queries),
                    spq::gen_gaussian(cfg.nq, cfg.d, spq::derive_seed(cfg.seed, 2)));
    std::cout << "wrote " << cfg.nq << " x " << cfg.d << " queries to " << cfg.queries << "\n";
  }
  if (!cfg.train.empty()) {
    const std::size_t nt = std::min(cfg.train_size, cfg.n);
    spq::write_vecs(cfg.train, spq::format_from_path(cfg.train),
                    spq::gen_gaussian(nt, cfg.d, spq::derive_seed(cfg.seed, 3)));
    std::cout << "wrote " << nt << " x " << cfg.d << " training vectors to " << cfg.train << "\n";
  }
  return 0;
}

int cmd_groundtruth(const RunConfig& cfg) {
  require_path(cfg.base, "base", "gallery");
  require_path(cfg.queries, "queries", "query set");
  require_path(cfg.gt, "gt", "ground-truth output path");
  const auto base = spq::read_vecs(cfg.base);
  const auto queries = spq::read_vecs(cfg.queries);
  spq::Stopwatch sw;
  const auto gt = spq::exact_knn(base, queries, cfg.t, effective_threads(cfg));
  spq::write_groundtruth(cfg.gt, gt);
  std::cout << "wrote " << gt.t << "-NN ground truth for " << gt.queries() << " queries to " << cfg.gt << " ("
            << sw.elapsed_ms() << " ms)\n";
  return 0;
}

int cmd_train(RunConfig cfg) {
  require_path(cfg.codebook, "codebook", "codebook output path");
  cfg.threads = effective_threads(cfg);
  cfg.validate();
  if (cfg.method == spq::Method::ivfpq || cfg.method == spq::Method::ivfspq) {
    throw spq::ConfigError("method " + std::string(spq::to_string(cfg.method)) +
                           " trains its coarse quantizer and residual codebook inside `encode`; run encode instead");
  }
  const auto train = load_training_set(cfg);
  cfg.validate_dim(train.d());
  print_config_summary(cfg);
  const auto layout = spq::SubspaceLayout::uniform(train.d(), cfg.m);
  spq::Stopwatch sw;
  std::vector<double> per_subspace(cfg.m, 0.0);
  if (cfg.method == spq::Method::pq) {
    const auto pcb = spq::train_pq_codebook(train, layout, cfg.k, cfg.kmeans_iters, cfg.seed, cfg.threads);
    spq::save_pq_codebook(cfg.codebook, pcb);
    for (std::size_t r = 0; r < train.n(); ++r) {
      const auto code = spq::pq_encode(train.row(r), pcb);
      for (std::size_t i = 0; i < cfg.m; ++i) {
        per_subspace[i] += spq::sq_l2(train.row(r).subspan(layout.offset(i), layout.width(i)),
                                      pcb.centroid(i, code.ids[i]));
      }
    }
    for (auto& v : per_subspace) v /= static_cast<double>(std::max<std::size_t>(1, train.n()));
  } else {
    const auto res = spq::train_product_codebook(train, layout, spq::train_options(cfg));
    spq::save_product_codebook(cfg.codebook, res.codebook);
    per_subspace = res.subspace_distortion;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < per_subspace.size(); ++i) {
    std::cout << "subspace " << i << " distortion " << per_subspace[i] << "\n";
    total += per_subspace[i];
  }
  std::cout << "total distortion " << total << "\n";
  std::cout << "trained on " << train.n() << " vectors in " << sw.elapsed_ms() << " ms; wrote " << cfg.codebook
            << "\n";
  return 0;
}

int cmd_encode(RunConfig cfg) {
  require_path(cfg.base, "base", "gallery");
  require_path(cfg.index, "index", "index output path");
  cfg.threads = effective_threads(cfg);
  cfg.validate();
  const auto base = spq::read_vecs(cfg.base);
  cfg.validate_dim(base.d());
  print_config_summary(cfg);
  spq::Stopwatch sw;
  spq::AnyIndex index;
  const bool flat = cfg.method == spq::Method::pq || cfg.method == spq::Method::spq;
  if (flat && !cfg.codebook.empty()) {
    if (cfg.method == spq::Method::pq) {
      index = spq::PQIndex::build(base, spq::load_pq_codebook(cfg.codebook), cfg.threads);
    } else {
      index = spq::SPQIndex::build(base, spq::load_product_codebook(cfg.codebook), cfg.level, cfg.threads);
    }
  } else {
    const auto train = cfg.train.empty()
                           ? spq::detail::training_sample(base, cfg.train_size, spq::derive_seed(cfg.seed, 7))
                           : spq::read_vecs(cfg.train);
    index = spq::build_index(cfg, train, base);
  }
  spq::save_index(cfg.index, index);
  std::cout << "encoded " << spq::index_size(index) << " vectors in " << sw.elapsed_ms() << " ms; mean distortion "
            << spq::index_distortion(index, base) << "; wrote " << cfg.index << "\n";
  return 0;
}

int cmd_search(RunConfig cfg) {
  require_path(cfg.index, "index", "index file");
  require_path(cfg.queries, "queries", "query set");
  require_path(cfg.results, "results", "results output path");
  cfg.threads = effective_threads(cfg);
  cfg.validate();
  const auto index = spq::load_index(cfg.index);
  const auto queries = spq::read_vecs(cfg.queries);
  std::optional<spq::VectorSet> base;
  if (cfg.rerank > 0) {
    require_path(cfg.base, "base", "raw gallery for re-ranking");
    base = spq::read_vecs(cfg.base);
  }
  const std::size_t p = std::min(cfg.p, spq::index_size(index));
  if (p == 0) throw spq::RangeError("index is empty");
  auto req = spq::search_request(cfg, base ? &*base : nullptr);
  req.p = p;
  std::size_t scanned = 0;
  spq::Stopwatch sw;
  const auto run = spq::search_all(index, queries, req, cfg.threads, &scanned);
  const double wall = sw.elapsed_ms();
  spq::write_id_lists(cfg.results, run.ranked);
  const double nq = static_cast<double>(std::max<std::size_t>(1, queries.n()));
  std::printf("method=%s distance=%s queries=%zu p=%zu\n", std::string(spq::to_string(spq::method_of(index))).c_str(),
              std::string(spq::to_string(cfg.distance)).c_str(), queries.n(), p);
  std::printf("per-query ms: tables %.4f  scan %.4f  select %.4f  rerank %.4f  total %.4f\n",
              run.times.tables_ms / nq, run.times.scan_ms / nq, run.times.select_ms / nq, run.times.rerank_ms / nq,
              run.times.total_ms() / nq);
  std::printf("codes scanned per query %.1f; wall %.1f ms with %zu thread(s); wrote %s\n",
              static_cast<double>(scanned) / nq, wall, cfg.threads, cfg.results.c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  require_path(cfg.results, "results", "search results");
  require_path(cfg.gt, "gt", "ground truth");
  spq::RunResult run;
  run.ranked = spq::read_id_lists(cfg.results);
  const auto gt = spq::read_groundtruth(cfg.gt);
  std::vector<spq::MetricRow> rows;
  const std::size_t len = run.min_length();
  for (std::size_t r : cfg.r_list) {
    if (r > len) {
      std::cerr << "skipping recall@" << r << ": result lists hold only " << len << " ids\n";
      continue;
    }
    const double v = spq::recall_at_r(run, gt, r, cfg.t_eval);
    std::printf("recall@%zu (t_eval=%zu) %.4f\n", r, cfg.t_eval, v);
    rows.push_back({"eval", 0, 0, 0, "recall", r, v});
  }
  const double map = spq::mean_average_precision(run, gt, cfg.t_eval);
  std::printf("mAP (t_eval=%zu) %.4f\n", cfg.t_eval, map);
  rows.push_back({"eval", 0, 0, 0, "map", cfg.t_eval, map});
  if (!cfg.csv.empty()) {
    spq::write_csv(cfg.csv, rows, {{"results", cfg.results}, {"gt", cfg.gt}, {"map_depth", "full ranked list"}});
    std::cout << "wrote " << cfg.csv << "\n";
  }
  return 0;
}

int cmd_bench(RunConfig cfg) {
  cfg.threads = effective_threads(cfg);
  cfg.validate();
  spq::BenchData data;
  std::size_t max_r = cfg.p;
  for (std::size_t r : cfg.r_list) max_r = std::max(max_r, r);
  const std::size_t gt_t = std::max({cfg.t_eval, spq::kMapTruthDepth});
  if (cfg.base.empty()) {
    std::cerr << "synthetic bench: n=" << cfg.n << " nq=" << cfg.nq << " d=" << cfg.d << "\n";
    data = spq::synthetic_bench_data(cfg, gt_t);
  } else {
    require_path(cfg.queries, "queries", "query set");
    data.gallery = spq::read_vecs(cfg.base);
    data.queries = spq::read_vecs(cfg.queries);
    data.train = cfg.train.empty() ? spq::detail::training_sample(data.gallery, cfg.train_size,
                                                                  spq::derive_seed(cfg.seed, 7))
                                   : spq::read_vecs(cfg.train);
    data.gt = cfg.gt.empty() ? spq::exact_knn(data.gallery, data.queries, std::min(gt_t, data.gallery.n()),
                                              cfg.threads)
                             : spq::read_groundtruth(cfg.gt);
  }
  const auto rows = spq::run_bench(cfg, data, cfg.bench_methods, &std::cerr);
  const auto meta = spq::bench_metadata(cfg, data);
  if (cfg.csv.empty()) {
    std::cout << spq::format_csv(rows, meta);
  } else {
    spq::write_csv(cfg.csv, rows, meta);
    std::cout << "wrote " << rows.size() << " rows to " << cfg.csv << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse product quantization toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string write_config;
  app.add_option("--config", config_path, "Read settings from a key = value config file (flags override it)");
  app.add_option("--write-config", write_config, "Write the effective config to this path");

  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> flags;
  const RunConfig defaults;
  for (auto key : RunConfig::keys()) {
    std::string name(key);
    std::string dashed = name;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    std::string spec = "--" + dashed;
    if (dashed != name) spec += ",--" + name;
    if (name == "level") spec += ",--L";
    flags[name] = app.add_option(spec, flag_values[name], "default: " + defaults.get(key));
  }

  const struct {
    const char* name;
    const char* help;
  } commands[] = {
      {"gen-data", "Write i.i.d. Gaussian gallery/queries/train files"},
      {"groundtruth", "Exact t-NN ground truth by brute force"},
      {"train", "Train a product codebook (pq: k-means centroids, spq: unit-norm atoms)"},
      {"encode", "Encode a gallery into an index file"},
      {"search", "Search an index and write ranked ids"},
      {"eval", "Recall@R and mAP of a results file against ground truth"},
      {"bench", "Sweep bit budgets and methods and emit CSV"},
  };
  for (const auto& c : commands) app.add_subcommand(c.name, c.help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    for (const auto& [name, opt] : flags) {
      if (opt->count() > 0) cfg.set(name, flag_values[name]);
    }
    if (!write_config.empty()) {
      std::ofstream out(write_config, std::ios::trunc);
      if (!out) throw spq::IoError("cannot open " + write_config);
      out << cfg.to_text();
    }
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "gen-data") return cmd_gen_data(cfg);
    if (cmd == "groundtruth") return cmd_groundtruth(cfg);
    if (cmd == "train") return cmd_train(cfg);
    if (cmd == "encode") return cmd_encode(cfg);
    if (cmd == "search") return cmd_search(cfg);
    if (cmd == "eval") return cmd_eval(cfg);
    if (cmd == "bench") return cmd_bench(cfg);
  } catch (const spq::Error& e) {
    std::cerr << "spq: error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "spq: unexpected error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
