/*
 * Copyright 2026 The pebias Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// End-to-end experiment pipelines: fully-synthetic alpha sweeps and the
// Yahoo! R3 semi-synthetic cluster sweep, with per-seed artifacts and
// aggregated significance tables.

#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "pebias/core.hpp"
#include "pebias/errors.hpp"
#include "pebias/estimators.hpp"
#include "pebias/evaluation.hpp"
#include "pebias/expomf.hpp"
#include "pebias/io.hpp"
#include "pebias/pe_simulation.hpp"
#include "pebias/seeding.hpp"
#include "pebias/synth.hpp"
#include "pebias/topics.hpp"

namespace pebias {

enum class Method { kMf, kExpoMf, kMfIps };

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::kMf: return "MF";
    case Method::kExpoMf: return "ExpoMF";
    case Method::kMfIps: return "MF-IPS";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  for (Method m : {Method::kMf, Method::kExpoMf, Method::kMfIps}) {
    if (s == method_name(m)) return m;
  }
  return std::nullopt;
}

enum class ExperimentMode { kFullySynthetic, kSemiSynthetic };

inline std::string_view mode_name(ExperimentMode m) {
  return m == ExperimentMode::kFullySynthetic ? "fully-synthetic" : "semi-synthetic";
}

inline std::optional<ExperimentMode> parse_mode(std::string_view s) {
  if (s == "fully-synthetic") return ExperimentMode::kFullySynthetic;
  if (s == "semi-synthetic") return ExperimentMode::kSemiSynthetic;
  return std::nullopt;
}

struct GridSpec {
  std::vector<int> dims{5, 10, 20};
  std::vector<double> l2{1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  std::vector<double> learning_rates{1e-3, 3e-3, 1e-2};
};

/// Cartesian product in (dim, l2, learning rate) order on top of `base`.
inline std::vector<TrainConfig> expand_grid(const GridSpec& grid, const TrainConfig& base) {
  std::vector<TrainConfig> out;
  for (int d : grid.dims) {
    for (double l2 : grid.l2) {
      for (double lr : grid.learning_rates) {
        TrainConfig c = base;
        c.dim = d;
        c.l2 = l2;
        c.learning_rate = lr;
        out.push_back(c);
      }
    }
  }
  return out;
}

/// ExpoMF has no learning rate: one entry per distinct (dim, l2).
inline std::vector<TrainConfig> expand_expomf_grid(const GridSpec& grid, const TrainConfig& base) {
  std::vector<TrainConfig> out;
  for (int d : grid.dims) {
    for (double l2 : grid.l2) {
      TrainConfig c = base;
      c.dim = d;
      c.l2 = l2;
      const bool seen = std::any_of(out.begin(), out.end(),
                                    [&](const TrainConfig& o) { return o.dim == d && o.l2 == l2; });
      if (!seen) out.push_back(c);
    }
  }
  return out;
}

struct TopicPipelineOptions {
  int walks_per_node = 10;
  int walk_length = 40;
  EmbeddingOptions embedding;
  GmmOptions gmm;
  double graph_fraction = 0.2;  // share of the MCAR test used for the graph
};

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::kFullySynthetic;
  std::vector<double> sweep;  // alphas or cluster counts; empty means the mode's default axis
  std::vector<Method> methods{Method::kMf, Method::kExpoMf, Method::kMfIps};
  int num_seeds = 10;
  std::uint64_t master_seed = 0;
  int workers = 1;
  int folds = 5;
  std::string outdir = "results";
  bool progress = false;

  SynthConfig synth;
  TrainConfig train;
  GridSpec grid;
  ExpoMfOptions expomf;
  TopicPipelineOptions topics;
  std::string yahoo_train;
  std::string yahoo_test;

  std::vector<double> resolved_sweep() const {
    if (!sweep.empty()) return sweep;
    if (mode == ExperimentMode::kFullySynthetic) return {0.25, 0.5, 0.75, 1.0};
    return {25, 50, 75, 100};
  }

  void validate() const {
    const auto axis = resolved_sweep();
    if (num_seeds < 2) throw ConfigError("num_seeds must be at least 2");
    if (methods.empty()) throw ConfigError("no methods selected");
    if (workers < 1) throw ConfigError("workers must be positive");
    if (folds < 2) throw ConfigError("folds must be at least 2");
    if (grid.dims.empty() || grid.l2.empty() || grid.learning_rates.empty()) {
      throw ConfigError("hyperparameter grid has an empty axis");
    }
    for (double v : axis) {
      if (mode == ExperimentMode::kFullySynthetic && !(v >= 0.0 && v <= 1.0)) {
        throw ConfigError("alpha must lie in [0, 1]");
      }
      if (mode == ExperimentMode::kSemiSynthetic && !(v >= 1.0 && v == std::floor(v))) {
        throw ConfigError("cluster counts must be positive integers");
      }
    }
    if (mode == ExperimentMode::kSemiSynthetic) {
      if (yahoo_train.empty() || yahoo_test.empty()) throw ConfigError("semi-synthetic mode needs yahoo paths");
      for (const auto& p : {yahoo_train, yahoo_test}) {
        if (!std::filesystem::exists(p)) throw ConfigError("dataset file not found: " + p);
      }
      if (!(topics.graph_fraction > 0.0 && topics.graph_fraction < 1.0)) {
        throw ConfigError("graph_fraction must lie in (0, 1)");
      }
    }
    synth.validate();
    train.validate();
  }
};

/// "alpha=0.25" or "clusters=25".
inline std::string setting_label(ExperimentMode mode, double value) {
  if (mode == ExperimentMode::kSemiSynthetic) {
    return "clusters=" + std::to_string(static_cast<long long>(value));
  }
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return "alpha=" + std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Cells

/// Everything one (setting, seed) cell trains and evaluates on.
struct CellData {
  TopicInteractionTable train;
  TopicInteractionTable test;
  PropensityModel props = PropensityModel::constant(1.0);
  TrainUniverse universe;
  std::optional<TopicAssignment> topics;
};

struct MethodScore {
  Method method = Method::kMf;
  RatingMetrics metrics;
  double ndcg = 0.0;
  TrainConfig selected;
  double cv_loss = 0.0;
};

struct CellResult {
  std::size_t setting = 0;
  int seed = 0;
  std::vector<MethodScore> scores;
  std::string stage;  // failing stage when `error` is set
  std::string error;

  bool ok() const { return error.empty(); }
  const MethodScore* find(Method m) const {
    for (const auto& s : scores) {
      if (s.method == m) return &s;
    }
    return nullptr;
  }
};

/// Y and the MCAR test depend on (master, seed) only; the MNAR log also on
/// the setting, so alpha settings of one seed share the same ground truth.
inline CellData synthetic_cell(const ExperimentConfig& config, std::size_t setting, double alpha,
                               int seed) {
  const auto s = static_cast<std::uint64_t>(seed);
  SynthConfig sc = config.synth;
  sc.alpha = alpha;
  sc.seed = resolve_seed(config.master_seed, 0, s, "prefs");
  const auto y = generate_full_preferences(sc);
  CellData cell;
  cell.test = sample_unbiased_test(y, sc.test_rate, resolve_seed(config.master_seed, 0, s, "test"));
  sc.seed = resolve_seed(config.master_seed, setting, s, "mnar");
  auto mnar = sample_mnar_observations(y, sc, cell_mask(y, cell.test));
  cell.train = std::move(mnar.train);
  cell.props = std::move(mnar.truth);
  cell.universe.users = y.users;
  cell.universe.num_topics = static_cast<std::size_t>(y.values.cols());
  return cell;
}

/// Setting-independent Yahoo preparation for one seed: the MCAR split and
/// item embeddings learned on the graph part.
struct YahooSeedData {
  InteractionTable graph_part;
  InteractionTable eval_part;
  BipartiteGraph graph;
  Eigen::MatrixXd item_vectors;
};

inline YahooSeedData prepare_yahoo_seed(const YahooData& data, const ExperimentConfig& config, int seed) {
  const auto s = static_cast<std::uint64_t>(seed);
  YahooSeedData out;
  Rng rng(resolve_seed(config.master_seed, 0, s, "graph-split"));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (const auto& r : data.test.rows) {
    (unif(rng) < config.topics.graph_fraction ? out.graph_part : out.eval_part).add(r);
  }
  out.graph = build_bipartite_graph(out.graph_part);
  const auto walks = generate_walks(out.graph, config.topics.walks_per_node, config.topics.walk_length,
                                    resolve_seed(config.master_seed, 0, s, "walks"));
  EmbeddingOptions eo = config.topics.embedding;
  eo.seed = resolve_seed(config.master_seed, 0, s, "embeddings");
  const auto emb = train_embeddings(walks, out.graph.num_nodes(), eo);
  out.item_vectors = item_vectors(out.graph, emb);
  return out;
}

namespace detail {

inline InteractionTable keep_items_with_topics(const InteractionTable& table, const TopicAssignment& topics,
                                               std::size_t* dropped) {
  InteractionTable out;
  for (const auto& r : table.rows) {
    const auto* ts = topics.topics_of(r.item);
    if (ts != nullptr && !ts->empty()) {
      out.add(r);
    } else if (dropped != nullptr) {
      ++*dropped;
    }
  }
  return out;
}

}  // namespace detail

inline CellData yahoo_cell(const YahooData& data, const YahooSeedData& prep, const ExperimentConfig& config,
                           std::size_t setting, int clusters, int seed) {
  const auto s = static_cast<std::uint64_t>(seed);
  GmmOptions go = config.topics.gmm;
  go.seed = resolve_seed(config.master_seed, setting, s, "gmm");
  const auto gmm = fit_gmm(prep.item_vectors, clusters, go);
  CellData cell;
  cell.topics = assign_topics(gmm, prep.item_vectors, prep.graph.items);

  std::size_t dropped = 0;
  const auto train_items = detail::keep_items_with_topics(data.train, *cell.topics, &dropped);
  const auto eval_items = detail::keep_items_with_topics(prep.eval_part, *cell.topics, &dropped);
  if (dropped > 0 && config.progress) {
    warn(std::to_string(dropped) + " ratings on items without an embedding were dropped");
  }
  cell.train = aggregate_to_topics(train_items, *cell.topics);
  cell.test = aggregate_to_topics(eval_items, *cell.topics);
  const auto mcar = aggregate_to_topics(prep.graph_part, *cell.topics);
  cell.universe = universe_of(cell.train, cell.test);
  cell.universe.num_topics = cell.topics->num_topics();
  cell.props = estimate_propensities_nb(cell.train, mcar, cell.universe.num_cells(), config.synth.rho_min);
  return cell;
}

inline MethodScore run_method(Method method, const CellData& cell, const ExperimentConfig& config,
                              std::size_t setting, int seed, const std::filesystem::path* artifacts) {
  const auto s = static_cast<std::uint64_t>(seed);
  TrainConfig base = config.train;
  base.seed = resolve_seed(config.master_seed, setting, s, "train:" + std::string(method_name(method)));
  const std::uint64_t cv_seed = resolve_seed(config.master_seed, setting, s, "cv");

  MethodScore score;
  score.method = method;
  auto finish = [&](const auto& model, const CvResult& cv) {
    score.selected = cv.best;
    score.cv_loss = cv.mean_loss[cv.best_index];
    score.metrics = rating_metrics(cell.test, model);
    score.ndcg = ndcg_at_k(cell.test, model, 3);
    if (artifacts != nullptr) {
      save_model((*artifacts / ("model_" + std::string(method_name(method)) + ".txt")).string(), model);
    }
  };

  if (method == Method::kExpoMf) {
    const auto grid = expand_expomf_grid(config.grid, base);
    auto trainer = [&](const TopicInteractionTable& part, const TrainConfig& c) {
      return train_expomf(part, c, cell.universe, config.expomf).model;
    };
    const auto cv = cross_validate(cell.train, grid, cell.props, trainer, config.folds, cv_seed);
    finish(trainer(cell.train, cv.best), cv);
    return score;
  }
  const PropensityModel* weights = method == Method::kMfIps ? &cell.props : nullptr;
  const auto grid = expand_grid(config.grid, base);
  auto trainer = [&](const TopicInteractionTable& part, const TrainConfig& c) {
    return train_mf(part, c, weights, cell.universe).model;
  };
  const auto cv = cross_validate(cell.train, grid, cell.props, trainer, config.folds, cv_seed);
  finish(trainer(cell.train, cv.best), cv);
  return score;
}

inline void write_cell_scores(const std::filesystem::path& dir, const CellResult& cell) {
  std::ofstream out(dir / "scores.tsv");
  out << "method\tmae\tmse\tndcg@3\tdim\tl2\tlearning_rate\tcv_snips_mae\n";
  for (const auto& s : cell.scores) {
    out << method_name(s.method) << '\t' << format_exact(s.metrics.mae) << '\t' << format_exact(s.metrics.mse)
        << '\t' << format_exact(s.ndcg) << '\t' << s.selected.dim << '\t' << format_exact(s.selected.l2) << '\t'
        << format_exact(s.selected.learning_rate) << '\t' << format_exact(s.cv_loss) << '\n';
  }
}

inline void write_cell_data(const std::filesystem::path& dir, const CellData& cell) {
  write_tsv((dir / "train.tsv").string(), cell.train);
  write_tsv((dir / "test.tsv").string(), cell.test);
  std::ofstream props(dir / "propensities.tsv");
  write_propensities_tsv(props, propensity_entries(cell.train, cell.props));
  if (cell.topics) {
    std::ofstream topics(dir / "topics.tsv");
    write_topics_tsv(topics, *cell.topics);
  }
}

// ---------------------------------------------------------------------------
// Aggregation

struct MetricTest {
  double mean = 0.0;
  double mean_mf = 0.0;
  TTestResult test;
  std::size_t pairs = 0;
};

struct SummaryRow {
  Method method = Method::kMf;
  std::size_t setting = 0;
  std::string label;
  double mae = 0.0;
  double mse = 0.0;
  double ndcg = 0.0;
  std::size_t runs = 0;
  std::optional<MetricTest> vs_mf[3];  // mae, mse, ndcg; empty for MF itself

  /// Significant improvement over MF at p < 0.01 for metric `k`.
  bool dagger(int k) const {
    const auto& v = vs_mf[k];
    if (!v || v->pairs < 2) return false;
    const bool better = k == 2 ? v->mean > v->mean_mf : v->mean < v->mean_mf;
    return better && v->test.p < 0.01;
  }
};

struct ExperimentResult {
  std::vector<std::string> labels;
  std::vector<CellResult> cells;
  std::vector<SummaryRow> rows;
  std::size_t num_errors = 0;
};

inline std::vector<SummaryRow> summarize(const ExperimentConfig& config, const std::vector<std::string>& labels,
                                         const std::vector<CellResult>& cells) {
  std::vector<SummaryRow> rows;
  auto metric = [](const MethodScore& s, int k) {
    return k == 0 ? s.metrics.mae : k == 1 ? s.metrics.mse : s.ndcg;
  };
  for (std::size_t setting = 0; setting < labels.size(); ++setting) {
    std::vector<const CellResult*> ok;
    for (const auto& c : cells) {
      if (c.setting == setting && c.ok()) ok.push_back(&c);
    }
    std::sort(ok.begin(), ok.end(), [](auto* a, auto* b) { return a->seed < b->seed; });
    for (Method m : config.methods) {
      SummaryRow row;
      row.method = m;
      row.setting = setting;
      row.label = labels[setting];
      for (const auto* c : ok) {
        const auto* s = c->find(m);
        if (s == nullptr) continue;
        row.mae += s->metrics.mae;
        row.mse += s->metrics.mse;
        row.ndcg += s->ndcg;
        ++row.runs;
      }
      if (row.runs > 0) {
        row.mae /= static_cast<double>(row.runs);
        row.mse /= static_cast<double>(row.runs);
        row.ndcg /= static_cast<double>(row.runs);
      } else {
        row.mae = row.mse = row.ndcg = std::numeric_limits<double>::quiet_NaN();
      }
      if (m != Method::kMf) {
        for (int k = 0; k < 3; ++k) {
          std::vector<double> a, b;
          for (const auto* c : ok) {
            const auto* s = c->find(m);
            const auto* base = c->find(Method::kMf);
            if (s == nullptr || base == nullptr) continue;
            a.push_back(metric(*s, k));
            b.push_back(metric(*base, k));
          }
          MetricTest t;
          t.pairs = a.size();
          if (!a.empty()) {
            t.mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
            t.mean_mf = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
          }
          if (a.size() >= 2) {
            t.test = paired_ttest(a, b);
          } else {
            t.test.t = t.test.p = std::numeric_limits<double>::quiet_NaN();
          }
          if (std::find(config.methods.begin(), config.methods.end(), Method::kMf) != config.methods.end()) {
            row.vs_mf[k] = t;
          }
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace detail {

inline std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string general(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

/// `method setting mae mse ndcg@3 p_vs_mf`; p is the paired t-test on MAE.
inline void write_summary_tsv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "method\tsetting\tmae\tmse\tndcg@3\tp_vs_mf\n";
  for (const auto& r : rows) {
    out << method_name(r.method) << '\t' << r.label << '\t' << detail::fixed(r.mae, 6) << '\t'
        << detail::fixed(r.mse, 6) << '\t' << detail::fixed(r.ndcg, 6) << '\t'
        << (r.vs_mf[0] ? detail::general(r.vs_mf[0]->test.p) : "-") << '\n';
  }
}

inline void write_significance_tsv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  static constexpr const char* kNames[3] = {"mae", "mse", "ndcg@3"};
  out << "method\tsetting\tmetric\tmean\tmean_mf\tpairs\tt\tp\tdegenerate\tdagger\n";
  for (const auto& r : rows) {
    for (int k = 0; k < 3; ++k) {
      if (!r.vs_mf[k]) continue;
      const auto& v = *r.vs_mf[k];
      out << method_name(r.method) << '\t' << r.label << '\t' << kNames[k] << '\t' << detail::fixed(v.mean, 6)
          << '\t' << detail::fixed(v.mean_mf, 6) << '\t' << v.pairs << '\t' << detail::general(v.test.t) << '\t'
          << detail::general(v.test.p) << '\t' << (v.test.degenerate ? 1 : 0) << '\t' << (r.dagger(k) ? 1 : 0)
          << '\n';
    }
  }
}

/// Aligned text table; a dagger marks a significant improvement over MF
/// (paired t-test, p < 0.01).
inline void write_aligned_table(std::ostream& out, const std::vector<SummaryRow>& rows) {
  std::vector<std::vector<std::string>> cells{{"Setting", "Method", "MAE", "MSE", "NDCG@3"}};
  for (const auto& r : rows) {
    std::vector<std::string> line{r.label, std::string(method_name(r.method))};
    const double v[3] = {r.mae, r.mse, r.ndcg};
    for (int k = 0; k < 3; ++k) line.push_back(detail::fixed(v[k], 4) + (r.dagger(k) ? "†" : ""));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(5, 0);
  auto display_width = [](const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
  };
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], display_width(line[c]));
  }
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      out << line[c];
      if (c + 1 < line.size()) out << std::string(width[c] - display_width(line[c]) + 2, ' ');
    }
    out << '\n';
  }
}

inline void write_errors_tsv(std::ostream& out, const std::vector<std::string>& labels,
                             const std::vector<CellResult>& cells) {
  out << "setting\tseed\tstage\terror\n";
  for (const auto& c : cells) {
    if (c.ok()) continue;
    std::string msg = c.error;
    std::replace(msg.begin(), msg.end(), '\t', ' ');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out << labels[c.setting] << '\t' << c.seed << '\t' << c.stage << '\t' << msg << '\n';
  }
}

// ---------------------------------------------------------------------------
// Orchestration

/// Runs f(0..n-1) on `workers` threads; f must not throw.
template <class F>
void parallel_for(std::size_t n, int workers, F&& f) {
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) f(i);
  };
  if (workers <= 1 || n <= 1) {
    body();
    return;
  }
  std::vector<std::jthread> pool;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  for (std::size_t w = 0; w < count; ++w) pool.emplace_back(body);
}

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  namespace fs = std::filesystem;
  const auto axis = config.resolved_sweep();
  const fs::path root(config.outdir);
  fs::create_directories(root);

  ExperimentResult result;
  for (double v : axis) result.labels.push_back(setting_label(config.mode, v));

  std::optional<YahooData> yahoo;
  std::vector<std::optional<YahooSeedData>> seed_data(static_cast<std::size_t>(config.num_seeds));
  std::vector<std::string> seed_error(static_cast<std::size_t>(config.num_seeds));
  if (config.mode == ExperimentMode::kSemiSynthetic) {
    yahoo = load_yahoo(config.yahoo_train, config.yahoo_test);
    parallel_for(seed_data.size(), config.workers, [&](std::size_t s) {
      try {
        seed_data[s] = prepare_yahoo_seed(*yahoo, config, static_cast<int>(s));
      } catch (const std::exception& e) {
        seed_error[s] = e.what();
      }
    });
  }

  std::mutex log_mutex;
  result.cells.resize(axis.size() * static_cast<std::size_t>(config.num_seeds));
  parallel_for(result.cells.size(), config.workers, [&](std::size_t job) {
    CellResult& cell = result.cells[job];
    cell.setting = job / static_cast<std::size_t>(config.num_seeds);
    cell.seed = static_cast<int>(job % static_cast<std::size_t>(config.num_seeds));
    const auto start = std::chrono::steady_clock::now();
    const fs::path dir = root / result.labels[cell.setting] / std::to_string(cell.seed);
    cell.stage = "data";
    try {
      fs::create_directories(dir);
      CellData data;
      if (config.mode == ExperimentMode::kFullySynthetic) {
        data = synthetic_cell(config, cell.setting, axis[cell.setting], cell.seed);
      } else {
        const auto s = static_cast<std::size_t>(cell.seed);
        if (!seed_data[s]) throw Error("topic discovery failed: " + seed_error[s]);
        data = yahoo_cell(*yahoo, *seed_data[s], config, cell.setting, static_cast<int>(axis[cell.setting]),
                          cell.seed);
      }
      write_cell_data(dir, data);
      for (Method m : config.methods) {
        cell.stage = "method:" + std::string(method_name(m));
        cell.scores.push_back(run_method(m, data, config, cell.setting, cell.seed, &dir));
      }
      cell.stage.clear();
      write_cell_scores(dir, cell);
    } catch (const std::exception& e) {
      cell.error = e.what();
      cell.scores.clear();
    }
    if (config.progress) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::lock_guard lock(log_mutex);
      std::clog << result.labels[cell.setting] << " seed " << cell.seed << ": "
                << (cell.ok() ? "done" : "FAILED (" + cell.error + ")") << " in " << detail::fixed(secs, 1)
                << "s\n";
    }
  });

  for (const auto& c : result.cells) result.num_errors += c.ok() ? 0 : 1;
  result.rows = summarize(config, result.labels, result.cells);

  std::ofstream summary(root / "summary.tsv");
  write_summary_tsv(summary, result.rows);
  std::ofstream significance(root / "significance.tsv");
  write_significance_tsv(significance, result.rows);
  std::ofstream table(root / "table.txt");
  write_aligned_table(table, result.rows);
  std::ofstream errors(root / "errors.tsv");
  write_errors_tsv(errors, result.labels, result.cells);
  return result;
}

// ---------------------------------------------------------------------------
// Topic statistics

struct TopicCount {
  TopicId topic = 0;
  std::size_t count = 0;
};

/// Ratings per topic (an item in m topics counts toward each), sorted by
/// count descending, then topic id. Items without a topic contribute nothing.
inline std::vector<TopicCount> topic_distribution_stats(const InteractionTable& interactions,
                                                        const TopicAssignment& topics) {
  std::map<TopicId, std::size_t> counts;
  for (const auto& r : interactions.rows) {
    const auto* ts = topics.topics_of(r.item);
    if (ts == nullptr) continue;
    for (TopicId t : *ts) ++counts[t];
  }
  std::vector<TopicCount> out;
  for (auto [t, n] : counts) out.push_back({t, n});
  std::stable_sort(out.begin(), out.end(), [](const TopicCount& a, const TopicCount& b) { return a.count > b.count; });
  return out;
}

inline void write_topic_stats_tsv(std::ostream& out, const std::vector<TopicCount>& stats) {
  out << "topic\tcount\n";
  for (const auto& s : stats) out << s.topic << '\t' << s.count << '\n';
}

}  // namespace pebias
