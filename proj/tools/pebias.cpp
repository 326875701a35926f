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

// pebias command-line interface.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <CLI11.hpp>

#include "pebias.hpp"
#include "pebias/config.hpp"

namespace fs = std::filesystem;
using namespace pebias;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string outdir;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "YAML config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "master seed");
  sub->add_option("--workers", c.workers, "worker threads");
  sub->add_option("--outdir", c.outdir, "output directory");
  sub->allow_extras();
}

/// "--a.b=v" and "--a.b v" extras become (a.b, v) pairs.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + arg + "'");
    const auto eq = arg.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(arg.substr(2, eq - 2), arg.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      out.emplace_back(arg.substr(2), extras[++i]);
    } else {
      throw ConfigError("missing value for '" + arg + "'");
    }
  }
  return out;
}

struct Resolved {
  ExperimentConfig config;
  YAML::Node tree;
};

Resolved resolve(const Common& c, CLI::App* sub) {
  auto overrides = parse_overrides(sub->remaining());
  if (c.seed) overrides.emplace_back("master_seed", std::to_string(*c.seed));
  if (c.workers) overrides.emplace_back("workers", std::to_string(*c.workers));
  if (!c.outdir.empty()) overrides.emplace_back("outdir", c.outdir);
  Resolved r;
  r.tree = load_config_tree(c.config_path, overrides);
  r.config = from_yaml(r.tree);
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << text;
}

InteractionTable read_item_ratings(const std::string& path, const std::string& format) {
  if (format == "tsv") return read_interactions_tsv(path);
  if (format == "yahoo") {
    std::ifstream in(path);
    if (!in) throw Error("cannot open for reading: " + path);
    return read_yahoo_ratings(in);
  }
  throw ConfigError("unknown ratings format '" + format + "' (expected tsv or yahoo)");
}

int cmd_synth_gen(const Resolved& r) {
  const auto& c = r.config;
  SynthConfig sc = c.synth;
  sc.seed = resolve_seed(c.master_seed, 0, 0, "prefs");
  const auto y = generate_full_preferences(sc);
  const auto test = sample_unbiased_test(y, sc.test_rate, resolve_seed(c.master_seed, 0, 0, "test"));
  sc.seed = resolve_seed(c.master_seed, 0, 0, "mnar");
  const auto mnar = sample_mnar_observations(y, sc, cell_mask(y, test));
  const fs::path dir(c.outdir);
  fs::create_directories(dir);
  write_tsv((dir / "train.tsv").string(), mnar.train);
  write_tsv((dir / "test.tsv").string(), test);
  std::ofstream props(dir / "propensities.tsv");
  write_propensities_tsv(props, propensity_entries(mnar.truth));
  write_text(dir / "config.echo", dump_yaml(r.tree));
  std::cout << "train\t" << mnar.train.size() << "\ntest\t" << test.size() << '\n';
  return 0;
}

int cmd_topics(const Resolved& r, const std::string& input, const std::string& format, int clusters) {
  const auto& c = r.config;
  const auto ratings = read_item_ratings(input, format);
  const auto graph = build_bipartite_graph(ratings);
  const auto walks = generate_walks(graph, c.topics.walks_per_node, c.topics.walk_length,
                                    resolve_seed(c.master_seed, 0, 0, "walks"));
  EmbeddingOptions eo = c.topics.embedding;
  eo.seed = resolve_seed(c.master_seed, 0, 0, "embeddings");
  const auto emb = train_embeddings(walks, graph.num_nodes(), eo);
  const auto vectors = item_vectors(graph, emb);
  GmmOptions go = c.topics.gmm;
  go.seed = resolve_seed(c.master_seed, 0, 0, "gmm");
  const auto gmm = fit_gmm(vectors, clusters, go);
  const auto topics = assign_topics(gmm, vectors, graph.items);

  const fs::path dir(c.outdir);
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "topics.tsv");
    write_topics_tsv(out, topics);
  }
  {
    std::ofstream out(dir / "embeddings.tsv");
    out << "node";
    for (int k = 0; k < emb.dim(); ++k) out << "\tv" << k;
    out << '\n';
    for (NodeId n = 0; n < graph.num_nodes(); ++n) {
      out << graph.node_name(n);
      for (int k = 0; k < emb.dim(); ++k) out << '\t' << format_exact(emb.vectors(n, k));
      out << '\n';
    }
  }
  std::vector<std::size_t> sizes(topics.num_topics(), 0);
  for (std::size_t i = 0; i < topics.num_items(); ++i) {
    for (TopicId t : topics.topics_at(i)) ++sizes[static_cast<std::size_t>(t)];
  }
  std::ostringstream report;
  report << "K\t" << clusters << "\ntopics\t" << topics.num_topics() << "\nlog_likelihood\t"
         << format_exact(gmm.log_likelihood) << "\niterations\t" << gmm.iterations << "\ncluster_sizes\t";
  for (std::size_t t = 0; t < sizes.size(); ++t) report << (t ? "," : "") << sizes[t];
  report << '\n';
  write_text(dir / "fit_report.txt", report.str());
  std::cout << report.str();
  return 0;
}

int cmd_simulate_pe(const Resolved& r, const std::string& biased_path, const std::string& unbiased_path,
                    const std::string& mcar_path, const std::string& topics_path) {
  const auto& c = r.config;
  const auto topics = read_topics_tsv(topics_path);
  const auto train = aggregate_to_topics(read_interactions_tsv(biased_path), topics);
  const auto test = aggregate_to_topics(read_interactions_tsv(unbiased_path), topics);
  const auto mcar = mcar_path.empty() ? test : aggregate_to_topics(read_interactions_tsv(mcar_path), topics);
  auto universe = universe_of(train, test);
  universe.num_topics = topics.num_topics();
  const auto nb = estimate_propensities_nb_detail(train, mcar, universe.num_cells(), c.synth.rho_min);

  const fs::path dir(c.outdir);
  fs::create_directories(dir);
  write_tsv((dir / "train_topics.tsv").string(), train);
  write_tsv((dir / "test_topics.tsv").string(), test);
  std::ofstream props(dir / "propensities.tsv");
  write_propensities_tsv(props, propensity_entries(train, nb.model));
  std::cout << "level\tp_level_given_observed\tp_level\trho\n";
  for (int l = 0; l < kNumLevels; ++l) {
    std::cout << l + 1 << '\t' << format_real(nb.level_given_observed[l]) << '\t'
              << format_real(nb.level_prior[l]) << '\t' << format_real(nb.raw[l]) << '\n';
  }
  return 0;
}

int cmd_train(const Resolved& r, const std::string& train_path, const std::string& props_path,
              const std::string& method_name_arg, const std::string& out_path, bool cv) {
  const auto& c = r.config;
  const auto method = parse_method(method_name_arg);
  if (!method) throw ConfigError("unknown method '" + method_name_arg + "'");
  const auto train = read_topic_ratings_tsv(train_path);
  std::optional<PropensityModel> props;
  if (!props_path.empty()) props = read_propensities_tsv(props_path, c.synth.rho_min);
  if (*method == Method::kMfIps && !props) throw ConfigError("MF-IPS needs --propensities");
  const PropensityModel selection = props ? *props : PropensityModel::constant(1.0);
  const auto universe = universe_of(train);

  TrainConfig tc = c.train;
  tc.seed = resolve_seed(c.master_seed, 0, 0, "train:" + method_name_arg);
  const PropensityModel* weights = *method == Method::kMfIps ? &*props : nullptr;
  if (*method == Method::kExpoMf) {
    auto trainer = [&](const TopicInteractionTable& t, const TrainConfig& cfg) {
      return train_expomf(t, cfg, universe, c.expomf).model;
    };
    if (cv) tc = cross_validate(train, expand_expomf_grid(c.grid, tc), selection, trainer, c.folds).best;
    const auto fit = train_expomf(train, tc, universe, c.expomf);
    save_model(out_path, fit.model);
    std::cout << "em_iterations\t" << fit.objective_trace.size() - 1 << '\n';
  } else {
    auto trainer = [&](const TopicInteractionTable& t, const TrainConfig& cfg) {
      return train_mf(t, cfg, weights, universe).model;
    };
    if (cv) tc = cross_validate(train, expand_grid(c.grid, tc), selection, trainer, c.folds).best;
    const auto fit = train_mf(train, tc, weights, universe);
    save_model(out_path, fit.model);
    std::cout << "final_train_loss\t" << format_real(fit.loss_trace.back()) << '\n';
  }
  std::cout << "dim\t" << tc.dim << "\nl2\t" << format_real(tc.l2) << "\nlearning_rate\t"
            << format_real(tc.learning_rate) << '\n';
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& test_path, int k) {
  const auto test = read_topic_ratings_tsv(test_path);
  const auto model = load_model(model_path);
  std::visit(
      [&](const auto& m) {
        const auto metrics = rating_metrics(test, m);
        std::cout << "mae\tmse\tndcg@" << k << '\n'
                  << format_real(metrics.mae) << '\t' << format_real(metrics.mse) << '\t'
                  << format_real(ndcg_at_k(test, m, k)) << '\n';
      },
      model);
  return 0;
}

int cmd_stats(const std::string& ratings_path, const std::string& format, const std::string& topics_path,
              const std::string& coat_ratings, const std::string& coat_features, const std::string& out_path) {
  InteractionTable ratings;
  TopicAssignment topics;
  if (!coat_ratings.empty()) {
    if (coat_features.empty()) throw ConfigError("--coat-ratings needs --coat-features");
    ratings = interactions_from_dense(read_dense_matrix(coat_ratings));
    topics = topics_from_features(read_dense_matrix(coat_features));
  } else {
    if (ratings_path.empty() || topics_path.empty()) {
      throw ConfigError("stats needs --ratings and --topics, or --coat-ratings and --coat-features");
    }
    ratings = read_item_ratings(ratings_path, format);
    topics = read_topics_tsv(topics_path);
  }
  const auto ds = dataset_stats(ratings);
  std::clog << "users " << ds.num_users << ", items " << ds.num_items << ", ratings " << ds.num_ratings << '\n';
  const auto stats = topic_distribution_stats(ratings, topics);
  if (out_path.empty()) {
    write_topic_stats_tsv(std::cout, stats);
  } else {
    std::ofstream out(out_path);
    if (!out) throw Error("cannot open for writing: " + out_path);
    write_topic_stats_tsv(out, stats);
  }
  return 0;
}

int cmd_experiment(const Resolved& r, bool quiet) {
  ExperimentConfig c = r.config;
  c.progress = !quiet;
  fs::create_directories(c.outdir);
  write_text(fs::path(c.outdir) / "config.echo", dump_yaml(r.tree));
  const auto result = run_experiment(c);
  std::ifstream table(fs::path(c.outdir) / "table.txt");
  std::cout << table.rdbuf();
  if (result.num_errors > 0) {
    std::cerr << result.num_errors << " cell(s) failed; see " << (fs::path(c.outdir) / "errors.tsv").string()
              << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selection-bias correction for preference elicitation: data generation, training, evaluation"};
  app.require_subcommand(1);

  Common common;
  auto* synth = app.add_subcommand("synth-gen", "generate a fully-synthetic MNAR dataset");
  add_common(synth, common);

  std::string input, format = "tsv";
  int clusters = 50;
  auto* topics = app.add_subcommand("topics", "discover item topics from a user-item graph");
  add_common(topics, common);
  topics->add_option("--ratings", input, "item ratings")->required();
  topics->add_option("--format", format, "tsv or yahoo");
  topics->add_option("--clusters", clusters, "number of GMM components")->check(CLI::PositiveNumber);

  std::string biased, unbiased, mcar, topics_path;
  auto* pe = app.add_subcommand("simulate-pe", "aggregate item ratings to topics and estimate propensities");
  add_common(pe, common);
  pe->add_option("--biased", biased, "self-selected item ratings TSV")->required();
  pe->add_option("--unbiased", unbiased, "MCAR item ratings TSV (topic test set)")->required();
  pe->add_option("--mcar-sample", mcar, "MCAR item ratings for P(level); defaults to --unbiased");
  pe->add_option("--topics", topics_path, "topics TSV")->required();

  std::string train_path, props_path, method = "MF", model_out = "model.txt";
  bool cv = false;
  auto* train = app.add_subcommand("train", "train one model");
  add_common(train, common);
  train->add_option("--train", train_path, "topic ratings TSV")->required();
  train->add_option("--propensities", props_path, "propensities TSV");
  train->add_option("--method", method, "MF, MF-IPS or ExpoMF");
  train->add_option("--model", model_out, "output model file");
  train->add_flag("--cv", cv, "select hyperparameters by cross-validation over the grid");

  std::string model_in, test_path;
  int k = 3;
  auto* eval = app.add_subcommand("eval", "evaluate a model on a test TSV");
  eval->add_option("--model", model_in, "model file")->required();
  eval->add_option("--test", test_path, "topic ratings TSV")->required();
  eval->add_option("-k", k, "NDCG cutoff")->check(CLI::PositiveNumber);

  std::string stats_ratings, stats_topics, coat_ratings, coat_features, stats_out;
  std::string stats_format = "tsv";
  auto* stats = app.add_subcommand("stats", "ratings per topic (plot-ready TSV)");
  stats->add_option("--ratings", stats_ratings, "item ratings");
  stats->add_option("--format", stats_format, "tsv or yahoo");
  stats->add_option("--topics", stats_topics, "topics TSV");
  stats->add_option("--coat-ratings", coat_ratings, "Coat dense rating matrix");
  stats->add_option("--coat-features", coat_features, "Coat item feature matrix");
  stats->add_option("--out", stats_out, "output TSV (default stdout)");

  bool quiet = false;
  auto* experiment = app.add_subcommand("experiment", "run a full sweep and write summary tables");
  add_common(experiment, common);
  experiment->add_flag("--quiet", quiet, "no per-cell progress");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth_gen(resolve(common, synth));
    if (*topics) return cmd_topics(resolve(common, topics), input, format, clusters);
    if (*pe) return cmd_simulate_pe(resolve(common, pe), biased, unbiased, mcar, topics_path);
    if (*train) return cmd_train(resolve(common, train), train_path, props_path, method, model_out, cv);
    if (*eval) return cmd_eval(model_in, test_path, k);
    if (*stats) {
      return cmd_stats(stats_ratings, stats_format, stats_topics, coat_ratings, coat_features, stats_out);
    }
    if (*experiment) return cmd_experiment(resolve(common, experiment), quiet);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
