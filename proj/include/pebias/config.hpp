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

// Experiment configuration as a nested YAML document with dotted-key
// overrides ("--train.epochs=10"). Requires yaml-cpp.

#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "pebias/errors.hpp"
#include "pebias/experiment.hpp"

namespace pebias {

namespace detail {

inline YAML::Node real_node(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return YAML::Node(s);
}

inline YAML::Node real_list(const std::vector<double>& v) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (double x : v) n.push_back(real_node(x));
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}

inline YAML::Node int_list(const std::vector<int>& v) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (int x : v) n.push_back(x);
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}

template <class T>
T get(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for '" + key + "'");
  }
}

inline void merge_into(YAML::Node target, const YAML::Node& source, const std::string& prefix) {
  if (!source.IsMap()) throw ConfigError("config section '" + prefix + "' must be a mapping");
  for (const auto& kv : source) {
    const auto key = kv.first.as<std::string>();
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!target[key]) throw ConfigError("unknown config key '" + path + "'");
    if (target[key].IsMap()) {
      merge_into(target[key], kv.second, path);
    } else {
      target[key] = kv.second;
    }
  }
}

}  // namespace detail

/// Full config tree with every key present.
inline YAML::Node to_yaml(const ExperimentConfig& c) {
  using detail::real_node;
  YAML::Node n;
  n["mode"] = std::string(mode_name(c.mode));
  n["sweep"] = detail::real_list(c.sweep);
  YAML::Node methods(YAML::NodeType::Sequence);
  for (Method m : c.methods) methods.push_back(std::string(method_name(m)));
  methods.SetStyle(YAML::EmitterStyle::Flow);
  n["methods"] = methods;
  n["num_seeds"] = c.num_seeds;
  n["master_seed"] = c.master_seed;
  n["workers"] = c.workers;
  n["folds"] = c.folds;
  n["outdir"] = c.outdir;

  auto& s = c.synth;
  n["synth"]["num_users"] = s.num_users;
  n["synth"]["num_topics"] = s.num_topics;
  n["synth"]["dim"] = s.dim;
  n["synth"]["alpha"] = real_node(s.alpha);
  n["synth"]["sparsity"] = real_node(s.sparsity);
  n["synth"]["decay"] = real_node(s.decay);
  n["synth"]["test_rate"] = real_node(s.test_rate);
  n["synth"]["rho_min"] = real_node(s.rho_min);

  auto& t = c.train;
  n["train"]["dim"] = t.dim;
  n["train"]["l2"] = real_node(t.l2);
  n["train"]["learning_rate"] = real_node(t.learning_rate);
  n["train"]["batch_size"] = t.batch_size;
  n["train"]["epochs"] = t.epochs;
  n["train"]["loss"] = std::string(t.loss == LossKind::kSquared ? "squared" : "absolute");
  n["train"]["beta1"] = real_node(t.beta1);
  n["train"]["beta2"] = real_node(t.beta2);
  n["train"]["epsilon"] = real_node(t.epsilon);

  n["grid"]["dims"] = detail::int_list(c.grid.dims);
  n["grid"]["l2"] = detail::real_list(c.grid.l2);
  n["grid"]["learning_rates"] = detail::real_list(c.grid.learning_rates);

  n["expomf"]["lambda_y"] = real_node(c.expomf.lambda_y);
  n["expomf"]["init_exposure"] = real_node(c.expomf.init_exposure);
  n["expomf"]["tol"] = real_node(c.expomf.tol);
  n["expomf"]["init_scale"] = real_node(c.expomf.init_scale);

  auto& p = c.topics;
  n["topics"]["walks_per_node"] = p.walks_per_node;
  n["topics"]["walk_length"] = p.walk_length;
  n["topics"]["graph_fraction"] = real_node(p.graph_fraction);
  n["topics"]["embedding_dim"] = p.embedding.dim;
  n["topics"]["window"] = p.embedding.window;
  n["topics"]["negatives"] = p.embedding.negatives;
  n["topics"]["epochs"] = p.embedding.epochs;
  n["topics"]["learning_rate"] = real_node(p.embedding.learning_rate);
  n["topics"]["gmm_max_iters"] = p.gmm.max_iters;
  n["topics"]["gmm_tol"] = real_node(p.gmm.tol);
  n["topics"]["gmm_variance_floor"] = real_node(p.gmm.variance_floor);

  n["data"]["yahoo_train"] = c.yahoo_train;
  n["data"]["yahoo_test"] = c.yahoo_test;
  return n;
}

inline ExperimentConfig from_yaml(const YAML::Node& n) {
  using detail::get;
  ExperimentConfig c;
  const auto mode = parse_mode(get<std::string>(n["mode"], "mode"));
  if (!mode) throw ConfigError("mode must be fully-synthetic or semi-synthetic");
  c.mode = *mode;
  c.sweep = get<std::vector<double>>(n["sweep"], "sweep");
  c.methods.clear();
  for (const auto& name : get<std::vector<std::string>>(n["methods"], "methods")) {
    const auto m = parse_method(name);
    if (!m) throw ConfigError("unknown method '" + name + "' (expected MF, ExpoMF or MF-IPS)");
    c.methods.push_back(*m);
  }
  c.num_seeds = get<int>(n["num_seeds"], "num_seeds");
  c.master_seed = get<std::uint64_t>(n["master_seed"], "master_seed");
  c.workers = get<int>(n["workers"], "workers");
  c.folds = get<int>(n["folds"], "folds");
  c.outdir = get<std::string>(n["outdir"], "outdir");

  const auto& s = n["synth"];
  c.synth.num_users = get<int>(s["num_users"], "synth.num_users");
  c.synth.num_topics = get<int>(s["num_topics"], "synth.num_topics");
  c.synth.dim = get<int>(s["dim"], "synth.dim");
  c.synth.alpha = get<double>(s["alpha"], "synth.alpha");
  c.synth.sparsity = get<double>(s["sparsity"], "synth.sparsity");
  c.synth.decay = get<double>(s["decay"], "synth.decay");
  c.synth.test_rate = get<double>(s["test_rate"], "synth.test_rate");
  c.synth.rho_min = get<double>(s["rho_min"], "synth.rho_min");

  const auto& t = n["train"];
  c.train.dim = get<int>(t["dim"], "train.dim");
  c.train.l2 = get<double>(t["l2"], "train.l2");
  c.train.learning_rate = get<double>(t["learning_rate"], "train.learning_rate");
  c.train.batch_size = get<int>(t["batch_size"], "train.batch_size");
  c.train.epochs = get<int>(t["epochs"], "train.epochs");
  const auto loss = get<std::string>(t["loss"], "train.loss");
  if (loss != "squared" && loss != "absolute") throw ConfigError("train.loss must be squared or absolute");
  c.train.loss = loss == "squared" ? LossKind::kSquared : LossKind::kAbsolute;
  c.train.beta1 = get<double>(t["beta1"], "train.beta1");
  c.train.beta2 = get<double>(t["beta2"], "train.beta2");
  c.train.epsilon = get<double>(t["epsilon"], "train.epsilon");

  c.grid.dims = get<std::vector<int>>(n["grid"]["dims"], "grid.dims");
  c.grid.l2 = get<std::vector<double>>(n["grid"]["l2"], "grid.l2");
  c.grid.learning_rates = get<std::vector<double>>(n["grid"]["learning_rates"], "grid.learning_rates");

  const auto& e = n["expomf"];
  c.expomf.lambda_y = get<double>(e["lambda_y"], "expomf.lambda_y");
  c.expomf.init_exposure = get<double>(e["init_exposure"], "expomf.init_exposure");
  c.expomf.tol = get<double>(e["tol"], "expomf.tol");
  c.expomf.init_scale = get<double>(e["init_scale"], "expomf.init_scale");

  const auto& p = n["topics"];
  c.topics.walks_per_node = get<int>(p["walks_per_node"], "topics.walks_per_node");
  c.topics.walk_length = get<int>(p["walk_length"], "topics.walk_length");
  c.topics.graph_fraction = get<double>(p["graph_fraction"], "topics.graph_fraction");
  c.topics.embedding.dim = get<int>(p["embedding_dim"], "topics.embedding_dim");
  c.topics.embedding.window = get<int>(p["window"], "topics.window");
  c.topics.embedding.negatives = get<int>(p["negatives"], "topics.negatives");
  c.topics.embedding.epochs = get<int>(p["epochs"], "topics.epochs");
  c.topics.embedding.learning_rate = get<double>(p["learning_rate"], "topics.learning_rate");
  c.topics.gmm.max_iters = get<int>(p["gmm_max_iters"], "topics.gmm_max_iters");
  c.topics.gmm.tol = get<double>(p["gmm_tol"], "topics.gmm_tol");
  c.topics.gmm.variance_floor = get<double>(p["gmm_variance_floor"], "topics.gmm_variance_floor");

  c.yahoo_train = get<std::string>(n["data"]["yahoo_train"], "data.yahoo_train");
  c.yahoo_test = get<std::string>(n["data"]["yahoo_test"], "data.yahoo_test");
  return c;
}

/// Sets one dotted key of a full config tree. The key must already exist;
/// list-valued keys accept "a,b,c" or YAML flow syntax "[a, b, c]".
inline void apply_override(YAML::Node& root, std::string_view dotted, std::string_view value) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    parts.emplace_back(dotted.substr(start, dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  std::vector<YAML::Node> chain{root};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const YAML::Node& parent = chain.back();
    if (!parent.IsMap() || !parent[parts[i]]) {
      throw ConfigError("unknown config key '" + std::string(dotted) + "'");
    }
    chain.push_back(parent[parts[i]]);
  }
  YAML::Node target = chain.back();
  if (target.IsMap()) throw ConfigError("'" + std::string(dotted) + "' is a section, not a key");
  std::string text(value);
  if (target.IsSequence() && (text.empty() || text.front() != '[')) text = "[" + text + "]";
  YAML::Node parsed;
  try {
    parsed = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("cannot parse value for '" + std::string(dotted) + "': " + e.what());
  }
  if (target.IsSequence()) parsed.SetStyle(YAML::EmitterStyle::Flow);
  chain[chain.size() - 2][parts.back()] = parsed;
}

/// Defaults, then the optional file, then "key=value" overrides in order.
inline YAML::Node load_config_tree(const std::string& path,
                                   const std::vector<std::pair<std::string, std::string>>& overrides) {
  YAML::Node root = to_yaml(ExperimentConfig{});
  if (!path.empty()) {
    YAML::Node file;
    try {
      file = YAML::LoadFile(path);
    } catch (const YAML::Exception& e) {
      throw ConfigError("cannot read config " + path + ": " + e.what());
    }
    if (!file.IsNull()) detail::merge_into(root, file, "");
  }
  for (const auto& [k, v] : overrides) apply_override(root, k, v);
  return root;
}

inline std::string dump_yaml(const YAML::Node& n) {
  YAML::Emitter out;
  out << n;
  return std::string(out.c_str()) + "\n";
}

}  // namespace pebias
