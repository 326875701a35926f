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

// File formats: TSV interchange tables, dataset loaders (Yahoo! R3, Coat)
// and plain-text model files.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "pebias/core.hpp"
#include "pebias/errors.hpp"
#include "pebias/estimators.hpp"
#include "pebias/expomf.hpp"
#include "pebias/pe_simulation.hpp"

namespace pebias {

inline constexpr std::string_view kInteractionHeader = "user\titem\trating";
inline constexpr std::string_view kTopicRatingHeader = "user\ttopic\trating";
inline constexpr std::string_view kPropensityHeader = "user\ttopic\trho";
inline constexpr std::string_view kTopicsHeader = "item\ttopic";

/// Fixed six decimals when that is exact, otherwise the shortest
/// representation that round-trips.
inline std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  const std::string shortest(buf, res.ptr);
  const auto dot = shortest.find('.');
  const bool has_exp = shortest.find_first_of("eE") != std::string::npos;
  const std::size_t decimals = dot == std::string::npos ? 0 : shortest.size() - dot - 1;
  if (!has_exp && decimals <= 6 && std::isfinite(v)) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
  }
  return shortest;
}

/// Round-trip exact (17 significant digits).
inline std::string format_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  while (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<long> parse_long(std::string_view s) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open for reading: " + path);
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  return out;
}

template <class Row>
std::vector<std::size_t> sorted_order(const Table<Row>& table) {
  std::vector<std::size_t> order(table.size());
  std::iota(order.begin(), order.end(), 0);
  if (table.empty()) return order;
  const auto maps = build_index_maps(table);
  auto key = [&](std::size_t i) {
    const auto& r = table.rows[i];
    return std::pair(*maps.users.find(r.user), *maps.entities.find(entity_of(r)));
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  return order;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// TSV tables

inline void write_tsv(std::ostream& out, const InteractionTable& table) {
  out << kInteractionHeader << '\n';
  for (std::size_t i : detail::sorted_order(table)) {
    const auto& r = table.rows[i];
    out << r.user << '\t' << r.item << '\t' << format_real(r.rating) << '\n';
  }
}

/// Topic rows are ordered by user (first appearance), then topic id.
inline void write_tsv(std::ostream& out, const TopicInteractionTable& table) {
  out << kTopicRatingHeader << '\n';
  std::vector<std::size_t> order(table.size());
  std::iota(order.begin(), order.end(), 0);
  IdIndex users;
  for (const auto& r : table.rows) users.intern(r.user);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = table.rows[a];
    const auto& rb = table.rows[b];
    return std::pair(*users.find(ra.user), ra.topic) < std::pair(*users.find(rb.user), rb.topic);
  });
  for (std::size_t i : order) {
    const auto& r = table.rows[i];
    out << r.user << '\t' << r.topic << '\t' << format_real(r.rating) << '\n';
  }
}

template <class Row>
void write_tsv(const std::string& path, const Table<Row>& table) {
  auto out = detail::open_out(path);
  write_tsv(out, table);
}

using AnyTable = std::variant<InteractionTable, TopicInteractionTable>;

/// Reads either schema, chosen by the header line.
inline AnyTable read_tsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("missing header line");
  const std::string header(detail::trim(line));
  const bool topic = header == kTopicRatingHeader;
  if (!topic && header != kInteractionHeader) throw SchemaError("unknown header: " + header);

  InteractionTable items;
  TopicInteractionTable topics;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_tabs(line);
    if (fields.size() != 3) throw ParseError("expected 3 tab-separated fields", line_no);
    const auto rating = detail::parse_double(fields[2]);
    if (!rating) throw ParseError("bad rating '" + std::string(fields[2]) + "'", line_no);
    if (topic) {
      const auto t = detail::parse_long(fields[1]);
      if (!t || *t < 0 || *t > std::numeric_limits<TopicId>::max()) {
        throw ParseError("bad topic id '" + std::string(fields[1]) + "'", line_no);
      }
      topics.add({std::string(fields[0]), static_cast<TopicId>(*t), *rating});
    } else {
      items.add({std::string(fields[0]), std::string(fields[1]), *rating});
    }
  }
  if (topic) return topics;
  return items;
}

inline AnyTable read_tsv(const std::string& path) {
  auto in = detail::open_in(path);
  return read_tsv(in);
}

template <class T>
T read_tsv_as(const std::string& path) {
  auto any = read_tsv(path);
  if (auto* t = std::get_if<T>(&any)) return std::move(*t);
  throw SchemaError("unexpected table schema in " + path);
}

inline InteractionTable read_interactions_tsv(const std::string& path) {
  return read_tsv_as<InteractionTable>(path);
}

inline TopicInteractionTable read_topic_ratings_tsv(const std::string& path) {
  return read_tsv_as<TopicInteractionTable>(path);
}

// ---------------------------------------------------------------------------
// Propensities and topics

struct PropensityEntry {
  std::string user;
  TopicId topic = 0;
  double rho = 0.0;
};

inline void write_propensities_tsv(std::ostream& out, const std::vector<PropensityEntry>& entries) {
  out << kPropensityHeader << '\n';
  for (const auto& e : entries) out << e.user << '\t' << e.topic << '\t' << format_exact(e.rho) << '\n';
}

/// Entries for every row of `table` under `props`.
inline std::vector<PropensityEntry> propensity_entries(const TopicInteractionTable& table,
                                                       const PropensityModel& props) {
  std::vector<PropensityEntry> out;
  out.reserve(table.size());
  for (const auto& r : table.rows) out.push_back({r.user, r.topic, props.rho(r.user, r.topic, r.rating)});
  return out;
}

/// Every cell of a per-cell model, user-major.
inline std::vector<PropensityEntry> propensity_entries(const PropensityModel& per_cell) {
  std::vector<PropensityEntry> out;
  const auto& cells = per_cell.cells();
  const auto& users = per_cell.cell_users();
  for (Eigen::Index u = 0; u < cells.rows(); ++u) {
    for (Eigen::Index t = 0; t < cells.cols(); ++t) {
      if (std::isnan(cells(u, t))) continue;
      out.push_back({users.key(static_cast<std::size_t>(u)), static_cast<TopicId>(t), cells(u, t)});
    }
  }
  return out;
}

/// Per-cell model; cells absent from the file are unavailable.
inline PropensityModel read_propensities_tsv(std::istream& in, double rho_min = kDefaultRhoMin) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kPropensityHeader) {
    throw SchemaError("propensity file must start with '" + std::string(kPropensityHeader) + "'");
  }
  std::vector<PropensityEntry> entries;
  IdIndex users;
  TopicId max_topic = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_tabs(line);
    if (f.size() != 3) throw ParseError("expected 3 tab-separated fields", line_no);
    const auto t = detail::parse_long(f[1]);
    const auto rho = detail::parse_double(f[2]);
    if (!t || *t < 0) throw ParseError("bad topic id", line_no);
    if (!rho || !(*rho > 0.0 && *rho <= 1.0)) throw ParseError("rho must lie in (0, 1]", line_no);
    entries.push_back({std::string(f[0]), static_cast<TopicId>(*t), *rho});
    users.intern(entries.back().user);
    max_topic = std::max(max_topic, static_cast<TopicId>(*t));
  }
  Eigen::MatrixXd cells = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(users.size()), max_topic + 1,
                                                    std::numeric_limits<double>::quiet_NaN());
  for (const auto& e : entries) cells(static_cast<Eigen::Index>(*users.find(e.user)), e.topic) = e.rho;
  return PropensityModel::per_cell(std::move(users), std::move(cells), rho_min);
}

inline PropensityModel read_propensities_tsv(const std::string& path, double rho_min = kDefaultRhoMin) {
  auto in = detail::open_in(path);
  return read_propensities_tsv(in, rho_min);
}

inline void write_topics_tsv(std::ostream& out, const TopicAssignment& topics) {
  out << kTopicsHeader << '\n';
  for (std::size_t i = 0; i < topics.num_items(); ++i) {
    for (TopicId t : topics.topics_at(i)) out << topics.items().key(i) << '\t' << t << '\n';
  }
}

inline TopicAssignment read_topics_tsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kTopicsHeader) {
    throw SchemaError("topics file must start with '" + std::string(kTopicsHeader) + "'");
  }
  TopicAssignment topics;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_tabs(line);
    if (f.size() != 2) throw ParseError("expected 2 tab-separated fields", line_no);
    const auto t = detail::parse_long(f[1]);
    if (!t || *t < 0) throw ParseError("bad topic id", line_no);
    topics.assign(std::string(f[0]), static_cast<TopicId>(*t));
  }
  return topics;
}

inline TopicAssignment read_topics_tsv(const std::string& path) {
  auto in = detail::open_in(path);
  return read_topics_tsv(in);
}

// ---------------------------------------------------------------------------
// Datasets

struct DatasetStats {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_ratings = 0;
};

inline DatasetStats dataset_stats(const InteractionTable& table) {
  if (table.empty()) return {};
  const auto maps = build_index_maps(table);
  return {maps.users.size(), maps.entities.size(), table.size()};
}

/// Whitespace-separated `user item rating` lines with integer ratings 1..5.
inline InteractionTable read_yahoo_ratings(std::istream& in) {
  InteractionTable out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = detail::split_whitespace(line);
    if (f.empty()) continue;
    if (f.size() != 3) throw ParseError("expected 'user item rating'", line_no);
    const auto rating = detail::parse_double(f[2]);
    if (!rating) throw ParseError("bad rating '" + std::string(f[2]) + "'", line_no);
    if (*rating != std::floor(*rating) || !rating_in_range(*rating)) {
      throw ValidationError("line " + std::to_string(line_no) + ": rating outside {1..5}");
    }
    out.add({std::string(f[0]), std::string(f[1]), *rating});
  }
  return out;
}

struct YahooData {
  InteractionTable train;  // self-selected (MNAR)
  InteractionTable test;   // uniformly random (MCAR)
  DatasetStats train_stats;
  DatasetStats test_stats;
};

inline YahooData load_yahoo(const std::string& train_path, const std::string& test_path) {
  YahooData d;
  {
    auto in = detail::open_in(train_path);
    d.train = read_yahoo_ratings(in);
  }
  {
    auto in = detail::open_in(test_path);
    d.test = read_yahoo_ratings(in);
  }
  d.train_stats = dataset_stats(d.train);
  d.test_stats = dataset_stats(d.test);
  return d;
}

/// Whitespace-separated dense numeric matrix, one row per line.
inline Eigen::MatrixXd read_dense_matrix(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = detail::split_whitespace(line);
    if (f.empty()) continue;
    std::vector<double> row;
    for (auto tok : f) {
      const auto v = detail::parse_double(tok);
      if (!v) throw ParseError("bad number '" + std::string(tok) + "'", line_no);
      row.push_back(*v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("ragged matrix row", line_no);
    }
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

inline Eigen::MatrixXd read_dense_matrix(const std::string& path) {
  auto in = detail::open_in(path);
  return read_dense_matrix(in);
}

/// Dense user x item rating matrix to triples ("u<row>", "i<col>"); zero
/// cells are unobserved.
inline InteractionTable interactions_from_dense(const Eigen::MatrixXd& ratings) {
  InteractionTable out;
  for (Eigen::Index u = 0; u < ratings.rows(); ++u) {
    for (Eigen::Index i = 0; i < ratings.cols(); ++i) {
      const double r = ratings(u, i);
      if (r == 0.0) continue;
      if (!rating_in_range(r)) {
        throw ValidationError("rating outside [1, 5] at user " + std::to_string(u) + ", item " +
                              std::to_string(i));
      }
      out.add({"u" + std::to_string(u), "i" + std::to_string(i), r});
    }
  }
  return out;
}

/// Items belong to every feature column set to nonzero; columns no item
/// uses are dropped and the rest renumbered in column order.
inline TopicAssignment topics_from_features(const Eigen::MatrixXd& features) {
  std::vector<TopicId> dense(static_cast<std::size_t>(features.cols()), -1);
  TopicId next = 0;
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    if ((features.col(c).array() != 0.0).any()) dense[static_cast<std::size_t>(c)] = next++;
  }
  TopicAssignment topics;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
      if (features(i, c) != 0.0) topics.assign("i" + std::to_string(i), dense[static_cast<std::size_t>(c)]);
    }
  }
  return topics;
}

struct CoatData {
  InteractionTable ratings;
  ItemPropensities propensities;
  TopicAssignment topics;
  Eigen::MatrixXd covariates;  // |I| x features
  bool propensities_fitted = false;
};

inline constexpr int kCoatUsers = 290;
inline constexpr int kCoatItems = 300;

/// `propensities_path` may be empty, in which case propensities come from
/// a logistic regression of observation on the item features.
inline CoatData load_coat(const std::string& ratings_path, const std::string& propensities_path,
                          const std::string& features_path, const LogregOptions& logreg = {}) {
  const Eigen::MatrixXd ratings = read_dense_matrix(ratings_path);
  if (ratings.rows() != kCoatUsers || ratings.cols() != kCoatItems) {
    warn("Coat rating matrix is " + std::to_string(ratings.rows()) + "x" + std::to_string(ratings.cols()) +
         ", expected 290x300");
  }
  CoatData d;
  d.ratings = interactions_from_dense(ratings);
  d.covariates = read_dense_matrix(features_path);
  if (d.covariates.rows() != ratings.cols()) {
    throw ValidationError("item feature rows (" + std::to_string(d.covariates.rows()) +
                          ") do not match rating columns (" + std::to_string(ratings.cols()) + ")");
  }
  d.topics = topics_from_features(d.covariates);
  d.propensities.users = sequential_users(static_cast<std::size_t>(ratings.rows()));
  d.propensities.items = sequential_users(static_cast<std::size_t>(ratings.cols()), "i");
  if (!propensities_path.empty()) {
    d.propensities.rho = read_dense_matrix(propensities_path);
    if (d.propensities.rho.rows() != ratings.rows() || d.propensities.rho.cols() != ratings.cols()) {
      throw ValidationError("propensity matrix shape does not match the rating matrix");
    }
  } else {
    const Eigen::MatrixXd observed = (ratings.array() != 0.0).cast<double>();
    d.propensities.rho = fit_logreg_propensities(observed, d.covariates, logreg);
    d.propensities_fitted = true;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Model files

inline void save_model(std::ostream& out, const FactorModel& m) {
  out << "pe-mf v1 " << m.dim() << ' ' << m.num_users() << ' ' << m.num_topics() << '\n';
  out << format_exact(m.global_mean) << '\n';
  for (std::size_t u = 0; u < m.num_users(); ++u) {
    out << m.users.key(u) << ' ' << format_exact(m.user_bias(static_cast<Eigen::Index>(u))) << '\n';
  }
  for (Eigen::Index t = 0; t < m.topic_bias.size(); ++t) out << format_exact(m.topic_bias(t)) << '\n';
  auto rows = [&out](const Eigen::MatrixXd& mat) {
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      for (Eigen::Index c = 0; c < mat.cols(); ++c) out << (c ? " " : "") << format_exact(mat(r, c));
      out << '\n';
    }
  };
  rows(m.user_factors);
  rows(m.topic_factors);
}

inline void save_model(std::ostream& out, const ExpoMfModel& m) {
  out << "pe-expomf v1 " << m.dim() << ' ' << m.users.size() << ' ' << m.num_topics() << '\n';
  out << format_exact(m.lambda_y) << '\n';
  for (Eigen::Index t = 0; t < m.exposure_prior.size(); ++t) {
    out << (t ? " " : "") << format_exact(m.exposure_prior(t));
  }
  out << '\n';
  for (std::size_t u = 0; u < m.users.size(); ++u) {
    out << m.users.key(u);
    for (Eigen::Index c = 0; c < m.user_factors.cols(); ++c) {
      out << ' ' << format_exact(m.user_factors(static_cast<Eigen::Index>(u), c));
    }
    out << '\n';
  }
  for (Eigen::Index t = 0; t < m.topic_factors.rows(); ++t) {
    for (Eigen::Index c = 0; c < m.topic_factors.cols(); ++c) {
      out << (c ? " " : "") << format_exact(m.topic_factors(t, c));
    }
    out << '\n';
  }
}

template <class Model>
void save_model(const std::string& path, const Model& m) {
  auto out = detail::open_out(path);
  save_model(out, m);
}

using AnyModel = std::variant<FactorModel, ExpoMfModel>;

namespace detail {

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) {
    std::string text;
    std::size_t line_no = 0;
    while (std::getline(in, text)) {
      ++line_no;
      for (auto w : split_whitespace(text)) tokens_.emplace_back(std::string(w), line_no);
    }
  }
  std::string word() {
    if (next_ >= tokens_.size()) throw ParseError("unexpected end of model file", line());
    return tokens_[next_++].first;
  }
  double real() {
    const std::string w = word();
    const auto v = parse_double(w);
    if (!v) throw ParseError("bad number '" + w + "' in model file", line());
    return *v;
  }
  long integer() {
    const std::string w = word();
    const auto v = parse_long(w);
    if (!v || *v < 0) throw ParseError("bad count '" + w + "' in model file", line());
    return *v;
  }

 private:
  std::size_t line() const {
    if (tokens_.empty()) return 0;
    return tokens_[std::min(next_ == 0 ? 0 : next_ - 1, tokens_.size() - 1)].second;
  }
  std::vector<std::pair<std::string, std::size_t>> tokens_;
  std::size_t next_ = 0;
};

}  // namespace detail

inline AnyModel load_model(std::istream& in) {
  detail::TokenReader tok(in);
  const std::string kind = tok.word();
  const std::string version = tok.word();
  if (version != "v1" || (kind != "pe-mf" && kind != "pe-expomf")) {
    throw SchemaError("unknown model header: " + kind + " " + version);
  }
  const long d = tok.integer();
  const long nu = tok.integer();
  const long nt = tok.integer();
  auto read_matrix = [&tok](Eigen::MatrixXd& m, long rows, long cols) {
    m.resize(rows, cols);
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c) m(r, c) = tok.real();
  };
  if (kind == "pe-mf") {
    FactorModel m;
    m.global_mean = tok.real();
    m.user_bias.resize(nu);
    for (long u = 0; u < nu; ++u) {
      m.users.intern(tok.word());
      m.user_bias(u) = tok.real();
    }
    m.topic_bias.resize(nt);
    for (long t = 0; t < nt; ++t) m.topic_bias(t) = tok.real();
    read_matrix(m.user_factors, nu, d);
    read_matrix(m.topic_factors, nt, d);
    return m;
  }
  ExpoMfModel m;
  m.lambda_y = tok.real();
  m.exposure_prior.resize(nt);
  for (long t = 0; t < nt; ++t) m.exposure_prior(t) = tok.real();
  m.user_factors.resize(nu, d);
  for (long u = 0; u < nu; ++u) {
    m.users.intern(tok.word());
    for (long c = 0; c < d; ++c) m.user_factors(u, c) = tok.real();
  }
  read_matrix(m.topic_factors, nt, d);
  return m;
}

inline AnyModel load_model(const std::string& path) {
  auto in = detail::open_in(path);
  return load_model(in);
}

}  // namespace pebias
