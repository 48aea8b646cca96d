// Copyright 2026 The fairall-cpp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Heterogeneous tabular data: schema, CSV ingestion, standardization,
// splits, and the time-stepped candidate stream.
//
// Two row types are kept apart on purpose. `Example` is a fully observed row
// (the simulator knows its proxy label). `Record` is what a decision-maker
// sees: the label exists only when the decision was positive, which the type
// enforces at construction.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fairall/common.hpp"

namespace fairall {

enum class FeatureKind { real, count, binary, categorical };

inline std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::real: return "real";
    case FeatureKind::count: return "count";
    case FeatureKind::binary: return "binary";
    case FeatureKind::categorical: return "categorical";
  }
  return "?";
}

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::real;
  // binary: {value for 0, value for 1}; categorical: one entry per category.
  std::vector<std::string> categories;

  std::size_t width() const { return kind == FeatureKind::categorical ? categories.size() : 1; }
};

struct FeatureSchema {
  std::vector<FeatureSpec> features;
  std::string sensitive_column;
  std::string sensitive_positive;  // raw value mapped to s = +1
  std::string sensitive_negative;  // raw value mapped to s = -1
  std::string proxy_column;
  std::string proxy_positive;  // raw value mapped to y_tilde = 1
  std::string proxy_negative;

  void validate() const {
    if (sensitive_column.empty()) throw ConfigError("schema: missing sensitive column");
    if (proxy_column.empty()) throw ConfigError("schema: missing proxy column");
    for (const auto& f : features) {
      if (f.kind == FeatureKind::categorical && f.categories.size() < 2)
        throw ConfigError("schema: categorical feature '" + f.name + "' needs arity >= 2");
      if (f.kind == FeatureKind::binary && f.categories.size() != 2)
        throw ConfigError("schema: binary feature '" + f.name + "' needs exactly two values");
    }
  }

  static FeatureSchema synthetic() {
    FeatureSchema s;
    s.features = {{"lsat", FeatureKind::real, {}}, {"gpa", FeatureKind::real, {}}};
    s.sensitive_column = "s";
    s.sensitive_positive = "1";
    s.sensitive_negative = "-1";
    s.proxy_column = "y_tilde";
    s.proxy_positive = "1";
    s.proxy_negative = "0";
    return s;
  }
};

/// Column layout of the encoded feature vector.
struct FeatureLayout {
  std::vector<FeatureKind> kinds;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> widths;
  std::size_t width = 0;

  FeatureLayout() = default;
  explicit FeatureLayout(const FeatureSchema& schema) {
    for (const auto& f : schema.features) {
      kinds.push_back(f.kind);
      offsets.push_back(width);
      widths.push_back(f.width());
      width += f.width();
    }
  }
  std::size_t size() const { return kinds.size(); }
};

/// Schema sidecar, one directive per line:
///   feature <name> real|count
///   feature <name> binary <value-for-0> <value-for-1>
///   feature <name> categorical <v1> <v2> ...
///   sensitive <name> <value-for-plus1> <value-for-minus1>
///   proxy <name> <positive-value> <negative-value>
/// '#' starts a comment; values containing spaces are double-quoted.
inline FeatureSchema parse_schema(std::istream& in) {
  FeatureSchema schema;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string w; ls >> std::quoted(w);) tok.push_back(w);
    if (tok.empty()) continue;
    auto fail = [&](const std::string& why) {
      throw ParseError("schema line " + std::to_string(line_no) + ": " + why);
    };
    if (tok[0] == "feature") {
      if (tok.size() < 3) fail("feature needs a name and a kind");
      FeatureSpec f;
      f.name = tok[1];
      if (tok[2] == "real") f.kind = FeatureKind::real;
      else if (tok[2] == "count") f.kind = FeatureKind::count;
      else if (tok[2] == "binary") f.kind = FeatureKind::binary;
      else if (tok[2] == "categorical") f.kind = FeatureKind::categorical;
      else fail("unknown feature kind '" + tok[2] + "'");
      f.categories.assign(tok.begin() + 3, tok.end());
      if (f.kind == FeatureKind::binary && f.categories.empty()) f.categories = {"0", "1"};
      schema.features.push_back(std::move(f));
    } else if (tok[0] == "sensitive") {
      if (tok.size() != 4) fail("sensitive needs <name> <plus1> <minus1>");
      schema.sensitive_column = tok[1];
      schema.sensitive_positive = tok[2];
      schema.sensitive_negative = tok[3];
    } else if (tok[0] == "proxy") {
      if (tok.size() != 4) fail("proxy needs <name> <positive> <negative>");
      schema.proxy_column = tok[1];
      schema.proxy_positive = tok[2];
      schema.proxy_negative = tok[3];
    } else {
      fail("unknown directive '" + tok[0] + "'");
    }
  }
  schema.validate();
  return schema;
}

inline FeatureSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open schema file " + path);
  return parse_schema(in);
}

/// Hidden synthetic quantities, carried only for evaluation.
struct SyntheticTruth {
  int m = 0;         // ground-truth label in {0,1}
  double k = 0.0;    // hidden talent
};

/// A fully observed row.
struct Example {
  std::vector<double> x;  // encoded per schema
  int s = 1;              // +1 / -1
  int y_tilde = 0;        // proxy label, hidden from decision-makers
  std::optional<SyntheticTruth> truth;
};

/// A decision-time record. y_tilde is present iff d = 1.
class Record {
 public:
  static Record undecided(std::vector<double> x, int s, std::optional<SyntheticTruth> truth = {}) {
    check_sensitive(s);
    Record r;
    r.x_ = std::move(x);
    r.s_ = s;
    r.truth_ = truth;
    return r;
  }

  static Record decided(std::vector<double> x, int s, bool accepted, double propensity, std::optional<int> y_tilde,
                        double cost, std::optional<SyntheticTruth> truth = {}) {
    check_sensitive(s);
    if (accepted != y_tilde.has_value())
      throw ContractError("selective labels: y_tilde must be present iff d = 1");
    if (y_tilde && *y_tilde != 0 && *y_tilde != 1) throw ContractError("y_tilde must be binary");
    if (!(propensity > 0.0 && propensity <= 1.0)) throw ContractError("propensity must lie in (0,1]");
    Record r;
    r.x_ = std::move(x);
    r.s_ = s;
    r.truth_ = truth;
    r.d_ = accepted ? 1 : 0;
    r.propensity_ = clamp_probability(propensity);
    r.y_tilde_ = y_tilde;
    r.u_tilde_ = accepted ? (*y_tilde - cost) : 0.0;
    return r;
  }

  const std::vector<double>& x() const { return x_; }
  int s() const { return s_; }
  const std::optional<SyntheticTruth>& truth() const { return truth_; }
  std::optional<int> d() const { return d_; }
  bool labeled() const { return d_.value_or(0) == 1; }
  std::optional<int> y_tilde() const { return y_tilde_; }
  std::optional<double> propensity() const { return propensity_; }
  std::optional<double> u_tilde() const { return u_tilde_; }

  /// Utility outcome mapped to {0,1} (only meaningful for labeled records).
  int u_binary() const {
    if (!labeled()) throw ContractError("u_binary on unlabeled record");
    return *y_tilde_;
  }

 private:
  static void check_sensitive(int s) {
    if (s != 1 && s != -1) throw ContractError("sensitive attribute must be +1 or -1");
  }

  std::vector<double> x_;
  int s_ = 1;
  std::optional<SyntheticTruth> truth_;
  std::optional<int> d_;
  std::optional<double> propensity_;
  std::optional<int> y_tilde_;
  std::optional<double> u_tilde_;
};

struct CandidateBatch {
  int t = 0;
  std::vector<Example> candidates;
  std::string provenance;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Parses CSV text (header row first) against `schema`.
inline std::vector<Example> parse_dataset(std::istream& in, const FeatureSchema& schema) {
  schema.validate();
  std::string header_line;
  if (!std::getline(in, header_line)) throw ParseError("empty dataset: missing header row");
  const auto header = detail::split_csv_line(header_line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  auto column = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw ParseError("missing column '" + name + "'");
    return it->second;
  };
  std::vector<std::size_t> feature_cols;
  for (const auto& f : schema.features) feature_cols.push_back(column(f.name));
  const std::size_t s_col = column(schema.sensitive_column);
  const std::size_t y_col = column(schema.proxy_column);
  const FeatureLayout layout(schema);

  std::vector<Example> rows;
  std::string line;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    auto fail = [&](const std::string& why) { throw ParseError("row " + std::to_string(row_no) + ": " + why); };
    if (cells.size() != header.size()) fail("expected " + std::to_string(header.size()) + " cells");

    Example e;
    e.x.assign(layout.width, 0.0);
    for (std::size_t j = 0; j < schema.features.size(); ++j) {
      const auto& f = schema.features[j];
      const std::string& cell = cells[feature_cols[j]];
      const std::size_t off = layout.offsets[j];
      switch (f.kind) {
        case FeatureKind::real:
        case FeatureKind::count: {
          auto v = detail::parse_real(cell);
          if (!v) fail("non-numeric value '" + cell + "' in column '" + f.name + "'");
          e.x[off] = *v;
          break;
        }
        case FeatureKind::binary:
        case FeatureKind::categorical: {
          auto it = std::find(f.categories.begin(), f.categories.end(), cell);
          if (it == f.categories.end()) fail("unknown category '" + cell + "' in column '" + f.name + "'");
          const auto idx = static_cast<std::size_t>(it - f.categories.begin());
          if (f.kind == FeatureKind::binary) e.x[off] = static_cast<double>(idx);
          else e.x[off + idx] = 1.0;
          break;
        }
      }
    }
    const std::string& sv = cells[s_col];
    if (sv == schema.sensitive_positive) e.s = 1;
    else if (sv == schema.sensitive_negative) e.s = -1;
    else fail("sensitive value '" + sv + "' is neither '" + schema.sensitive_positive + "' nor '" +
              schema.sensitive_negative + "'");
    const std::string& yv = cells[y_col];
    if (yv == schema.proxy_positive) e.y_tilde = 1;
    else if (yv == schema.proxy_negative) e.y_tilde = 0;
    else fail("proxy value '" + yv + "' not recognised");
    rows.push_back(std::move(e));
  }
  return rows;
}

inline std::vector<Example> load_dataset(const std::string& path, const FeatureSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file " + path);
  return parse_dataset(in, schema);
}

/// Writes examples in the CSV format `parse_dataset` reads back (real/count
/// columns only; used for synthetic populations).
inline void write_dataset(std::ostream& out, const FeatureSchema& schema, std::span<const Example> rows) {
  const FeatureLayout layout(schema);
  for (const auto& f : schema.features) out << f.name << ',';
  out << schema.sensitive_column << ',' << schema.proxy_column << '\n';
  out.precision(17);
  for (const auto& e : rows) {
    for (std::size_t j = 0; j < schema.features.size(); ++j) {
      const auto& f = schema.features[j];
      const std::size_t off = layout.offsets[j];
      switch (f.kind) {
        case FeatureKind::real:
        case FeatureKind::count: out << e.x[off]; break;
        case FeatureKind::binary: out << f.categories[e.x[off] > 0.5 ? 1 : 0]; break;
        case FeatureKind::categorical: {
          std::size_t idx = 0;
          for (std::size_t c = 0; c < f.categories.size(); ++c)
            if (e.x[off + c] > 0.5) idx = c;
          out << f.categories[idx];
          break;
        }
      }
      out << ',';
    }
    out << (e.s == 1 ? schema.sensitive_positive : schema.sensitive_negative) << ','
        << (e.y_tilde == 1 ? schema.proxy_positive : schema.proxy_negative) << '\n';
  }
}

struct StandardizeStats {
  std::vector<double> mean;   // per encoded column; 0 for untouched columns
  std::vector<double> scale;  // per encoded column; 1 for untouched columns
  std::vector<std::string> warnings;

  void apply(Example& e) const {
    for (std::size_t c = 0; c < mean.size(); ++c) e.x[c] = (e.x[c] - mean[c]) / scale[c];
  }
  void apply(std::vector<Example>& rows) const {
    for (auto& e : rows) apply(e);
  }
};

/// Fits population mean/std of real and count columns on `train`.
inline StandardizeStats standardize_fit(const FeatureSchema& schema, std::span<const Example> train) {
  if (train.empty()) throw ContractError("standardize: empty training split");
  const FeatureLayout layout(schema);
  StandardizeStats st;
  st.mean.assign(layout.width, 0.0);
  st.scale.assign(layout.width, 1.0);
  for (std::size_t j = 0; j < layout.size(); ++j) {
    if (layout.kinds[j] != FeatureKind::real && layout.kinds[j] != FeatureKind::count) continue;
    const std::size_t c = layout.offsets[j];
    double sum = 0.0;
    for (const auto& e : train) sum += e.x[c];
    const double mu = sum / static_cast<double>(train.size());
    double ss = 0.0;
    for (const auto& e : train) ss += (e.x[c] - mu) * (e.x[c] - mu);
    const double sd = std::sqrt(ss / static_cast<double>(train.size()));
    st.mean[c] = mu;
    if (sd > 0.0) {
      st.scale[c] = sd;
    } else {
      st.warnings.push_back("feature '" + schema.features[j].name + "' has zero variance; scaled by 1");
    }
  }
  return st;
}

/// Fits on `train` and applies the same transform to `train` and every
/// other split.
inline StandardizeStats standardize_fit_apply(const FeatureSchema& schema, std::vector<Example>& train,
                                              std::initializer_list<std::vector<Example>*> others = {}) {
  StandardizeStats st = standardize_fit(schema, train);
  for (const auto& w : st.warnings) std::cerr << "warning: " << w << '\n';
  st.apply(train);
  for (auto* o : others) st.apply(*o);
  return st;
}

/// Seeded shuffle followed by contiguous cuts. `counts` must sum to at most
/// rows.size(); the last part receives any remainder.
inline std::vector<std::vector<Example>> split_by_counts(std::vector<Example> rows, std::span<const std::size_t> counts,
                                                        std::uint64_t seed) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total > rows.size()) throw ConfigError("split: requested more rows than available");
  Rng rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  std::vector<std::vector<Example>> parts;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const std::size_t end = (i + 1 == counts.size()) ? rows.size() : pos + counts[i];
    parts.emplace_back(std::make_move_iterator(rows.begin() + static_cast<std::ptrdiff_t>(pos)),
                       std::make_move_iterator(rows.begin() + static_cast<std::ptrdiff_t>(end)));
    pos = end;
  }
  return parts;
}

inline std::vector<std::vector<Example>> split_by_fractions(std::vector<Example> rows, std::span<const double> fractions,
                                                           std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f < 0) throw ConfigError("split: negative fraction");
    sum += f;
  }
  if (sum <= 0) throw ConfigError("split: fractions sum to zero");
  std::vector<std::size_t> counts;
  for (double f : fractions)
    counts.push_back(static_cast<std::size_t>(std::floor(f / sum * static_cast<double>(rows.size()))));
  return split_by_counts(std::move(rows), counts, seed);
}

/// Draws from a pool without replacement, re-permuting when exhausted.
class StreamSampler {
 public:
  StreamSampler(std::span<const Example> pool, std::uint64_t seed) : pool_(pool), rng_(seed) {
    if (pool_.empty()) throw ConfigError("stream: empty pool");
    order_.resize(pool_.size());
    reshuffle();
  }

  std::vector<Example> next(std::size_t n) {
    std::vector<Example> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(pool_[order_[pos_++]]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }

  std::span<const Example> pool_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

inline std::vector<CandidateBatch> make_stream(StreamSampler& sampler, std::size_t steps, std::size_t batch_size,
                                               const std::string& provenance = "stream") {
  if (steps == 0 || batch_size == 0) throw ConfigError("stream: steps and batch size must be >= 1");
  std::vector<CandidateBatch> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t)
    out.push_back({static_cast<int>(t), sampler.next(batch_size), provenance});
  return out;
}

inline std::vector<CandidateBatch> make_stream(std::span<const Example> pool, std::size_t steps, std::size_t batch_size,
                                               std::uint64_t seed) {
  StreamSampler sampler(pool, seed);
  return make_stream(sampler, steps, batch_size, "stream:" + std::to_string(seed));
}

}  // namespace fairall
