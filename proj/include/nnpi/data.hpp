#pragma once

// Dataset ingestion, min-max normalization, k-fold splitting, subject
// profiles and the synthetic ground-truth generator.

#include "nnpi/core.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace nnpi {

struct Dataset {
  Matrix features;  // n x d
  Vector labels;    // n
  std::vector<std::string> subject_ids;
  std::vector<std::string> feature_names;

  std::size_t rows() const { return static_cast<std::size_t>(labels.size()); }
  std::size_t cols() const { return static_cast<std::size_t>(features.cols()); }

  double label_range() const {
    if (labels.size() == 0) throw EmptyInputError("label_range of empty dataset");
    return labels.maxCoeff() - labels.minCoeff();
  }

  void validate() const {
    if (labels.size() == 0) throw EmptyInputError("dataset has no rows");
    if (features.rows() != labels.size() ||
        subject_ids.size() != static_cast<std::size_t>(labels.size()))
      throw ShapeError("features, labels and subject ids must have equal row count");
    if (!feature_names.empty() && feature_names.size() != cols())
      throw ShapeError("feature name count does not match feature columns");
  }

  Dataset subset(const Index& rows_to_keep) const {
    Dataset out;
    out.features = take_rows(features, rows_to_keep);
    out.labels = take(labels, rows_to_keep);
    out.subject_ids.reserve(rows_to_keep.size());
    for (auto r : rows_to_keep) out.subject_ids.push_back(subject_ids[r]);
    out.feature_names = feature_names;
    return out;
  }

  /// Distinct subject ids in order of first appearance.
  std::vector<std::string> subjects() const {
    std::vector<std::string> out;
    std::unordered_map<std::string, bool> seen;
    for (const auto& s : subject_ids)
      if (seen.emplace(s, true).second) out.push_back(s);
    return out;
  }

  /// Row indices belonging to each subject, keyed in first-appearance order.
  std::vector<std::pair<std::string, Index>> rows_by_subject() const {
    std::vector<std::pair<std::string, Index>> out;
    std::unordered_map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < subject_ids.size(); ++i) {
      auto [it, fresh] = slot.emplace(subject_ids[i], out.size());
      if (fresh) out.push_back({subject_ids[i], {}});
      out[it->second].second.push_back(i);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Delimited text I/O

struct Schema {
  std::string subject_column = "subject";
  std::string label_column = "label";
  /// Empty means every column that is not subject or label.
  std::vector<std::string> feature_columns;
  char delimiter = ',';
};

namespace detail {

inline std::vector<std::string_view> split_line(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r'))
      f.remove_suffix(1);
  }
  return out;
}

inline bool parse_number(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

}  // namespace detail

/// Reads a header-labelled delimited file. Rows are kept in file order and
/// no normalization is applied. Parse errors carry the 1-based data row.
inline Dataset load_dataset(std::istream& in, const Schema& schema = {}) {
  std::string line;
  std::size_t line_no = 0;
  auto next_nonblank = [&](std::string& l) {
    while (std::getline(in, l)) {
      ++line_no;
      if (l.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_nonblank(line)) throw EmptyInputError("input has no header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM

  const auto header = detail::split_line(line, schema.delimiter);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[std::string(header[i])] = i;

  auto find = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw SchemaError("missing required column '" + name + "'");
    return it->second;
  };
  const std::size_t subj_col = find(schema.subject_column);
  const std::size_t label_col = find(schema.label_column);

  std::vector<std::size_t> feat_cols;
  std::vector<std::string> feat_names;
  if (schema.feature_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i == subj_col || i == label_col) continue;
      feat_cols.push_back(i);
      feat_names.emplace_back(header[i]);
    }
  } else {
    for (const auto& name : schema.feature_columns) {
      feat_cols.push_back(find(name));
      feat_names.push_back(name);
    }
  }
  if (feat_cols.empty()) throw SchemaError("header declares no feature columns");

  std::vector<double> values;
  std::vector<double> labels;
  std::vector<std::string> subjects;
  std::size_t row = 0;
  while (next_nonblank(line)) {
    ++row;
    const auto fields = detail::split_line(line, schema.delimiter);
    if (fields.size() != header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " +
                           std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       row);
    double v = 0.0;
    if (!detail::parse_number(fields[label_col], v))
      throw ParseError("row " + std::to_string(row) + ": non-numeric label '" +
                           std::string(fields[label_col]) + "'",
                       row);
    labels.push_back(v);
    for (auto c : feat_cols) {
      if (!detail::parse_number(fields[c], v))
        throw ParseError("row " + std::to_string(row) + ": non-numeric value '" +
                             std::string(fields[c]) + "' in column '" +
                             std::string(header[c]) + "'",
                         row);
      values.push_back(v);
    }
    subjects.emplace_back(fields[subj_col]);
  }
  if (labels.empty()) throw EmptyInputError("input has a header but no data rows");

  Dataset ds;
  const auto n = static_cast<Eigen::Index>(labels.size());
  const auto d = static_cast<Eigen::Index>(feat_cols.size());
  ds.features = Eigen::Map<Matrix>(values.data(), n, d);
  ds.labels = Eigen::Map<Vector>(labels.data(), n);
  ds.subject_ids = std::move(subjects);
  ds.feature_names = std::move(feat_names);
  return ds;
}

inline Dataset load_dataset(const std::string& path, const Schema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return load_dataset(in, schema);
}

inline std::vector<std::string> default_feature_names(std::size_t d) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < d; ++j) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "f%02zu", j + 1);
    names.emplace_back(buf);
  }
  return names;
}

inline void save_dataset(std::ostream& out, const Dataset& ds, char delim = ',') {
  ds.validate();
  const auto names = ds.feature_names.empty() ? default_feature_names(ds.cols()) : ds.feature_names;
  out << "subject" << delim << "label";
  for (const auto& n : names) out << delim << n;
  out << '\n';
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    out << ds.subject_ids[i] << delim << format_double(ds.labels[i]);
    for (std::size_t j = 0; j < ds.cols(); ++j) out << delim << format_double(ds.features(i, j));
    out << '\n';
  }
}

inline void save_dataset(const std::string& path, const Dataset& ds, char delim = ',') {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  save_dataset(out, ds, delim);
}

// ---------------------------------------------------------------------------
// Min-max normalization

struct NormParams {
  Vector min;
  Vector max;

  /// Maps columns to (x - min) / (max - min); constant columns map to 0.
  Matrix apply(const Matrix& x) const {
    if (x.cols() != min.size()) throw ShapeError("normalization column count mismatch");
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double span = max[j] - min[j];
      if (span > 0.0)
        out.col(j) = (x.col(j).array() - min[j]) / span;
      else
        out.col(j).setZero();
    }
    return out;
  }

  Dataset apply(const Dataset& ds) const {
    Dataset out = ds;
    out.features = apply(ds.features);
    return out;
  }

  nlohmann::json to_json() const {
    return {{"format", "nnpi-norm"},
            {"version", 1},
            {"min", std::vector<double>(min.data(), min.data() + min.size())},
            {"max", std::vector<double>(max.data(), max.data() + max.size())}};
  }

  static NormParams from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "nnpi-norm") throw SchemaError("not a normalization file");
    auto lo = j.at("min").get<std::vector<double>>();
    auto hi = j.at("max").get<std::vector<double>>();
    if (lo.size() != hi.size()) throw SchemaError("min/max length mismatch");
    NormParams p;
    p.min = Eigen::Map<Vector>(lo.data(), static_cast<Eigen::Index>(lo.size()));
    p.max = Eigen::Map<Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()));
    for (Eigen::Index i = 0; i < p.min.size(); ++i)
      if (p.min[i] > p.max[i]) throw SchemaError("normalization min exceeds max");
    return p;
  }
};

struct Normalized {
  Dataset data;
  NormParams params;
  std::vector<std::string> warnings;
};

inline NormParams fit_minmax(const Matrix& x, std::vector<std::string>* warnings = nullptr) {
  if (x.rows() == 0) throw EmptyInputError("cannot normalize an empty matrix");
  NormParams p;
  p.min = x.colwise().minCoeff().transpose();
  p.max = x.colwise().maxCoeff().transpose();
  if (warnings)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (p.max[j] == p.min[j])
        warnings->push_back("column " + std::to_string(j) + " is constant; mapped to 0");
  return p;
}

inline Normalized minmax_normalize(const Dataset& ds) {
  ds.validate();
  Normalized out;
  out.params = fit_minmax(ds.features, &out.warnings);
  out.data = out.params.apply(ds);
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation folds

struct Fold {
  Index train;
  Index test;
};

/// Seeded shuffle, then round-robin dealing into k test folds. Train sets are
/// the complements, in ascending index order.
inline std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold requires k >= 2");
  if (k > n) throw ConfigError("k-fold requires k <= n (k=" + std::to_string(k) +
                               ", n=" + std::to_string(n) + ")");
  Index order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> fold_of(n);
  for (std::size_t pos = 0; pos < n; ++pos) fold_of[order[pos]] = pos % k;

  std::vector<Fold> folds(k);
  for (std::size_t pos = 0; pos < n; ++pos) folds[pos % k].test.push_back(order[pos]);
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(folds[f].test.begin(), folds[f].test.end());
    folds[f].train.reserve(n - folds[f].test.size());
    for (std::size_t i = 0; i < n; ++i)
      if (fold_of[i] != f) folds[f].train.push_back(i);
  }
  return folds;
}

inline std::vector<Fold> kfold_split(const Dataset& ds, std::size_t k, std::uint64_t seed) {
  return kfold_split(ds.rows(), k, seed);
}

// ---------------------------------------------------------------------------
// Subject profiles

/// Index of the level nearest to `y`; ties resolve to the lower level.
inline std::size_t nearest_level(double y, const std::vector<double>& levels) {
  std::size_t best = 0;
  double best_d = std::abs(y - levels[0]);
  for (std::size_t l = 1; l < levels.size(); ++l) {
    const double d = std::abs(y - levels[l]);
    if (d < best_d) {
      best_d = d;
      best = l;
    }
  }
  return best;
}

struct SubjectProfile {
  std::string subject_id;
  /// Entry j * levels + l is the mean of feature j over rows at level l.
  std::vector<double> values;
};

struct ProfileSet {
  std::vector<SubjectProfile> profiles;
  std::vector<std::string> warnings;
};

/// Builds one profile per subject (first-appearance order). Labels are binned
/// to the nearest level; missing (subject, level) cells take the subject's
/// overall feature mean.
inline ProfileSet subject_profiles(const Dataset& ds, const std::vector<double>& levels) {
  ds.validate();
  if (levels.empty()) throw ConfigError("profile levels must be nonempty");
  if (!std::is_sorted(levels.begin(), levels.end()) ||
      std::adjacent_find(levels.begin(), levels.end()) != levels.end())
    throw ConfigError("profile levels must be sorted and distinct");

  const std::size_t d = ds.cols();
  const std::size_t L = levels.size();
  ProfileSet out;
  for (const auto& [id, rows] : ds.rows_by_subject()) {
    std::vector<double> sums(d * L, 0.0);
    std::vector<std::size_t> counts(L, 0);
    Vector overall = Vector::Zero(static_cast<Eigen::Index>(d));
    for (auto r : rows) {
      const std::size_t l = nearest_level(ds.labels[r], levels);
      ++counts[l];
      for (std::size_t j = 0; j < d; ++j) sums[j * L + l] += ds.features(r, j);
      overall += ds.features.row(r).transpose();
    }
    overall /= static_cast<double>(rows.size());

    SubjectProfile p{id, std::vector<double>(d * L)};
    for (std::size_t l = 0; l < L; ++l) {
      if (counts[l] == 0)
        out.warnings.push_back("subject " + id + " has no rows at level " +
                               format_double(levels[l]) + "; imputed from overall mean");
      for (std::size_t j = 0; j < d; ++j)
        p.values[j * L + l] = counts[l] ? sums[j * L + l] / static_cast<double>(counts[l])
                                        : overall[static_cast<Eigen::Index>(j)];
    }
    out.profiles.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

enum class NoiseKind { homoscedastic, heteroscedastic };

/// sigma(x) = sigma0 (homoscedastic) or sigma0 + sigma1 * x_0 (heteroscedastic).
struct NoiseModel {
  NoiseKind kind = NoiseKind::heteroscedastic;
  double sigma0 = 0.1;
  double sigma1 = 0.4;

  double sigma(double x0) const {
    return kind == NoiseKind::homoscedastic ? sigma0 : sigma0 + sigma1 * x0;
  }
};

struct SynthConfig {
  std::size_t n = 2000;
  std::size_t d = 22;
  std::size_t subjects = 20;
  std::size_t clusters = 4;
  NoiseModel noise;
  /// Half-width of the per-row jitter on the cluster-tag features.
  double tag_jitter = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    if (d < 1) throw ConfigError("synth: d must be >= 1");
    if (clusters < 1) throw ConfigError("synth: clusters must be >= 1");
    if (subjects < clusters) throw ConfigError("synth: subjects must be >= clusters");
    if (n < subjects) throw ConfigError("synth: n must be >= subjects");
    if (noise.sigma0 < 0.0 || noise.sigma1 < 0.0) throw ConfigError("synth: negative noise");
    if (tag_jitter < 0.0) throw ConfigError("synth: negative tag jitter");
  }
};

/// Noise-free response of cluster c at signal feature x0 in [0, 1]. Values
/// stay inside [0.5, 3.5] so noisy labels live on a 0-4 scale.
inline double synth_mean(std::size_t cluster, double x0) {
  constexpr double two_pi = 6.283185307179586;
  switch (cluster % 4) {
    case 0: return 0.5 + 3.0 * x0;
    case 1: return 3.5 - 3.0 * x0;
    case 2: return 2.0 + 1.5 * std::sin(two_pi * x0);
    default: return 0.5 + 3.0 * x0 * x0;
  }
}

/// Mean of tag feature j (j >= 1) for cluster c; distinct across clusters.
inline double synth_tag_mean(std::size_t cluster, std::size_t j, std::size_t clusters) {
  if (clusters <= 1) return 0.5;
  const auto slot = static_cast<double>((cluster + j - 1) % clusters);
  return 0.3 + 0.4 * slot / static_cast<double>(clusters - 1);
}

inline std::size_t synth_subject_of_row(const SynthConfig& cfg, std::size_t row) {
  return row * cfg.subjects / cfg.n;
}

inline std::size_t synth_cluster_of_subject(const SynthConfig& cfg, std::size_t subject) {
  return subject % cfg.clusters;
}

inline std::string synth_subject_id(std::size_t subject) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%03zu", subject);
  return buf;
}

/// Rows are dealt to subjects in contiguous blocks, subjects to clusters
/// round-robin. Feature 0 drives the response; features 1.. carry a weak
/// per-row cluster tag that is clear only after averaging over a subject.
inline Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(cfg.n), static_cast<Eigen::Index>(cfg.d));
  ds.labels.resize(static_cast<Eigen::Index>(cfg.n));
  ds.feature_names = default_feature_names(cfg.d);
  ds.subject_ids.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const std::size_t subject = synth_subject_of_row(cfg, i);
    const std::size_t cluster = synth_cluster_of_subject(cfg, subject);
    const auto r = static_cast<Eigen::Index>(i);
    const double x0 = unit(rng);
    ds.features(r, 0) = x0;
    for (std::size_t j = 1; j < cfg.d; ++j)
      ds.features(r, static_cast<Eigen::Index>(j)) =
          synth_tag_mean(cluster, j, cfg.clusters) + cfg.tag_jitter * (2.0 * unit(rng) - 1.0);
    ds.labels[r] = synth_mean(cluster, x0) + cfg.noise.sigma(x0) * gauss(rng);
    ds.subject_ids.push_back(synth_subject_id(subject));
  }
  return ds;
}

}  // namespace nnpi
