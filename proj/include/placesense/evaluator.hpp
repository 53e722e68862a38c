#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "placesense/domain.hpp"
#include "placesense/feature_matrix.hpp"
#include "placesense/learner.hpp"
#include "placesense/parallel.hpp"

namespace placesense {

// ---------------------------------------------------------------------------
// AUC, Mann-Whitney form with half credit for ties, computed through average
// ranks in O(n log n).
// ---------------------------------------------------------------------------
inline double auc(const std::vector<double>& scores, const std::vector<char>& labels) {
  require(scores.size() == labels.size(), "scores and labels must be aligned");
  double n_pos = 0, n_neg = 0;
  for (char y : labels) (y ? n_pos : n_neg) += 1;
  require(n_pos >= 1 && n_neg >= 1, "degenerate labels: need both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum_pos += avg_rank;
    i = j;
  }
  return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

// ---------------------------------------------------------------------------
// Stratified k-fold cross-validation at the place level. Per fold, feature
// selection and standardization are fit on the training side only.
// ---------------------------------------------------------------------------

struct EvalConfig {
  int k_folds = 10;
  int select_k = 10000;
  int mi_bins = 8;
  TrainConfig train;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct EvalReport {
  std::string attribute_name;
  std::string source;  // steps | embedding | combined | custom
  std::vector<double> fold_aucs;
  double mean_auc = 0;
  int n_pos = 0, n_neg = 0;
};

// Per-fold details handed to an optional observer; lets tests verify that
// fold-local statistics really differ from global ones (no leakage).
struct FoldInfo {
  int fold = -1;
  std::vector<std::string> selected;  // features used by this fold's model
  std::vector<double> train_mean;     // standardization means, model order
  double fold_auc = 0;
};

using FoldObserver = std::function<void(const FoldInfo&)>;

// Stratified fold ids for the labeled rows: each class is shuffled
// independently, then dealt round-robin, so per-fold class counts differ from
// a perfect split by at most one.
inline std::vector<int> stratified_folds(const LabeledRows& data, int k,
                                         std::uint64_t seed,
                                         const std::string& attribute_name) {
  require(k >= 2, "k_folds must be >= 2");
  require(data.n_pos >= k && data.n_neg >= k,
          "too few examples for stratified ", k, "-fold cross-validation (",
          data.n_pos, " positives, ", data.n_neg, " negatives)");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < data.y.size(); ++i)
    (data.y[i] ? pos : neg).push_back(i);
  auto rng_pos = make_rng(seed, concat("evaluator.folds/", attribute_name, "/pos"));
  auto rng_neg = make_rng(seed, concat("evaluator.folds/", attribute_name, "/neg"));
  std::shuffle(pos.begin(), pos.end(), rng_pos);
  std::shuffle(neg.begin(), neg.end(), rng_neg);
  std::vector<int> fold(data.y.size(), -1);
  for (std::size_t i = 0; i < pos.size(); ++i) fold[pos[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < neg.size(); ++i) fold[neg[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fold;
}

// Selection ranks only non-embedding columns; embedding columns always ride
// along unselected.
inline std::vector<std::string> fold_feature_set(const FeatureMatrix& matrix,
                                                 const std::string& attribute_name,
                                                 const LabeledRows& train,
                                                 const EvalConfig& config) {
  std::vector<std::string> names;
  bool any_selectable = false;
  for (int c = 0; c < matrix.n_cols(); ++c)
    if (matrix.column(c).group != FeatureGroup::embedding) any_selectable = true;
  if (any_selectable) {
    // filter_columns keeps rows intact, so train's row indices stay valid
    FeatureMatrix selectable = matrix.filter_columns(
        [](const FeatureDef& d) { return d.group != FeatureGroup::embedding; });
    SelectionReport sel = select_features(selectable, attribute_name, train,
                                          config.select_k, config.mi_bins);
    names = sel.kept_names();
  }
  for (int c = 0; c < matrix.n_cols(); ++c)
    if (matrix.column(c).group == FeatureGroup::embedding)
      names.push_back(matrix.column(c).name);
  return names;
}

inline EvalReport cross_validate_with_folds(const FeatureMatrix& matrix,
                                            const std::string& attribute_name,
                                            const LabeledRows& data,
                                            const std::vector<int>& fold_ids,
                                            const EvalConfig& config,
                                            const std::string& source_tag,
                                            const FoldObserver& observer = {}) {
  EvalReport report;
  report.attribute_name = attribute_name;
  report.source = source_tag;
  report.n_pos = data.n_pos;
  report.n_neg = data.n_neg;
  report.fold_aucs.assign(static_cast<std::size_t>(config.k_folds), 0.0);

  std::vector<FoldInfo> infos(static_cast<std::size_t>(config.k_folds));
  parallel_for(static_cast<std::size_t>(config.k_folds), config.workers,
               [&](std::size_t f) {
    LabeledRows train_rows, test_rows;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
      LabeledRows& side = fold_ids[i] == static_cast<int>(f) ? test_rows : train_rows;
      side.rows.push_back(data.rows[i]);
      side.y.push_back(data.y[i]);
      (data.y[i] ? side.n_pos : side.n_neg) += 1;
    }
    const std::vector<std::string> features =
        fold_feature_set(matrix, attribute_name, train_rows, config);
    TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, concat("evaluator.train/", attribute_name), f);
    const LinearModel model = train(matrix, attribute_name, train_rows, features, tc);

    // score the held-out rows
    double base = model.bias;
    for (std::size_t j = 0; j < model.weights.size(); ++j)
      base -= model.weights[j] * model.mean[j] / model.stdev[j];
    std::vector<double> scores;
    scores.reserve(test_rows.rows.size());
    std::vector<double> per_col(static_cast<std::size_t>(matrix.n_cols()), 0.0);
    std::vector<char> in_model(static_cast<std::size_t>(matrix.n_cols()), 0);
    for (std::size_t j = 0; j < model.feature_names.size(); ++j) {
      const int c = matrix.find_column(model.feature_names[j]);
      per_col[static_cast<std::size_t>(c)] = model.weights[j] / model.stdev[j];
      in_model[static_cast<std::size_t>(c)] = 1;
    }
    for (int r : test_rows.rows) {
      double s = base;
      for (const auto& [c, val] : matrix.row(r))
        if (in_model[static_cast<std::size_t>(c)])
          s += per_col[static_cast<std::size_t>(c)] * val;
      scores.push_back(s);
    }
    const double fold_auc = auc(scores, test_rows.y);
    report.fold_aucs[f] = fold_auc;
    infos[f] = FoldInfo{static_cast<int>(f), model.feature_names, model.mean, fold_auc};
  });
  if (observer)
    for (const FoldInfo& info : infos) observer(info);
  report.mean_auc = std::accumulate(report.fold_aucs.begin(), report.fold_aucs.end(), 0.0) /
                    static_cast<double>(config.k_folds);
  return report;
}

inline EvalReport cross_validate(const FeatureMatrix& matrix,
                                 const std::string& attribute_name,
                                 const LabeledRows& data, const EvalConfig& config,
                                 const std::string& source_tag = "custom",
                                 const FoldObserver& observer = {}) {
  const std::vector<int> folds =
      stratified_folds(data, config.k_folds, config.seed, attribute_name);
  return cross_validate_with_folds(matrix, attribute_name, data, folds, config,
                                   source_tag, observer);
}

// ---------------------------------------------------------------------------
// Ablation: cross-validate each feature group's columns in isolation with the
// same fold assignment, plus the full model.
// ---------------------------------------------------------------------------

struct AblationReport {
  std::string attribute_name;
  std::vector<std::pair<std::string, double>> group_aucs;  // group -> mean AUC
  double full_auc = 0;
};

inline AblationReport ablate(const FeatureMatrix& matrix,
                             const std::string& attribute_name,
                             const LabeledRows& data, const EvalConfig& config,
                             bool merge_transitions = false) {
  const std::vector<int> folds =
      stratified_folds(data, config.k_folds, config.seed, attribute_name);
  AblationReport report;
  report.attribute_name = attribute_name;
  report.full_auc = cross_validate_with_folds(matrix, attribute_name, data, folds,
                                              config, "full")
                        .mean_auc;

  std::vector<std::pair<std::string, std::vector<FeatureGroup>>> groups;
  groups.emplace_back("duration", std::vector<FeatureGroup>{FeatureGroup::duration});
  groups.emplace_back("arrival", std::vector<FeatureGroup>{FeatureGroup::arrival});
  groups.emplace_back("occupancy", std::vector<FeatureGroup>{FeatureGroup::occupancy});
  if (merge_transitions) {
    groups.emplace_back("transition",
                        std::vector<FeatureGroup>{FeatureGroup::transition_prev,
                                                  FeatureGroup::transition_next});
  } else {
    groups.emplace_back("transition_prev",
                        std::vector<FeatureGroup>{FeatureGroup::transition_prev});
    groups.emplace_back("transition_next",
                        std::vector<FeatureGroup>{FeatureGroup::transition_next});
  }
  groups.emplace_back("embedding", std::vector<FeatureGroup>{FeatureGroup::embedding});

  for (const auto& [label, members] : groups) {
    FeatureMatrix sub = matrix.filter_columns([&](const FeatureDef& d) {
      return std::find(members.begin(), members.end(), d.group) != members.end();
    });
    if (sub.n_cols() == 0) continue;  // absent group: reported as absent
    const EvalReport r = cross_validate_with_folds(sub, attribute_name, data, folds,
                                                   config, label);
    report.group_aucs.emplace_back(label, r.mean_auc);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Coverage accounting and feature-source combination
// ---------------------------------------------------------------------------

struct CoverageReport {
  int total_places = 0;
  std::map<std::string, int> covered;  // source -> count

  double fraction(const std::string& source) const {
    auto it = covered.find(source);
    require(it != covered.end(), "unknown coverage source '", source, "'");
    return total_places > 0 ? static_cast<double>(it->second) / total_places : 0.0;
  }

  // (cov_b - cov_a) / cov_a
  double relative_gain(const std::string& a, const std::string& b) const {
    auto ia = covered.find(a), ib = covered.find(b);
    require(ia != covered.end() && ib != covered.end(),
            "unknown coverage source in relative_gain");
    require(ia->second > 0, "relative gain undefined: source '", a, "' covers nothing");
    return static_cast<double>(ib->second - ia->second) / ia->second;
  }
};

inline CoverageReport coverage(int total_places,
                               const std::map<std::string, std::set<std::string>>& by_source) {
  require(total_places >= 0, "total_places must be non-negative");
  CoverageReport report;
  report.total_places = total_places;
  for (const auto& [source, ids] : by_source) {
    require(static_cast<int>(ids.size()) <= total_places, "source '", source,
            "' covers more places than exist");
    report.covered[source] = static_cast<int>(ids.size());
  }
  return report;
}

struct CombineResult {
  FeatureMatrix matrix;  // rows = intersection, columns = a's then b's
  int dropped_a = 0;     // rows of a outside the intersection
  int dropped_b = 0;
};

inline CombineResult combine_sources(const FeatureMatrix& a, const FeatureMatrix& b) {
  for (const FeatureDef& col : b.columns())
    require(a.find_column(col.name) < 0, "overlapping feature name in combination: '",
            col.name, "'");
  CombineResult out;
  for (const FeatureDef& col : a.columns()) out.matrix.add_column(col.name, col.group);
  const int b_offset = a.n_cols();
  for (const FeatureDef& col : b.columns()) out.matrix.add_column(col.name, col.group);

  int ia = 0, ib = 0;
  while (ia < a.n_rows() && ib < b.n_rows()) {
    const std::string& ra = a.row_ids()[static_cast<std::size_t>(ia)];
    const std::string& rb = b.row_ids()[static_cast<std::size_t>(ib)];
    if (ra < rb) {
      ++ia;
      ++out.dropped_a;
    } else if (rb < ra) {
      ++ib;
      ++out.dropped_b;
    } else {
      std::vector<FeatureMatrix::Entry> entries;
      for (const auto& [c, v] : a.row(ia)) entries.emplace_back(c, v);
      for (const auto& [c, v] : b.row(ib)) entries.emplace_back(c + b_offset, v);
      out.matrix.add_row(ra, std::move(entries));
      ++ia;
      ++ib;
    }
  }
  out.dropped_a += a.n_rows() - ia;
  out.dropped_b += b.n_rows() - ib;
  return out;
}

// ---------------------------------------------------------------------------
// Macro-average over attribute reports
// ---------------------------------------------------------------------------
inline double macro_average(const std::vector<double>& mean_aucs) {
  require(!mean_aucs.empty(), "macro_average of an empty list");
  return std::accumulate(mean_aucs.begin(), mean_aucs.end(), 0.0) /
         static_cast<double>(mean_aucs.size());
}

inline double macro_average(const std::vector<EvalReport>& reports) {
  require(!reports.empty(), "macro_average of an empty list");
  double total = 0;
  for (const EvalReport& r : reports) total += r.mean_auc;
  return total / static_cast<double>(reports.size());
}

// ---------------------------------------------------------------------------
// Per-class distribution exports for the qualitative study
// ---------------------------------------------------------------------------

enum class DistKind { duration, day_of_week, hour_of_day, hour_of_week };

inline const char* dist_tag(DistKind k) {
  switch (k) {
    case DistKind::duration: return "duration";
    case DistKind::day_of_week: return "day_of_week";
    case DistKind::hour_of_day: return "hour_of_day";
    case DistKind::hour_of_week: return "hour_of_week";
  }
  fail("unknown distribution kind");
}

inline DistKind dist_from_tag(std::string_view tag) {
  for (int k = 0; k <= 3; ++k)
    if (tag == dist_tag(static_cast<DistKind>(k))) return static_cast<DistKind>(k);
  fail("unknown distribution kind: '", std::string(tag), "'");
}

struct DistRow {
  std::string bin;
  double positive_fraction = 0;
  double negative_fraction = 0;
};

// Normalized per-class histograms over every visit to a labeled place.
inline std::vector<DistRow> export_distribution(const VisitLog& log,
                                                const LabelTable& labels,
                                                DistKind kind,
                                                const std::vector<double>& duration_edges,
                                                std::int64_t utc_offset_seconds) {
  int n_bins;
  switch (kind) {
    case DistKind::duration: n_bins = static_cast<int>(duration_edges.size()) + 1; break;
    case DistKind::day_of_week: n_bins = 7; break;
    case DistKind::hour_of_day: n_bins = 24; break;
    case DistKind::hour_of_week: n_bins = kHoursPerWeek; break;
  }
  std::vector<double> hist[2] = {std::vector<double>(static_cast<std::size_t>(n_bins), 0.0),
                                 std::vector<double>(static_cast<std::size_t>(n_bins), 0.0)};
  double totals[2] = {0, 0};
  for (const VisitEvent& ev : log.events()) {
    auto it = labels.entries.find(ev.place);
    if (it == labels.entries.end()) continue;
    const int side = it->second ? 1 : 0;
    int bin;
    switch (kind) {
      case DistKind::duration:
        bin = static_cast<int>(std::upper_bound(duration_edges.begin(),
                                                duration_edges.end(),
                                                ev.duration_min) -
                               duration_edges.begin());
        break;
      case DistKind::day_of_week:
        bin = day_of_week(ev.arrival, utc_offset_seconds);
        break;
      case DistKind::hour_of_day:
        bin = hour_of_week(ev.arrival, utc_offset_seconds) % 24;
        break;
      case DistKind::hour_of_week:
        bin = hour_of_week(ev.arrival, utc_offset_seconds);
        break;
    }
    hist[side][static_cast<std::size_t>(bin)] += 1.0;
    totals[side] += 1.0;
  }
  require(totals[1] > 0, "empty class: positive (attribute '", labels.attribute_name,
          "' has no visits to positive places)");
  require(totals[0] > 0, "empty class: negative (attribute '", labels.attribute_name,
          "' has no visits to negative places)");

  std::vector<DistRow> rows;
  rows.reserve(static_cast<std::size_t>(n_bins));
  for (int b = 0; b < n_bins; ++b) {
    DistRow row;
    switch (kind) {
      case DistKind::duration: {
        const int n_edges = static_cast<int>(duration_edges.size());
        if (b == 0)
          row.bin = concat("lt", fmt_double(duration_edges[0]));
        else if (b == n_edges)
          row.bin = concat("ge", fmt_double(duration_edges[static_cast<std::size_t>(n_edges) - 1]));
        else
          row.bin = concat(fmt_double(duration_edges[static_cast<std::size_t>(b) - 1]), "to",
                           fmt_double(duration_edges[static_cast<std::size_t>(b)]));
        break;
      }
      case DistKind::day_of_week:
        row.bin = day_name(b);
        break;
      case DistKind::hour_of_day:
        row.bin = concat(b < 10 ? "0" : "", b);
        break;
      case DistKind::hour_of_week:
        row.bin = concat(day_name(b / 24), ":", b % 24 < 10 ? "0" : "", b % 24);
        break;
    }
    row.positive_fraction = hist[1][static_cast<std::size_t>(b)] / totals[1];
    row.negative_fraction = hist[0][static_cast<std::size_t>(b)] / totals[0];
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_distribution(const std::filesystem::path& path,
                               const std::vector<DistRow>& rows) {
  CsvWriter w(path);
  w.line("bin,positive_fraction,negative_fraction");
  for (const DistRow& r : rows)
    w.row(r.bin, fmt_double(r.positive_fraction), fmt_double(r.negative_fraction));
  w.close();
}

}  // namespace placesense
