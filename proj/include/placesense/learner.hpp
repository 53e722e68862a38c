#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "placesense/domain.hpp"
#include "placesense/feature_matrix.hpp"
#include "placesense/rng.hpp"

namespace placesense {

// ---------------------------------------------------------------------------
// Mutual information over an equal-frequency discretization. Cut points are
// order statistics at ranks ceil(i*n/n_bins); duplicate cuts merge, so ties
// never split a bin and the binning depends only on value ranks (hence it is
// invariant under strictly increasing transforms).
// ---------------------------------------------------------------------------

inline std::vector<double> equal_frequency_cuts(std::vector<double> values, int n_bins) {
  require(n_bins >= 2, "n_bins must be >= 2");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::vector<double> cuts;
  for (int i = 1; i < n_bins; ++i) {
    const std::size_t rank =
        (static_cast<std::size_t>(i) * n + static_cast<std::size_t>(n_bins) - 1) /
        static_cast<std::size_t>(n_bins);  // ceil(i*n/n_bins), 1-indexed
    cuts.push_back(values[rank - 1]);
  }
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  return cuts;
}

// bin(x) = number of cuts <= x, in [0, n_cuts]
inline int bin_of(const std::vector<double>& cuts, double x) {
  return static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), x) - cuts.begin());
}

// Plug-in MI (nats) between the discretized column and the binary labels.
inline double mutual_information(const std::vector<double>& column,
                                 const std::vector<char>& labels, int n_bins = 8) {
  require(column.size() == labels.size(), "column and labels must be aligned");
  require(!column.empty(), "mutual_information requires data");
  bool has_pos = false, has_neg = false;
  for (char y : labels) (y ? has_pos : has_neg) = true;
  require(has_pos && has_neg, "degenerate labels: need both classes");

  const std::vector<double> cuts = equal_frequency_cuts(column, n_bins);
  const int nb = static_cast<int>(cuts.size()) + 1;
  std::vector<double> joint(static_cast<std::size_t>(nb) * 2, 0.0);
  for (std::size_t i = 0; i < column.size(); ++i)
    joint[static_cast<std::size_t>(bin_of(cuts, column[i])) * 2 +
          (labels[i] ? 1 : 0)] += 1.0;

  const double n = static_cast<double>(column.size());
  std::vector<double> px(static_cast<std::size_t>(nb), 0.0);
  double py[2] = {0, 0};
  for (int b = 0; b < nb; ++b)
    for (int y = 0; y < 2; ++y) {
      const double c = joint[static_cast<std::size_t>(b) * 2 + static_cast<std::size_t>(y)];
      px[static_cast<std::size_t>(b)] += c;
      py[y] += c;
    }
  double mi = 0;
  for (int b = 0; b < nb; ++b)
    for (int y = 0; y < 2; ++y) {
      const double c = joint[static_cast<std::size_t>(b) * 2 + static_cast<std::size_t>(y)];
      if (c > 0) mi += (c / n) * std::log(c * n / (px[static_cast<std::size_t>(b)] * py[y]));
    }
  return std::max(mi, 0.0);  // clamp fp residue; plug-in MI is non-negative
}

// ---------------------------------------------------------------------------
// Feature selection
// ---------------------------------------------------------------------------

struct SelectionReport {
  std::string attribute_name;
  std::vector<std::pair<std::string, double>> ranked;  // all columns, MI desc
  int k_kept = 0;

  std::vector<std::string> kept_names() const {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(k_kept));
    for (int i = 0; i < k_kept; ++i) out.push_back(ranked[static_cast<std::size_t>(i)].first);
    return out;
  }
};

// Aligned label extraction: rows of the matrix that carry a label, with the
// labels in row order. Shared by selection, training, and evaluation.
struct LabeledRows {
  std::vector<int> rows;    // row indices into the matrix
  std::vector<char> y;      // aligned labels
  int n_pos = 0, n_neg = 0;
};

inline LabeledRows labeled_rows(const FeatureMatrix& matrix, const LabelTable& labels,
                                const PlaceTable& places) {
  LabeledRows out;
  for (const auto& [place, value] : labels.entries) {
    const int r = matrix.find_row(places.at(place).place_id);
    if (r < 0) continue;
    out.rows.push_back(r);
    out.y.push_back(value ? 1 : 0);
    (value ? out.n_pos : out.n_neg) += 1;
  }
  return out;
}

// Same, for labels already keyed by row id strings.
inline LabeledRows labeled_rows_by_id(
    const FeatureMatrix& matrix,
    const std::vector<std::pair<std::string, bool>>& labels) {
  LabeledRows out;
  for (const auto& [id, value] : labels) {
    const int r = matrix.find_row(id);
    if (r < 0) continue;
    out.rows.push_back(r);
    out.y.push_back(value ? 1 : 0);
    (value ? out.n_pos : out.n_neg) += 1;
  }
  return out;
}

inline std::vector<double> column_values(const FeatureMatrix& matrix, int col,
                                         const std::vector<int>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(matrix.value(r, col));
  return out;
}

// Ranks every column by MI with the labels (descending; ties broken by
// feature name) and keeps the top min(k, n_columns).
inline SelectionReport select_features(const FeatureMatrix& matrix,
                                       const std::string& attribute_name,
                                       const LabeledRows& data, int k,
                                       int n_bins = 8) {
  require(k >= 1, "selection k must be >= 1");
  require(data.n_pos >= 1 && data.n_neg >= 1,
          "degenerate labels for attribute '", attribute_name,
          "': need at least one positive and one negative");
  SelectionReport report;
  report.attribute_name = attribute_name;

  // dense column gather transposed once: column -> values over labeled rows
  std::vector<std::vector<double>> cols(
      static_cast<std::size_t>(matrix.n_cols()),
      std::vector<double>(data.rows.size(), 0.0));
  for (std::size_t i = 0; i < data.rows.size(); ++i)
    for (const auto& [c, val] : matrix.row(data.rows[i]))
      cols[static_cast<std::size_t>(c)][i] = val;

  report.ranked.reserve(static_cast<std::size_t>(matrix.n_cols()));
  for (int c = 0; c < matrix.n_cols(); ++c)
    report.ranked.emplace_back(matrix.column(c).name,
                               mutual_information(cols[static_cast<std::size_t>(c)],
                                                  data.y, n_bins));
  std::sort(report.ranked.begin(), report.ranked.end(),
            [](const auto& a, const auto& b) {
              if (a.second != b.second) return a.second > b.second;
              return a.first < b.first;
            });
  report.k_kept = std::min(k, matrix.n_cols());
  return report;
}

// ---------------------------------------------------------------------------
// Linear models: hinge or logistic loss with L2, minimized by seeded SGD
// with a 1/sqrt(t) step decay and inverse-class-frequency sample weights.
// Features are standardized with statistics stored in the model.
// ---------------------------------------------------------------------------

enum class LossKind { hinge, logistic };

inline const char* loss_tag(LossKind k) {
  return k == LossKind::hinge ? "hinge" : "logistic";
}

inline LossKind loss_from_tag(std::string_view tag) {
  if (tag == "hinge") return LossKind::hinge;
  if (tag == "logistic") return LossKind::logistic;
  fail("unknown loss kind: '", std::string(tag), "'");
}

struct TrainConfig {
  LossKind loss = LossKind::hinge;
  double l2 = 1e-4;
  double learning_rate = 0.1;
  int epochs = 20;
  std::uint64_t seed = 1;

  void validate() const {
    require(l2 >= 0, "l2 must be non-negative");
    require(learning_rate > 0, "learning_rate must be positive");
    require(epochs >= 1, "epochs must be >= 1");
  }
};

struct LinearModel {
  std::string attribute_name;
  LossKind loss = LossKind::hinge;
  std::vector<std::string> feature_names;  // training column order
  std::vector<double> mean, stdev;         // standardization, per feature
  std::vector<double> weights;
  double bias = 0;
  TrainConfig config;
  std::vector<double> epoch_losses;
};

namespace learner_detail {

// dense standardized design matrix over the training rows
struct Design {
  std::vector<double> x;  // n x d, row-major, standardized
  std::vector<double> mean, stdev;
  std::size_t n = 0, d = 0;
};

inline Design build_design(const FeatureMatrix& matrix, const std::vector<int>& rows,
                           const std::vector<int>& cols) {
  Design ds;
  ds.n = rows.size();
  ds.d = cols.size();
  ds.x.assign(ds.n * ds.d, 0.0);
  for (std::size_t i = 0; i < ds.n; ++i) {
    std::size_t k = 0;
    auto row = matrix.row(rows[i]);
    // merge walk: row entries are sorted by column, cols is sorted
    for (const auto& [c, val] : row) {
      while (k < ds.d && cols[k] < c) ++k;
      if (k == ds.d) break;
      if (cols[k] == c) ds.x[i * ds.d + k] = val;
    }
  }
  ds.mean.assign(ds.d, 0.0);
  ds.stdev.assign(ds.d, 0.0);
  for (std::size_t i = 0; i < ds.n; ++i)
    for (std::size_t j = 0; j < ds.d; ++j) ds.mean[j] += ds.x[i * ds.d + j];
  for (double& m : ds.mean) m /= static_cast<double>(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i)
    for (std::size_t j = 0; j < ds.d; ++j) {
      const double c = ds.x[i * ds.d + j] - ds.mean[j];
      ds.stdev[j] += c * c;
    }
  for (double& s : ds.stdev) {
    s = std::sqrt(s / static_cast<double>(ds.n));
    if (s < 1e-12) s = 1.0;  // constant column: centered value stays 0
  }
  for (std::size_t i = 0; i < ds.n; ++i)
    for (std::size_t j = 0; j < ds.d; ++j)
      ds.x[i * ds.d + j] = (ds.x[i * ds.d + j] - ds.mean[j]) / ds.stdev[j];
  return ds;
}

// J(w, b) = (1/n) sum_i c_i * loss_i + (l2/2) ||w||^2
inline double objective(const Design& ds, const std::vector<char>& y,
                        const std::vector<double>& cw, const std::vector<double>& w,
                        double b, LossKind kind, double l2) {
  double total = 0;
  for (std::size_t i = 0; i < ds.n; ++i) {
    double s = b;
    const double* xi = ds.x.data() + i * ds.d;
    for (std::size_t j = 0; j < ds.d; ++j) s += w[j] * xi[j];
    const double margin = (y[i] ? 1.0 : -1.0) * s;
    double loss;
    if (kind == LossKind::hinge)
      loss = std::max(0.0, 1.0 - margin);
    else
      loss = margin > 35 ? std::exp(-margin)
                         : std::log1p(std::exp(-margin));  // stable softplus
    total += cw[y[i] ? 1 : 0] * loss;
  }
  total /= static_cast<double>(ds.n);
  double reg = 0;
  for (double wj : w) reg += wj * wj;
  return total + 0.5 * l2 * reg;
}

}  // namespace learner_detail

// Trains on the matrix rows/labels in `data`, restricted to `feature_names`
// (which must exist in the matrix). Deterministic for a fixed config.
inline LinearModel train(const FeatureMatrix& matrix, const std::string& attribute_name,
                         const LabeledRows& data,
                         const std::vector<std::string>& feature_names,
                         const TrainConfig& config) {
  config.validate();
  require(!feature_names.empty(), "no features selected for training");
  require(data.n_pos >= 1 && data.n_neg >= 1,
          "degenerate labels for attribute '", attribute_name, "'");

  std::vector<int> cols;
  cols.reserve(feature_names.size());
  for (const std::string& name : feature_names) {
    const int c = matrix.find_column(name);
    require(c >= 0, "feature '", name, "' not present in the training matrix");
    cols.push_back(c);
  }
  std::sort(cols.begin(), cols.end());

  learner_detail::Design ds = learner_detail::build_design(matrix, data.rows, cols);
  const std::size_t n = ds.n, d = ds.d;

  // inverse class frequency, normalized so the mean sample weight is 1
  std::vector<double> cw(2);
  cw[1] = static_cast<double>(n) / (2.0 * data.n_pos);
  cw[0] = static_cast<double>(n) / (2.0 * data.n_neg);

  std::vector<double> w(d, 0.0);
  double b = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> epoch_losses;
  std::size_t t = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto rng = make_rng(config.seed, concat("learner.shuffle/", attribute_name),
                        static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      ++t;
      const double lr = config.learning_rate / std::sqrt(static_cast<double>(t));
      const double* xi = ds.x.data() + i * ds.d;
      double s = b;
      for (std::size_t j = 0; j < d; ++j) s += w[j] * xi[j];
      const double yi = data.y[i] ? 1.0 : -1.0;
      const double ci = cw[data.y[i] ? 1 : 0];
      double g;  // d(loss)/d(score)
      if (config.loss == LossKind::hinge)
        g = (yi * s < 1.0) ? -yi : 0.0;
      else
        g = -yi / (1.0 + std::exp(yi * s));
      const double scale = 1.0 - lr * config.l2;
      const double step = lr * ci * g;
      if (g != 0.0) {
        for (std::size_t j = 0; j < d; ++j) w[j] = scale * w[j] - step * xi[j];
        b -= step;
      } else if (config.l2 > 0) {
        for (std::size_t j = 0; j < d; ++j) w[j] *= scale;
      }
    }
    const double loss =
        learner_detail::objective(ds, data.y, cw, w, b, config.loss, config.l2);
    require(std::isfinite(loss), "training diverged (non-finite loss) at learning rate ",
            fmt_double(config.learning_rate), "; reduce it");
    epoch_losses.push_back(loss);
  }

  LinearModel model;
  model.attribute_name = attribute_name;
  model.loss = config.loss;
  model.config = config;
  model.mean = std::move(ds.mean);
  model.stdev = std::move(ds.stdev);
  model.weights = std::move(w);
  model.bias = b;
  model.epoch_losses = std::move(epoch_losses);
  model.feature_names.reserve(cols.size());
  for (int c : cols) model.feature_names.push_back(matrix.column(c).name);
  return model;
}

// score = w . standardized(x) + b, with absent features reading as raw 0.
// The raw-zero contribution of every feature is folded into a base term so
// scoring touches only a row's stored entries.
inline std::vector<std::pair<std::string, double>> predict_scores(
    const LinearModel& model, const FeatureMatrix& matrix) {
  double base = model.bias;
  for (std::size_t j = 0; j < model.weights.size(); ++j)
    base -= model.weights[j] * model.mean[j] / model.stdev[j];
  std::vector<double> per_col(static_cast<std::size_t>(matrix.n_cols()), 0.0);
  std::vector<char> in_model(static_cast<std::size_t>(matrix.n_cols()), 0);
  for (std::size_t j = 0; j < model.feature_names.size(); ++j) {
    const int c = matrix.find_column(model.feature_names[j]);
    if (c < 0) continue;  // feature absent everywhere: raw 0 is already in base
    per_col[static_cast<std::size_t>(c)] = model.weights[j] / model.stdev[j];
    in_model[static_cast<std::size_t>(c)] = 1;
  }
  std::vector<std::pair<std::string, double>> out;
  out.reserve(static_cast<std::size_t>(matrix.n_rows()));
  for (int r = 0; r < matrix.n_rows(); ++r) {
    double s = base;
    for (const auto& [c, val] : matrix.row(r))
      if (in_model[static_cast<std::size_t>(c)]) s += per_col[static_cast<std::size_t>(c)] * val;
    out.emplace_back(matrix.row_ids()[static_cast<std::size_t>(r)], s);
  }
  return out;
}

// Top signed features for the qualitative report: positives by weight
// descending, negatives by weight ascending; zero weights on neither list.
struct TopFeatures {
  std::vector<std::pair<std::string, double>> positive, negative;
};

inline TopFeatures top_features(const LinearModel& model, int n) {
  require(n >= 1, "n must be >= 1");
  TopFeatures out;
  for (std::size_t j = 0; j < model.weights.size(); ++j) {
    if (model.weights[j] > 0) out.positive.emplace_back(model.feature_names[j], model.weights[j]);
    if (model.weights[j] < 0) out.negative.emplace_back(model.feature_names[j], model.weights[j]);
  }
  auto by_desc = [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  auto by_asc = [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  };
  std::sort(out.positive.begin(), out.positive.end(), by_desc);
  std::sort(out.negative.begin(), out.negative.end(), by_asc);
  if (out.positive.size() > static_cast<std::size_t>(n)) out.positive.resize(static_cast<std::size_t>(n));
  if (out.negative.size() > static_cast<std::size_t>(n)) out.negative.resize(static_cast<std::size_t>(n));
  return out;
}

}  // namespace placesense
