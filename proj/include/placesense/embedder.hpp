#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "placesense/domain.hpp"
#include "placesense/feature_matrix.hpp"
#include "placesense/parallel.hpp"
#include "placesense/rng.hpp"

namespace placesense {

// ---------------------------------------------------------------------------
// Person x place co-visit matrix. Observed cells carry a label (1 for a real
// visit) and a confidence weight; every unobserved cell is an implicit
// (label 0, weight w0) observation, which is what makes the factorization
// non-degenerate on an all-ones observed support.
// ---------------------------------------------------------------------------

struct CovisitCell {
  int col = -1;
  double label = 0;
  double weight = 0;
};

struct CovisitMatrix {
  std::vector<std::string> person_ids;              // rows
  std::vector<std::string> place_ids;               // columns, ascending
  std::vector<std::vector<CovisitCell>> rows;       // per person, sorted by col
  double w0 = 0.01;                                 // unobserved-cell weight

  int n_rows() const { return static_cast<int>(person_ids.size()); }
  int n_cols() const { return static_cast<int>(place_ids.size()); }

  void validate() const {
    require(w0 >= 0, "w0 must be non-negative");
    require(rows.size() == person_ids.size(), "row count mismatch");
    for (const auto& row : rows)
      for (std::size_t i = 0; i < row.size(); ++i) {
        require(row[i].col >= 0 && row[i].col < n_cols(), "cell column out of range");
        require(i == 0 || row[i - 1].col < row[i].col,
                "cells must have strictly ascending columns");
        require(row[i].weight > 0 && std::isfinite(row[i].weight),
                "observed cell weights must be positive");
        require(std::isfinite(row[i].label), "cell labels must be finite");
      }
  }
};

// Weight of an observed (person, place) cell: visit count capped at `cap`,
// divided by the number of distinct OTHER places the person visited within
// radius_km of this place (floored at 1 to stay defined). Columns are every
// place that appears in the log.
inline CovisitMatrix build_covisit_matrix(const VisitLog& log, const PlaceTable& places,
                                          int cap = 10, double radius_km = 2.0,
                                          double w0 = 0.01) {
  require(cap >= 1, "cap must be >= 1");
  require(radius_km > 0, "radius_km must be positive");
  require(w0 >= 0, "w0 must be non-negative");

  std::vector<char> visited(static_cast<std::size_t>(places.size()), 0);
  for (const VisitEvent& ev : log.events())
    visited[static_cast<std::size_t>(ev.place)] = 1;
  std::vector<int> col_places;
  for (int p = 0; p < places.size(); ++p)
    if (visited[static_cast<std::size_t>(p)]) col_places.push_back(p);
  std::sort(col_places.begin(), col_places.end(), [&](int a, int b) {
    return places.at(a).place_id < places.at(b).place_id;
  });
  std::vector<int> col_of(static_cast<std::size_t>(places.size()), -1);
  CovisitMatrix m;
  m.w0 = w0;
  for (std::size_t c = 0; c < col_places.size(); ++c) {
    col_of[static_cast<std::size_t>(col_places[c])] = static_cast<int>(c);
    m.place_ids.push_back(places.at(col_places[c]).place_id);
  }
  m.person_ids = log.person_ids();
  m.rows.resize(m.person_ids.size());

  for (int person = 0; person < log.person_count(); ++person) {
    std::unordered_map<int, int> counts;  // place index -> visit count
    for (const VisitEvent& ev : log.person_events(person)) ++counts[ev.place];
    std::vector<std::pair<int, int>> dist(counts.begin(), counts.end());
    auto& row = m.rows[static_cast<std::size_t>(person)];
    row.reserve(dist.size());
    for (const auto& [pj, count] : dist) {
      int n_other = 0;
      for (const auto& [pk, _] : dist)
        if (pk != pj &&
            PlaceTable::distance_km(places.at(pj), places.at(pk)) <= radius_km)
          ++n_other;
      CovisitCell cell;
      cell.col = col_of[static_cast<std::size_t>(pj)];
      cell.label = 1.0;
      cell.weight = static_cast<double>(std::min(count, cap)) / std::max(1, n_other);
      row.push_back(cell);
    }
    std::sort(row.begin(), row.end(),
              [](const CovisitCell& a, const CovisitCell& b) { return a.col < b.col; });
  }
  return m;
}

// ---------------------------------------------------------------------------
// Weighted alternating least squares
// ---------------------------------------------------------------------------

struct WalsOptions {
  int rank = 64;
  double lambda = 0.1;
  int max_sweeps = 20;
  double tol = 1e-4;  // stop when relative loss improvement drops below this
  std::uint64_t seed = 1;
  int workers = 1;
};

struct EmbeddingFactors {
  int rank = 0;
  double lambda = 0;
  std::vector<std::string> person_ids, place_ids;
  std::vector<double> u, v;  // row-major, persons x rank and places x rank
  std::vector<double> sweep_losses;    // solved objective (squared-norm reg)
  std::vector<double> display_losses;  // same reconstruction, unsquared-norm reg
  double final_loss = 0;

  std::span<const double> u_row(int i) const {
    return {u.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(rank),
            static_cast<std::size_t>(rank)};
  }
  std::span<const double> v_row(int j) const {
    return {v.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(rank),
            static_cast<std::size_t>(rank)};
  }
};

namespace wals_detail {

using EMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One alternating half-sweep: re-solves every row of `target` against the
// fixed `other` side. cells_by_row[i] holds row i's observed cells whose .col
// indexes rows of `other`. Exact regularized weighted least squares per row.
inline void solve_side(EMatrix& target, const EMatrix& other,
                       const std::vector<std::vector<CovisitCell>>& cells_by_row,
                       double w0, double lambda, int workers) {
  const int rank = static_cast<int>(target.cols());
  const Eigen::MatrixXd gram =
      w0 > 0 ? Eigen::MatrixXd(w0 * (other.transpose() * other))
             : Eigen::MatrixXd(Eigen::MatrixXd::Zero(rank, rank));
  const double ridge = lambda > 0 ? lambda : 1e-12;  // rank-deficiency guard
  parallel_for(static_cast<std::size_t>(target.rows()), workers, [&](std::size_t i) {
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += ridge;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(rank);
    for (const CovisitCell& cell : cells_by_row[i]) {
      const auto vj = other.row(cell.col);
      a.noalias() += (cell.weight - w0) * (vj.transpose() * vj);
      b.noalias() += cell.weight * cell.label * vj.transpose();
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    const Eigen::VectorXd x = ldlt.solve(b);
    if (ldlt.info() != Eigen::Success || !x.allFinite())
      fail("singular normal equations in factorization; set lambda > 0");
    target.row(static_cast<Eigen::Index>(i)) = x.transpose();
  });
}

struct LossPair {
  double solved = 0;   // squared-norm regularizer (what the solver minimizes)
  double display = 0;  // unsquared-norm regularizer (reporting variant)
};

// Exact objective: sum over ALL cells of W*(L - u.v)^2, where unobserved
// cells have L=0 and weight w0, plus the regularizer. The all-pairs term is
// folded through the rank x rank Gram matrices instead of a dense product.
inline LossPair objective(const CovisitMatrix& m, const EMatrix& u, const EMatrix& v,
                          double lambda) {
  const Eigen::MatrixXd cu = u.transpose() * u;
  const Eigen::MatrixXd cv = v.transpose() * v;
  double recon = m.w0 * cu.cwiseProduct(cv).sum();  // w0 * ||U V^T||_F^2
  for (std::size_t i = 0; i < m.rows.size(); ++i)
    for (const CovisitCell& cell : m.rows[i]) {
      const double pred = u.row(static_cast<Eigen::Index>(i)).dot(v.row(cell.col));
      const double r = cell.label - pred;
      recon += cell.weight * r * r - m.w0 * pred * pred;
    }
  LossPair out;
  out.solved = recon + lambda * (cu.trace() + cv.trace());
  double norms = 0;
  for (Eigen::Index i = 0; i < u.rows(); ++i) norms += u.row(i).norm();
  for (Eigen::Index j = 0; j < v.rows(); ++j) norms += v.row(j).norm();
  out.display = recon + lambda * norms;
  return out;
}

}  // namespace wals_detail

inline EmbeddingFactors wals_factorize(const CovisitMatrix& m, const WalsOptions& opt) {
  require(opt.rank >= 1, "rank must be >= 1");
  require(opt.lambda >= 0, "lambda must be non-negative");
  require(opt.max_sweeps >= 1, "max_sweeps must be >= 1");
  require(opt.tol > 0, "tol must be positive");
  m.validate();
  require(m.n_rows() > 0 && m.n_cols() > 0, "covisit matrix must be non-empty");

  using wals_detail::EMatrix;
  const int rank = opt.rank;
  EMatrix u(m.n_rows(), rank), v(m.n_cols(), rank);
  {
    auto rng = make_rng(opt.seed, "embedder.init");
    std::uniform_real_distribution<double> init(-0.01, 0.01);
    for (Eigen::Index i = 0; i < u.rows(); ++i)
      for (int k = 0; k < rank; ++k) u(i, k) = init(rng);
    for (Eigen::Index j = 0; j < v.rows(); ++j)
      for (int k = 0; k < rank; ++k) v(j, k) = init(rng);
  }

  // column-major view of the cells for the place-side solves
  std::vector<std::vector<CovisitCell>> cells_by_col(
      static_cast<std::size_t>(m.n_cols()));
  for (std::size_t i = 0; i < m.rows.size(); ++i)
    for (const CovisitCell& cell : m.rows[i])
      cells_by_col[static_cast<std::size_t>(cell.col)].push_back(
          CovisitCell{static_cast<int>(i), cell.label, cell.weight});

  EmbeddingFactors out;
  out.rank = rank;
  out.lambda = opt.lambda;
  out.person_ids = m.person_ids;
  out.place_ids = m.place_ids;

  double prev_loss = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    wals_detail::solve_side(u, v, m.rows, m.w0, opt.lambda, opt.workers);
    wals_detail::solve_side(v, u, cells_by_col, m.w0, opt.lambda, opt.workers);
    const wals_detail::LossPair loss = wals_detail::objective(m, u, v, opt.lambda);
    out.sweep_losses.push_back(loss.solved);
    out.display_losses.push_back(loss.display);
    if (std::isfinite(prev_loss) &&
        prev_loss - loss.solved < opt.tol * std::max(1.0, std::abs(prev_loss)))
      break;
    prev_loss = loss.solved;
  }
  out.final_loss = out.sweep_losses.back();

  out.u.assign(u.data(), u.data() + u.size());
  out.v.assign(v.data(), v.data() + v.size());
  return out;
}

// Objective evaluation on externally supplied factors (same formula the
// factorizer records); handy for inspecting saved runs.
inline double wals_objective(const CovisitMatrix& m, const EmbeddingFactors& f) {
  wals_detail::EMatrix u(f.person_ids.size(), f.rank), v(f.place_ids.size(), f.rank);
  for (Eigen::Index i = 0; i < u.rows(); ++i)
    for (int k = 0; k < f.rank; ++k) u(i, k) = f.u_row(static_cast<int>(i))[static_cast<std::size_t>(k)];
  for (Eigen::Index j = 0; j < v.rows(); ++j)
    for (int k = 0; k < f.rank; ++k) v(j, k) = f.v_row(static_cast<int>(j))[static_cast<std::size_t>(k)];
  return wals_detail::objective(m, u, v, f.lambda).solved;
}

// Each place's factor row becomes its feature vector, columns emb:0..emb:r-1.
// Entries are stored explicitly (even exact zeros) so every row carries the
// full rank.
inline FeatureMatrix place_embedding_features(const EmbeddingFactors& f) {
  FeatureMatrix out;
  for (int k = 0; k < f.rank; ++k)
    out.add_column(concat("emb:", k), FeatureGroup::embedding);
  std::vector<int> order(f.place_ids.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return f.place_ids[static_cast<std::size_t>(a)] < f.place_ids[static_cast<std::size_t>(b)]; });
  for (int j : order) {
    std::vector<FeatureMatrix::Entry> entries;
    entries.reserve(static_cast<std::size_t>(f.rank));
    const auto row = f.v_row(j);
    for (int k = 0; k < f.rank; ++k) entries.emplace_back(k, row[static_cast<std::size_t>(k)]);
    out.add_row(f.place_ids[static_cast<std::size_t>(j)], std::move(entries));
  }
  return out;
}

// --- factor file round-trip ---------------------------------------------------

inline void write_factor_csv(const std::filesystem::path& path,
                             std::string_view id_header,
                             const std::vector<std::string>& ids,
                             const std::vector<double>& data, int rank) {
  CsvWriter w(path);
  std::string header(id_header);
  for (int k = 0; k < rank; ++k) header += concat(",f", k);
  w.line(header);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::string line = ids[i];
    for (int k = 0; k < rank; ++k)
      line += concat(",", fmt_double(data[i * static_cast<std::size_t>(rank) +
                                          static_cast<std::size_t>(k)]));
    w.line(line);
  }
  w.close();
}

}  // namespace placesense
