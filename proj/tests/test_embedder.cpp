#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "placesense/embedder.hpp"
#include "test_util.hpp"

using namespace placesense;
using testutil::TempDir;

namespace {

constexpr std::int64_t kSunday = 20457LL * 86400;

// dense brute-force evaluation of the factorization objective over ALL cells
double brute_objective(const CovisitMatrix& m, const EmbeddingFactors& f) {
  std::vector<std::vector<const CovisitCell*>> grid(
      static_cast<std::size_t>(m.n_rows()),
      std::vector<const CovisitCell*>(static_cast<std::size_t>(m.n_cols()), nullptr));
  for (std::size_t i = 0; i < m.rows.size(); ++i)
    for (const CovisitCell& cell : m.rows[i])
      grid[i][static_cast<std::size_t>(cell.col)] = &cell;

  double total = 0;
  for (int i = 0; i < m.n_rows(); ++i)
    for (int j = 0; j < m.n_cols(); ++j) {
      double pred = 0;
      for (int k = 0; k < f.rank; ++k)
        pred += f.u_row(i)[static_cast<std::size_t>(k)] * f.v_row(j)[static_cast<std::size_t>(k)];
      const CovisitCell* cell = grid[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      const double label = cell ? cell->label : 0.0;
      const double weight = cell ? cell->weight : m.w0;
      total += weight * (label - pred) * (label - pred);
    }
  double reg = 0;
  for (int i = 0; i < m.n_rows(); ++i)
    for (int k = 0; k < f.rank; ++k)
      reg += f.u_row(i)[static_cast<std::size_t>(k)] * f.u_row(i)[static_cast<std::size_t>(k)];
  for (int j = 0; j < m.n_cols(); ++j)
    for (int k = 0; k < f.rank; ++k)
      reg += f.v_row(j)[static_cast<std::size_t>(k)] * f.v_row(j)[static_cast<std::size_t>(k)];
  return total + f.lambda * reg;
}

// random weighted instance with both observed and unobserved cells
CovisitMatrix random_covisit(std::mt19937_64& rng, int n_persons, int n_places,
                             double density, double w0) {
  CovisitMatrix m;
  m.w0 = w0;
  for (int i = 0; i < n_persons; ++i) m.person_ids.push_back(concat("u", i));
  for (int j = 0; j < n_places; ++j)
    m.place_ids.push_back(concat("p", j < 10 ? "0" : "", j));
  m.rows.resize(static_cast<std::size_t>(n_persons));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> wdist(0.5, 3.0);
  for (int i = 0; i < n_persons; ++i)
    for (int j = 0; j < n_places; ++j)
      if (unit(rng) < density)
        m.rows[static_cast<std::size_t>(i)].push_back(CovisitCell{j, 1.0, wdist(rng)});
  m.validate();
  return m;
}

}  // namespace

TEST_CASE("co-visit weights follow the cap and neighborhood normalization") {
  SECTION("three visits, no nearby alternatives: weight 3") {
    PlaceTable places = testutil::make_places({{"a", "cafe", 0, 0}});
    std::vector<testutil::VisitSpec> vs;
    for (int i = 0; i < 3; ++i) vs.push_back({"p", "a", kSunday + i * 7200, 30});
    VisitLog log = testutil::make_log(places, vs);
    const CovisitMatrix m = build_covisit_matrix(log, places, 10, 2.0, 0.01);
    REQUIRE(m.n_rows() == 1);
    REQUIRE(m.rows[0].size() == 1);
    CHECK(m.rows[0][0].label == 1.0);
    CHECK(m.rows[0][0].weight == 3.0);
  }

  SECTION("fifteen visits capped at 10, two nearby visited places: weight 5") {
    PlaceTable places = testutil::make_places(
        {{"a", "cafe", 0, 0}, {"b", "bar", 1.0, 0}, {"c", "gym", 0, 1.5}});
    std::vector<testutil::VisitSpec> vs;
    for (int i = 0; i < 15; ++i) vs.push_back({"p", "a", kSunday + i * 7200, 30});
    vs.push_back({"p", "b", kSunday + 40 * 3600, 30});
    vs.push_back({"p", "c", kSunday + 42 * 3600, 30});
    VisitLog log = testutil::make_log(places, vs);
    const CovisitMatrix m = build_covisit_matrix(log, places, 10, 2.0, 0.01);
    REQUIRE(m.rows[0].size() == 3);
    CHECK(m.rows[0][0].weight == 5.0);  // place a: min(15,10)/2
    // b's neighbors within 2 km: a (dist 1) and c (dist ~1.8) -> 10/2... but b
    // has 1 visit: min(1,10)/2 = 0.5
    CHECK(m.rows[0][1].weight == 0.5);
  }

  SECTION("distance exactly at the radius counts as nearby") {
    PlaceTable places = testutil::make_places({{"a", "cafe", 0, 0}, {"b", "bar", 2.0, 0}});
    VisitLog log = testutil::make_log(
        places, {{"p", "a", kSunday, 30}, {"p", "b", kSunday + 7200, 30}});
    const CovisitMatrix m = build_covisit_matrix(log, places, 10, 2.0, 0.01);
    CHECK(m.rows[0][0].weight == 1.0);  // min(1,10)/max(1,1)
  }

  SECTION("unvisited places get no column") {
    PlaceTable places = testutil::make_places({{"a", "cafe", 0, 0}, {"zz", "bar", 5, 5}});
    VisitLog log = testutil::make_log(places, {{"p", "a", kSunday, 30}});
    const CovisitMatrix m = build_covisit_matrix(log, places);
    REQUIRE(m.n_cols() == 1);
    CHECK(m.place_ids[0] == "a");
  }

  SECTION("matches a brute-force recomputation on a random log") {
    std::mt19937_64 rng(404);
    PlaceTable places = testutil::random_places(rng, 15, {"cafe", "bar", "gym"});
    VisitLog log = testutil::random_log(rng, places, 25, 10);
    const int cap = 4;
    const double radius = 3.0;
    const CovisitMatrix m = build_covisit_matrix(log, places, cap, radius, 0.01);

    // oracle: per person, distinct place counts, then pairwise distances
    std::map<std::string, std::map<int, int>> counts;
    for (const VisitEvent& ev : log.events())
      counts[log.person_ids()[static_cast<std::size_t>(ev.person)]][ev.place] += 1;
    REQUIRE(m.n_rows() == static_cast<int>(counts.size()));
    for (int i = 0; i < m.n_rows(); ++i) {
      const auto& mine = counts.at(m.person_ids[static_cast<std::size_t>(i)]);
      REQUIRE(m.rows[static_cast<std::size_t>(i)].size() == mine.size());
      for (const CovisitCell& cell : m.rows[static_cast<std::size_t>(i)]) {
        const int place = places.require_place(
            m.place_ids[static_cast<std::size_t>(cell.col)]);
        REQUIRE(mine.count(place) == 1);
        int n_other = 0;
        for (const auto& [other, cnt] : mine)
          if (other != place &&
              PlaceTable::distance_km(places.at(place), places.at(other)) <= radius)
            ++n_other;
        const double expect =
            static_cast<double>(std::min(mine.at(place), cap)) / std::max(1, n_other);
        CHECK(cell.weight == expect);
        CHECK(cell.label == 1.0);
      }
    }
  }
}

TEST_CASE("alternating least squares solves the weighted problem") {
  SECTION("one cell, fixed person factor: place factor lands on the label") {
    using wals_detail::EMatrix;
    EMatrix u(1, 1), v(1, 1);
    u(0, 0) = 1.0;
    v(0, 0) = 123.0;  // overwritten by the solve
    std::vector<std::vector<CovisitCell>> cells_by_col{{CovisitCell{0, 1.0, 1.0}}};
    wals_detail::solve_side(v, u, cells_by_col, 0.0, 0.0, 1);
    CHECK(v(0, 0) == Catch::Approx(1.0).margin(1e-9));
  }

  SECTION("noiseless rank-1 with unit weights is recovered nearly exactly") {
    std::mt19937_64 rng(11);
    const int n = 12, p = 9;
    std::vector<double> a(n), b(p);
    std::uniform_real_distribution<double> unit(0.5, 1.5);
    for (double& x : a) x = unit(rng);
    for (double& x : b) x = unit(rng);
    CovisitMatrix m;
    m.w0 = 0.0;  // every cell observed below
    for (int i = 0; i < n; ++i) m.person_ids.push_back(concat("u", i));
    for (int j = 0; j < p; ++j) m.place_ids.push_back(concat("p", j));
    m.rows.resize(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j)
        m.rows[static_cast<std::size_t>(i)].push_back(
            CovisitCell{j, a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(j)], 1.0});
    WalsOptions opt;
    opt.rank = 1;
    opt.lambda = 0.0;
    opt.max_sweeps = 50;
    opt.tol = 1e-14;
    opt.seed = 5;
    const EmbeddingFactors f = wals_factorize(m, opt);
    CHECK(f.final_loss <= 1e-8);
  }

  SECTION("objective is non-increasing and matches brute force") {
    std::mt19937_64 rng(2024);
    const CovisitMatrix m = random_covisit(rng, 20, 15, 0.3, 0.01);
    WalsOptions opt;
    opt.rank = 3;
    opt.lambda = 0.1;
    opt.max_sweeps = 8;
    opt.tol = 1e-15;  // don't stop early
    opt.seed = 9;
    const EmbeddingFactors f = wals_factorize(m, opt);
    REQUIRE(f.sweep_losses.size() >= 2);
    for (std::size_t s = 1; s < f.sweep_losses.size(); ++s)
      CHECK(f.sweep_losses[s] <= f.sweep_losses[s - 1] + 1e-9);
    const double brute = brute_objective(m, f);
    CHECK(f.final_loss == Catch::Approx(brute).epsilon(1e-9));
    CHECK(wals_objective(m, f) == Catch::Approx(brute).epsilon(1e-12));
    // display variant differs (unsquared norms) but shares the reconstruction
    REQUIRE(f.display_losses.size() == f.sweep_losses.size());
    CHECK(f.display_losses.back() != f.sweep_losses.back());
  }

  SECTION("lambda 0 leaves the objective invariant to factor rescaling") {
    std::mt19937_64 rng(77);
    const CovisitMatrix m = random_covisit(rng, 10, 8, 0.4, 0.02);
    WalsOptions opt;
    opt.rank = 2;
    opt.lambda = 0.0;
    opt.max_sweeps = 3;
    opt.seed = 1;
    EmbeddingFactors f = wals_factorize(m, opt);
    const double before = wals_objective(m, f);
    for (double& x : f.u) x *= 3.0;
    for (double& x : f.v) x /= 3.0;
    CHECK(wals_objective(m, f) == Catch::Approx(before).epsilon(1e-9));
  }

  SECTION("determinism: seed fixes the factors, workers do not change them") {
    std::mt19937_64 rng(31337);
    const CovisitMatrix m = random_covisit(rng, 14, 11, 0.35, 0.01);
    WalsOptions opt;
    opt.rank = 4;
    opt.lambda = 0.05;
    opt.max_sweeps = 5;
    opt.seed = 42;
    const EmbeddingFactors f1 = wals_factorize(m, opt);
    const EmbeddingFactors f2 = wals_factorize(m, opt);
    CHECK(f1.u == f2.u);
    CHECK(f1.v == f2.v);
    opt.workers = 4;
    const EmbeddingFactors f4 = wals_factorize(m, opt);
    CHECK(f1.u == f4.u);
    CHECK(f1.v == f4.v);
    opt.workers = 1;
    opt.seed = 43;
    const EmbeddingFactors g = wals_factorize(m, opt);
    CHECK(f1.u != g.u);
  }
}

TEST_CASE("place embeddings become a feature matrix") {
  std::mt19937_64 rng(55);
  PlaceTable places = testutil::random_places(rng, 12, {"cafe", "bar"});
  VisitLog log = testutil::random_log(rng, places, 18, 9);
  const CovisitMatrix m = build_covisit_matrix(log, places);
  WalsOptions opt;
  opt.rank = 5;
  opt.lambda = 0.1;
  opt.max_sweeps = 4;
  opt.seed = 3;
  const EmbeddingFactors f = wals_factorize(m, opt);
  const FeatureMatrix fm = place_embedding_features(f);

  CHECK(fm.n_rows() == m.n_cols());
  REQUIRE(fm.n_cols() == 5);
  CHECK(std::is_sorted(fm.row_ids().begin(), fm.row_ids().end()));
  for (int c = 0; c < fm.n_cols(); ++c) {
    CHECK(fm.column(c).group == FeatureGroup::embedding);
    CHECK(fm.column(c).name == concat("emb:", c));
  }
  // every row stores its full factor, zeros included
  for (int r = 0; r < fm.n_rows(); ++r) CHECK(fm.row(r).size() == 5);
  // values equal the matching factor row
  for (int r = 0; r < fm.n_rows(); ++r) {
    const std::string& id = fm.row_ids()[static_cast<std::size_t>(r)];
    const auto j = static_cast<std::size_t>(
        std::find(f.place_ids.begin(), f.place_ids.end(), id) - f.place_ids.begin());
    for (int k = 0; k < 5; ++k)
      CHECK(fm.value(r, k) == f.v_row(static_cast<int>(j))[static_cast<std::size_t>(k)]);
  }

  TempDir dir;
  write_factor_csv(dir / "pf.csv", "person_id", f.person_ids, f.u, f.rank);
  const std::string bytes = read_file_bytes(dir / "pf.csv");
  CHECK(bytes.rfind("person_id,f0,f1,f2,f3,f4\n", 0) == 0);
  CHECK(std::count(bytes.begin(), bytes.end(), '\n') ==
        static_cast<long>(f.person_ids.size()) + 1);
}

TEST_CASE("factorization input validation") {
  CovisitMatrix m;
  m.person_ids = {"u0"};
  m.place_ids = {"p0"};
  m.rows = {{CovisitCell{0, 1.0, 1.0}}};
  WalsOptions opt;
  opt.rank = 0;
  CHECK_THROWS_AS(wals_factorize(m, opt), Error);
  opt.rank = 2;
  opt.lambda = -1;
  CHECK_THROWS_AS(wals_factorize(m, opt), Error);
  opt.lambda = 0;
  m.rows[0][0].weight = -2;
  CHECK_THROWS_AS(wals_factorize(m, opt), Error);
}
