#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "placesense/domain.hpp"
#include "placesense/feature_matrix.hpp"
#include "placesense/parallel.hpp"

namespace placesense {

struct FeaturizerConfig {
  std::vector<double> duration_bin_edges = {15, 30, 45, 60, 90, 120, 180, 240};
  std::vector<int> transition_windows = {1, 4, 8, 16, 24};  // hours
  int min_visitors = 10;
  std::int64_t utc_offset_seconds = 0;

  void validate() const {
    require(!duration_bin_edges.empty(), "duration_bin_edges must be non-empty");
    for (std::size_t i = 0; i < duration_bin_edges.size(); ++i) {
      require(duration_bin_edges[i] > 0 && std::isfinite(duration_bin_edges[i]),
              "duration bin edges must be positive and finite");
      require(i == 0 || duration_bin_edges[i - 1] < duration_bin_edges[i],
              "duration bin edges must be strictly ascending");
    }
    require(!transition_windows.empty(), "transition_windows must be non-empty");
    for (std::size_t i = 0; i < transition_windows.size(); ++i) {
      require(transition_windows[i] > 0, "transition windows must be positive");
      require(i == 0 || transition_windows[i - 1] < transition_windows[i],
              "transition windows must be strictly ascending");
    }
    require(min_visitors >= 1, "min_visitors must be >= 1");
  }
};

// --- feature naming ---------------------------------------------------------

inline std::string duration_bin_name(const std::vector<double>& edges, int bin) {
  const int n = static_cast<int>(edges.size());
  if (bin == 0) return concat("dur:lt", fmt_double(edges[0]));
  if (bin == n) return concat("dur:ge", fmt_double(edges[static_cast<std::size_t>(n) - 1]));
  return concat("dur:", fmt_double(edges[static_cast<std::size_t>(bin) - 1]), "to",
                fmt_double(edges[static_cast<std::size_t>(bin)]));
}

inline std::string hour_of_week_name(std::string_view prefix, int how) {
  const int dow = how / 24, hour = how % 24;
  char h[3] = {static_cast<char>('0' + hour / 10), static_cast<char>('0' + hour % 10), 0};
  return concat(prefix, ":", day_name(dow), ":", h);
}

inline std::string transition_name(FeatureGroup dir, std::string_view category,
                                   int window_hours) {
  return concat(dir == FeatureGroup::transition_prev ? "tprev:" : "tnext:", category,
                ":", window_hours, "h");
}

// --- per-place feature computations -----------------------------------------

// Index of the half-open histogram bin [edge_{i-1}, edge_i) holding d; bin 0
// is below the first edge, bin n_edges at or above the last.
inline int duration_bin(const std::vector<double>& edges, double d) {
  return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), d) -
                          edges.begin());
}

// Histogram over duration bins, normalized to sum to 1.
inline std::vector<double> duration_features(const std::vector<const VisitEvent*>& visits,
                                             const FeaturizerConfig& config) {
  require(!visits.empty(), "duration_features requires at least one visit");
  std::vector<double> out(config.duration_bin_edges.size() + 1, 0.0);
  for (const VisitEvent* v : visits)
    out[static_cast<std::size_t>(duration_bin(config.duration_bin_edges,
                                              v->duration_min))] += 1.0;
  for (double& x : out) x /= static_cast<double>(visits.size());
  return out;
}

// Fraction of visits arriving within each hour-of-week bucket; sums to 1.
inline std::vector<double> arrival_features(const std::vector<const VisitEvent*>& visits,
                                            std::int64_t utc_offset_seconds) {
  require(!visits.empty(), "arrival_features requires at least one visit");
  std::vector<double> out(kHoursPerWeek, 0.0);
  for (const VisitEvent* v : visits)
    out[static_cast<std::size_t>(hour_of_week(v->arrival, utc_offset_seconds))] += 1.0;
  for (double& x : out) x /= static_cast<double>(visits.size());
  return out;
}

// Fraction of visits whose stay interval [arrival, arrival+duration) overlaps
// each hour-of-week; one visit counts once per bucket no matter how many weeks
// it spans, so values live in [0, 1] but need not sum to 1.
inline std::vector<double> occupancy_features(const std::vector<const VisitEvent*>& visits,
                                              std::int64_t utc_offset_seconds) {
  require(!visits.empty(), "occupancy_features requires at least one visit");
  std::vector<double> out(kHoursPerWeek, 0.0);
  std::vector<char> seen(kHoursPerWeek);
  for (const VisitEvent* v : visits) {
    std::fill(seen.begin(), seen.end(), 0);
    const std::int64_t dep = v->departure();
    std::int64_t hour = absolute_hour(v->arrival, utc_offset_seconds);
    int marked = 0;
    // walk local hours while the hour's start precedes the (+offset) departure;
    // +96 realigns absolute hours (epoch: Thursday) to Sunday-based weeks
    while (hour * 3600 < dep + utc_offset_seconds && marked < kHoursPerWeek) {
      const auto how = static_cast<std::size_t>(floor_mod(hour + 4 * 24, kHoursPerWeek));
      if (!seen[how]) {
        seen[how] = 1;
        out[how] += 1.0;
        ++marked;
      }
      ++hour;
    }
  }
  for (double& x : out) x /= static_cast<double>(visits.size());
  return out;
}

// For each (category, window): the fraction of the place's visits where the
// same person also arrived at that category within the window — before the
// target arrival (prev) or after the target departure (next). At-least-one
// semantics per visit; the nested windows make values monotone in the window.
// Returns [category][window] with categories indexed by the taxonomy.
inline std::vector<std::vector<double>> transition_features(
    const VisitLog& log, const PlaceTable& places,
    const std::vector<const VisitEvent*>& visits, FeatureGroup direction,
    const FeaturizerConfig& config) {
  require(direction == FeatureGroup::transition_prev ||
              direction == FeatureGroup::transition_next,
          "transition_features direction must be prev or next");
  require(!visits.empty(), "transition_features requires at least one visit");
  const bool prev = direction == FeatureGroup::transition_prev;
  const int n_cat = places.taxonomy().size();
  const int n_win = static_cast<int>(config.transition_windows.size());
  const std::int64_t max_window_s =
      static_cast<std::int64_t>(config.transition_windows.back()) * 3600;

  std::vector<std::vector<double>> counts(
      static_cast<std::size_t>(n_cat), std::vector<double>(static_cast<std::size_t>(n_win), 0.0));
  std::vector<int> min_win(static_cast<std::size_t>(n_cat), -1);
  std::vector<int> touched;

  for (const VisitEvent* v : visits) {
    const auto person = log.person_events(v->person);
    touched.clear();
    // window is anchored at the target's arrival (prev) or departure (next)
    const std::int64_t anchor = prev ? v->arrival : v->departure();
    auto lo = std::lower_bound(person.begin(), person.end(),
                               prev ? anchor - max_window_s : anchor,
                               [](const VisitEvent& e, std::int64_t t) {
                                 return e.arrival < t;
                               });
    for (auto it = lo; it != person.end(); ++it) {
      if (&*it == v) continue;
      if (prev && it->arrival >= anchor) break;
      const std::int64_t gap = prev ? anchor - it->arrival : it->arrival - anchor;
      if (gap > max_window_s) break;
      // smallest window containing the gap; prev gaps are ≥ 0 by the bound
      const int wi = static_cast<int>(
          std::lower_bound(config.transition_windows.begin(),
                           config.transition_windows.end(), gap,
                           [](int w, std::int64_t g) {
                             return static_cast<std::int64_t>(w) * 3600 < g;
                           }) -
          config.transition_windows.begin());
      const auto cat = static_cast<std::size_t>(places.at(it->place).category);
      if (min_win[cat] < 0) {
        min_win[cat] = wi;
        touched.push_back(static_cast<int>(cat));
      } else if (wi < min_win[cat]) {
        min_win[cat] = wi;
      }
    }
    for (int cat : touched) {
      for (int w = min_win[static_cast<std::size_t>(cat)]; w < n_win; ++w)
        counts[static_cast<std::size_t>(cat)][static_cast<std::size_t>(w)] += 1.0;
      min_win[static_cast<std::size_t>(cat)] = -1;
    }
  }
  for (auto& row : counts)
    for (double& x : row) x /= static_cast<double>(visits.size());
  return counts;
}

// --- assembly ----------------------------------------------------------------

// Computes every feature group for each eligible place. Rows are the eligible
// places in place_id order; columns are the features that are nonzero for at
// least one place, in a fixed canonical order, so the result is independent
// of visit-record order, person labels, and worker count.
inline FeatureMatrix featurize(const VisitLog& log, const PlaceTable& places,
                               const FeaturizerConfig& config, int workers = 1) {
  config.validate();
  const std::set<int> eligible = eligible_places(log, config.min_visitors);
  require(!eligible.empty(), "no eligible places (min_visitors = ",
          config.min_visitors, ")");

  // row order: ascending place_id
  std::vector<int> row_places(eligible.begin(), eligible.end());
  std::sort(row_places.begin(), row_places.end(), [&](int a, int b) {
    return places.at(a).place_id < places.at(b).place_id;
  });

  std::vector<std::vector<const VisitEvent*>> visits_by_place(
      static_cast<std::size_t>(places.size()));
  for (const VisitEvent& ev : log.events())
    visits_by_place[static_cast<std::size_t>(ev.place)].push_back(&ev);

  const int n_bins = static_cast<int>(config.duration_bin_edges.size()) + 1;
  const int n_cat = places.taxonomy().size();
  const int n_win = static_cast<int>(config.transition_windows.size());

  // local column layout, densely packed per place, before global pruning:
  // durations | arrivals | occupancy | tprev (cat-major) | tnext
  const int dur0 = 0;
  const int arr0 = dur0 + n_bins;
  const int occ0 = arr0 + kHoursPerWeek;
  const int tprev0 = occ0 + kHoursPerWeek;
  const int tnext0 = tprev0 + n_cat * n_win;
  const int n_local = tnext0 + n_cat * n_win;

  std::vector<std::vector<double>> dense(row_places.size());
  parallel_for(row_places.size(), workers, [&](std::size_t i) {
    const auto& visits = visits_by_place[static_cast<std::size_t>(row_places[i])];
    std::vector<double> row(static_cast<std::size_t>(n_local), 0.0);
    const std::vector<double> dur = duration_features(visits, config);
    const std::vector<double> arr = arrival_features(visits, config.utc_offset_seconds);
    const std::vector<double> occ = occupancy_features(visits, config.utc_offset_seconds);
    std::copy(dur.begin(), dur.end(), row.begin() + dur0);
    std::copy(arr.begin(), arr.end(), row.begin() + arr0);
    std::copy(occ.begin(), occ.end(), row.begin() + occ0);
    for (FeatureGroup dir :
         {FeatureGroup::transition_prev, FeatureGroup::transition_next}) {
      const auto t = transition_features(log, places, visits, dir, config);
      const int base = dir == FeatureGroup::transition_prev ? tprev0 : tnext0;
      for (int c = 0; c < n_cat; ++c)
        for (int w = 0; w < n_win; ++w)
          row[static_cast<std::size_t>(base + c * n_win + w)] =
              t[static_cast<std::size_t>(c)][static_cast<std::size_t>(w)];
    }
    dense[i] = std::move(row);
  });

  // keep only columns that are nonzero somewhere
  std::vector<char> used(static_cast<std::size_t>(n_local), 0);
  for (const auto& row : dense)
    for (int c = 0; c < n_local; ++c)
      if (row[static_cast<std::size_t>(c)] != 0.0) used[static_cast<std::size_t>(c)] = 1;

  FeatureMatrix out;
  std::vector<int> remap(static_cast<std::size_t>(n_local), -1);
  auto emit = [&](int local, std::string name, FeatureGroup group) {
    if (used[static_cast<std::size_t>(local)])
      remap[static_cast<std::size_t>(local)] = out.add_column(std::move(name), group);
  };
  for (int b = 0; b < n_bins; ++b)
    emit(dur0 + b, duration_bin_name(config.duration_bin_edges, b),
         FeatureGroup::duration);
  for (int h = 0; h < kHoursPerWeek; ++h)
    emit(arr0 + h, hour_of_week_name("arr", h), FeatureGroup::arrival);
  for (int h = 0; h < kHoursPerWeek; ++h)
    emit(occ0 + h, hour_of_week_name("occ", h), FeatureGroup::occupancy);
  for (FeatureGroup dir :
       {FeatureGroup::transition_prev, FeatureGroup::transition_next}) {
    const int base = dir == FeatureGroup::transition_prev ? tprev0 : tnext0;
    for (int c = 0; c < n_cat; ++c)
      for (int w = 0; w < n_win; ++w)
        emit(base + c * n_win + w,
             transition_name(dir, places.taxonomy().name(c),
                             config.transition_windows[static_cast<std::size_t>(w)]),
             dir);
  }

  for (std::size_t i = 0; i < row_places.size(); ++i) {
    std::vector<FeatureMatrix::Entry> entries;
    for (int c = 0; c < n_local; ++c) {
      const double v = dense[i][static_cast<std::size_t>(c)];
      if (v != 0.0 && remap[static_cast<std::size_t>(c)] >= 0)
        entries.emplace_back(remap[static_cast<std::size_t>(c)], v);
    }
    out.add_row(places.at(row_places[i]).place_id, std::move(entries));
  }
  return out;
}

}  // namespace placesense
