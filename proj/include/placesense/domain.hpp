#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "placesense/csvio.hpp"
#include "placesense/error.hpp"

namespace placesense {

// ---------------------------------------------------------------------------
// Time helpers. Timestamps are UTC seconds; hour-of-week is derived through a
// fixed per-dataset UTC offset. Sunday is day 0, so index = dow * 24 + hour,
// range [0, 168).
// ---------------------------------------------------------------------------

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline std::int64_t floor_mod(std::int64_t a, std::int64_t b) {
  return a - floor_div(a, b) * b;
}

inline constexpr int kHoursPerWeek = 168;

// 1970-01-01 is a Thursday, i.e. day 4 when Sunday = 0.
inline int day_of_week(std::int64_t utc_seconds, std::int64_t utc_offset_seconds) {
  const std::int64_t days = floor_div(utc_seconds + utc_offset_seconds, 86400);
  return static_cast<int>(floor_mod(days + 4, 7));
}

inline int hour_of_week(std::int64_t utc_seconds, std::int64_t utc_offset_seconds) {
  const std::int64_t local = utc_seconds + utc_offset_seconds;
  const int hour = static_cast<int>(floor_mod(local, 86400) / 3600);
  return day_of_week(utc_seconds, utc_offset_seconds) * 24 + hour;
}

// Absolute hour index since the epoch in local time; hour-of-week is this
// mod 168. Used by occupancy to walk an interval hour by hour.
inline std::int64_t absolute_hour(std::int64_t utc_seconds,
                                  std::int64_t utc_offset_seconds) {
  return floor_div(utc_seconds + utc_offset_seconds, 3600);
}

inline const char* day_name(int dow) {
  static const char* names[7] = {"sun", "mon", "tue", "wed", "thu", "fri", "sat"};
  return names[dow];
}

// ---------------------------------------------------------------------------
// Category taxonomy: dense ids 0..C-1, unique non-empty names. Names may not
// contain ',' (the file delimiter) or ':' (the feature-name separator).
// ---------------------------------------------------------------------------
class Taxonomy {
 public:
  int add(std::string name) {
    validate_name(name);
    auto it = by_name_.find(name);
    if (it != by_name_.end()) return it->second;
    const int id = static_cast<int>(names_.size());
    by_name_.emplace(name, id);
    names_.push_back(std::move(name));
    return id;
  }

  int find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    return it == by_name_.end() ? -1 : it->second;
  }

  int require_id(std::string_view name) const {
    const int id = find(name);
    if (id < 0) fail("unknown category: '", std::string(name), "'");
    return id;
  }

  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(names_.size()); }

  static void validate_name(std::string_view name) {
    require(!name.empty(), "category name must be non-empty");
    require(name.find(',') == std::string_view::npos &&
                name.find(':') == std::string_view::npos,
            "category name must not contain ',' or ':': '", std::string(name), "'");
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> by_name_;
};

// ---------------------------------------------------------------------------
// Places
// ---------------------------------------------------------------------------
struct Place {
  std::string place_id;
  int category = -1;  // index into the PlaceTable's taxonomy
  double x_km = 0;
  double y_km = 0;
};

class PlaceTable {
 public:
  int add(Place p) {
    require(std::isfinite(p.x_km) && std::isfinite(p.y_km),
            "place '", p.place_id, "': coordinates must be finite");
    require(!p.place_id.empty(), "place_id must be non-empty");
    require(p.place_id.find(',') == std::string::npos,
            "place_id must not contain ',': '", p.place_id, "'");
    auto [it, inserted] = index_.emplace(p.place_id, static_cast<int>(places_.size()));
    if (!inserted) fail("duplicate place_id: '", p.place_id, "'");
    places_.push_back(std::move(p));
    return it->second;
  }

  int find(std::string_view place_id) const {
    auto it = index_.find(std::string(place_id));
    return it == index_.end() ? -1 : it->second;
  }

  int require_place(std::string_view place_id) const {
    const int idx = find(place_id);
    if (idx < 0) fail("unknown place_id: '", std::string(place_id), "'");
    return idx;
  }

  const Place& at(int idx) const { return places_.at(static_cast<std::size_t>(idx)); }
  const std::vector<Place>& places() const { return places_; }
  int size() const { return static_cast<int>(places_.size()); }

  Taxonomy& taxonomy() { return taxonomy_; }
  const Taxonomy& taxonomy() const { return taxonomy_; }

  static double distance_km(const Place& a, const Place& b) {
    const double dx = a.x_km - b.x_km;
    const double dy = a.y_km - b.y_km;
    return std::sqrt(dx * dx + dy * dy);
  }

 private:
  std::vector<Place> places_;
  std::unordered_map<std::string, int> index_;
  Taxonomy taxonomy_;
};

// ---------------------------------------------------------------------------
// Visits. Events are stored with interned person/place indices, sorted by
// (person_id, arrival); per-person sequences never overlap in time.
// ---------------------------------------------------------------------------
struct VisitEvent {
  std::int32_t person = -1;  // index into VisitLog::person_ids()
  std::int32_t place = -1;   // index into the PlaceTable
  std::int64_t arrival = 0;  // UTC seconds
  double duration_min = 0;   // strictly positive

  std::int64_t departure() const {
    return arrival + static_cast<std::int64_t>(duration_min * 60.0);
  }
};

class VisitLog {
 public:
  // Takes raw (person_id, place index, arrival, duration) rows in any order,
  // sorts them, interns person ids, and enforces the per-person
  // non-overlap invariant. line_no, when provided, improves error messages.
  struct RawVisit {
    std::string person_id;
    std::int32_t place = -1;
    std::int64_t arrival = 0;
    double duration_min = 0;
    std::size_t line_no = 0;
  };

  static VisitLog from_raw(std::vector<RawVisit> raw) {
    std::sort(raw.begin(), raw.end(), [](const RawVisit& a, const RawVisit& b) {
      if (a.person_id != b.person_id) return a.person_id < b.person_id;
      if (a.arrival != b.arrival) return a.arrival < b.arrival;
      return a.place < b.place;
    });
    VisitLog log;
    log.events_.reserve(raw.size());
    for (const RawVisit& r : raw) {
      require(r.duration_min > 0 && std::isfinite(r.duration_min),
              "nonpositive duration at line ", r.line_no);
      if (log.person_ids_.empty() || log.person_ids_.back() != r.person_id)
        log.person_ids_.push_back(r.person_id);
      VisitEvent ev;
      ev.person = static_cast<std::int32_t>(log.person_ids_.size()) - 1;
      ev.place = r.place;
      ev.arrival = r.arrival;
      ev.duration_min = r.duration_min;
      if (!log.events_.empty()) {
        const VisitEvent& prev = log.events_.back();
        if (prev.person == ev.person && ev.arrival < prev.departure())
          fail("overlapping visits for person '", r.person_id, "' at line ",
               r.line_no, " (arrival ", ev.arrival, " before previous departure ",
               prev.departure(), ")");
      }
      log.events_.push_back(ev);
    }
    log.build_spans();
    return log;
  }

  // For generators that already produce interned, person-major events.
  // person_ids must be in ascending order so person index order matches
  // person_id order; the same sortedness / non-overlap rules are enforced.
  static VisitLog from_sorted(std::vector<VisitEvent> events,
                              std::vector<std::string> person_ids) {
    for (std::size_t p = 1; p < person_ids.size(); ++p)
      require(person_ids[p - 1] < person_ids[p],
              "person ids must be unique and ascending");
    VisitLog log;
    for (std::size_t i = 0; i < events.size(); ++i) {
      const VisitEvent& ev = events[i];
      require(ev.person >= 0 &&
                  ev.person < static_cast<std::int32_t>(person_ids.size()),
              "visit event person index out of range");
      require(ev.duration_min > 0 && std::isfinite(ev.duration_min),
              "nonpositive duration in event ", i);
      if (i > 0) {
        const VisitEvent& prev = events[i - 1];
        require(prev.person <= ev.person, "events must be person-major");
        if (prev.person == ev.person)
          require(ev.arrival >= prev.departure(),
                  "overlapping visits for person '",
                  person_ids[static_cast<std::size_t>(ev.person)], "' near event ", i);
      }
    }
    log.events_ = std::move(events);
    log.person_ids_ = std::move(person_ids);
    log.build_spans();
    return log;
  }

  const std::vector<VisitEvent>& events() const { return events_; }
  const std::vector<std::string>& person_ids() const { return person_ids_; }
  int person_count() const { return static_cast<int>(person_ids_.size()); }

  // Contiguous, arrival-sorted slice of one person's events.
  std::span<const VisitEvent> person_events(int person) const {
    const auto& s = spans_.at(static_cast<std::size_t>(person));
    return {events_.data() + s.first, s.second - s.first};
  }

 private:
  void build_spans() {
    spans_.assign(person_ids_.size(), {0, 0});
    std::size_t i = 0;
    while (i < events_.size()) {
      std::size_t j = i;
      while (j < events_.size() && events_[j].person == events_[i].person) ++j;
      spans_[static_cast<std::size_t>(events_[i].person)] = {i, j};
      i = j;
    }
  }

  std::vector<VisitEvent> events_;
  std::vector<std::string> person_ids_;
  std::vector<std::pair<std::size_t, std::size_t>> spans_;
};

// ---------------------------------------------------------------------------
// Labels: one table per attribute, entries keyed by place index.
// ---------------------------------------------------------------------------
struct LabelTable {
  std::string attribute_name;
  std::map<int, bool> entries;  // place index -> label

  int count(bool value) const {
    int n = 0;
    for (const auto& [place, v] : entries)
      if (v == value) ++n;
    return n;
  }
};

// ---------------------------------------------------------------------------
// File formats (all UTF-8, comma-delimited, header row required):
//   places: place_id,category_name,x_km,y_km
//   visits: person_id,place_id,arrival_unix_seconds,duration_minutes
//   labels: attribute_name,place_id,label        (label in {0,1})
// ---------------------------------------------------------------------------

inline constexpr std::string_view kPlacesHeader = "place_id,category_name,x_km,y_km";
inline constexpr std::string_view kVisitsHeader =
    "person_id,place_id,arrival_unix_seconds,duration_minutes";
inline constexpr std::string_view kLabelsHeader = "attribute_name,place_id,label";

inline PlaceTable load_places(const std::filesystem::path& path) {
  CsvReader reader(path);
  reader.expect_header(kPlacesHeader);
  PlaceTable table;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    if (f.size() != 4)
      fail(reader.path(), " line ", reader.line_no(), ": expected 4 fields, got ",
           f.size());
    Place p;
    p.place_id = std::string(f[0]);
    p.category = table.taxonomy().add(std::string(f[1]));
    p.x_km = parse_double(f[2], "x_km");
    p.y_km = parse_double(f[3], "y_km");
    table.add(std::move(p));
  }
  return table;
}

inline VisitLog load_visit_log(const std::filesystem::path& path,
                               const PlaceTable& places) {
  CsvReader reader(path);
  reader.expect_header(kVisitsHeader);
  std::vector<VisitLog::RawVisit> raw;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    if (f.size() != 4)
      fail(reader.path(), " line ", reader.line_no(), ": expected 4 fields, got ",
           f.size());
    VisitLog::RawVisit r;
    r.person_id = std::string(f[0]);
    require(!r.person_id.empty(), reader.path(), " line ", reader.line_no(),
            ": empty person_id");
    const int place = places.find(f[1]);
    if (place < 0)
      fail(reader.path(), " line ", reader.line_no(), ": unknown place_id: '",
           std::string(f[1]), "'");
    r.place = place;
    r.arrival = parse_int(f[2], "arrival_unix_seconds");
    r.duration_min = parse_double(f[3], "duration_minutes");
    if (!(r.duration_min > 0) || !std::isfinite(r.duration_min))
      fail("nonpositive duration at line ", reader.line_no());
    r.line_no = reader.line_no();
    raw.push_back(std::move(r));
  }
  return VisitLog::from_raw(std::move(raw));
}

inline std::vector<LabelTable> load_labels(const std::filesystem::path& path,
                                           const PlaceTable& places) {
  CsvReader reader(path);
  reader.expect_header(kLabelsHeader);
  std::vector<LabelTable> tables;
  std::unordered_map<std::string, std::size_t> by_attr;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    if (f.size() != 3)
      fail(reader.path(), " line ", reader.line_no(), ": expected 3 fields, got ",
           f.size());
    const std::string attr(f[0]);
    require(!attr.empty(), reader.path(), " line ", reader.line_no(),
            ": empty attribute_name");
    const int place = places.find(f[1]);
    if (place < 0)
      fail(reader.path(), " line ", reader.line_no(), ": unknown place_id: '",
           std::string(f[1]), "'");
    bool value;
    if (f[2] == "0")
      value = false;
    else if (f[2] == "1")
      value = true;
    else
      fail(reader.path(), " line ", reader.line_no(), ": label must be 0 or 1, got '",
           std::string(f[2]), "'");

    auto [it, inserted] = by_attr.emplace(attr, tables.size());
    if (inserted) {
      tables.push_back(LabelTable{attr, {}});
    }
    LabelTable& table = tables[it->second];
    auto [entry, fresh] = table.entries.emplace(place, value);
    if (!fresh && entry->second != value)
      fail(reader.path(), " line ", reader.line_no(),
           ": conflicting label for attribute '", attr, "', place '",
           std::string(f[1]), "'");
  }
  return tables;
}

// ---------------------------------------------------------------------------
// Writers (used by the simulator and generally handy for adapters). Rows are
// emitted in canonical order so identical inputs produce identical bytes.
// ---------------------------------------------------------------------------

inline void write_places(const std::filesystem::path& path, const PlaceTable& places) {
  CsvWriter w(path);
  w.line(kPlacesHeader);
  for (const Place& p : places.places())
    w.row(p.place_id, places.taxonomy().name(p.category), fmt_double(p.x_km),
          fmt_double(p.y_km));
  w.close();
}

inline void write_visit_log(const std::filesystem::path& path, const VisitLog& log,
                            const PlaceTable& places) {
  CsvWriter w(path);
  w.line(kVisitsHeader);
  for (const VisitEvent& ev : log.events())
    w.row(log.person_ids()[static_cast<std::size_t>(ev.person)],
          places.at(ev.place).place_id, fmt_int(ev.arrival),
          fmt_double(ev.duration_min));
  w.close();
}

inline void write_labels(const std::filesystem::path& path,
                         const std::vector<LabelTable>& labels,
                         const PlaceTable& places) {
  CsvWriter w(path);
  w.line(kLabelsHeader);
  for (const LabelTable& table : labels)
    for (const auto& [place, value] : table.entries)
      w.row(table.attribute_name, places.at(place).place_id, value ? 1 : 0);
  w.close();
}

// ---------------------------------------------------------------------------
// Eligibility: a place qualifies for features once at least `min_visitors`
// distinct people have visited it.
// ---------------------------------------------------------------------------
inline std::set<int> eligible_places(const VisitLog& log, int min_visitors = 10) {
  require(min_visitors >= 1, "min_visitors must be >= 1, got ", min_visitors);
  std::unordered_map<int, std::unordered_set<std::int32_t>> visitors;
  for (const VisitEvent& ev : log.events()) visitors[ev.place].insert(ev.person);
  std::set<int> out;
  for (const auto& [place, people] : visitors)
    if (static_cast<int>(people.size()) >= min_visitors) out.insert(place);
  return out;
}

}  // namespace placesense
