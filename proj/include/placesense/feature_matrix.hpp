#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "placesense/csvio.hpp"
#include "placesense/error.hpp"

namespace placesense {

enum class FeatureGroup {
  duration = 0,
  arrival = 1,
  occupancy = 2,
  transition_prev = 3,
  transition_next = 4,
  embedding = 5,
};

inline const char* group_tag(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::duration: return "duration";
    case FeatureGroup::arrival: return "arrival";
    case FeatureGroup::occupancy: return "occupancy";
    case FeatureGroup::transition_prev: return "transition_prev";
    case FeatureGroup::transition_next: return "transition_next";
    case FeatureGroup::embedding: return "embedding";
  }
  fail("unknown feature group");
}

inline FeatureGroup group_from_tag(std::string_view tag) {
  for (int g = 0; g <= 5; ++g)
    if (tag == group_tag(static_cast<FeatureGroup>(g)))
      return static_cast<FeatureGroup>(g);
  fail("unknown feature group tag: '", std::string(tag), "'");
}

struct FeatureDef {
  std::string name;
  FeatureGroup group = FeatureGroup::duration;
};

// Sparse per-place feature vectors with named, group-tagged columns. Rows are
// keyed by place_id and kept sorted; entries within a row are sorted by
// column. A missing entry means 0.
class FeatureMatrix {
 public:
  using Entry = std::pair<int, double>;  // (column, value)

  // Rows must be added in ascending place_id order; entries in ascending
  // column order with finite values.
  int add_column(std::string name, FeatureGroup group) {
    auto [it, inserted] = col_index_.emplace(std::move(name), columns_.size());
    if (!inserted) fail("duplicate feature name: '", it->first, "'");
    columns_.push_back(FeatureDef{it->first, group});
    return static_cast<int>(columns_.size()) - 1;
  }

  void add_row(std::string place_id, std::vector<Entry> entries) {
    require(row_ids_.empty() || row_ids_.back() < place_id,
            "feature rows must be added in ascending place_id order ('", place_id,
            "' after '", row_ids_.empty() ? "" : row_ids_.back(), "')");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      require(entries[i].first >= 0 &&
                  entries[i].first < static_cast<int>(columns_.size()),
              "feature entry column out of range");
      require(std::isfinite(entries[i].second), "non-finite feature value in row '",
              place_id, "'");
      require(i == 0 || entries[i - 1].first < entries[i].first,
              "feature row entries must have strictly ascending columns");
    }
    row_ids_.push_back(std::move(place_id));
    rows_.push_back(std::move(entries));
  }

  int n_rows() const { return static_cast<int>(row_ids_.size()); }
  int n_cols() const { return static_cast<int>(columns_.size()); }
  const std::vector<std::string>& row_ids() const { return row_ids_; }
  const std::vector<FeatureDef>& columns() const { return columns_; }
  const FeatureDef& column(int c) const {
    return columns_.at(static_cast<std::size_t>(c));
  }

  int find_row(std::string_view place_id) const {
    auto it = std::lower_bound(row_ids_.begin(), row_ids_.end(), place_id);
    if (it == row_ids_.end() || *it != place_id) return -1;
    return static_cast<int>(it - row_ids_.begin());
  }

  int find_column(std::string_view name) const {
    auto it = col_index_.find(std::string(name));
    return it == col_index_.end() ? -1 : static_cast<int>(it->second);
  }

  std::span<const Entry> row(int r) const {
    return {rows_.at(static_cast<std::size_t>(r)).data(),
            rows_[static_cast<std::size_t>(r)].size()};
  }

  double value(int r, int c) const {
    const auto& entries = rows_.at(static_cast<std::size_t>(r));
    auto it = std::lower_bound(entries.begin(), entries.end(), c,
                               [](const Entry& e, int col) { return e.first < col; });
    return (it != entries.end() && it->first == c) ? it->second : 0.0;
  }

  std::vector<std::vector<double>> to_dense() const {
    std::vector<std::vector<double>> dense(
        row_ids_.size(), std::vector<double>(columns_.size(), 0.0));
    for (std::size_t r = 0; r < rows_.size(); ++r)
      for (const Entry& e : rows_[r])
        dense[r][static_cast<std::size_t>(e.first)] = e.second;
    return dense;
  }

  // Keeps the columns for which `keep(def)` is true, dropping rows' other
  // entries; column order is preserved. Rows are kept even if emptied.
  template <typename Pred>
  FeatureMatrix filter_columns(Pred&& keep) const {
    FeatureMatrix out;
    std::vector<int> remap(columns_.size(), -1);
    for (std::size_t c = 0; c < columns_.size(); ++c)
      if (keep(columns_[c])) remap[c] = out.add_column(columns_[c].name, columns_[c].group);
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      std::vector<Entry> entries;
      for (const Entry& e : rows_[r])
        if (remap[static_cast<std::size_t>(e.first)] >= 0)
          entries.emplace_back(remap[static_cast<std::size_t>(e.first)], e.second);
      out.add_row(row_ids_[r], std::move(entries));
    }
    return out;
  }

 private:
  std::vector<FeatureDef> columns_;
  std::unordered_map<std::string, std::size_t> col_index_;
  std::vector<std::string> row_ids_;
  std::vector<std::vector<Entry>> rows_;
};

// Serialization: a triplet file `place_id,feature_name,value` plus a sidecar
// `feature_name,group` fixing the column set and order. Values use
// shortest-round-trip formatting, so save/load is lossless.

inline constexpr std::string_view kFeatureTripletHeader = "place_id,feature_name,value";
inline constexpr std::string_view kFeatureSidecarHeader = "feature_name,group";

inline void save_feature_matrix(const std::filesystem::path& triplet_path,
                                const std::filesystem::path& sidecar_path,
                                const FeatureMatrix& m) {
  {
    CsvWriter w(sidecar_path);
    w.line(kFeatureSidecarHeader);
    for (const FeatureDef& c : m.columns()) w.row(c.name, group_tag(c.group));
    w.close();
  }
  CsvWriter w(triplet_path);
  w.line(kFeatureTripletHeader);
  for (int r = 0; r < m.n_rows(); ++r)
    for (const auto& [c, v] : m.row(r))
      w.row(m.row_ids()[static_cast<std::size_t>(r)], m.column(c).name, fmt_double(v));
  w.close();
}

inline FeatureMatrix load_feature_matrix(const std::filesystem::path& triplet_path,
                                         const std::filesystem::path& sidecar_path) {
  FeatureMatrix m;
  {
    CsvReader reader(sidecar_path);
    reader.expect_header(kFeatureSidecarHeader);
    std::vector<std::string_view> f;
    while (reader.next(f)) {
      if (f.size() != 2)
        fail(reader.path(), " line ", reader.line_no(), ": expected 2 fields, got ",
             f.size());
      m.add_column(std::string(f[0]), group_from_tag(f[1]));
    }
  }
  CsvReader reader(triplet_path);
  reader.expect_header(kFeatureTripletHeader);
  std::vector<std::string_view> f;
  std::string current_id;
  std::vector<FeatureMatrix::Entry> entries;
  bool open = false;
  auto flush = [&] {
    if (!open) return;
    std::sort(entries.begin(), entries.end());
    m.add_row(current_id, std::move(entries));
    entries = {};
  };
  while (reader.next(f)) {
    if (f.size() != 3)
      fail(reader.path(), " line ", reader.line_no(), ": expected 3 fields, got ",
           f.size());
    if (!open || f[0] != current_id) {
      flush();
      current_id = std::string(f[0]);
      open = true;
    }
    const int col = m.find_column(f[1]);
    if (col < 0)
      fail(reader.path(), " line ", reader.line_no(), ": feature '", std::string(f[1]),
           "' missing from sidecar");
    entries.emplace_back(col, parse_double(f[2], "value"));
  }
  flush();
  return m;
}

}  // namespace placesense
