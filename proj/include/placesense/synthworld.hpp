#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "placesense/domain.hpp"
#include "placesense/parallel.hpp"
#include "placesense/rng.hpp"

namespace placesense {

// ---------------------------------------------------------------------------
// Synthetic world: places on a plane, people with homes/works and category
// tastes, and daily trajectories whose statistics encode planted attribute
// signals. Every attribute modulates behavior through one or more channels;
// strength 0 turns an attribute into pure noise.
// ---------------------------------------------------------------------------

enum class Channel {
  duration_shift = 0,
  arrival_shift = 1,
  weekend_shift = 2,
  prev_category_affinity = 3,
  next_category_affinity = 4,
};

inline const char* channel_tag(Channel c) {
  switch (c) {
    case Channel::duration_shift: return "duration_shift";
    case Channel::arrival_shift: return "arrival_shift";
    case Channel::weekend_shift: return "weekend_shift";
    case Channel::prev_category_affinity: return "prev_category_affinity";
    case Channel::next_category_affinity: return "next_category_affinity";
  }
  fail("unknown channel");
}

inline Channel channel_from_tag(std::string_view tag) {
  for (int c = 0; c <= 4; ++c)
    if (tag == channel_tag(static_cast<Channel>(c))) return static_cast<Channel>(c);
  fail("unknown channel tag: '", std::string(tag), "'");
}

// Channel parameters, shared by all channels of one attribute. The effective
// value of each knob interpolates linearly between neutral (strength 0) and
// the configured value (strength 1).
struct ChannelParams {
  double duration_multiplier = 1.6;  // median stay multiplier for positives
  int band_start_hour = 19;          // arrival_shift: local target band
  int band_end_hour = 22;            //   [start, end)
  double choice_boost = 6.0;         // arrival/weekend: in-context weight gain
  double choice_damp = 0.85;         // arrival/weekend: out-of-context factor
  std::string affinity_category;     // prev/next affinity target
  double force_prob = 0.55;          // prev/next: forced-pairing probability
  double taste_link_gain = 3.0;      // prev/next: cohort preference gain
};

struct AttributeSpec {
  std::string name;
  double base_rate = 0.3;
  double strength = 0.8;
  std::vector<Channel> channels;
  ChannelParams params;

  void validate() const {
    require(!name.empty(), "attribute name must be non-empty");
    require(name.find(',') == std::string::npos, "attribute name must not contain ','");
    require(base_rate > 0 && base_rate < 1, "attribute '", name,
            "': base_rate must be in (0,1)");
    require(strength >= 0 && strength <= 1, "attribute '", name,
            "': strength must be in [0,1]");
    for (Channel c : channels)
      if (c == Channel::prev_category_affinity || c == Channel::next_category_affinity)
        require(!params.affinity_category.empty(), "attribute '", name,
                "': affinity channels need an affinity_category");
    require(params.band_start_hour >= 0 && params.band_end_hour <= 24 &&
                params.band_start_hour < params.band_end_hour,
            "attribute '", name, "': invalid arrival band");
    require(params.force_prob >= 0 && params.force_prob <= 1, "attribute '", name,
            "': force_prob must be in [0,1]");
  }
};

struct CategoryParams {
  double median_minutes = 45;
  double sigma = 0.45;  // log-space spread of stay durations
};

struct WorldConfig {
  int n_places = 200;  // venue places; homes/works are added on top
  int n_people = 300;
  int n_days = 14;
  std::uint64_t rng_seed = 1;
  std::map<std::string, double> category_mix;  // venue category -> probability
  std::map<std::string, CategoryParams> category_params;  // optional overrides
  std::vector<AttributeSpec> attributes;

  // world layout and behavior knobs
  double world_size_km = 12.0;
  double locality_km = 3.0;     // distance decay scale for venue choice
  double taste_sigma = 0.7;     // per-person category taste spread (log-normal)
  int home_occupancy = 3;       // people per home place
  int work_occupancy = 20;      // people per work place
  int familiar_set_size = 60;   // venues a person routinely chooses among
  double lunch_prob = 0.6;
  double weekday_evening_rate = 1.3;  // Poisson outing counts
  double weekend_day_rate = 2.2;
  double weekend_evening_rate = 1.2;
  std::int64_t utc_offset_seconds = 0;
  // day 0 of the simulation; 20457 * 86400 is a Sunday 00:00
  std::int64_t start_unix = 20457LL * 86400;

  void validate() const {
    require(n_places >= 1 && n_people >= 1 && n_days >= 1,
            "n_places, n_people, n_days must all be >= 1");
    require(!category_mix.empty(), "category_mix must be non-empty");
    double total = 0;
    for (const auto& [name, p] : category_mix) {
      Taxonomy::validate_name(name);
      require(name != "home" && name != "work",
              "category_mix must not include the reserved 'home'/'work' categories");
      require(p > 0, "category_mix probability for '", name, "' must be positive");
      total += p;
    }
    require(std::abs(total - 1.0) <= 1e-9, "category_mix must sum to 1, got ",
            fmt_double(total));
    for (const AttributeSpec& a : attributes) {
      a.validate();
      if (!a.params.affinity_category.empty())
        require(category_mix.count(a.params.affinity_category) > 0, "attribute '",
                a.name, "': affinity category '", a.params.affinity_category,
                "' not in category_mix");
    }
    for (std::size_t i = 0; i < attributes.size(); ++i)
      for (std::size_t j = i + 1; j < attributes.size(); ++j)
        require(attributes[i].name != attributes[j].name, "duplicate attribute name '",
                attributes[i].name, "'");
    require(world_size_km > 0 && locality_km > 0 && taste_sigma >= 0,
            "world_size_km, locality_km must be positive; taste_sigma non-negative");
    require(home_occupancy >= 1 && work_occupancy >= 1 && familiar_set_size >= 1,
            "home_occupancy, work_occupancy, familiar_set_size must be >= 1");
    require(lunch_prob >= 0 && lunch_prob <= 1, "lunch_prob must be in [0,1]");
    require(weekday_evening_rate >= 0 && weekend_day_rate >= 0 &&
                weekend_evening_rate >= 0,
            "outing rates must be non-negative");
  }

  CategoryParams params_for(const std::string& category) const {
    auto it = category_params.find(category);
    return it == category_params.end() ? default_category_params(category) : it->second;
  }

  static CategoryParams default_category_params(const std::string& category) {
    static const std::map<std::string, CategoryParams> defaults = {
        {"restaurant", {60, 0.40}}, {"cafe", {35, 0.45}},
        {"bar", {85, 0.50}},        {"grocery_store", {25, 0.40}},
        {"shop", {30, 0.50}},       {"theater", {130, 0.25}},
        {"museum", {100, 0.35}},    {"park", {50, 0.60}},
        {"gym", {70, 0.30}},
    };
    auto it = defaults.find(category);
    return it == defaults.end() ? CategoryParams{} : it->second;
  }

  static std::map<std::string, double> default_category_mix() {
    return {{"restaurant", 0.22}, {"cafe", 0.14},  {"bar", 0.12},
            {"grocery_store", 0.14}, {"shop", 0.12}, {"theater", 0.08},
            {"museum", 0.06},     {"park", 0.07},  {"gym", 0.05}};
  }
};

// One attribute's resolved (strength-applied) effect on one positive place.
// Neutral knobs are pre-folded so the simulator applies these blindly.
struct PlaceEffect {
  int attr = -1;
  Channel channel = Channel::duration_shift;
  double dur_mult = 1.0;
  int band_start = 0, band_end = 0;  // local hours, arrival_shift only
  double up = 1.0, down = 1.0;       // contextual choice multipliers
  int affinity_category = -1;
  double force_prob = 0.0;
  double taste_gain = 0.0;
};

struct World {
  WorldConfig config;
  PlaceTable places;
  std::vector<LabelTable> labels;  // per attribute, over venue places

  // simulation internals, also serialized as world truth
  std::vector<int> venues, homes, works;            // place indices
  std::vector<double> place_dur_mult;               // per place, realized
  std::vector<std::vector<PlaceEffect>> effects;    // per place
  std::vector<std::vector<int>> attr_positives;     // per attribute, venues
  // completing a visit to category c can force the next outing toward an
  // attribute's positive set (the prev-affinity pairing mechanism)
  std::vector<std::vector<std::pair<int, double>>> prev_triggers;  // [cat] -> (attr, p)
};

namespace synth_detail {

inline std::string padded_id(char prefix, int index, int count) {
  int width = 1;
  for (int v = count; v >= 10; v /= 10) ++width;
  const std::string digits = std::to_string(index + 1);
  std::string out(1, prefix);
  if (digits.size() < static_cast<std::size_t>(width))
    out.append(static_cast<std::size_t>(width) - digits.size(), '0');
  out += digits;
  return out;
}

inline double normal_pctile(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace synth_detail

inline World generate_world(const WorldConfig& config_in) {
  WorldConfig config = config_in;
  if (config.category_mix.empty())
    config.category_mix = WorldConfig::default_category_mix();
  config.validate();

  World world;
  world.config = config;

  // categories in mix order (std::map keeps names sorted), then anchors
  std::vector<std::string> mix_names;
  std::vector<double> mix_probs;
  for (const auto& [name, p] : config.category_mix) {
    mix_names.push_back(name);
    mix_probs.push_back(p);
  }
  for (const std::string& name : mix_names) world.places.taxonomy().add(name);
  const int home_cat = world.places.taxonomy().add("home");
  const int work_cat = world.places.taxonomy().add("work");

  auto rng = make_rng(config.rng_seed, "synthworld.places");
  std::uniform_real_distribution<double> coord(0.0, config.world_size_km);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> cdf(mix_probs.size());
  std::partial_sum(mix_probs.begin(), mix_probs.end(), cdf.begin());

  for (int i = 0; i < config.n_places; ++i) {
    Place p;
    p.place_id = synth_detail::padded_id('v', i, config.n_places);
    const double u = unit(rng);
    p.category = static_cast<int>(
        std::lower_bound(cdf.begin(), cdf.end(), u * cdf.back()) - cdf.begin());
    if (p.category >= static_cast<int>(mix_names.size()))
      p.category = static_cast<int>(mix_names.size()) - 1;
    p.x_km = coord(rng);
    p.y_km = coord(rng);
    world.venues.push_back(world.places.add(std::move(p)));
  }
  const int n_homes = (config.n_people + config.home_occupancy - 1) / config.home_occupancy;
  const int n_works = (config.n_people + config.work_occupancy - 1) / config.work_occupancy;
  for (int i = 0; i < n_homes; ++i) {
    Place p{synth_detail::padded_id('h', i, n_homes), home_cat, coord(rng), coord(rng)};
    world.homes.push_back(world.places.add(std::move(p)));
  }
  for (int i = 0; i < n_works; ++i) {
    Place p{synth_detail::padded_id('w', i, n_works), work_cat, coord(rng), coord(rng)};
    world.works.push_back(world.places.add(std::move(p)));
  }

  // labels + resolved per-place effects
  world.place_dur_mult.assign(static_cast<std::size_t>(world.places.size()), 1.0);
  world.effects.assign(static_cast<std::size_t>(world.places.size()), {});
  world.prev_triggers.assign(static_cast<std::size_t>(world.places.taxonomy().size()), {});
  for (std::size_t a = 0; a < config.attributes.size(); ++a) {
    const AttributeSpec& spec = config.attributes[a];
    auto label_rng = make_rng(config.rng_seed, concat("synthworld.labels/", spec.name));
    LabelTable table;
    table.attribute_name = spec.name;
    std::vector<int> positives;
    for (int v : world.venues) {
      const bool pos = unit(label_rng) < spec.base_rate;
      table.entries.emplace(v, pos);
      if (pos) positives.push_back(v);
    }
    const double s = spec.strength;
    for (int v : positives) {
      for (Channel ch : spec.channels) {
        if (s == 0) continue;  // neutral effect, skip entirely
        PlaceEffect e;
        e.attr = static_cast<int>(a);
        e.channel = ch;
        switch (ch) {
          case Channel::duration_shift:
            e.dur_mult = 1.0 + s * (spec.params.duration_multiplier - 1.0);
            world.place_dur_mult[static_cast<std::size_t>(v)] *= e.dur_mult;
            break;
          case Channel::arrival_shift:
            e.band_start = spec.params.band_start_hour;
            e.band_end = spec.params.band_end_hour;
            e.up = 1.0 + s * (spec.params.choice_boost - 1.0);
            e.down = 1.0 - s * (1.0 - spec.params.choice_damp);
            break;
          case Channel::weekend_shift:
            e.up = 1.0 + s * (spec.params.choice_boost - 1.0);
            e.down = 1.0 - s * (1.0 - spec.params.choice_damp);
            break;
          case Channel::prev_category_affinity:
            e.affinity_category =
                world.places.taxonomy().require_id(spec.params.affinity_category);
            e.up = 1.0 + s * (spec.params.choice_boost - 1.0);
            e.force_prob = s * spec.params.force_prob;
            e.taste_gain = s * spec.params.taste_link_gain;
            break;
          case Channel::next_category_affinity:
            e.affinity_category =
                world.places.taxonomy().require_id(spec.params.affinity_category);
            e.force_prob = s * spec.params.force_prob;
            e.taste_gain = s * spec.params.taste_link_gain;
            break;
        }
        world.effects[static_cast<std::size_t>(v)].push_back(e);
      }
    }
    // forced prev pairing triggers on completing an affinity-category visit
    if (s > 0)
      for (Channel ch : spec.channels)
        if (ch == Channel::prev_category_affinity)
          world.prev_triggers[static_cast<std::size_t>(
                                  world.places.taxonomy().require_id(
                                      spec.params.affinity_category))]
              .emplace_back(static_cast<int>(a), s * spec.params.force_prob);
    world.attr_positives.push_back(std::move(positives));
    world.labels.push_back(std::move(table));
  }
  return world;
}

// ---------------------------------------------------------------------------
// Trajectory simulation
// ---------------------------------------------------------------------------

namespace synth_detail {

struct RawEvent {
  std::int32_t place;
  std::int64_t arrival;
  double duration_min;
};

struct PersonSim {
  const World& world;
  std::mt19937_64 rng;
  int home = -1, work = -1;
  std::vector<double> taste;      // per category
  std::vector<double> taste_pct;  // percentile of taste within its category
  std::vector<int> familiar;      // venue candidate pool
  std::vector<double> base_w;     // taste * locality weight per familiar venue
  std::vector<RawEvent> out;

  // rolling state
  std::int64_t pending_home_arrival = 0;
  std::int64_t last_venue_arrival = std::numeric_limits<std::int64_t>::min();
  int last_venue_category = -1;
  int forced_attr = -1;      // next outing drawn from this attribute's positives
  int forced_category = -1;  // next outing drawn from this category

  explicit PersonSim(const World& w) : world(w) {}

  double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

  std::int64_t minutes(int lo, int hi) {
    return 60LL * std::uniform_int_distribution<int>(lo, hi)(rng);
  }

  std::int64_t normal_minutes(double mean_min, double sd_min) {
    const double x = std::normal_distribution<double>(mean_min, sd_min)(rng);
    return 60LL * static_cast<std::int64_t>(std::llround(x));
  }

  int poisson(double rate) {
    if (rate <= 0) return 0;
    return std::poisson_distribution<int>(rate)(rng);
  }

  double place_duration_minutes(int place, double cap_min) {
    const Place& p = world.places.at(place);
    const CategoryParams cp =
        world.config.params_for(world.places.taxonomy().name(p.category));
    const double median =
        cp.median_minutes * world.place_dur_mult[static_cast<std::size_t>(place)];
    double d = std::lognormal_distribution<double>(std::log(median), cp.sigma)(rng);
    if (cap_min > 0) d = std::min(d, cap_min);
    return std::max(5.0, std::round(d));
  }

  double venue_weight_base(int venue) {
    const Place& p = world.places.at(venue);
    const Place& h = world.places.at(home);
    const double dist = PlaceTable::distance_km(p, h);
    return taste[static_cast<std::size_t>(p.category)] *
           std::exp(-dist / world.config.locality_km);
  }

  // context multiplier from the venue's attribute effects
  double context_mult(int venue, std::int64_t arrival) {
    double m = 1.0;
    const int hour = static_cast<int>(
        floor_mod(arrival + world.config.utc_offset_seconds, 86400) / 3600);
    const int dow = day_of_week(arrival, world.config.utc_offset_seconds);
    const bool weekend = dow == 0 || dow == 6;
    const bool has_recent_venue =
        last_venue_category >= 0 && arrival - last_venue_arrival <= 4 * 3600;
    for (const PlaceEffect& e : world.effects[static_cast<std::size_t>(venue)]) {
      switch (e.channel) {
        case Channel::duration_shift:
          break;
        case Channel::arrival_shift:
          m *= (hour >= e.band_start && hour < e.band_end) ? e.up : e.down;
          break;
        case Channel::weekend_shift:
          m *= weekend ? e.up : e.down;
          break;
        case Channel::prev_category_affinity:
          if (has_recent_venue && last_venue_category == e.affinity_category) m *= e.up;
          m *= 1.0 + e.taste_gain * taste_pct[static_cast<std::size_t>(e.affinity_category)];
          break;
        case Channel::next_category_affinity:
          m *= 1.0 + e.taste_gain * taste_pct[static_cast<std::size_t>(e.affinity_category)];
          break;
      }
    }
    return m;
  }

  int choose_weighted(const std::vector<int>& candidates,
                      const std::vector<double>& weights) {
    double total = 0;
    for (double w : weights) total += w;
    if (total <= 0) return candidates[static_cast<std::size_t>(
        std::uniform_int_distribution<int>(0, static_cast<int>(candidates.size()) - 1)(rng))];
    double u = unit() * total;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      u -= weights[i];
      if (u <= 0) return candidates[i];
    }
    return candidates.back();
  }

  int choose_venue(std::int64_t arrival) {
    static thread_local std::vector<double> weights;
    if (forced_attr >= 0) {
      const auto& pool = world.attr_positives[static_cast<std::size_t>(forced_attr)];
      forced_attr = -1;
      forced_category = -1;
      if (!pool.empty()) {
        weights.resize(pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i)
          weights[i] = venue_weight_base(pool[i]);
        return choose_weighted(pool, weights);
      }
    }
    if (forced_category >= 0) {
      static thread_local std::vector<int> pool;
      pool.clear();
      for (int v : world.venues)
        if (world.places.at(v).category == forced_category) pool.push_back(v);
      forced_category = -1;
      if (!pool.empty()) {
        weights.resize(pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i)
          weights[i] = venue_weight_base(pool[i]);
        return choose_weighted(pool, weights);
      }
    }
    weights.resize(familiar.size());
    for (std::size_t i = 0; i < familiar.size(); ++i)
      weights[i] = base_w[i] * context_mult(familiar[i], arrival);
    return choose_weighted(familiar, weights);
  }

  void emit(int place, std::int64_t arrival, double duration_min) {
    out.push_back(RawEvent{static_cast<std::int32_t>(place), arrival, duration_min});
  }

  // completing a venue visit may force the next outing
  void after_venue_visit(int venue, std::int64_t arrival) {
    last_venue_arrival = arrival;
    last_venue_category = world.places.at(venue).category;
    forced_attr = -1;
    forced_category = -1;
    for (const PlaceEffect& e : world.effects[static_cast<std::size_t>(venue)])
      if (e.channel == Channel::next_category_affinity && e.force_prob > 0 &&
          unit() < e.force_prob) {
        forced_category = e.affinity_category;
        return;
      }
    for (const auto& [attr, prob] :
         world.prev_triggers[static_cast<std::size_t>(last_venue_category)])
      if (unit() < prob) {
        forced_attr = attr;
        return;
      }
  }

  // Runs `n` venue outings starting after `cursor`; returns the new cursor
  // (departure of the last visit). A pending forced outing appends at most one
  // extra visit; forced state never outlives the block.
  std::int64_t outings(std::int64_t cursor, int n, std::int64_t day_cap,
                       double cap_min = 420) {
    int k = 0;
    while (k < n || forced_attr >= 0 || forced_category >= 0) {
      const bool extra = k >= n;  // forced bonus outing past the planned count
      const std::int64_t travel = extra ? minutes(8, 25) : minutes(8, 35);
      const std::int64_t arrival = cursor + travel;
      if (arrival > day_cap) break;
      const int venue = choose_venue(arrival);
      const double dur = place_duration_minutes(venue, cap_min);
      emit(venue, arrival, dur);
      after_venue_visit(venue, arrival);
      cursor = arrival + static_cast<std::int64_t>(dur) * 60;
      ++k;
      if (extra) break;  // at most one bonus per block
    }
    forced_attr = -1;
    forced_category = -1;
    return cursor;
  }

  void simulate() {
    const WorldConfig& cfg = world.config;
    pending_home_arrival = cfg.start_unix;
    const std::int64_t end = cfg.start_unix + 86400LL * cfg.n_days;
    for (int d = 0; d < cfg.n_days; ++d) {
      const std::int64_t day0 = cfg.start_unix + 86400LL * d;
      const std::int64_t day_cap = day0 + 86400 - 30 * 60;  // last start 23:30
      const int dow = day_of_week(day0, cfg.utc_offset_seconds);
      const bool weekday = dow >= 1 && dow <= 5;
      std::int64_t cursor;
      if (weekday) {
        const std::int64_t lo = pending_home_arrival + 30 * 60;
        const std::int64_t leave = std::clamp(
            day0 + normal_minutes(7 * 60 + 30, 20), lo, std::max(lo, day0 + 11 * 3600));
        emit(home, pending_home_arrival,
             static_cast<double>(leave - pending_home_arrival) / 60.0);
        const std::int64_t work_arr = leave + minutes(8, 35);
        const std::int64_t work_end =
            std::max(day0 + normal_minutes(17 * 60, 30), work_arr + 3600);
        if (unit() < cfg.lunch_prob) {
          const std::int64_t noon =
              std::max(day0 + normal_minutes(12 * 60, 15), work_arr + 30 * 60);
          emit(work, work_arr, static_cast<double>(noon - work_arr) / 60.0);
          cursor = outings(noon, 1, day_cap, 75);
          const std::int64_t back = cursor + minutes(8, 35);
          if (back + 5 * 60 < work_end) {
            emit(work, back, static_cast<double>(work_end - back) / 60.0);
            cursor = work_end;
          }
        } else {
          emit(work, work_arr, static_cast<double>(work_end - work_arr) / 60.0);
          cursor = work_end;
        }
        cursor = outings(cursor, poisson(cfg.weekday_evening_rate), day_cap);
        pending_home_arrival = cursor + minutes(8, 35);
      } else {
        const std::int64_t lo = pending_home_arrival + 30 * 60;
        const std::int64_t leave = std::clamp(
            day0 + normal_minutes(10 * 60, 60), lo, std::max(lo, day0 + 14 * 3600));
        emit(home, pending_home_arrival,
             static_cast<double>(leave - pending_home_arrival) / 60.0);
        cursor = outings(leave, poisson(cfg.weekend_day_rate), day_cap);
        const int evening_n = poisson(cfg.weekend_evening_rate);
        const std::int64_t home_arr = cursor + minutes(8, 35);
        if (evening_n > 0 && home_arr + 30 * 60 <= day0 + 22 * 3600) {
          const std::int64_t evening_leave =
              std::clamp(day0 + normal_minutes(19 * 60, 45), home_arr + 30 * 60,
                         day0 + 22 * 3600);
          emit(home, home_arr, static_cast<double>(evening_leave - home_arr) / 60.0);
          cursor = outings(evening_leave, evening_n, day_cap);
          pending_home_arrival = cursor + minutes(8, 35);
        } else {
          pending_home_arrival = home_arr;
        }
      }
      // context resets overnight
      last_venue_category = -1;
    }
    const std::int64_t final_leave =
        std::max(end + 8 * 3600, pending_home_arrival + 30 * 60);
    emit(home, pending_home_arrival,
         static_cast<double>(final_leave - pending_home_arrival) / 60.0);
  }
};

}  // namespace synth_detail

inline VisitLog simulate_visits(const World& world, int workers = 1) {
  const WorldConfig& cfg = world.config;
  std::vector<std::vector<synth_detail::RawEvent>> per_person(
      static_cast<std::size_t>(cfg.n_people));
  parallel_for(static_cast<std::size_t>(cfg.n_people), workers, [&](std::size_t p) {
    synth_detail::PersonSim sim(world);
    sim.rng = make_rng(cfg.rng_seed, "synthworld.person", p);
    sim.home = world.homes[p % world.homes.size()];
    sim.work = world.works[p % world.works.size()];
    const int n_cat = world.places.taxonomy().size();
    sim.taste.resize(static_cast<std::size_t>(n_cat), 1.0);
    sim.taste_pct.resize(static_cast<std::size_t>(n_cat), 0.5);
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    for (int c = 0; c < n_cat; ++c) {
      const double z = stdnorm(sim.rng);
      sim.taste[static_cast<std::size_t>(c)] = std::exp(z * cfg.taste_sigma);
      sim.taste_pct[static_cast<std::size_t>(c)] = synth_detail::normal_pctile(z);
    }
    // familiar venue pool: weighted sample without replacement
    // (smallest exponential race keys win)
    const std::size_t k =
        std::min(static_cast<std::size_t>(cfg.familiar_set_size), world.venues.size());
    std::vector<std::pair<double, int>> keyed;
    keyed.reserve(world.venues.size());
    for (int v : world.venues) {
      const double w = sim.venue_weight_base(v);
      const double u = std::uniform_real_distribution<double>(
          std::numeric_limits<double>::min(), 1.0)(sim.rng);
      keyed.emplace_back(-std::log(u) / std::max(w, 1e-300), v);
    }
    std::nth_element(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(k) - 1,
                     keyed.end());
    keyed.resize(k);
    std::sort(keyed.begin(), keyed.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    sim.familiar.reserve(k);
    sim.base_w.reserve(k);
    for (const auto& [key, v] : keyed) {
      sim.familiar.push_back(v);
      sim.base_w.push_back(sim.venue_weight_base(v));
    }
    sim.simulate();
    per_person[p] = std::move(sim.out);
  });

  std::vector<VisitEvent> events;
  std::vector<std::string> person_ids;
  std::size_t total = 0;
  for (const auto& v : per_person) total += v.size();
  events.reserve(total);
  person_ids.reserve(static_cast<std::size_t>(cfg.n_people));
  for (int p = 0; p < cfg.n_people; ++p) {
    person_ids.push_back(synth_detail::padded_id('p', p, cfg.n_people));
    for (const synth_detail::RawEvent& e : per_person[static_cast<std::size_t>(p)]) {
      VisitEvent ev;
      ev.person = p;
      ev.place = e.place;
      ev.arrival = e.arrival;
      ev.duration_min = e.duration_min;
      events.push_back(ev);
    }
  }
  return VisitLog::from_sorted(std::move(events), std::move(person_ids));
}

// ---------------------------------------------------------------------------
// Signal report: the empirical separation each planted channel actually
// achieved in an emitted log, aggregated over visits to positive vs negative
// places. Acceptance thresholds reference these numbers.
// ---------------------------------------------------------------------------

struct SignalRow {
  std::string attribute;
  std::string channel;
  std::string statistic;
  double positive = 0, negative = 0;

  double separation() const { return positive - negative; }
};

inline std::vector<SignalRow> make_signal_report(const World& world,
                                                 const VisitLog& log) {
  const std::int64_t off = world.config.utc_offset_seconds;
  std::vector<SignalRow> rows;
  for (std::size_t a = 0; a < world.config.attributes.size(); ++a) {
    const AttributeSpec& spec = world.config.attributes[a];
    const LabelTable& labels = world.labels[a];
    for (Channel ch : spec.channels) {
      SignalRow row;
      row.attribute = spec.name;
      row.channel = channel_tag(ch);
      double sum[2] = {0, 0};
      double n[2] = {0, 0};
      const int affinity = spec.params.affinity_category.empty()
                               ? -1
                               : world.places.taxonomy().find(spec.params.affinity_category);
      for (const VisitEvent& ev : log.events()) {
        auto it = labels.entries.find(ev.place);
        if (it == labels.entries.end()) continue;
        const int side = it->second ? 1 : 0;
        n[side] += 1;
        switch (ch) {
          case Channel::duration_shift:
            row.statistic = "mean_duration_minutes";
            sum[side] += ev.duration_min;
            break;
          case Channel::arrival_shift: {
            row.statistic = "band_arrival_fraction";
            const int hour =
                static_cast<int>(floor_mod(ev.arrival + off, 86400) / 3600);
            sum[side] += (hour >= spec.params.band_start_hour &&
                          hour < spec.params.band_end_hour)
                             ? 1
                             : 0;
            break;
          }
          case Channel::weekend_shift: {
            row.statistic = "weekend_arrival_fraction";
            const int dow = day_of_week(ev.arrival, off);
            sum[side] += (dow == 0 || dow == 6) ? 1 : 0;
            break;
          }
          case Channel::prev_category_affinity: {
            row.statistic = "prev_affinity_fraction_4h";
            bool hit = false;
            const auto span = log.person_events(ev.person);
            auto it = std::lower_bound(span.begin(), span.end(), ev.arrival - 4 * 3600,
                                       [](const VisitEvent& e, std::int64_t t) {
                                         return e.arrival < t;
                                       });
            for (; it != span.end() && it->arrival < ev.arrival; ++it)
              if (world.places.at(it->place).category == affinity) hit = true;
            sum[side] += hit ? 1 : 0;
            break;
          }
          case Channel::next_category_affinity: {
            row.statistic = "next_affinity_fraction_4h";
            bool hit = false;
            const std::int64_t dep = ev.departure();
            const auto span = log.person_events(ev.person);
            auto it = std::lower_bound(span.begin(), span.end(), dep,
                                       [](const VisitEvent& e, std::int64_t t) {
                                         return e.arrival < t;
                                       });
            for (; it != span.end() && it->arrival - dep <= 4 * 3600; ++it)
              if (world.places.at(it->place).category == affinity) hit = true;
            sum[side] += hit ? 1 : 0;
            break;
          }
        }
      }
      row.positive = n[1] > 0 ? sum[1] / n[1] : 0;
      row.negative = n[0] > 0 ? sum[0] / n[0] : 0;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline void write_signal_report(const std::filesystem::path& path,
                                const std::vector<SignalRow>& rows) {
  CsvWriter w(path);
  w.line("attribute,channel,statistic,positive_value,negative_value,separation");
  for (const SignalRow& r : rows)
    w.row(r.attribute, r.channel, r.statistic, fmt_double(r.positive),
          fmt_double(r.negative), fmt_double(r.separation()));
  w.close();
}

}  // namespace placesense
