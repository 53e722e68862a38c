#pragma once

// Pipeline commands behind the CLI: each loads its inputs, delegates to a
// module, writes artifacts plus a manifest into the run directory. Everything
// here is deterministic given (config, seed) — worker count and output
// location never leak into file contents.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "placesense/domain.hpp"
#include "placesense/embedder.hpp"
#include "placesense/evaluator.hpp"
#include "placesense/featurizer.hpp"
#include "placesense/learner.hpp"
#include "placesense/synthworld.hpp"

namespace placesense {

using json = nlohmann::json;

inline constexpr const char* kToolName = "placesense";
inline constexpr const char* kToolVersion = "1.0.0";

// ---------------------------------------------------------------------------
// RunConfig: one structured config file with per-command sections; flags
// override file values.
// ---------------------------------------------------------------------------

struct RunConfig {
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out_dir = "run";
  std::string source = "steps";  // steps | embedding | combined
  std::int64_t utc_offset_seconds = 0;

  // input paths (outputs always land in out_dir)
  std::string places_path;
  std::string visits_path;
  std::vector<std::string> labels_paths;
  std::string features_path;            // triplet CSV from `featurize`
  std::string embedding_features_path;  // triplet CSV from `embed`
  std::string models_dir;               // where `train` put model files

  WorldConfig world;
  bool has_world = false;
  bool world_signal_report = false;  // also emit per-channel signal stats

  FeaturizerConfig featurizer;

  // embedder section
  int covisit_cap = 10;
  double covisit_radius_km = 2.0;
  double covisit_w0 = 0.01;
  WalsOptions wals;

  // learner section
  TrainConfig train_config;
  int select_k = 256;
  int mi_bins = 8;
  int top_n = 25;

  // evaluator section
  int k_folds = 10;
  bool merge_transitions = true;

  void validate() const {
    require(workers >= 1, "workers must be >= 1");
    require(source == "steps" || source == "embedding" || source == "combined",
            "source must be one of steps|embedding|combined, got '", source, "'");
    require(!out_dir.empty(), "output directory must be non-empty");
    require(select_k >= 1, "learner.select_k must be >= 1");
    require(mi_bins >= 2, "learner.mi_bins must be >= 2");
    require(top_n >= 1, "learner.top_n must be >= 1");
    require(k_folds >= 2, "evaluator.k_folds must be >= 2");
    require(covisit_cap >= 1, "embedder.cap must be >= 1");
    require(covisit_radius_km > 0, "embedder.radius_km must be positive");
    require(covisit_w0 >= 0, "embedder.w0 must be non-negative");
    featurizer.validate();
    train_config.validate();
    if (has_world) world.validate();
  }
};

namespace config_detail {

inline void check_keys(const json& obj, const char* section,
                       std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) ok = true;
    require(ok, "unknown config key '", item.key(), "' in section '", section, "'");
  }
}

inline double as_double(const json& v, const char* where) {
  require(v.is_number(), "config value '", where, "' must be a number");
  return v.get<double>();
}

inline std::int64_t as_int(const json& v, const char* where) {
  require(v.is_number_integer(), "config value '", where, "' must be an integer");
  return v.get<std::int64_t>();
}

inline std::uint64_t as_seed(const json& v, const char* where) {
  // full uint64 range: large derived seeds overflow int64 representations
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  require(v.is_number_integer() && v.get<std::int64_t>() >= 0, "config value '",
          where, "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::string as_string(const json& v, const char* where) {
  require(v.is_string(), "config value '", where, "' must be a string");
  return v.get<std::string>();
}

inline bool as_bool(const json& v, const char* where) {
  require(v.is_boolean(), "config value '", where, "' must be true or false");
  return v.get<bool>();
}

inline AttributeSpec parse_attribute(const json& j) {
  require(j.is_object(), "each entry of world.attributes must be an object");
  check_keys(j, "world.attributes[]",
             {"name", "base_rate", "strength", "channels", "params"});
  AttributeSpec spec;
  require(j.contains("name"), "attribute entry missing 'name'");
  spec.name = as_string(j.at("name"), "attributes[].name");
  if (j.contains("base_rate")) spec.base_rate = as_double(j.at("base_rate"), "base_rate");
  if (j.contains("strength")) spec.strength = as_double(j.at("strength"), "strength");
  require(j.contains("channels") && j.at("channels").is_array(),
          "attribute '", spec.name, "' needs a channels array");
  for (const json& c : j.at("channels"))
    spec.channels.push_back(channel_from_tag(as_string(c, "channels[]")));
  if (j.contains("params")) {
    const json& p = j.at("params");
    require(p.is_object(), "attributes[].params must be an object");
    check_keys(p, "world.attributes[].params",
               {"duration_multiplier", "band_start_hour", "band_end_hour",
                "choice_boost", "choice_damp", "affinity_category", "force_prob",
                "taste_link_gain"});
    ChannelParams& cp = spec.params;
    if (p.contains("duration_multiplier"))
      cp.duration_multiplier = as_double(p.at("duration_multiplier"), "duration_multiplier");
    if (p.contains("band_start_hour"))
      cp.band_start_hour = static_cast<int>(as_int(p.at("band_start_hour"), "band_start_hour"));
    if (p.contains("band_end_hour"))
      cp.band_end_hour = static_cast<int>(as_int(p.at("band_end_hour"), "band_end_hour"));
    if (p.contains("choice_boost")) cp.choice_boost = as_double(p.at("choice_boost"), "choice_boost");
    if (p.contains("choice_damp")) cp.choice_damp = as_double(p.at("choice_damp"), "choice_damp");
    if (p.contains("affinity_category"))
      cp.affinity_category = as_string(p.at("affinity_category"), "affinity_category");
    if (p.contains("force_prob")) cp.force_prob = as_double(p.at("force_prob"), "force_prob");
    if (p.contains("taste_link_gain"))
      cp.taste_link_gain = as_double(p.at("taste_link_gain"), "taste_link_gain");
  }
  return spec;
}

inline void parse_world(const json& j, WorldConfig& w) {
  require(j.is_object(), "'world' must be an object");
  check_keys(j, "world",
             {"n_places", "n_people", "n_days", "category_mix", "category_params",
              "attributes", "world_size_km", "locality_km", "taste_sigma",
              "home_occupancy", "work_occupancy", "familiar_set_size", "lunch_prob",
              "weekday_evening_rate", "weekend_day_rate", "weekend_evening_rate",
              "start_unix"});
  if (j.contains("n_places")) w.n_places = static_cast<int>(as_int(j.at("n_places"), "world.n_places"));
  if (j.contains("n_people")) w.n_people = static_cast<int>(as_int(j.at("n_people"), "world.n_people"));
  if (j.contains("n_days")) w.n_days = static_cast<int>(as_int(j.at("n_days"), "world.n_days"));
  if (j.contains("category_mix")) {
    require(j.at("category_mix").is_object(), "world.category_mix must be an object");
    for (const auto& item : j.at("category_mix").items())
      w.category_mix[item.key()] = as_double(item.value(), "category_mix value");
  }
  if (j.contains("category_params")) {
    require(j.at("category_params").is_object(), "world.category_params must be an object");
    for (const auto& item : j.at("category_params").items()) {
      require(item.value().is_object(), "world.category_params entries must be objects");
      check_keys(item.value(), "world.category_params[]", {"median_minutes", "sigma"});
      CategoryParams cp;
      if (item.value().contains("median_minutes"))
        cp.median_minutes = as_double(item.value().at("median_minutes"), "median_minutes");
      if (item.value().contains("sigma"))
        cp.sigma = as_double(item.value().at("sigma"), "sigma");
      w.category_params[item.key()] = cp;
    }
  }
  if (j.contains("attributes")) {
    require(j.at("attributes").is_array(), "world.attributes must be an array");
    for (const json& a : j.at("attributes")) w.attributes.push_back(parse_attribute(a));
  }
  if (j.contains("world_size_km")) w.world_size_km = as_double(j.at("world_size_km"), "world_size_km");
  if (j.contains("locality_km")) w.locality_km = as_double(j.at("locality_km"), "locality_km");
  if (j.contains("taste_sigma")) w.taste_sigma = as_double(j.at("taste_sigma"), "taste_sigma");
  if (j.contains("home_occupancy"))
    w.home_occupancy = static_cast<int>(as_int(j.at("home_occupancy"), "home_occupancy"));
  if (j.contains("work_occupancy"))
    w.work_occupancy = static_cast<int>(as_int(j.at("work_occupancy"), "work_occupancy"));
  if (j.contains("familiar_set_size"))
    w.familiar_set_size = static_cast<int>(as_int(j.at("familiar_set_size"), "familiar_set_size"));
  if (j.contains("lunch_prob")) w.lunch_prob = as_double(j.at("lunch_prob"), "lunch_prob");
  if (j.contains("weekday_evening_rate"))
    w.weekday_evening_rate = as_double(j.at("weekday_evening_rate"), "weekday_evening_rate");
  if (j.contains("weekend_day_rate"))
    w.weekend_day_rate = as_double(j.at("weekend_day_rate"), "weekend_day_rate");
  if (j.contains("weekend_evening_rate"))
    w.weekend_evening_rate = as_double(j.at("weekend_evening_rate"), "weekend_evening_rate");
  if (j.contains("start_unix")) w.start_unix = as_int(j.at("start_unix"), "start_unix");
}

inline json world_to_json(const WorldConfig& w) {
  json j;
  j["n_places"] = w.n_places;
  j["n_people"] = w.n_people;
  j["n_days"] = w.n_days;
  json mix = json::object();
  for (const auto& [name, p] : w.category_mix) mix[name] = p;
  j["category_mix"] = mix;
  json params = json::object();
  for (const auto& [name, cp] : w.category_params)
    params[name] = {{"median_minutes", cp.median_minutes}, {"sigma", cp.sigma}};
  j["category_params"] = params;
  json attrs = json::array();
  for (const AttributeSpec& a : w.attributes) {
    json ja;
    ja["name"] = a.name;
    ja["base_rate"] = a.base_rate;
    ja["strength"] = a.strength;
    json channels = json::array();
    for (Channel c : a.channels) channels.push_back(channel_tag(c));
    ja["channels"] = channels;
    ja["params"] = {{"duration_multiplier", a.params.duration_multiplier},
                    {"band_start_hour", a.params.band_start_hour},
                    {"band_end_hour", a.params.band_end_hour},
                    {"choice_boost", a.params.choice_boost},
                    {"choice_damp", a.params.choice_damp},
                    {"affinity_category", a.params.affinity_category},
                    {"force_prob", a.params.force_prob},
                    {"taste_link_gain", a.params.taste_link_gain}};
    attrs.push_back(ja);
  }
  j["attributes"] = attrs;
  j["world_size_km"] = w.world_size_km;
  j["locality_km"] = w.locality_km;
  j["taste_sigma"] = w.taste_sigma;
  j["home_occupancy"] = w.home_occupancy;
  j["work_occupancy"] = w.work_occupancy;
  j["familiar_set_size"] = w.familiar_set_size;
  j["lunch_prob"] = w.lunch_prob;
  j["weekday_evening_rate"] = w.weekday_evening_rate;
  j["weekend_day_rate"] = w.weekend_day_rate;
  j["weekend_evening_rate"] = w.weekend_evening_rate;
  j["start_unix"] = w.start_unix;
  return j;
}

}  // namespace config_detail

inline RunConfig load_run_config(const std::filesystem::path& path) {
  using namespace config_detail;
  RunConfig cfg;
  json j;
  try {
    std::ifstream in(path);
    if (!in) fail("cannot open config file: ", path.string());
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail("cannot parse config file ", path.string(), ": ", e.what());
  }
  require(j.is_object(), "config root must be a JSON object");
  check_keys(j, "<root>",
             {"seed", "workers", "out_dir", "source", "utc_offset_seconds", "paths",
              "world", "featurizer", "embedder", "learner", "evaluator"});
  if (j.contains("seed")) cfg.seed = as_seed(j.at("seed"), "seed");
  if (j.contains("workers")) cfg.workers = static_cast<int>(as_int(j.at("workers"), "workers"));
  if (j.contains("out_dir")) cfg.out_dir = as_string(j.at("out_dir"), "out_dir");
  if (j.contains("source")) cfg.source = as_string(j.at("source"), "source");
  if (j.contains("utc_offset_seconds"))
    cfg.utc_offset_seconds = as_int(j.at("utc_offset_seconds"), "utc_offset_seconds");

  if (j.contains("paths")) {
    const json& p = j.at("paths");
    require(p.is_object(), "'paths' must be an object");
    check_keys(p, "paths",
               {"places", "visits", "labels", "features", "embedding_features",
                "models"});
    if (p.contains("places")) cfg.places_path = as_string(p.at("places"), "paths.places");
    if (p.contains("visits")) cfg.visits_path = as_string(p.at("visits"), "paths.visits");
    if (p.contains("labels")) {
      const json& l = p.at("labels");
      if (l.is_array())
        for (const json& one : l)
          cfg.labels_paths.push_back(as_string(one, "paths.labels[]"));
      else
        cfg.labels_paths.push_back(as_string(l, "paths.labels"));
    }
    if (p.contains("features")) cfg.features_path = as_string(p.at("features"), "paths.features");
    if (p.contains("embedding_features"))
      cfg.embedding_features_path = as_string(p.at("embedding_features"), "paths.embedding_features");
    if (p.contains("models")) cfg.models_dir = as_string(p.at("models"), "paths.models");
  }

  if (j.contains("world")) {
    const json& w = j.at("world");
    if (w.is_object() && w.contains("signal_report")) {
      cfg.world_signal_report = as_bool(w.at("signal_report"), "world.signal_report");
      json rest = w;
      rest.erase("signal_report");
      parse_world(rest, cfg.world);
    } else {
      parse_world(w, cfg.world);
    }
    // resolve the default mix here so manifests record what the run used
    if (cfg.world.category_mix.empty())
      cfg.world.category_mix = WorldConfig::default_category_mix();
    cfg.has_world = true;
  }

  if (j.contains("featurizer")) {
    const json& f = j.at("featurizer");
    require(f.is_object(), "'featurizer' must be an object");
    check_keys(f, "featurizer",
               {"duration_bin_edges", "transition_windows", "min_visitors"});
    if (f.contains("duration_bin_edges")) {
      require(f.at("duration_bin_edges").is_array(), "featurizer.duration_bin_edges must be an array");
      cfg.featurizer.duration_bin_edges.clear();
      for (const json& e : f.at("duration_bin_edges"))
        cfg.featurizer.duration_bin_edges.push_back(as_double(e, "duration_bin_edges[]"));
    }
    if (f.contains("transition_windows")) {
      require(f.at("transition_windows").is_array(), "featurizer.transition_windows must be an array");
      cfg.featurizer.transition_windows.clear();
      for (const json& e : f.at("transition_windows"))
        cfg.featurizer.transition_windows.push_back(
            static_cast<int>(as_int(e, "transition_windows[]")));
    }
    if (f.contains("min_visitors"))
      cfg.featurizer.min_visitors = static_cast<int>(as_int(f.at("min_visitors"), "min_visitors"));
  }

  if (j.contains("embedder")) {
    const json& e = j.at("embedder");
    require(e.is_object(), "'embedder' must be an object");
    check_keys(e, "embedder",
               {"rank", "lambda", "max_sweeps", "tol", "cap", "radius_km", "w0"});
    if (e.contains("rank")) cfg.wals.rank = static_cast<int>(as_int(e.at("rank"), "embedder.rank"));
    if (e.contains("lambda")) cfg.wals.lambda = as_double(e.at("lambda"), "embedder.lambda");
    if (e.contains("max_sweeps"))
      cfg.wals.max_sweeps = static_cast<int>(as_int(e.at("max_sweeps"), "embedder.max_sweeps"));
    if (e.contains("tol")) cfg.wals.tol = as_double(e.at("tol"), "embedder.tol");
    if (e.contains("cap")) cfg.covisit_cap = static_cast<int>(as_int(e.at("cap"), "embedder.cap"));
    if (e.contains("radius_km")) cfg.covisit_radius_km = as_double(e.at("radius_km"), "embedder.radius_km");
    if (e.contains("w0")) cfg.covisit_w0 = as_double(e.at("w0"), "embedder.w0");
  }

  if (j.contains("learner")) {
    const json& l = j.at("learner");
    require(l.is_object(), "'learner' must be an object");
    check_keys(l, "learner",
               {"loss", "l2", "learning_rate", "epochs", "select_k", "mi_bins", "top_n"});
    if (l.contains("loss")) cfg.train_config.loss = loss_from_tag(as_string(l.at("loss"), "learner.loss"));
    if (l.contains("l2")) cfg.train_config.l2 = as_double(l.at("l2"), "learner.l2");
    if (l.contains("learning_rate"))
      cfg.train_config.learning_rate = as_double(l.at("learning_rate"), "learner.learning_rate");
    if (l.contains("epochs"))
      cfg.train_config.epochs = static_cast<int>(as_int(l.at("epochs"), "learner.epochs"));
    if (l.contains("select_k")) cfg.select_k = static_cast<int>(as_int(l.at("select_k"), "learner.select_k"));
    if (l.contains("mi_bins")) cfg.mi_bins = static_cast<int>(as_int(l.at("mi_bins"), "learner.mi_bins"));
    if (l.contains("top_n")) cfg.top_n = static_cast<int>(as_int(l.at("top_n"), "learner.top_n"));
  }

  if (j.contains("evaluator")) {
    const json& e = j.at("evaluator");
    require(e.is_object(), "'evaluator' must be an object");
    check_keys(e, "evaluator", {"k_folds", "merge_transitions"});
    if (e.contains("k_folds")) cfg.k_folds = static_cast<int>(as_int(e.at("k_folds"), "evaluator.k_folds"));
    if (e.contains("merge_transitions"))
      cfg.merge_transitions = as_bool(e.at("merge_transitions"), "evaluator.merge_transitions");
  }
  return cfg;
}

// Canonical resolved-config JSON. Worker count and output directory are
// execution details, deliberately excluded so reruns at different parallelism
// or locations produce byte-identical artifacts.
inline json canonical_config_json(const RunConfig& cfg) {
  using namespace config_detail;
  json j;
  j["seed"] = cfg.seed;
  j["source"] = cfg.source;
  j["utc_offset_seconds"] = cfg.utc_offset_seconds;
  json paths = json::object();
  if (!cfg.places_path.empty()) paths["places"] = cfg.places_path;
  if (!cfg.visits_path.empty()) paths["visits"] = cfg.visits_path;
  if (!cfg.labels_paths.empty()) paths["labels"] = cfg.labels_paths;
  if (!cfg.features_path.empty()) paths["features"] = cfg.features_path;
  if (!cfg.embedding_features_path.empty())
    paths["embedding_features"] = cfg.embedding_features_path;
  if (!cfg.models_dir.empty()) paths["models"] = cfg.models_dir;
  j["paths"] = paths;
  if (cfg.has_world) {
    j["world"] = world_to_json(cfg.world);
    j["world"]["signal_report"] = cfg.world_signal_report;
  }
  j["featurizer"] = {{"duration_bin_edges", cfg.featurizer.duration_bin_edges},
                     {"transition_windows", cfg.featurizer.transition_windows},
                     {"min_visitors", cfg.featurizer.min_visitors}};
  j["embedder"] = {{"rank", cfg.wals.rank},     {"lambda", cfg.wals.lambda},
                   {"max_sweeps", cfg.wals.max_sweeps}, {"tol", cfg.wals.tol},
                   {"cap", cfg.covisit_cap},    {"radius_km", cfg.covisit_radius_km},
                   {"w0", cfg.covisit_w0}};
  j["learner"] = {{"loss", loss_tag(cfg.train_config.loss)},
                  {"l2", cfg.train_config.l2},
                  {"learning_rate", cfg.train_config.learning_rate},
                  {"epochs", cfg.train_config.epochs},
                  {"select_k", cfg.select_k},
                  {"mi_bins", cfg.mi_bins},
                  {"top_n", cfg.top_n}};
  j["evaluator"] = {{"k_folds", cfg.k_folds},
                    {"merge_transitions", cfg.merge_transitions}};
  return j;
}

inline std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

inline void write_manifest(const RunConfig& cfg, const std::string& command,
                           std::vector<std::string> inputs,
                           std::vector<std::string> outputs) {
  const json resolved = canonical_config_json(cfg);
  std::sort(inputs.begin(), inputs.end());
  std::sort(outputs.begin(), outputs.end());
  json m;
  m["tool"] = kToolName;
  m["version"] = kToolVersion;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["config_hash"] = fnv1a64_hex(resolved.dump());
  m["config"] = resolved;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  const std::filesystem::path path =
      std::filesystem::path(cfg.out_dir) / concat("manifest_", command, ".json");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot open file for writing: ", path.string());
  out << m.dump(2) << '\n';
  out.close();
  if (!out) fail("write failed: ", path.string());
}

namespace cmd_detail {

inline std::filesystem::path ensure_out_dir(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail("cannot create output directory ", dir.string(), ": ", ec.message());
  return dir;
}

inline PlaceTable need_places(const RunConfig& cfg, const char* cmd) {
  require(!cfg.places_path.empty(), cmd, " requires paths.places in the config");
  return load_places(cfg.places_path);
}

inline VisitLog need_visits(const RunConfig& cfg, const PlaceTable& places,
                            const char* cmd) {
  require(!cfg.visits_path.empty(), cmd, " requires paths.visits in the config");
  return load_visit_log(cfg.visits_path, places);
}

inline std::vector<LabelTable> need_labels(const RunConfig& cfg,
                                           const PlaceTable& places, const char* cmd) {
  require(!cfg.labels_paths.empty(), cmd, " requires paths.labels in the config");
  std::vector<LabelTable> all;
  std::set<std::string> seen;
  for (const std::string& path : cfg.labels_paths) {
    for (LabelTable& t : load_labels(path, places)) {
      require(seen.insert(t.attribute_name).second, "attribute '", t.attribute_name,
              "' appears in more than one labels file");
      all.push_back(std::move(t));
    }
  }
  return all;
}

inline std::filesystem::path feature_sidecar(const std::filesystem::path& triplet) {
  std::filesystem::path p = triplet;
  p.replace_extension();  // features.csv -> features
  p += ".columns.csv";
  return p;
}

// Feature matrix for the configured source; records which files were read.
inline FeatureMatrix load_source_matrix(const RunConfig& cfg, const char* cmd,
                                        std::vector<std::string>* inputs) {
  auto load_one = [&](const std::string& path, const char* which) {
    require(!path.empty(), cmd, " with source '", cfg.source, "' requires paths.",
            which, " in the config");
    if (inputs) {
      inputs->push_back(path);
      inputs->push_back(feature_sidecar(path).string());
    }
    return load_feature_matrix(path, feature_sidecar(path));
  };
  if (cfg.source == "steps") return load_one(cfg.features_path, "features");
  if (cfg.source == "embedding")
    return load_one(cfg.embedding_features_path, "embedding_features");
  FeatureMatrix steps = load_one(cfg.features_path, "features");
  FeatureMatrix emb = load_one(cfg.embedding_features_path, "embedding_features");
  return combine_sources(steps, emb).matrix;
}

inline EvalConfig eval_config(const RunConfig& cfg) {
  EvalConfig ec;
  ec.k_folds = cfg.k_folds;
  ec.select_k = cfg.select_k;
  ec.mi_bins = cfg.mi_bins;
  ec.train = cfg.train_config;
  ec.seed = cfg.seed;
  ec.workers = cfg.workers;
  return ec;
}

}  // namespace cmd_detail

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------
inline void cmd_simulate(const RunConfig& cfg) {
  using namespace cmd_detail;
  cfg.validate();
  require(cfg.has_world, "simulate requires a 'world' section in the config");
  const std::filesystem::path dir = ensure_out_dir(cfg);

  WorldConfig wc = cfg.world;
  wc.rng_seed = cfg.seed;
  wc.utc_offset_seconds = cfg.utc_offset_seconds;
  const World world = generate_world(wc);
  const VisitLog log = simulate_visits(world, cfg.workers);

  write_places(dir / "places.csv", world.places);
  write_visit_log(dir / "visits.csv", log, world.places);
  write_labels(dir / "labels.csv", world.labels, world.places);

  json truth;
  truth["seed"] = wc.rng_seed;
  truth["start_unix"] = wc.start_unix;
  truth["n_days"] = wc.n_days;
  truth["n_people"] = wc.n_people;
  truth["counts"] = {{"venues", world.venues.size()},
                     {"homes", world.homes.size()},
                     {"works", world.works.size()},
                     {"visits", log.events().size()}};
  json attrs = json::array();
  for (std::size_t a = 0; a < wc.attributes.size(); ++a) {
    const AttributeSpec& spec = wc.attributes[a];
    json ja;
    ja["name"] = spec.name;
    ja["base_rate"] = spec.base_rate;
    ja["strength"] = spec.strength;
    json channels = json::array();
    for (Channel c : spec.channels) channels.push_back(channel_tag(c));
    ja["channels"] = channels;
    ja["n_positive"] = world.labels[a].count(true);
    ja["n_negative"] = world.labels[a].count(false);
    json pos = json::array();
    for (int v : world.attr_positives[a]) pos.push_back(world.places.at(v).place_id);
    ja["positive_place_ids"] = pos;
    attrs.push_back(ja);
  }
  truth["attributes"] = attrs;
  {
    std::ofstream out(dir / "world_truth.json", std::ios::binary);
    if (!out) fail("cannot open file for writing: ", (dir / "world_truth.json").string());
    out << truth.dump(2) << '\n';
    out.close();
    if (!out) fail("write failed: ", (dir / "world_truth.json").string());
  }

  std::vector<std::string> outputs = {"places.csv", "visits.csv", "labels.csv",
                                      "world_truth.json"};
  if (cfg.world_signal_report) {
    write_signal_report(dir / "signal_report.csv", make_signal_report(world, log));
    outputs.push_back("signal_report.csv");
  }
  write_manifest(cfg, "simulate", {}, outputs);
}

// ---------------------------------------------------------------------------
// featurize
// ---------------------------------------------------------------------------
inline void cmd_featurize(const RunConfig& cfg) {
  using namespace cmd_detail;
  cfg.validate();
  const std::filesystem::path dir = ensure_out_dir(cfg);
  const PlaceTable places = need_places(cfg, "featurize");
  const VisitLog log = need_visits(cfg, places, "featurize");

  FeaturizerConfig fc = cfg.featurizer;
  fc.utc_offset_seconds = cfg.utc_offset_seconds;
  const FeatureMatrix m = featurize(log, places, fc, cfg.workers);
  save_feature_matrix(dir / "features.csv", dir / "features.columns.csv", m);
  write_manifest(cfg, "featurize", {cfg.places_path, cfg.visits_path},
                 {"features.csv", "features.columns.csv"});
}

// ---------------------------------------------------------------------------
// embed
// ---------------------------------------------------------------------------
inline void cmd_embed(const RunConfig& cfg) {
  using namespace cmd_detail;
  cfg.validate();
  const std::filesystem::path dir = ensure_out_dir(cfg);
  const PlaceTable places = need_places(cfg, "embed");
  const VisitLog log = need_visits(cfg, places, "embed");

  const CovisitMatrix covisit = build_covisit_matrix(
      log, places, cfg.covisit_cap, cfg.covisit_radius_km, cfg.covisit_w0);
  WalsOptions opt = cfg.wals;
  opt.seed = cfg.seed;
  opt.workers = cfg.workers;
  const EmbeddingFactors factors = wals_factorize(covisit, opt);

  write_factor_csv(dir / "person_factors.csv", "person_id", factors.person_ids,
                   factors.u, factors.rank);
  write_factor_csv(dir / "place_factors.csv", "place_id", factors.place_ids,
                   factors.v, factors.rank);
  {
    CsvWriter w(dir / "embedding_losses.csv");
    w.line("sweep,objective,display_objective");
    for (std::size_t s = 0; s < factors.sweep_losses.size(); ++s)
      w.row(s + 1, fmt_double(factors.sweep_losses[s]),
            fmt_double(factors.display_losses[s]));
    w.close();
  }
  const FeatureMatrix m = place_embedding_features(factors);
  save_feature_matrix(dir / "embedding_features.csv",
                      dir / "embedding_features.columns.csv", m);
  write_manifest(cfg, "embed", {cfg.places_path, cfg.visits_path},
                 {"person_factors.csv", "place_factors.csv", "embedding_losses.csv",
                  "embedding_features.csv", "embedding_features.columns.csv"});
}

// ---------------------------------------------------------------------------
// train: one model per labeled attribute on all labeled rows
// ---------------------------------------------------------------------------

inline void save_model(const std::filesystem::path& path, const LinearModel& model,
                       const std::string& source) {
  json j;
  j["attribute"] = model.attribute_name;
  j["source"] = source;
  j["loss"] = loss_tag(model.loss);
  j["features"] = model.feature_names;
  j["mean"] = model.mean;
  j["stdev"] = model.stdev;
  j["weights"] = model.weights;
  j["bias"] = model.bias;
  j["config"] = {{"l2", model.config.l2},
                 {"learning_rate", model.config.learning_rate},
                 {"epochs", model.config.epochs},
                 {"seed", model.config.seed}};
  j["epoch_losses"] = model.epoch_losses;
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot open file for writing: ", path.string());
  out << j.dump(2) << '\n';
  out.close();
  if (!out) fail("write failed: ", path.string());
}

inline LinearModel load_model(const std::filesystem::path& path) {
  using namespace config_detail;
  json j;
  try {
    std::ifstream in(path);
    if (!in) fail("cannot open model file: ", path.string());
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail("cannot parse model file ", path.string(), ": ", e.what());
  }
  LinearModel m;
  try {
    m.attribute_name = as_string(j.at("attribute"), "attribute");
    m.loss = loss_from_tag(as_string(j.at("loss"), "loss"));
    m.config.loss = m.loss;
    m.feature_names = j.at("features").get<std::vector<std::string>>();
    m.mean = j.at("mean").get<std::vector<double>>();
    m.stdev = j.at("stdev").get<std::vector<double>>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.config.l2 = as_double(j.at("config").at("l2"), "config.l2");
    m.config.learning_rate = as_double(j.at("config").at("learning_rate"), "config.learning_rate");
    m.config.epochs = static_cast<int>(as_int(j.at("config").at("epochs"), "config.epochs"));
    m.config.seed = as_seed(j.at("config").at("seed"), "config.seed");
    if (j.contains("epoch_losses"))
      m.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail("invalid model file ", path.string(), ": ", e.what());
  }
  const std::size_t n = m.feature_names.size();
  require(m.mean.size() == n && m.stdev.size() == n && m.weights.size() == n,
          "model file ", path.string(), ": array lengths disagree");
  for (double s : m.stdev)
    require(s > 0 && std::isfinite(s), "model file ", path.string(),
            ": stdev entries must be positive and finite");
  return m;
}

inline std::string sanitize_for_filename(const std::string& name) {
  std::string out = name;
  for (char& c : out)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'))
      c = '_';
  return out;
}

inline void write_top_features(const std::filesystem::path& path,
                               const LinearModel& model, int n) {
  const TopFeatures top = top_features(model, n);
  CsvWriter w(path);
  w.line("direction,rank,feature_name,weight");
  for (std::size_t i = 0; i < top.positive.size(); ++i)
    w.row("positive", i + 1, top.positive[i].first, fmt_double(top.positive[i].second));
  for (std::size_t i = 0; i < top.negative.size(); ++i)
    w.row("negative", i + 1, top.negative[i].first, fmt_double(top.negative[i].second));
  w.close();
}

inline void cmd_train(const RunConfig& cfg) {
  using namespace cmd_detail;
  cfg.validate();
  const std::filesystem::path dir = ensure_out_dir(cfg);
  const PlaceTable places = need_places(cfg, "train");
  const std::vector<LabelTable> labels = need_labels(cfg, places, "train");
  std::vector<std::string> inputs = {cfg.places_path};
  for (const std::string& p : cfg.labels_paths) inputs.push_back(p);
  const FeatureMatrix matrix = load_source_matrix(cfg, "train", &inputs);

  EvalConfig ec = eval_config(cfg);
  std::vector<std::string> outputs;
  for (const LabelTable& table : labels) {
    const LabeledRows rows = labeled_rows(matrix, table, places);
    require(rows.n_pos >= 1 && rows.n_neg >= 1, "attribute '", table.attribute_name,
            "': need labeled places of both classes among feature rows");
    const std::vector<std::string> features =
        fold_feature_set(matrix, table.attribute_name, rows, ec);
    TrainConfig tc = cfg.train_config;
    tc.seed = derive_seed(cfg.seed, concat("cli.train/", table.attribute_name));
    const LinearModel model = train(matrix, table.attribute_name, rows, features, tc);
    const std::string stem = sanitize_for_filename(table.attribute_name);
    save_model(dir / concat("model_", stem, ".json"), model, cfg.source);
    write_top_features(dir / concat("top_features_", stem, ".csv"), model, cfg.top_n);
    outputs.push_back(concat("model_", stem, ".json"));
    outputs.push_back(concat("top_features_", stem, ".csv"));
  }
  write_manifest(cfg, "train", inputs, outputs);
}

// ---------------------------------------------------------------------------
// evaluate: cross-validated AUC per attribute for the configured source
// ---------------------------------------------------------------------------
inline void cmd_evaluate(const RunConfig& cfg) {
  using namespace cmd_detail;
  cfg.validate();
  const std::filesystem::path dir = ensure_out_dir(cfg);
  const PlaceTable places = need_places(cfg, "evaluate");
  const std::vector<LabelTable> labels = need_labels(cfg, places, "evaluate");
  std::vector<std::string> inputs = {cfg.places_path};
  for (const std::string& p : cfg.labels_paths) inputs.push_back(p);
  const FeatureMatrix matrix = load_source_matrix(cfg, "evaluate", &inputs);

  const EvalConfig ec = eval_config(cfg);
  std::vector<EvalReport> reports;
  for (const LabelTable& table : labels) {
    const LabeledRows rows = labeled_rows(matrix, table, places);
    reports.push_back(
        cross_validate(matrix, table.attribute_name, rows, ec, cfg.source));
  }

  {
    CsvWriter w(dir / "eval_report.csv");
    w.line("attribute,source,n_pos,n_neg,fold,auc");
    for (const EvalReport& r : reports) {
      for (std::size_t f = 0; f < r.fold_aucs.size(); ++f)
        w.row(r.attribute_name, r.source, r.n_pos, r.n_neg, f,
              fmt_double(r.fold_aucs[f]));
      w.row(r.attribute_name, r.source, r.n_pos, r.n_neg, "mean",
            fmt_double(r.mean_auc));
    }
    w.close();
  }
  {
    std::ofstream out(dir / "eval_summary.txt", std::ios::binary);
    if (!out) fail("cannot open file for writing: ", (dir / "eval_summary.txt").string());
    out << "source: " << cfg.source << "\n";
    out << "folds: " << cfg.k_folds << "\n";
    for (const EvalReport& r : reports)
      out << r.attribute_name << ": mean AUC " << fmt_double(r.mean_auc) << " ("
          << r.n_pos << " pos / " << r.n_neg << " neg)\n";
    out << "macro-average: " << fmt_double(macro_average(reports)) << "\n";
    out.close();
    if (!out) fail("write failed: ", (dir / "eval_summary.txt").string());
  }
  write_manifest(cfg, "evaluate", inputs, {"eval_report.csv", "eval_summary.txt"});
}

// ---------------------------------------------------------------------------
// ablate: per-group AUC with a shared fold assignment
// ---------------------------------------------------------------------------
inline void cmd_ablate(const RunConfig& cfg) {
  using namespace cmd_detail;
  cfg.validate();
  const std::filesystem::path dir = ensure_out_dir(cfg);
  const PlaceTable places = need_places(cfg, "ablate");
  const std::vector<LabelTable> labels = need_labels(cfg, places, "ablate");
  std::vector<std::string> inputs = {cfg.places_path};
  for (const std::string& p : cfg.labels_paths) inputs.push_back(p);
  const FeatureMatrix matrix = load_source_matrix(cfg, "ablate", &inputs);

  const EvalConfig ec = eval_config(cfg);
  CsvWriter w(dir / "ablation_report.csv");
  w.line("attribute,group,mean_auc");
  for (const LabelTable& table : labels) {
    const LabeledRows rows = labeled_rows(matrix, table, places);
    const AblationReport r =
        ablate(matrix, table.attribute_name, rows, ec, cfg.merge_transitions);
    w.row(table.attribute_name, "full", fmt_double(r.full_auc));
    for (const auto& [group, auc_value] : r.group_aucs)
      w.row(table.attribute_name, group, fmt_double(auc_value));
  }
  w.close();
  write_manifest(cfg, "ablate", inputs, {"ablation_report.csv"});
}

// ---------------------------------------------------------------------------
// report: qualitative exports — per-class distributions, top features from
// saved models, coverage accounting
// ---------------------------------------------------------------------------
inline void cmd_report(const RunConfig& cfg) {
  using namespace cmd_detail;
  cfg.validate();
  const std::filesystem::path dir = ensure_out_dir(cfg);
  const PlaceTable places = need_places(cfg, "report");
  const VisitLog log = need_visits(cfg, places, "report");
  const std::vector<LabelTable> labels = need_labels(cfg, places, "report");
  std::vector<std::string> inputs = {cfg.places_path, cfg.visits_path};
  for (const std::string& p : cfg.labels_paths) inputs.push_back(p);
  std::vector<std::string> outputs;

  for (const LabelTable& table : labels) {
    const std::string stem = sanitize_for_filename(table.attribute_name);
    for (DistKind kind : {DistKind::duration, DistKind::day_of_week,
                          DistKind::hour_of_day, DistKind::hour_of_week}) {
      const std::vector<DistRow> rows =
          export_distribution(log, table, kind, cfg.featurizer.duration_bin_edges,
                              cfg.utc_offset_seconds);
      const std::string name = concat("dist_", stem, "_", dist_tag(kind), ".csv");
      write_distribution(dir / name, rows);
      outputs.push_back(name);
    }
    if (!cfg.models_dir.empty()) {
      const std::filesystem::path model_path =
          std::filesystem::path(cfg.models_dir) / concat("model_", stem, ".json");
      if (std::filesystem::exists(model_path)) {
        inputs.push_back(model_path.string());
        const LinearModel model = load_model(model_path);
        const std::string name = concat("top_features_", stem, ".csv");
        write_top_features(dir / name, model, cfg.top_n);
        outputs.push_back(name);
      }
    }
  }

  // coverage over whichever feature files are configured and present
  std::map<std::string, std::set<std::string>> by_source;
  auto collect = [&](const std::string& path, const char* tag) {
    if (path.empty()) return;
    const FeatureMatrix m = load_feature_matrix(path, feature_sidecar(path));
    inputs.push_back(path);
    inputs.push_back(feature_sidecar(path).string());
    std::set<std::string> ids(m.row_ids().begin(), m.row_ids().end());
    by_source[tag] = std::move(ids);
  };
  collect(cfg.features_path, "steps");
  collect(cfg.embedding_features_path, "embedding");

  std::ofstream txt(dir / "report.txt", std::ios::binary);
  if (!txt) fail("cannot open file for writing: ", (dir / "report.txt").string());
  txt << "attributes: " << labels.size() << "\n";
  for (const LabelTable& table : labels)
    txt << "  " << table.attribute_name << ": " << table.count(true)
        << " positive / " << table.count(false) << " negative labeled places\n";
  if (!by_source.empty()) {
    const CoverageReport cov = coverage(places.size(), by_source);
    CsvWriter w(dir / "coverage.csv");
    w.line("source,covered_places,total_places,fraction");
    txt << "coverage:\n";
    for (const auto& [tag, count] : cov.covered) {
      w.row(tag, count, cov.total_places, fmt_double(cov.fraction(tag)));
      txt << "  " << tag << ": " << count << "/" << cov.total_places << "\n";
    }
    w.close();
    outputs.push_back("coverage.csv");
    if (by_source.count("steps") && by_source.count("embedding") &&
        cov.covered.at("steps") > 0) {
      const double gain = cov.relative_gain("steps", "embedding");
      txt << "relative coverage gain, steps -> embedding: "
          << fmt_double(std::round(gain * 10000.0) / 100.0) << "%\n";
    }
  }
  txt.close();
  if (!txt) fail("write failed: ", (dir / "report.txt").string());
  outputs.push_back("report.txt");
  write_manifest(cfg, "report", inputs, outputs);
}

}  // namespace placesense
