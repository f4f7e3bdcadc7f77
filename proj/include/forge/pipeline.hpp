#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/bigraph.hpp"
#include "forge/binio.hpp"
#include "forge/common.hpp"
#include "forge/communities.hpp"
#include "forge/config.hpp"
#include "forge/corpus.hpp"
#include "forge/materialize.hpp"
#include "forge/simgraph.hpp"
#include "forge/taxonomy.hpp"

namespace forge {

enum class Stage { Bigraph = 0, Simgraph = 1, Topics = 2, Materialize = 3 };

inline constexpr Stage kStages[] = {Stage::Bigraph, Stage::Simgraph, Stage::Topics, Stage::Materialize};

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Bigraph: return "bigraph";
    case Stage::Simgraph: return "simgraph";
    case Stage::Topics: return "topics";
    case Stage::Materialize: return "materialize";
  }
  return "?";
}

inline Stage parse_stage(std::string_view s) {
  for (auto st : kStages)
    if (s == stage_name(st)) return st;
  throw Error(ErrorCode::Config, "unknown stage '" + std::string(s) + "'");
}

struct PipelineInputs {
  std::filesystem::path events;
  std::filesystem::path pins;
  std::filesystem::path interactions;
  std::optional<TimeWindow> window;  // default: span of all events
  bool strict = false;
};

struct StageReport {
  Stage stage;
  bool cached = false;
  double seconds = 0;
};

// Snapshot directory layout.
namespace snapshot_files {
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kBigraph = "bigraph.bin";
inline constexpr const char* kSimgraph = "simgraph.bin";
inline constexpr const char* kTopics = "topics.jsonl";
inline constexpr const char* kMaterialized = "materialized.jsonl";
}  // namespace snapshot_files

// Config fields each stage depends on. Upstream changes reach a stage through its input hashes.
inline nlohmann::json stage_config(Stage s, const PipelineConfig& c) {
  auto all = c.to_json();
  auto pick = [&](std::initializer_list<const char*> keys) {
    nlohmann::json j = nlohmann::json::object();
    for (auto k : keys) j[k] = all.at(k);
    return j;
  };
  switch (s) {
    case Stage::Bigraph: return pick({"session_gap", "n_max", "min_query_frequency", "stopwords", "min_cooccurrence"});
    case Stage::Simgraph: return pick({"threshold"});
    case Stage::Topics:
      return pick({"schedule", "max_iters", "seed", "min_topic_size", "density_floor", "dedup_threshold"});
    case Stage::Materialize: return pick({"n_max", "k_queries", "k_pins", "min_interactions"});
  }
  return {};
}

inline std::string json_hash(const nlohmann::json& j) { return to_hex(fnv1a(j.dump())); }

// Per-stage record of what a stage consumed and produced.
struct StageRecord {
  std::string config_hash;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  bool operator==(const StageRecord&) const = default;
};

class Manifest {
 public:
  static constexpr int kFormat = 1;

  std::map<std::string, StageRecord> stages;
  std::map<std::string, std::string> input_paths;  // events / pins / interactions
  std::optional<TimeWindow> window;

  // Absent file -> empty manifest. Unreadable or malformed file -> CorruptManifest.
  static Manifest load(const std::filesystem::path& dir) {
    Manifest m;
    auto path = dir / snapshot_files::kManifest;
    if (!std::filesystem::exists(path)) return m;
    auto fail = [&](const std::string& why) { throw Error(ErrorCode::CorruptManifest, path.string() + ": " + why); };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(binio::read_file(path));
    } catch (const nlohmann::json::exception& e) {
      fail(e.what());
    }
    try {
      if (j.at("format").get<int>() != kFormat) fail("unsupported manifest format");
      for (const auto& [name, rec] : j.at("stages").items()) {
        parse_stage(name);
        m.stages[name] = {rec.at("config_hash").get<std::string>(),
                          rec.at("inputs").get<std::map<std::string, std::string>>(),
                          rec.at("outputs").get<std::map<std::string, std::string>>()};
      }
      m.input_paths = j.at("input_paths").get<std::map<std::string, std::string>>();
      if (j.contains("window") && !j.at("window").is_null())
        m.window = TimeWindow::make(j.at("window").at("start").get<std::int64_t>(), j.at("window").at("end").get<std::int64_t>());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::CorruptManifest) throw;
      fail(e.what());
    } catch (const std::exception& e) {
      fail(e.what());
    }
    return m;
  }

  void save(const std::filesystem::path& dir) const {
    nlohmann::json st = nlohmann::json::object();
    for (const auto& [name, r] : stages)
      st[name] = {{"config_hash", r.config_hash}, {"inputs", r.inputs}, {"outputs", r.outputs}};
    nlohmann::json j = {{"format", kFormat}, {"stages", st}, {"input_paths", input_paths}, {"window", nullptr}};
    if (window) j["window"] = {{"start", window->start}, {"end", window->end}};
    binio::write_json(dir / snapshot_files::kManifest, j);
  }
};

inline TimeWindow span_of(const std::vector<QueryEvent>& events) {
  if (events.empty()) throw Error(ErrorCode::EmptyWindow, "no query events");
  std::int64_t lo = std::numeric_limits<std::int64_t>::max(), hi = std::numeric_limits<std::int64_t>::min();
  for (const auto& e : events) {
    lo = std::min(lo, e.ts);
    hi = std::max(hi, e.ts);
  }
  return TimeWindow::make(lo, hi + 1);
}

using Logger = std::function<void(const nlohmann::json&)>;

inline void stderr_logger(const nlohmann::json& j) { std::cerr << j.dump() << '\n'; }

namespace detail {

template <class T>
std::vector<T> checked(ReadResult<T> r, const std::string& what, const Logger& log) {
  for (const auto& e : r.errors)
    if (log) log({{"event", "parse_error"}, {"input", what}, {"line", e.line}, {"message", e.message}});
  return std::move(r.records);
}

inline void require_file(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw Error(ErrorCode::MissingInput, std::string("no ") + what + " input given");
  if (!std::filesystem::exists(p)) throw Error(ErrorCode::MissingInput, std::string(what) + " input not found: " + p.string());
}

}  // namespace detail

inline std::string materialized_jsonl(const std::vector<MicroTopic>& topics, const Bigraph& b, const PinIndex& pins,
                                      const std::vector<Interaction>& interactions, const PipelineConfig& config) {
  std::string out;
  for (const auto& t : topics) out += to_json(materialize_topic(t, b, pins, interactions, config)).dump() + "\n";
  return out;
}

// Runs stages [from, to] into `dir`. A stage is skipped when the manifest shows the same
// config and input hashes and its outputs are unchanged on disk.
inline std::vector<StageReport> run_pipeline(const PipelineConfig& config, const PipelineInputs& in_opts,
                                             const std::filesystem::path& dir, Stage from = Stage::Bigraph,
                                             Stage to = Stage::Materialize, const Logger& log = stderr_logger) {
  config.validate();
  if (static_cast<int>(from) > static_cast<int>(to)) throw Error(ErrorCode::Config, "stage range is empty");
  std::filesystem::create_directories(dir);
  auto manifest = Manifest::load(dir);
  PipelineInputs in = in_opts;
  auto remembered = [&](const char* key, std::filesystem::path& p) {
    if (p.empty() && manifest.input_paths.count(key)) p = manifest.input_paths[key];
    if (!p.empty()) manifest.input_paths[key] = std::filesystem::absolute(p).string();
  };
  remembered("events", in.events);
  remembered("pins", in.pins);
  remembered("interactions", in.interactions);

  auto out_hash = [&](const char* file) { return binio::file_hash(dir / file); };
  auto fresh = [&](Stage s, const StageRecord& want) {
    auto it = manifest.stages.find(stage_name(s));
    if (it == manifest.stages.end()) return false;
    const auto& have = it->second;
    if (have.config_hash != want.config_hash || have.inputs != want.inputs) return false;
    for (const auto& [file, hash] : have.outputs)
      if (!std::filesystem::exists(dir / file) || binio::file_hash(dir / file) != hash) return false;
    return true;
  };

  std::vector<StageReport> reports;
  for (auto s : kStages) {
    if (static_cast<int>(s) < static_cast<int>(from) || static_cast<int>(s) > static_cast<int>(to)) continue;
    auto t0 = std::chrono::steady_clock::now();
    StageRecord rec;
    rec.config_hash = json_hash(stage_config(s, config));
    switch (s) {
      case Stage::Bigraph: {
        detail::require_file(in.events, "events");
        rec.inputs["events"] = binio::file_hash(in.events);
        if (in.window) manifest.window = in.window;
        rec.inputs["window"] = manifest.window ? std::to_string(manifest.window->start) + ":" + std::to_string(manifest.window->end) : "auto";
        break;
      }
      case Stage::Simgraph:
        detail::require_file(dir / snapshot_files::kBigraph, "bigraph");
        rec.inputs[snapshot_files::kBigraph] = out_hash(snapshot_files::kBigraph);
        break;
      case Stage::Topics:
        detail::require_file(dir / snapshot_files::kSimgraph, "simgraph");
        rec.inputs[snapshot_files::kSimgraph] = out_hash(snapshot_files::kSimgraph);
        break;
      case Stage::Materialize:
        detail::require_file(dir / snapshot_files::kTopics, "topics");
        detail::require_file(dir / snapshot_files::kBigraph, "bigraph");
        detail::require_file(in.pins, "pins");
        detail::require_file(in.interactions, "interactions");
        rec.inputs[snapshot_files::kTopics] = out_hash(snapshot_files::kTopics);
        rec.inputs[snapshot_files::kBigraph] = out_hash(snapshot_files::kBigraph);
        rec.inputs["pins"] = binio::file_hash(in.pins);
        rec.inputs["interactions"] = binio::file_hash(in.interactions);
        break;
    }
    if (fresh(s, rec)) {
      reports.push_back({s, true, 0});
      if (log) log({{"event", "stage"}, {"stage", stage_name(s)}, {"cached", true}});
      continue;
    }

    switch (s) {
      case Stage::Bigraph: {
        auto events = detail::checked(read_query_events(in.events.string(), in.strict), in.events.string(), log);
        auto window = manifest.window ? *manifest.window : span_of(events);
        auto corpus = build_corpus(events, config);
        build_bigraph(corpus, window, config).save(dir);
        rec.outputs[snapshot_files::kBigraph] = out_hash(snapshot_files::kBigraph);
        break;
      }
      case Stage::Simgraph: {
        build_simgraph(Bigraph::load(dir), config.threshold, config.threads).save(dir);
        rec.outputs[snapshot_files::kSimgraph] = out_hash(snapshot_files::kSimgraph);
        break;
      }
      case Stage::Topics: {
        CommunityStats stats;
        auto topics = discover_communities(SimGraph::load(dir), config, &stats);
        write_topics((dir / snapshot_files::kTopics).string(), topics);
        rec.outputs[snapshot_files::kTopics] = out_hash(snapshot_files::kTopics);
        if (log)
          log({{"event", "topics"}, {"topics", topics.size()}, {"candidates", stats.candidates},
               {"egos", stats.egos_clustered}, {"unconverged", stats.unconverged}});
        break;
      }
      case Stage::Materialize: {
        auto b = Bigraph::load(dir);
        auto topics = read_topics((dir / snapshot_files::kTopics).string());
        auto pins = detail::checked(read_pins(in.pins.string(), in.strict), in.pins.string(), log);
        auto interactions =
            detail::checked(read_interactions(in.interactions.string(), in.strict), in.interactions.string(), log);
        interactions = filter_known_pins(std::move(interactions), pins);
        PinIndex index(std::move(pins), config.n_max);
        binio::write_file(dir / snapshot_files::kMaterialized, materialized_jsonl(topics, b, index, interactions, config));
        rec.outputs[snapshot_files::kMaterialized] = out_hash(snapshot_files::kMaterialized);
        break;
      }
    }
    manifest.stages[stage_name(s)] = rec;
    // downstream records no longer describe what is on disk
    for (auto later : kStages)
      if (static_cast<int>(later) > static_cast<int>(s)) manifest.stages.erase(stage_name(later));
    manifest.save(dir);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    reports.push_back({s, false, secs});
    if (log) log({{"event", "stage"}, {"stage", stage_name(s)}, {"cached", false}, {"seconds", secs}});
  }
  manifest.save(dir);
  return reports;
}

// Loads a finished snapshot directory into a Catalog.
inline std::shared_ptr<const Catalog> load_catalog(const std::filesystem::path& dir, const PipelineConfig& config,
                                                   const Logger& log = stderr_logger) {
  auto manifest = Manifest::load(dir);
  detail::require_file(dir / snapshot_files::kBigraph, "bigraph");
  detail::require_file(dir / snapshot_files::kTopics, "topics");
  auto input = [&](const char* key) -> std::filesystem::path {
    auto it = manifest.input_paths.find(key);
    return it == manifest.input_paths.end() ? std::filesystem::path() : std::filesystem::path(it->second);
  };
  std::vector<Pin> pins;
  std::vector<Interaction> interactions;
  std::vector<QueryEvent> events;
  if (auto p = input("pins"); !p.empty() && std::filesystem::exists(p))
    pins = detail::checked(read_pins(p.string()), p.string(), log);
  if (auto p = input("interactions"); !p.empty() && std::filesystem::exists(p))
    interactions = detail::checked(read_interactions(p.string()), p.string(), log);
  if (auto p = input("events"); !p.empty() && std::filesystem::exists(p))
    events = detail::checked(read_query_events(p.string()), p.string(), log);
  interactions = filter_known_pins(std::move(interactions), pins);
  return std::make_shared<const Catalog>(Bigraph::load(dir), read_topics((dir / snapshot_files::kTopics).string()),
                                         std::move(pins), std::move(interactions), events, config);
}

}  // namespace forge
