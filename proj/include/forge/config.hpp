#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/common.hpp"
#include "forge/text.hpp"

namespace forge {

struct ScheduleStep {
  int iteration = 0;      // first iteration at which this floor applies
  double percentile = 0;  // edges with weight >= this percentile of the graph's weights are active
};

struct PipelineConfig {
  // ingest
  std::int64_t session_gap = 1800;
  int n_max = 3;
  int min_query_frequency = 3;
  std::vector<std::string> stopwords = Stopwords::english_default().sorted();
  // bigraph
  double min_cooccurrence = 2;
  // simgraph
  double threshold = 0.3;
  // communities
  std::vector<ScheduleStep> schedule = {{0, 90}, {2, 70}, {4, 50}, {6, 25}, {8, 0}};
  int max_iters = 20;
  std::uint64_t seed = 7;
  int min_topic_size = 3;
  double density_floor = 0.35;
  double dedup_threshold = 0.7;
  // materialize
  int k_queries = 50;
  int k_pins = 50;
  int min_interactions = 1;
  // taxonomy
  double dominance_share = 0.5;
  int min_styles = 2;
  int min_pins = 4;
  double decay_days = 30;
  int max_trigger_styles = 3;
  // execution
  unsigned threads = 1;

  Stopwords stopword_set() const { return Stopwords(stopwords); }

  void validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::Config, msg); };
    if (session_gap <= 0) fail("session_gap must be > 0");
    if (n_max < 1 || n_max > 8) fail("n_max must be in [1, 8]");
    if (min_query_frequency < 1) fail("min_query_frequency must be >= 1");
    if (min_cooccurrence <= 0) fail("min_cooccurrence must be > 0");
    if (!(threshold > 0 && threshold <= 1)) fail("threshold must be in (0, 1]");
    if (schedule.empty()) fail("schedule must not be empty");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
      if (schedule[i].percentile < 0 || schedule[i].percentile > 100) fail("schedule percentile must be in [0, 100]");
      if (schedule[i].iteration < 0) fail("schedule iteration must be >= 0");
      if (i > 0 && !(schedule[i].percentile < schedule[i - 1].percentile))
        fail("schedule percentiles must be strictly decreasing");
      if (i > 0 && !(schedule[i].iteration > schedule[i - 1].iteration))
        fail("schedule iterations must be strictly increasing");
    }
    if (schedule.front().iteration != 0) fail("schedule must start at iteration 0");
    if (schedule.back().percentile != 0) fail("schedule must end at percentile 0");
    if (max_iters < 1) fail("max_iters must be >= 1");
    if (min_topic_size < 1) fail("min_topic_size must be >= 1");
    if (density_floor < 0 || density_floor > 1) fail("density_floor must be in [0, 1]");
    if (!(dedup_threshold > 0 && dedup_threshold <= 1)) fail("dedup_threshold must be in (0, 1]");
    if (k_queries < 1 || k_pins < 1) fail("k values must be >= 1");
    if (min_interactions < 1) fail("min_interactions must be >= 1");
    if (!(dominance_share > 0 && dominance_share <= 1)) fail("dominance_share must be in (0, 1]");
    if (min_styles < 1) fail("min_styles must be >= 1");
    if (min_pins < 1) fail("min_pins must be >= 1");
    if (!(decay_days > 0)) fail("decay_days must be > 0");
    if (max_trigger_styles < 1) fail("max_trigger_styles must be >= 1");
  }

  nlohmann::json to_json() const {
    nlohmann::json sched = nlohmann::json::array();
    for (const auto& s : schedule) sched.push_back({{"iteration", s.iteration}, {"percentile", s.percentile}});
    return {
        {"session_gap", session_gap},
        {"n_max", n_max},
        {"min_query_frequency", min_query_frequency},
        {"stopwords", stopwords},
        {"min_cooccurrence", min_cooccurrence},
        {"threshold", threshold},
        {"schedule", sched},
        {"max_iters", max_iters},
        {"seed", seed},
        {"min_topic_size", min_topic_size},
        {"density_floor", density_floor},
        {"dedup_threshold", dedup_threshold},
        {"k_queries", k_queries},
        {"k_pins", k_pins},
        {"min_interactions", min_interactions},
        {"dominance_share", dominance_share},
        {"min_styles", min_styles},
        {"min_pins", min_pins},
        {"decay_days", decay_days},
        {"max_trigger_styles", max_trigger_styles},
        {"threads", threads},
    };
  }

  // Keys absent from `j` keep their defaults; unknown keys are rejected.
  static PipelineConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::Config, "config must be a JSON object");
    PipelineConfig c;
    const auto known = c.to_json();
    for (const auto& [key, value] : j.items()) {
      if (!known.contains(key)) throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
    }
    try {
      auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
      };
      get("session_gap", c.session_gap);
      get("n_max", c.n_max);
      get("min_query_frequency", c.min_query_frequency);
      get("stopwords", c.stopwords);
      get("min_cooccurrence", c.min_cooccurrence);
      get("threshold", c.threshold);
      if (j.contains("schedule")) {
        c.schedule.clear();
        for (const auto& s : j.at("schedule")) {
          for (const auto& [key, value] : s.items()) {
            if (key != "iteration" && key != "percentile")
              throw Error(ErrorCode::Config, "unknown schedule key '" + key + "'");
          }
          c.schedule.push_back({s.at("iteration").get<int>(), s.at("percentile").get<double>()});
        }
      }
      get("max_iters", c.max_iters);
      get("seed", c.seed);
      get("min_topic_size", c.min_topic_size);
      get("density_floor", c.density_floor);
      get("dedup_threshold", c.dedup_threshold);
      get("k_queries", c.k_queries);
      get("k_pins", c.k_pins);
      get("min_interactions", c.min_interactions);
      get("dominance_share", c.dominance_share);
      get("min_styles", c.min_styles);
      get("min_pins", c.min_pins);
      get("decay_days", c.decay_days);
      get("max_trigger_styles", c.max_trigger_styles);
      get("threads", c.threads);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Config, e.what());
    }
    std::sort(c.stopwords.begin(), c.stopwords.end());
    c.stopwords.erase(std::unique(c.stopwords.begin(), c.stopwords.end()), c.stopwords.end());
    c.validate();
    return c;
  }

  static PipelineConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingInput, "cannot open config " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Config, path + ": " + e.what());
    }
    return from_json(j);
  }

  // Hash of the tunables that affect outputs; `threads` is excluded.
  std::string hash() const {
    auto j = to_json();
    j.erase("threads");
    return to_hex(fnv1a(j.dump()));
  }
};

}  // namespace forge
