#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/binio.hpp"
#include "forge/common.hpp"
#include "forge/config.hpp"
#include "forge/simgraph.hpp"
#include "forge/whispers.hpp"

namespace forge {

// A discovered micro-topic. The n-gram set is the stable identity; everything else about
// a topic (queries, pins, users) is derived per time window.
struct MicroTopic {
  std::string id;
  std::vector<std::string> ngrams;  // sorted, unique
  std::vector<std::string> egos;    // ego nodes whose neighborhoods produced it
  double density = 0;

  std::size_t size() const { return ngrams.size(); }
  bool contains(std::string_view ngram) const { return std::binary_search(ngrams.begin(), ngrams.end(), ngram); }
};

inline std::string topic_id_for(const std::vector<std::string>& sorted_ngrams) {
  Fnv1a h;
  for (const auto& g : sorted_ngrams) {
    h.update(g);
    h.update(std::string_view("\x1f", 1));
  }
  return to_hex(h.digest());
}

inline MicroTopic make_topic(std::vector<std::string> ngrams, std::vector<std::string> egos = {}, double density = 0) {
  std::sort(ngrams.begin(), ngrams.end());
  ngrams.erase(std::unique(ngrams.begin(), ngrams.end()), ngrams.end());
  std::sort(egos.begin(), egos.end());
  egos.erase(std::unique(egos.begin(), egos.end()), egos.end());
  MicroTopic t;
  t.id = topic_id_for(ngrams);
  t.ngrams = std::move(ngrams);
  t.egos = std::move(egos);
  t.density = density;
  return t;
}

template <class T>
double set_jaccard(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t i = 0, j = 0, common = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++common;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

// Greedy size-descending absorption over sorted, unique sets. Candidates are visited by
// (size desc, lexicographic set, input index); each is absorbed by the first accepted
// group whose representative has Jaccard >= threshold with it, otherwise it is accepted.
// Returns the groups as candidate indices, representative first, in acceptance order.
template <class T>
std::vector<std::vector<std::size_t>> greedy_dedup(const std::vector<std::vector<T>>& sets, double threshold) {
  if (!(threshold > 0 && threshold <= 1)) throw Error(ErrorCode::Config, "dedup threshold must be in (0, 1]");
  std::vector<std::size_t> order(sets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (sets[x].size() != sets[y].size()) return sets[x].size() > sets[y].size();
    return sets[x] < sets[y];
  });
  std::vector<std::vector<std::size_t>> groups;
  for (auto idx : order) {
    const auto& s = sets[idx];
    bool absorbed = false;
    for (auto& g : groups) {
      const auto& rep = sets[g.front()];
      // Jaccard <= |small| / |large|; skip merges that cannot reach the threshold
      if (static_cast<double>(s.size()) < threshold * static_cast<double>(rep.size()) * (1 - 1e-12)) continue;
      if (set_jaccard(s, rep) >= threshold) {
        g.push_back(idx);
        absorbed = true;
        break;
      }
    }
    if (!absorbed) groups.push_back({idx});
  }
  return groups;
}

struct TopicCandidate {
  std::vector<std::string> ngrams;
  std::vector<std::string> egos;
  double density = 0;
};

// Deduplicates candidate n-gram sets. A merged topic keeps its representative's n-grams
// and density and takes the union of all members' ego provenance.
inline std::vector<MicroTopic> dedup_topics(const std::vector<TopicCandidate>& candidates, double threshold) {
  std::vector<std::vector<std::string>> sets;
  sets.reserve(candidates.size());
  for (const auto& c : candidates) {
    auto s = c.ngrams;
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    sets.push_back(std::move(s));
  }
  std::vector<MicroTopic> out;
  for (const auto& group : greedy_dedup(sets, threshold)) {
    std::vector<std::string> egos;
    for (auto idx : group) egos.insert(egos.end(), candidates[idx].egos.begin(), candidates[idx].egos.end());
    out.push_back(make_topic(sets[group.front()], std::move(egos), candidates[group.front()].density));
  }
  return out;
}

namespace detail {

template <class F>
void for_internal_edges(const WeightedGraph& g, const std::vector<std::uint32_t>& members, F&& f) {
  std::vector<char> in(g.node_count(), 0);
  for (auto m : members) in[m] = 1;
  for (auto u : members) {
    auto n = g.neighbors(u);
    auto w = g.neighbor_weights(u);
    for (std::size_t i = 0; i < n.size(); ++i)
      if (n[i] > u && in[n[i]]) f(w[i]);
  }
}

}  // namespace detail

// Mean weight of the edges inside the class; 0 when it has no internal edge.
inline double class_density(const WeightedGraph& g, const std::vector<std::uint32_t>& members) {
  double sum = 0;
  std::size_t edges = 0;
  detail::for_internal_edges(g, members, [&](double w) {
    sum += w;
    ++edges;
  });
  return edges == 0 ? 0.0 : sum / static_cast<double>(edges);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct CommunityStats {
  std::size_t egos_clustered = 0;
  std::size_t candidates = 0;
  std::size_t unconverged = 0;
};

// Clusters every ego neighborhood with annealed Chinese Whispers. Each label class plus
// the ego is a candidate when it is large and dense enough; pooled candidates are then
// deduplicated. Topics may overlap.
inline std::vector<MicroTopic> discover_communities(const SimGraph& g, const PipelineConfig& config,
                                                    CommunityStats* stats = nullptr) {
  const AnnealSchedule schedule(config.schedule);
  const auto n = static_cast<std::uint32_t>(g.node_count());
  const auto min_size = static_cast<std::size_t>(config.min_topic_size);

  struct Found {
    std::vector<std::uint32_t> members;  // global ids, sorted
    std::uint32_t ego;
    double density;
  };
  const unsigned shards = shard_count(n, config.threads);
  std::vector<std::vector<Found>> found(shards);
  std::vector<CommunityStats> shard_stats(shards);
  parallel_shards(n, config.threads, [&](unsigned shard, std::size_t begin, std::size_t end) {
    for (auto v = static_cast<std::uint32_t>(begin); v < end; ++v) {
      if (g.graph().degree(v) + 1 < min_size || g.graph().degree(v) == 0) continue;
      auto ego = g.ego_neighborhood(v);
      auto result = chinese_whispers(ego.graph, schedule, config.max_iters, mix_seed(config.seed, v));
      ++shard_stats[shard].egos_clustered;
      if (!result.converged) ++shard_stats[shard].unconverged;
      auto ego_weights = g.graph().neighbor_weights(v);
      for (const auto& cls : label_classes(result.labels)) {
        if (cls.size() + 1 < min_size) continue;
        // the ego joins every community of its neighborhood; it is adjacent to all members
        double sum = 0;
        std::size_t edges = cls.size();
        for (auto local : cls) sum += ego_weights[local];
        detail::for_internal_edges(ego.graph, cls, [&](double w) {
          sum += w;
          ++edges;
        });
        const double density = sum / static_cast<double>(edges);
        if (density < config.density_floor) continue;
        std::vector<std::uint32_t> members;
        members.reserve(cls.size() + 1);
        for (auto local : cls) members.push_back(ego.nodes[local]);
        members.insert(std::upper_bound(members.begin(), members.end(), v), v);
        found[shard].push_back({std::move(members), v, density});
      }
    }
  });

  std::vector<Found> pooled;
  for (auto& f : found)
    for (auto& c : f) pooled.push_back(std::move(c));
  std::vector<std::vector<std::uint32_t>> sets;
  sets.reserve(pooled.size());
  for (const auto& c : pooled) sets.push_back(c.members);

  std::vector<MicroTopic> topics;
  for (const auto& group : greedy_dedup(sets, config.dedup_threshold)) {
    const auto& rep = pooled[group.front()];
    std::vector<std::string> ngrams;
    for (auto m : rep.members) ngrams.push_back(g.ngrams().str(m));
    std::vector<std::string> egos;
    for (auto idx : group) egos.push_back(g.ngrams().str(pooled[idx].ego));
    topics.push_back(make_topic(std::move(ngrams), std::move(egos), rep.density));
  }

  if (stats) {
    *stats = {};
    for (const auto& s : shard_stats) {
      stats->egos_clustered += s.egos_clustered;
      stats->unconverged += s.unconverged;
    }
    stats->candidates = pooled.size();
  }
  return topics;
}

// ---------------------------------------------------------------------------
// topics.jsonl

inline nlohmann::json to_json(const MicroTopic& t) {
  return {{"topic_id", t.id}, {"ngrams", t.ngrams}, {"density", t.density}, {"egos", t.egos}};
}

inline MicroTopic topic_from_json(const nlohmann::json& j) {
  auto t = make_topic(j.at("ngrams").get<std::vector<std::string>>(), j.at("egos").get<std::vector<std::string>>(),
                      j.at("density").get<double>());
  if (t.ngrams.empty()) throw Error(ErrorCode::Parse, "topic has no ngrams");
  if (j.at("topic_id").get<std::string>() != t.id)
    throw Error(ErrorCode::Parse, "topic_id " + j.at("topic_id").get<std::string>() + " does not match its ngrams");
  return t;
}

inline std::string topics_to_jsonl(const std::vector<MicroTopic>& topics) {
  std::string out;
  for (const auto& t : topics) out += to_json(t).dump() + "\n";
  return out;
}

inline void write_topics(const std::string& path, const std::vector<MicroTopic>& topics) {
  binio::write_file(path, topics_to_jsonl(topics));
}

inline std::vector<MicroTopic> read_topics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open " + path);
  std::vector<MicroTopic> topics;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      topics.push_back(topic_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return topics;
}

}  // namespace forge
