#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "forge/bigraph.hpp"
#include "forge/binio.hpp"
#include "forge/common.hpp"
#include "forge/graph.hpp"

namespace forge {

// sum_q min(a_q, b_q) / sum_q max(a_q, b_q) over the union of supports.
inline double continuous_jaccard(SparseView a, SparseView b) {
  double min_sum = 0;
  double max_sum = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a.ids[i] == b.ids[j]) {
      min_sum += std::min(a.weights[i], b.weights[j]);
      max_sum += std::max(a.weights[i], b.weights[j]);
      ++i;
      ++j;
    } else if (a.ids[i] < b.ids[j]) {
      max_sum += a.weights[i++];
    } else {
      max_sum += b.weights[j++];
    }
  }
  for (; i < a.size(); ++i) max_sum += a.weights[i];
  for (; j < b.size(); ++j) max_sum += b.weights[j];
  if (!(max_sum > 0)) throw Error(ErrorCode::BothZero, "continuous_jaccard of two zero vectors");
  return min_sum / max_sum;
}

// Induced subgraph on the neighbors of an ego node; the ego itself is not included.
struct EgoGraph {
  std::vector<NgramId> nodes;  // global ids, sorted; local id i <-> nodes[i]
  WeightedGraph graph;
};

// N-gram similarity graph: an edge joins two n-grams whose query distributions have
// continuous Jaccard >= threshold.
class SimGraph {
 public:
  SimGraph() = default;
  SimGraph(Interner ngrams, WeightedGraph graph, double threshold, std::string bigraph_config_hash = {})
      : ngrams_(std::move(ngrams)),
        graph_(std::move(graph)),
        threshold_(threshold),
        bigraph_config_hash_(std::move(bigraph_config_hash)) {}

  const Interner& ngrams() const { return ngrams_; }
  const WeightedGraph& graph() const { return graph_; }
  double threshold() const { return threshold_; }
  std::size_t node_count() const { return graph_.node_count(); }
  std::size_t edge_count() const { return graph_.edge_count(); }
  const std::string& bigraph_config_hash() const { return bigraph_config_hash_; }

  EgoGraph ego_neighborhood(NgramId v) const {
    if (v >= graph_.node_count()) throw Error(ErrorCode::UnknownNode, "ngram id " + std::to_string(v));
    EgoGraph ego;
    auto nbrs = graph_.neighbors(v);
    ego.nodes.assign(nbrs.begin(), nbrs.end());
    std::vector<Edge> edges;
    for (std::uint32_t li = 0; li < ego.nodes.size(); ++li) {
      auto u = ego.nodes[li];
      auto un = graph_.neighbors(u);
      auto uw = graph_.neighbor_weights(u);
      // sorted-list intersection of N(u) with N(v), keeping only the upper triangle
      std::size_t i = static_cast<std::size_t>(std::upper_bound(un.begin(), un.end(), u) - un.begin());
      std::size_t j = li + 1;
      while (i < un.size() && j < ego.nodes.size()) {
        if (un[i] == ego.nodes[j]) {
          edges.push_back({li, static_cast<std::uint32_t>(j), uw[i]});
          ++i;
          ++j;
        } else if (un[i] < ego.nodes[j]) {
          ++i;
        } else {
          ++j;
        }
      }
    }
    ego.graph = WeightedGraph(ego.nodes.size(), std::move(edges));
    return ego;
  }

  void save(const std::filesystem::path& dir) const;
  static SimGraph load(const std::filesystem::path& dir);

 private:
  Interner ngrams_;
  WeightedGraph graph_;
  double threshold_ = 0;
  std::string bigraph_config_hash_;
};

// Exact thresholded similarity graph. Candidate pairs come from an inverted index over
// queries (pairs with disjoint supports are never scored), and pairs whose l1 ratio
// min(|a|,|b|)/max(|a|,|b|) is below the threshold are pruned before accumulation.
inline SimGraph build_simgraph(const Bigraph& b, double threshold, unsigned threads = 1) {
  if (!(threshold > 0 && threshold <= 1)) throw Error(ErrorCode::Config, "threshold must be in (0, 1]");
  const auto n = static_cast<std::uint32_t>(b.ngrams().size());
  std::vector<double> l1(n);
  for (NgramId g = 0; g < n; ++g) l1[g] = b.row(g).l1();

  const unsigned shards = shard_count(n, threads);
  std::vector<std::vector<Edge>> found(shards);
  parallel_shards(n, threads, [&](unsigned shard, std::size_t begin, std::size_t end) {
    std::vector<double> acc(n, 0.0);
    std::vector<std::uint32_t> touched;
    auto& out = found[shard];
    for (auto a = static_cast<std::uint32_t>(begin); a < end; ++a) {
      const double sa = l1[a];
      if (!(sa > 0)) continue;
      auto row = b.row(a);
      for (std::size_t i = 0; i < row.size(); ++i) {
        const double wa = row.weights[i];
        auto col = b.column(row.ids[i]);
        auto first = static_cast<std::size_t>(std::upper_bound(col.ids.begin(), col.ids.end(), a) - col.ids.begin());
        for (std::size_t k = first; k < col.size(); ++k) {
          auto other = col.ids[k];
          const double sb = l1[other];
          if (std::min(sa, sb) < threshold * std::max(sa, sb) * (1 - 1e-12)) continue;
          if (acc[other] == 0.0) touched.push_back(other);
          acc[other] += std::min(wa, col.weights[k]);
        }
      }
      std::sort(touched.begin(), touched.end());
      for (auto other : touched) {
        const double min_sum = acc[other];
        acc[other] = 0.0;
        const double estimate = min_sum / (sa + l1[other] - min_sum);
        if (estimate < threshold - 1e-9) continue;
        // recompute on the merged rows so stored weights match continuous_jaccard bit for bit
        const double sim = continuous_jaccard(row, b.row(other));
        if (sim >= threshold) out.push_back({a, other, sim});
      }
      touched.clear();
    }
  });
  std::vector<Edge> edges;
  for (auto& f : found) edges.insert(edges.end(), f.begin(), f.end());
  return SimGraph(b.ngrams(), WeightedGraph(n, std::move(edges)), threshold, b.config_hash());
}

namespace detail {
inline constexpr const char* kSimGraphMagic = "FRGSIM01";
}

inline void SimGraph::save(const std::filesystem::path& dir) const {
  binio::Writer w(detail::kSimGraphMagic);
  w.put<std::uint32_t>(1);
  w.put(threshold_);
  w.put(bigraph_config_hash_);
  w.put(ngrams_.strings());
  std::vector<std::uint32_t> ea, eb;
  std::vector<double> ew;
  for (const auto& e : graph_.edges()) {
    ea.push_back(e.a);
    eb.push_back(e.b);
    ew.push_back(e.weight);
  }
  w.put(ea);
  w.put(eb);
  w.put(ew);
  binio::write_file(dir / "simgraph.bin", w.bytes());
}

inline SimGraph SimGraph::load(const std::filesystem::path& dir) {
  auto path = dir / "simgraph.bin";
  binio::Reader r(binio::read_file(path), detail::kSimGraphMagic, path.string());
  if (r.get<std::uint32_t>() != 1) r.fail("unsupported format version");
  auto threshold = r.get<double>();
  auto hash = r.get_string();
  auto ngrams = r.get_vector<std::string>();
  auto ea = r.get_vector<std::uint32_t>();
  auto eb = r.get_vector<std::uint32_t>();
  auto ew = r.get_vector<double>();
  r.expect_end();
  if (ea.size() != eb.size() || ea.size() != ew.size()) r.fail("inconsistent edge arrays");
  std::vector<Edge> edges;
  edges.reserve(ea.size());
  for (std::size_t i = 0; i < ea.size(); ++i) {
    if (ea[i] >= ngrams.size() || eb[i] >= ngrams.size()) r.fail("edge endpoint out of range");
    edges.push_back({ea[i], eb[i], ew[i]});
  }
  auto count = ngrams.size();
  return SimGraph(Interner::from_strings(std::move(ngrams)), WeightedGraph(count, std::move(edges)), threshold,
                  std::move(hash));
}

}  // namespace forge
