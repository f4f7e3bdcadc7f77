#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <tuple>
#include <vector>

namespace forge {

struct Edge {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  double weight = 0;
  bool operator==(const Edge&) const = default;
};

// Undirected weighted graph in CSR form. Neighbor lists are sorted by node id.
class WeightedGraph {
 public:
  WeightedGraph() = default;

  // Self-loops are dropped; duplicate pairs keep the first weight seen.
  WeightedGraph(std::size_t node_count, std::vector<Edge> edges) : offsets_(node_count + 1, 0) {
    for (auto& e : edges)
      if (e.a > e.b) std::swap(e.a, e.b);
    std::erase_if(edges, [](const Edge& e) { return e.a == e.b; });
    std::stable_sort(edges.begin(), edges.end(),
                     [](const Edge& x, const Edge& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
    edges.erase(std::unique(edges.begin(), edges.end(),
                            [](const Edge& x, const Edge& y) { return x.a == y.a && x.b == y.b; }),
                edges.end());
    for (const auto& e : edges) {
      ++offsets_[e.a + 1];
      ++offsets_[e.b + 1];
    }
    for (std::size_t i = 0; i < node_count; ++i) offsets_[i + 1] += offsets_[i];
    neighbors_.resize(offsets_.back());
    weights_.resize(offsets_.back());
    auto cursor = offsets_;
    for (const auto& e : edges) {
      neighbors_[cursor[e.a]] = e.b;
      weights_[cursor[e.a]++] = e.weight;
      neighbors_[cursor[e.b]] = e.a;
      weights_[cursor[e.b]++] = e.weight;
    }
    // (a, b)-ordered insertion leaves every neighbor list sorted
    edge_count_ = edges.size();
  }

  std::size_t node_count() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t edge_count() const { return edge_count_; }
  std::size_t degree(std::uint32_t v) const { return offsets_[v + 1] - offsets_[v]; }

  std::span<const std::uint32_t> neighbors(std::uint32_t v) const {
    return std::span(neighbors_).subspan(offsets_[v], offsets_[v + 1] - offsets_[v]);
  }
  std::span<const double> neighbor_weights(std::uint32_t v) const {
    return std::span(weights_).subspan(offsets_[v], offsets_[v + 1] - offsets_[v]);
  }

  double weight(std::uint32_t a, std::uint32_t b) const {
    auto n = neighbors(a);
    auto it = std::lower_bound(n.begin(), n.end(), b);
    if (it == n.end() || *it != b) return 0;
    return neighbor_weights(a)[static_cast<std::size_t>(it - n.begin())];
  }

  // Each undirected edge once, with a < b, in (a, b) order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(edge_count_);
    for (std::uint32_t v = 0; v < node_count(); ++v) {
      auto n = neighbors(v);
      auto w = neighbor_weights(v);
      for (std::size_t i = 0; i < n.size(); ++i)
        if (n[i] > v) out.push_back({v, n[i], w[i]});
    }
    return out;
  }

  std::vector<double> edge_weights() const {
    std::vector<double> out;
    out.reserve(edge_count_);
    for (const auto& e : edges()) out.push_back(e.weight);
    return out;
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> neighbors_;
  std::vector<double> weights_;
  std::size_t edge_count_ = 0;
};

}  // namespace forge
