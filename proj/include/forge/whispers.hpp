#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "forge/common.hpp"
#include "forge/config.hpp"
#include "forge/graph.hpp"

namespace forge {

// Edge-activation schedule: from step.iteration on, only edges whose weight is at or
// above the step's percentile of all edge weights take part. Floors strictly decrease
// and the last one is 0, so every edge is active by the end.
class AnnealSchedule {
 public:
  AnnealSchedule() : steps_{{0, 0}} {}

  explicit AnnealSchedule(std::vector<ScheduleStep> steps) : steps_(std::move(steps)) {
    if (steps_.empty()) throw Error(ErrorCode::Config, "empty anneal schedule");
    if (steps_.front().iteration != 0) throw Error(ErrorCode::Config, "anneal schedule must start at iteration 0");
    for (std::size_t i = 1; i < steps_.size(); ++i) {
      if (!(steps_[i].percentile < steps_[i - 1].percentile))
        throw Error(ErrorCode::Config, "anneal percentiles must be strictly decreasing");
      if (!(steps_[i].iteration > steps_[i - 1].iteration))
        throw Error(ErrorCode::Config, "anneal iterations must be strictly increasing");
    }
    if (steps_.back().percentile != 0) throw Error(ErrorCode::Config, "anneal schedule must end at percentile 0");
  }

  const std::vector<ScheduleStep>& steps() const { return steps_; }

  double percentile_at(int iteration) const {
    double p = steps_.front().percentile;
    for (const auto& s : steps_)
      if (s.iteration <= iteration) p = s.percentile;
    return p;
  }

  // First iteration at which every edge is active.
  int full_iteration() const { return steps_.back().iteration; }

 private:
  std::vector<ScheduleStep> steps_;
};

// Lower nearest-rank percentile of an ascending weight list.
inline double weight_percentile(const std::vector<double>& sorted_weights, double percentile) {
  if (sorted_weights.empty()) return 0;
  auto idx = static_cast<std::size_t>(std::floor(percentile / 100.0 * static_cast<double>(sorted_weights.size() - 1)));
  return sorted_weights[std::min(idx, sorted_weights.size() - 1)];
}

struct WhispersResult {
  std::vector<std::uint32_t> labels;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

// Label with the largest summed weight over neighbors reached by edges >= floor; ties go
// to the smallest label. Returns false when v has no active edge.
inline bool dominant_label(const WeightedGraph& g, std::uint32_t v, double floor, const std::vector<std::uint32_t>& labels,
                           std::vector<double>& sums, std::vector<std::uint32_t>& touched, std::uint32_t& best) {
  auto nbrs = g.neighbors(v);
  auto ws = g.neighbor_weights(v);
  for (std::size_t i = 0; i < nbrs.size(); ++i) {
    if (ws[i] < floor) continue;
    auto l = labels[nbrs[i]];
    if (sums[l] == 0.0) touched.push_back(l);
    sums[l] += ws[i];
  }
  if (touched.empty()) return false;
  best = touched.front();
  for (auto l : touched) {
    if (sums[l] > sums[best] || (sums[l] == sums[best] && l < best)) best = l;
  }
  for (auto l : touched) sums[l] = 0.0;
  touched.clear();
  return true;
}

}  // namespace detail

// Chinese Whispers: every node starts in its own class; each sweep visits nodes in a
// seeded random order and moves each to its dominant neighbor label. Stops at the first
// sweep with no change once all edges are active, or after max_iters sweeps.
inline WhispersResult chinese_whispers(const WeightedGraph& g, const AnnealSchedule& schedule, int max_iters,
                                       std::uint64_t seed) {
  const auto n = static_cast<std::uint32_t>(g.node_count());
  WhispersResult result;
  result.labels.resize(n);
  for (std::uint32_t v = 0; v < n; ++v) result.labels[v] = v;
  if (n == 0) {
    result.converged = true;
    return result;
  }
  auto weights = g.edge_weights();
  std::sort(weights.begin(), weights.end());

  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> order(n);
  std::vector<double> sums(n, 0.0);
  std::vector<std::uint32_t> touched;
  for (int it = 0; it < max_iters; ++it) {
    const double floor = weight_percentile(weights, schedule.percentile_at(it));
    for (std::uint32_t v = 0; v < n; ++v) order[v] = v;
    for (std::uint32_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    bool changed = false;
    for (auto v : order) {
      std::uint32_t best;
      if (!detail::dominant_label(g, v, floor, result.labels, sums, touched, best)) continue;
      if (best != result.labels[v]) {
        result.labels[v] = best;
        changed = true;
      }
    }
    result.iterations = it + 1;
    if (!changed && it >= schedule.full_iteration()) {
      result.converged = true;
      break;
    }
  }
  return result;
}

// True when every node with an active edge already holds its dominant label, i.e. the
// labeling is a fixed point of one more sweep with all edges active.
inline bool is_whispers_fixed_point(const WeightedGraph& g, const std::vector<std::uint32_t>& labels, double floor = 0) {
  std::vector<double> sums(g.node_count(), 0.0);
  std::vector<std::uint32_t> touched;
  for (std::uint32_t v = 0; v < g.node_count(); ++v) {
    std::uint32_t best;
    if (!detail::dominant_label(g, v, floor, labels, sums, touched, best)) continue;
    if (best != labels[v]) return false;
  }
  return true;
}

// Groups node ids by label; classes ordered by their smallest member.
inline std::vector<std::vector<std::uint32_t>> label_classes(const std::vector<std::uint32_t>& labels) {
  std::vector<std::vector<std::uint32_t>> by_label(labels.size());
  for (std::uint32_t v = 0; v < labels.size(); ++v) by_label[labels[v]].push_back(v);
  std::vector<std::vector<std::uint32_t>> out;
  for (auto& c : by_label)
    if (!c.empty()) out.push_back(std::move(c));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

}  // namespace forge
