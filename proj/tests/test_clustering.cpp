#include <random>
#include <sstream>
#include <set>

#include <gtest/gtest.h>

#include "forge/communities.hpp"
#include "forge/whispers.hpp"

using namespace forge;

namespace {

std::vector<Edge> clique(std::uint32_t from, std::uint32_t to, double w) {
  std::vector<Edge> out;
  for (auto a = from; a < to; ++a)
    for (auto b = a + 1; b < to; ++b) out.push_back({a, b, w});
  return out;
}

SimGraph named_graph(std::size_t n, std::vector<Edge> edges) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("g" + std::to_string(i));
  return SimGraph(Interner::from_strings(names), WeightedGraph(n, std::move(edges)), 0.3);
}

std::set<std::set<std::string>> topic_sets(const std::vector<MicroTopic>& ts) {
  std::set<std::set<std::string>> out;
  for (const auto& t : ts) out.insert({t.ngrams.begin(), t.ngrams.end()});
  return out;
}

const AnnealSchedule kDefault(PipelineConfig{}.schedule);

}  // namespace

TEST(AnnealSchedule, Validation) {
  EXPECT_EQ(kDefault.percentile_at(0), 90);
  EXPECT_EQ(kDefault.percentile_at(3), 70);
  EXPECT_EQ(kDefault.percentile_at(100), 0);
  EXPECT_EQ(kDefault.full_iteration(), 8);
  EXPECT_THROW(AnnealSchedule({{0, 50}, {2, 60}, {4, 0}}), Error);
  EXPECT_THROW(AnnealSchedule({{1, 50}, {2, 0}}), Error);
  EXPECT_THROW(AnnealSchedule({{0, 50}, {2, 10}}), Error);
  EXPECT_THROW(AnnealSchedule(std::vector<ScheduleStep>{}), Error);
}

TEST(AnnealSchedule, WeightPercentile) {
  std::vector<double> w = {0.1, 0.2, 0.3, 0.4, 0.5};
  EXPECT_EQ(weight_percentile(w, 0), 0.1);
  EXPECT_EQ(weight_percentile(w, 50), 0.3);
  EXPECT_EQ(weight_percentile(w, 90), 0.4);
  EXPECT_EQ(weight_percentile(w, 100), 0.5);
  EXPECT_EQ(weight_percentile({}, 50), 0);
}

TEST(Whispers, NoEdgesKeepsSingletons) {
  WeightedGraph g(4, {});
  auto r = chinese_whispers(g, kDefault, 20, 7);
  EXPECT_EQ(r.labels, (std::vector<std::uint32_t>{0, 1, 2, 3}));
  EXPECT_TRUE(r.converged);
  EXPECT_TRUE(chinese_whispers(WeightedGraph(0, {}), kDefault, 20, 7).labels.empty());
}

TEST(Whispers, TriangleMergesForEveryVisitOrder) {
  WeightedGraph g(3, clique(0, 3, 0.5));
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    auto r = chinese_whispers(g, kDefault, 20, seed);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(label_classes(r.labels).size(), 1u) << "seed " << seed;
  }
}

TEST(Whispers, BarbellSplitsAtTheWeakBridge) {
  auto edges = clique(0, 4, 0.8);
  for (auto e : clique(4, 8, 0.8)) edges.push_back(e);
  edges.push_back({3, 4, 0.31});
  WeightedGraph g(8, edges);
  for (std::uint64_t seed = 0; seed < 32; ++seed) {
    auto r = chinese_whispers(g, kDefault, 20, seed);
    auto cls = label_classes(r.labels);
    ASSERT_EQ(cls.size(), 2u) << "seed " << seed;
    EXPECT_EQ(cls[0], (std::vector<std::uint32_t>{0, 1, 2, 3}));
    EXPECT_EQ(cls[1], (std::vector<std::uint32_t>{4, 5, 6, 7}));
  }
}

TEST(Whispers, ConvergedLabelingIsAFixedPoint) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> w(0.3, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::uint32_t n = 2 + static_cast<std::uint32_t>(rng() % 25);
    std::vector<Edge> edges;
    for (std::uint32_t a = 0; a < n; ++a)
      for (std::uint32_t b = a + 1; b < n; ++b)
        if (rng() % 4 == 0) edges.push_back({a, b, w(rng)});
    WeightedGraph g(n, edges);
    auto r = chinese_whispers(g, kDefault, 20, rng());
    if (r.converged) {
      EXPECT_TRUE(is_whispers_fixed_point(g, r.labels));
    }
    EXPECT_LE(r.iterations, 20);
    for (auto l : r.labels) EXPECT_LT(l, n);
  }
}

TEST(Whispers, DeterministicForFixedSeed) {
  std::mt19937_64 rng(47);
  std::vector<Edge> edges;
  for (std::uint32_t a = 0; a < 40; ++a)
    for (std::uint32_t b = a + 1; b < 40; ++b)
      if (rng() % 5 == 0) edges.push_back({a, b, 0.3 + static_cast<double>(rng() % 70) / 100});
  WeightedGraph g(40, edges);
  EXPECT_EQ(chinese_whispers(g, kDefault, 20, 7).labels, chinese_whispers(g, kDefault, 20, 7).labels);
}

TEST(TopicId, Fnv1aOfSortedNgrams) {
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  auto t = make_topic({"ship wheel", "nautical decor", "anchor art", "anchor art"});
  EXPECT_EQ(t.ngrams, (std::vector<std::string>{"anchor art", "nautical decor", "ship wheel"}));
  EXPECT_EQ(t.id, "59d809ed33ce8833");
  EXPECT_EQ(make_topic({"anchor art", "ship wheel", "nautical decor"}).id, t.id);
}

TEST(Communities, CliqueYieldsOneTopic) {
  auto g = named_graph(5, clique(0, 5, 0.8));
  auto ts = discover_communities(g, PipelineConfig{});
  ASSERT_EQ(ts.size(), 1u);
  EXPECT_EQ(ts[0].size(), 5u);
  EXPECT_EQ(ts[0].egos.size(), 5u);
  EXPECT_DOUBLE_EQ(ts[0].density, 0.8);
}

TEST(Communities, BridgedCliquesYieldTwoTopics) {
  // two 4-cliques joined through node 4
  auto edges = clique(0, 4, 0.8);
  for (auto e : clique(5, 9, 0.8)) edges.push_back(e);
  edges.push_back({3, 4, 0.35});
  edges.push_back({4, 5, 0.35});
  auto ts = discover_communities(named_graph(9, edges), PipelineConfig{});
  std::set<std::set<std::string>> want = {{"g0", "g1", "g2", "g3"}, {"g5", "g6", "g7", "g8"}};
  EXPECT_EQ(topic_sets(ts), want);
}

TEST(Communities, EmptyAndEdgelessGraphs) {
  EXPECT_TRUE(discover_communities(named_graph(0, {}), PipelineConfig{}).empty());
  EXPECT_TRUE(discover_communities(named_graph(6, {}), PipelineConfig{}).empty());
}

TEST(Communities, DensityFloor) {
  auto g = named_graph(3, clique(0, 3, 0.31));
  PipelineConfig cfg;
  EXPECT_TRUE(discover_communities(g, cfg).empty());
  cfg.density_floor = 0.3;
  EXPECT_EQ(discover_communities(g, cfg).size(), 1u);
}

TEST(Communities, MinimumSize) {
  auto g = named_graph(2, {{0, 1, 0.9}});
  EXPECT_TRUE(discover_communities(g, PipelineConfig{}).empty());
  PipelineConfig cfg;
  cfg.min_topic_size = 2;
  EXPECT_EQ(discover_communities(g, cfg).size(), 1u);
}

TEST(Communities, ThreadCountDoesNotChangeOutput) {
  std::mt19937_64 rng(53);
  std::vector<Edge> edges;
  for (std::uint32_t a = 0; a < 60; ++a)
    for (std::uint32_t b = a + 1; b < 60; ++b)
      if (a / 10 == b / 10 ? rng() % 2 == 0 : rng() % 40 == 0) edges.push_back({a, b, 0.3 + static_cast<double>(rng() % 70) / 100});
  auto g = named_graph(60, edges);
  PipelineConfig one, four;
  four.threads = 4;
  EXPECT_EQ(topics_to_jsonl(discover_communities(g, one)), topics_to_jsonl(discover_communities(g, four)));
}

TEST(Dedup, Examples) {
  std::vector<std::string> abcd = {"a", "b", "c", "d"}, abc = {"a", "b", "c"}, abef = {"a", "b", "e", "f"};
  EXPECT_EQ(set_jaccard(abcd, abc), 0.75);
  auto merged = dedup_topics({{abc, {"c"}, 0.5}, {abcd, {"a"}, 0.6}}, 0.7);
  ASSERT_EQ(merged.size(), 1u);
  EXPECT_EQ(merged[0].ngrams, abcd);
  EXPECT_EQ(merged[0].egos, (std::vector<std::string>{"a", "c"}));
  EXPECT_EQ(merged[0].density, 0.6);

  EXPECT_EQ(dedup_topics({{abcd, {}, 0}, {abef, {}, 0}}, 0.7).size(), 2u);

  // Jaccard exactly at the threshold merges
  std::vector<std::string> ten, seven;
  for (int i = 0; i < 10; ++i) ten.push_back("n" + std::to_string(i));
  seven.assign(ten.begin(), ten.begin() + 7);
  EXPECT_EQ(dedup_topics({{ten, {}, 0}, {seven, {}, 0}}, 0.7).size(), 1u);
  EXPECT_THROW(dedup_topics({}, 0), Error);
}

TEST(Dedup, IdempotentAndSeparated) {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TopicCandidate> cands;
    int k = 1 + static_cast<int>(rng() % 15);
    for (int i = 0; i < k; ++i) {
      TopicCandidate c;
      int m = 3 + static_cast<int>(rng() % 5);
      for (int j = 0; j < m; ++j) c.ngrams.push_back("n" + std::to_string(rng() % 10));
      cands.push_back(c);
    }
    auto once = dedup_topics(cands, 0.7);
    for (std::size_t i = 0; i < once.size(); ++i)
      for (std::size_t j = i + 1; j < once.size(); ++j) EXPECT_LT(set_jaccard(once[i].ngrams, once[j].ngrams), 0.7);
    std::vector<TopicCandidate> again;
    for (const auto& t : once) again.push_back({t.ngrams, t.egos, t.density});
    EXPECT_EQ(topics_to_jsonl(dedup_topics(again, 0.7)), topics_to_jsonl(once));
  }
}

TEST(Topics, JsonlRoundTrip) {
  std::vector<MicroTopic> ts = {make_topic({"a", "b", "c"}, {"a"}, 0.5), make_topic({"x", "y", "z"}, {"y"}, 0.75)};
  std::istringstream in(topics_to_jsonl(ts));
  std::vector<MicroTopic> back;
  std::string line;
  while (std::getline(in, line)) back.push_back(topic_from_json(nlohmann::json::parse(line)));
  EXPECT_EQ(topics_to_jsonl(back), topics_to_jsonl(ts));
}
