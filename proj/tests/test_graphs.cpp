#include <filesystem>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "forge/bigraph.hpp"
#include "forge/corpus.hpp"
#include "forge/simgraph.hpp"

using namespace forge;

namespace {

PipelineConfig loose() {
  PipelineConfig c;
  c.min_cooccurrence = 1;
  c.min_query_frequency = 1;
  return c;
}

const TimeWindow kAll{0, 1'000'000};

// Brute-force W from the session definition: for every session, every n-gram of any of its
// queries pairs once with every query of the session.
std::map<std::pair<std::string, std::string>, double> brute_weights(const Corpus& c, const TimeWindow& w,
                                                                    const PipelineConfig& cfg) {
  std::map<std::pair<std::string, std::string>, double> out;
  auto stop = cfg.stopword_set();
  for (const auto& s : c.sessions) {
    if (!w.contains(s.start)) continue;
    std::set<std::string> grams;
    for (auto q : s.queries)
      for (const auto& g : extract_ngrams(c.queries.str(q), cfg.n_max, stop)) grams.insert(g);
    for (const auto& g : grams)
      for (auto q : s.queries) out[{g, c.queries.str(q)}] += 1;
  }
  for (auto it = out.begin(); it != out.end();) it = it->second < cfg.min_cooccurrence ? out.erase(it) : std::next(it);
  return out;
}

std::map<std::pair<std::string, std::string>, double> stored_weights(const Bigraph& b) {
  std::map<std::pair<std::string, std::string>, double> out;
  for (NgramId n = 0; n < b.ngrams().size(); ++n) {
    auto r = b.row(n);
    for (std::size_t i = 0; i < r.size(); ++i) out[{b.ngrams().str(n), b.queries().str(r.ids[i])}] = r.weights[i];
  }
  return out;
}

std::vector<QueryEvent> random_events(std::mt19937_64& rng, int users, int sessions, std::int64_t span) {
  const std::vector<std::string> vocab = {"garlic knots", "garlic bread", "bread recipe", "knots recipe", "easy garlic bread",
                                          "nautical decor", "coastal decor", "anchor art", "coastal living room", "the decor"};
  std::vector<QueryEvent> ev;
  for (int s = 0; s < sessions; ++s) {
    std::string user = "u" + std::to_string(rng() % static_cast<unsigned>(users));
    std::int64_t ts = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(span));
    int m = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < m; ++k) ev.push_back({user, ts + 60 * k, vocab[rng() % vocab.size()]});
  }
  return ev;
}

double naive_cj(const std::map<std::uint32_t, double>& a, const std::map<std::uint32_t, double>& b) {
  std::set<std::uint32_t> keys;
  for (auto& [k, v] : a) keys.insert(k);
  for (auto& [k, v] : b) keys.insert(k);
  double mn = 0, mx = 0;
  for (auto k : keys) {
    double x = a.count(k) ? a.at(k) : 0, y = b.count(k) ? b.at(k) : 0;
    mn += std::min(x, y);
    mx += std::max(x, y);
  }
  return mn / mx;
}

}  // namespace

TEST(Bigraph, HandEnumeratedSingleSession) {
  auto cfg = loose();
  auto c = build_corpus({{"u1", 100, "garlic knots"}, {"u1", 160, "garlic bread"}}, cfg);
  auto b = build_bigraph(c, kAll, cfg);
  std::map<std::pair<std::string, std::string>, double> want;
  for (auto g : {"garlic", "knots", "garlic knots", "bread", "garlic bread"})
    for (auto q : {"garlic knots", "garlic bread"}) want[{g, q}] = 1;
  EXPECT_EQ(stored_weights(b), want);
  EXPECT_EQ(b.query_popularity(b.require_query("garlic knots")), 1u);

  // the same session twice doubles every weight
  auto c2 = build_corpus({{"u1", 100, "garlic knots"}, {"u1", 160, "garlic bread"}, {"u2", 100, "garlic knots"},
                          {"u2", 160, "garlic bread"}},
                         cfg);
  auto b2 = build_bigraph(c2, kAll, cfg);
  for (auto& [k, v] : want) v *= 2;
  EXPECT_EQ(stored_weights(b2), want);
}

TEST(Bigraph, QueryDistribution) {
  auto b = bigraph_from_rows(kAll, {"garlic", "knots"}, {"garlic knots", "x"}, {{{0, 5}}, {{0, 1}, {1, 2}}}, {3, 2});
  auto row = b.query_distribution("garlic");
  ASSERT_EQ(row.size(), 1u);
  EXPECT_EQ(row.ids[0], 0u);
  EXPECT_EQ(row.weights[0], 5);
  EXPECT_THROW(b.query_distribution("zzz"), Error);
  EXPECT_THROW(b.query_distribution(NgramId{7}), Error);
  EXPECT_EQ(b.weight(0, 1), 0);
}

TEST(Bigraph, MatchesBruteForceOnRandomCorpora) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto ev = random_events(rng, 8, 60, 200'000);
    for (double min_cooc : {1.0, 2.0}) {
      auto cfg = loose();
      cfg.min_cooccurrence = min_cooc;
      auto c = build_corpus(ev, cfg);
      TimeWindow w{0, 150'000};
      auto b = build_bigraph(c, w, cfg);
      EXPECT_EQ(stored_weights(b), brute_weights(c, w, cfg));
      for (QueryId q = 0; q < b.queries().size(); ++q) EXPECT_GE(b.query_popularity(q), 1u);
      if (min_cooc == 1.0) {
        for (NgramId n = 0; n < b.ngrams().size(); ++n) EXPECT_GE(b.row(n).l1(), b.ngram_session_count(n));
      }
    }
  }
}

TEST(Bigraph, ThreadedBuildIsIdentical) {
  std::mt19937_64 rng(23);
  auto ev = random_events(rng, 20, 400, 100'000);
  auto cfg = loose();
  auto c = build_corpus(ev, cfg);
  auto one = build_bigraph(c, kAll, cfg);
  cfg.threads = 4;
  auto four = build_bigraph(c, kAll, cfg);
  EXPECT_EQ(stored_weights(one), stored_weights(four));
}

TEST(Bigraph, WindowMonotonicity) {
  std::mt19937_64 rng(29);
  auto cfg = loose();
  for (int trial = 0; trial < 10; ++trial) {
    auto c = build_corpus(random_events(rng, 6, 80, 100'000), cfg);
    auto big = stored_weights(build_bigraph(c, {0, 100'000}, cfg));
    auto small = stored_weights(build_bigraph(c, {20'000, 60'000}, cfg));
    for (auto& [k, v] : small) {
      ASSERT_TRUE(big.count(k));
      EXPECT_LE(v, big[k]);
    }
  }
}

TEST(Bigraph, DisjointWindowsGiveDifferentDistributions) {
  auto cfg = loose();
  std::vector<QueryEvent> ev = {{"u1", 10, "garlic knots"}, {"u1", 20, "knots recipe"},
                                {"u2", 50'000, "garlic knots"}, {"u2", 50'010, "garlic bread"}};
  auto c = build_corpus(ev, cfg);
  auto a = build_bigraph(c, {0, 1000}, cfg);
  auto b = build_bigraph(c, {1000, 100'000}, cfg);
  auto row_text = [](const Bigraph& g, const char* n) {
    std::set<std::string> out;
    auto r = g.query_distribution(n);
    for (auto q : r.ids) out.insert(g.queries().str(q));
    return out;
  };
  EXPECT_NE(row_text(a, "garlic"), row_text(b, "garlic"));
  EXPECT_THROW(build_bigraph(c, {200'000, 300'000}, cfg), Error);
}

TEST(Bigraph, SnapshotRoundTrip) {
  std::mt19937_64 rng(31);
  auto cfg = loose();
  auto b = build_bigraph(build_corpus(random_events(rng, 5, 50, 10'000), cfg), kAll, cfg);
  auto dir = std::filesystem::temp_directory_path() / "forge_test_bigraph";
  std::filesystem::create_directories(dir);
  b.save(dir);
  auto back = Bigraph::load(dir);
  EXPECT_EQ(stored_weights(back), stored_weights(b));
  EXPECT_EQ(back.window(), b.window());
  EXPECT_EQ(back.config_hash(), b.config_hash());
  std::filesystem::remove_all(dir);
}

TEST(ContinuousJaccard, Examples) {
  SparseVector a{{1, 2}, {2, 1}}, b{{1, 1}, {2, 3}};
  EXPECT_DOUBLE_EQ(continuous_jaccard(a.view(), b.view()), 0.4);
  EXPECT_EQ(continuous_jaccard(a.view(), a.view()), 1.0);
  SparseVector c{{7, 1}}, d{{8, 4}};
  EXPECT_EQ(continuous_jaccard(c.view(), d.view()), 0.0);
  SparseVector e;
  EXPECT_THROW(continuous_jaccard(e.view(), e.view()), Error);
  EXPECT_EQ(continuous_jaccard(e.view(), c.view()), 0.0);
}

TEST(ContinuousJaccard, BinaryIsSetJaccard) {
  SparseVector a{{1, 1}, {2, 1}, {3, 1}}, b{{2, 1}, {3, 1}, {4, 1}, {5, 1}};
  EXPECT_EQ(continuous_jaccard(a.view(), b.view()), 2.0 / 5.0);
}

TEST(ContinuousJaccard, SymmetryScalingRange) {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> w(0.1, 10);
  for (int i = 0; i < 500; ++i) {
    std::map<std::uint32_t, double> ma, mb;
    for (int k = 0; k < 6; ++k) {
      ma[static_cast<std::uint32_t>(rng() % 10)] = w(rng);
      mb[static_cast<std::uint32_t>(rng() % 10)] = w(rng);
    }
    SparseVector a, b, la, lb;
    const double lambda = std::ldexp(1.0, static_cast<int>(rng() % 8));  // powers of two scale exactly
    for (auto [k, v] : ma) a.ids.push_back(k), a.weights.push_back(v), la.ids.push_back(k), la.weights.push_back(lambda * v);
    for (auto [k, v] : mb) b.ids.push_back(k), b.weights.push_back(v), lb.ids.push_back(k), lb.weights.push_back(lambda * v);
    double ab = continuous_jaccard(a.view(), b.view());
    EXPECT_EQ(ab, continuous_jaccard(b.view(), a.view()));
    EXPECT_EQ(ab, continuous_jaccard(la.view(), lb.view()));
    EXPECT_GE(ab, 0);
    EXPECT_LE(ab, 1);
    EXPECT_NEAR(ab, naive_cj(ma, mb), 1e-12);
  }
}

TEST(SimGraph, ThresholdRule) {
  // rows are the 0.4 pair from the continuous Jaccard example
  auto b = bigraph_from_rows(kAll, {"n0", "n1"}, {"q0", "q1", "q2"}, {{{1, 2}, {2, 1}}, {{1, 1}, {2, 3}}}, {1, 1, 1});
  auto g = build_simgraph(b, 0.3);
  ASSERT_EQ(g.edge_count(), 1u);
  EXPECT_DOUBLE_EQ(g.graph().weight(0, 1), 0.4);
  EXPECT_EQ(build_simgraph(b, 0.5).edge_count(), 0u);
}

TEST(SimGraph, DisjointSupportsNeverConnect) {
  auto b = bigraph_from_rows(kAll, {"a", "b"}, {"q0", "q1"}, {{{0, 1}}, {{1, 1}}}, {1, 1});
  EXPECT_EQ(build_simgraph(b, 0.01).edge_count(), 0u);
}

TEST(SimGraph, MatchesNaiveAllPairs) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t n = 30 + rng() % 60, qn = 20 + rng() % 40;
    std::vector<std::string> ngrams, queries;
    for (std::size_t i = 0; i < n; ++i) ngrams.push_back("n" + std::to_string(i));
    for (std::size_t i = 0; i < qn; ++i) queries.push_back("q" + std::to_string(i));
    std::vector<std::vector<std::pair<QueryId, double>>> rows(n);
    std::vector<std::map<std::uint32_t, double>> dense(n);
    for (std::size_t i = 0; i < n; ++i) {
      int k = 1 + static_cast<int>(rng() % 5);
      for (int j = 0; j < k; ++j) dense[i][static_cast<std::uint32_t>(rng() % qn)] = 1 + static_cast<double>(rng() % 6);
      for (auto [q, w] : dense[i]) rows[i].push_back({q, w});
    }
    auto b = bigraph_from_rows(kAll, ngrams, queries, rows, std::vector<std::uint32_t>(qn, 1));
    auto g = build_simgraph(b, 0.3);
    std::size_t want_edges = 0;
    for (std::uint32_t x = 0; x < n; ++x) {
      EXPECT_LE(g.graph().degree(x), n - 1);
      for (std::uint32_t y = x + 1; y < n; ++y) {
        double s = naive_cj(dense[x], dense[y]);
        if (s >= 0.3) {
          ++want_edges;
          EXPECT_NEAR(g.graph().weight(x, y), s, 1e-12);
        } else {
          EXPECT_EQ(g.graph().weight(x, y), 0);
        }
      }
    }
    EXPECT_EQ(g.edge_count(), want_edges);
  }
}

TEST(SimGraph, EgoNeighborhood) {
  // 5 nodes: triangle 0-1-2, plus 2-3, 3-4, 1-3
  std::vector<Edge> edges = {{0, 1, 0.5}, {0, 2, 0.6}, {1, 2, 0.7}, {2, 3, 0.4}, {3, 4, 0.9}, {1, 3, 0.35}};
  SimGraph g(Interner::from_strings({"a", "b", "c", "d", "e"}), WeightedGraph(5, edges), 0.3);
  for (std::uint32_t v = 0; v < 5; ++v) {
    auto ego = g.ego_neighborhood(v);
    std::set<std::uint32_t> nbrs;
    for (const auto& e : edges) {
      if (e.a == v) nbrs.insert(e.b);
      if (e.b == v) nbrs.insert(e.a);
    }
    EXPECT_EQ(std::set<std::uint32_t>(ego.nodes.begin(), ego.nodes.end()), nbrs);
    std::set<std::pair<std::uint32_t, std::uint32_t>> want, got;
    for (const auto& e : edges)
      if (nbrs.count(e.a) && nbrs.count(e.b)) want.insert({std::min(e.a, e.b), std::max(e.a, e.b)});
    for (const auto& e : ego.graph.edges()) {
      auto a = ego.nodes[e.a], b = ego.nodes[e.b];
      got.insert({std::min(a, b), std::max(a, b)});
      EXPECT_EQ(e.weight, g.graph().weight(a, b));
    }
    EXPECT_EQ(got, want);
  }
  EXPECT_THROW(g.ego_neighborhood(9), Error);
  SimGraph lonely(Interner::from_strings({"x"}), WeightedGraph(1, {}), 0.3);
  EXPECT_TRUE(lonely.ego_neighborhood(0).nodes.empty());
}

TEST(SimGraph, SnapshotRoundTrip) {
  std::vector<Edge> edges = {{0, 1, 0.5}, {1, 2, 0.123456789012345}};
  SimGraph g(Interner::from_strings({"a", "b", "c"}), WeightedGraph(3, edges), 0.3, "abc");
  auto dir = std::filesystem::temp_directory_path() / "forge_test_simgraph";
  std::filesystem::create_directories(dir);
  g.save(dir);
  auto back = SimGraph::load(dir);
  EXPECT_EQ(back.graph().edges(), g.graph().edges());
  EXPECT_EQ(back.ngrams().strings(), g.ngrams().strings());
  EXPECT_EQ(back.threshold(), 0.3);
  std::filesystem::remove_all(dir);
}
