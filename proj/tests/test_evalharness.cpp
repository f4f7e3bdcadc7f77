#include <map>
#include <set>

#include <gtest/gtest.h>

#include "forge/evalharness.hpp"

using namespace forge;

namespace {

PlantedSpec small_spec(int topics, std::size_t sessions, std::uint64_t seed = 3) {
  SyntheticParams p;
  p.topics = topics;
  p.phrases_min = 10;
  p.phrases_max = 15;
  auto spec = synthetic_spec(p, seed);
  spec.session_count = sessions;
  spec.users = 200;
  return spec;
}

}  // namespace

TEST(Generator, TopicFrequenciesFollowZipf) {
  auto spec = small_spec(10, 20000);
  auto g = generate_corpus(spec, 5);
  std::vector<double> observed(10, 0);
  for (auto t : g.truth.session_topic) observed[t] += 1;
  double total_pop = 0;
  for (const auto& t : spec.topics) total_pop += t.popularity;
  double chi2 = 0;
  for (std::size_t t = 0; t < 10; ++t) {
    double expected = 20000.0 * spec.topics[t].popularity / total_pop;
    chi2 += (observed[t] - expected) * (observed[t] - expected) / expected;
  }
  // 99.9% quantile of chi-square with 9 degrees of freedom
  EXPECT_LT(chi2, 27.877);
  EXPECT_DOUBLE_EQ(spec.topics[3].popularity, 1.0 / std::pow(4.0, 1.1));
}

TEST(Generator, DeterministicPerSeed) {
  auto spec = small_spec(4, 2000);
  auto a = generate_corpus(spec, 11), b = generate_corpus(spec, 11), c = generate_corpus(spec, 12);
  EXPECT_EQ(to_jsonl(a.events), to_jsonl(b.events));
  EXPECT_EQ(to_jsonl(a.pins), to_jsonl(b.pins));
  EXPECT_EQ(to_jsonl(a.interactions), to_jsonl(b.interactions));
  EXPECT_NE(to_jsonl(a.events), to_jsonl(c.events));
  EXPECT_EQ(to_json(synthetic_spec(SyntheticParams{}, 4)), to_json(synthetic_spec(SyntheticParams{}, 4)));
}

TEST(Generator, SingleTopicWithoutNoiseUsesOnlyItsVocabulary) {
  auto spec = small_spec(1, 500);
  spec.modifiers.clear();
  spec.modifier_rate = 0;
  spec.noise_rate = 0;
  auto g = generate_corpus(spec, 2);
  std::set<std::string> vocab(spec.topics[0].phrases.begin(), spec.topics[0].phrases.end());
  for (const auto& e : g.events) EXPECT_TRUE(vocab.count(e.query)) << e.query;
  for (const auto& e : g.events) EXPECT_TRUE(g.truth.windows[0].contains(e.ts));
}

TEST(Generator, DriftSwapsThePhraseBetweenWindows) {
  auto spec = drift_spec(4);
  spec.session_count = 4000;
  spec.modifiers.clear();
  spec.modifier_rate = 0;
  auto g = generate_corpus(spec, 4);
  ASSERT_EQ(g.truth.windows.size(), 2u);
  const auto& d = spec.drift[0];
  std::size_t from_early = 0, to_late = 0;
  for (const auto& e : g.events) {
    bool late = g.truth.windows[1].contains(e.ts);
    if (e.query == d.from) {
      EXPECT_FALSE(late);
      ++from_early;
    }
    if (e.query == d.to) {
      EXPECT_TRUE(late);
      ++to_late;
    }
  }
  EXPECT_GT(from_early, 0u);
  EXPECT_GT(to_late, 0u);
}

TEST(Generator, SpecValidationAndRoundTrip) {
  auto spec = small_spec(3, 100);
  spec.ambiguous_terms.push_back({"shared words", {spec.topics[0].name, spec.topics[2].name}});
  auto back = planted_spec_from_json(to_json(spec));
  EXPECT_EQ(to_json(back), to_json(spec));

  auto bad = spec;
  bad.ambiguous_terms.push_back({"x y", {"nope", spec.topics[0].name}});
  EXPECT_THROW(bad.validate(), Error);
  bad = spec;
  bad.topics.clear();
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Recovery, SetF1) {
  auto f = set_f1({"a", "b", "c"}, {"a", "b", "d"});
  EXPECT_DOUBLE_EQ(f.f1, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(f.precision, 2.0 / 3.0);
  EXPECT_EQ(set_f1({"a", "b"}, {"a", "b"}).f1, 1.0);
  EXPECT_EQ(set_f1({}, {"a"}).f1, 0.0);
  EXPECT_EQ(set_f1({"x"}, {"a"}).f1, 0.0);
}

TEST(Recovery, ScoresIdenticalAndEmptyDiscoveries) {
  std::vector<std::pair<std::string, std::vector<std::string>>> planted = {{"t0", {"a", "b", "c"}}, {"t1", {"x", "y", "z"}}};
  std::vector<MicroTopic> same = {make_topic({"x", "y", "z"}), make_topic({"a", "b", "c"})};
  auto r = score_recovery(same, planted);
  EXPECT_EQ(r.recovered_fraction, 1.0);
  EXPECT_EQ(r.mean_f1, 1.0);
  EXPECT_EQ(r.topics[0].matched_topic, same[1].id);
  auto none = score_recovery({}, planted);
  EXPECT_EQ(none.recovered_fraction, 0.0);
  EXPECT_EQ(none.mean_f1, 0.0);
}

TEST(Recovery, MatchingIsOneToOne) {
  std::vector<std::pair<std::string, std::vector<std::string>>> planted = {{"t0", {"a", "b", "c", "d"}}, {"t1", {"a", "b", "c", "e"}}};
  auto r = score_recovery({make_topic({"a", "b", "c", "d"})}, planted);
  EXPECT_EQ(r.topics[0].f1, 1.0);
  EXPECT_EQ(r.topics[1].f1, 0.0);
  EXPECT_TRUE(r.topics[1].matched_topic.empty());
  EXPECT_EQ(r.recovered_fraction, 0.5);
}

TEST(Recovery, PhraseNgramsUseThePipelineExtraction) {
  PipelineConfig cfg;
  EXPECT_EQ(phrase_ngrams({"Nautical Decor", "the anchor"}, cfg),
            (std::vector<std::string>{"anchor", "decor", "nautical", "nautical decor", "the anchor"}));
}
