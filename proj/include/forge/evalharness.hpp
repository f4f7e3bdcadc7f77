#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "forge/bigraph.hpp"
#include "forge/common.hpp"
#include "forge/communities.hpp"
#include "forge/config.hpp"
#include "forge/corpus.hpp"
#include "forge/materialize.hpp"
#include "forge/simgraph.hpp"
#include "forge/taxonomy.hpp"
#include "forge/text.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Planted corpus specification

struct PlantedTopic {
  std::string name;
  std::vector<std::string> phrases;
  double popularity = 1;
  std::string style;     // optional top-level style label
  std::string substyle;  // optional sub-style label
};

struct AmbiguousTerm {
  std::string phrase;
  std::vector<std::string> topics;  // names of the planted topics sharing it
};

struct DriftRule {
  std::string topic;
  std::string from;  // retired in the second window
  std::string to;    // introduced in the second window
};

struct PlantedSpec {
  std::vector<PlantedTopic> topics;
  std::vector<AmbiguousTerm> ambiguous_terms;
  std::vector<DriftRule> drift;
  std::vector<std::string> modifiers;
  double modifier_rate = 0.15;
  double noise_rate = 0.1;
  std::size_t session_count = 100000;
  int min_queries = 2;
  int max_queries = 8;
  std::size_t users = 2000;
  int pins_per_topic = 40;
  int interactions_per_user = 12;
  std::vector<std::string> pin_fillers = {"photo", "inspo", "look", "board", "pic"};
  double pin_ambiguous_rate = 0.3;  // chance a pin also mentions one of its topic's shared phrases
  double pin_sibling_leak = 0.25;   // chance a pin also mentions a phrase of a sibling sub-style
  double pin_cross_leak = 0.03;     // chance a pin also mentions a phrase of another style
  std::int64_t start_ts = 1'700'000'000;
  std::int64_t window_seconds = 30LL * 24 * 3600;

  void validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidSpec, msg); };
    if (topics.empty()) fail("at least one planted topic required");
    std::set<std::string> names;
    for (const auto& t : topics) {
      if (t.name.empty()) fail("planted topic without a name");
      if (!names.insert(t.name).second) fail("duplicate planted topic '" + t.name + "'");
      if (!(t.popularity > 0) || !std::isfinite(t.popularity)) fail("popularity of '" + t.name + "' must be > 0");
      if (t.phrases.size() < 5) fail("planted topic '" + t.name + "' needs at least 5 phrases");
      for (const auto& p : t.phrases)
        if (normalize_query(p).empty()) fail("empty phrase in '" + t.name + "'");
    }
    if (!(noise_rate >= 0 && noise_rate < 1)) fail("noise_rate must be in [0, 1)");
    if (!(modifier_rate >= 0 && modifier_rate <= 1)) fail("modifier_rate must be in [0, 1]");
    if (modifier_rate > 0 && modifiers.empty()) fail("modifier_rate > 0 requires modifiers");
    if (session_count == 0) fail("session_count must be > 0");
    if (min_queries < 1 || max_queries < min_queries) fail("query count range invalid");
    if (users == 0) fail("users must be > 0");
    if (pins_per_topic < 0 || interactions_per_user < 0) fail("pin and interaction counts must be >= 0");
    if (window_seconds <= 0 || start_ts < 0) fail("window must be positive and start at ts >= 0");
    for (const auto& a : ambiguous_terms) {
      if (a.topics.size() < 2) fail("ambiguous term '" + a.phrase + "' must name at least 2 topics");
      for (const auto& t : a.topics)
        if (!names.contains(t)) fail("ambiguous term names unknown topic '" + t + "'");
    }
    for (const auto& d : drift) {
      auto it = std::find_if(topics.begin(), topics.end(), [&](const auto& t) { return t.name == d.topic; });
      if (it == topics.end()) fail("drift names unknown topic '" + d.topic + "'");
      if (std::find(it->phrases.begin(), it->phrases.end(), d.from) == it->phrases.end())
        fail("drift phrase '" + d.from + "' is not in topic '" + d.topic + "'");
    }
    for (double r : {pin_ambiguous_rate, pin_sibling_leak, pin_cross_leak})
      if (!(r >= 0 && r <= 1)) fail("pin rates must be in [0, 1]");
  }

  std::size_t window_count() const { return drift.empty() ? 1 : 2; }
};

inline nlohmann::json to_json(const PlantedSpec& s) {
  nlohmann::json topics = nlohmann::json::array();
  for (const auto& t : s.topics)
    topics.push_back({{"name", t.name},
                      {"phrases", t.phrases},
                      {"popularity", t.popularity},
                      {"style", t.style},
                      {"substyle", t.substyle}});
  nlohmann::json amb = nlohmann::json::array();
  for (const auto& a : s.ambiguous_terms) amb.push_back({{"phrase", a.phrase}, {"topics", a.topics}});
  nlohmann::json drift = nlohmann::json::array();
  for (const auto& d : s.drift) drift.push_back({{"topic", d.topic}, {"from", d.from}, {"to", d.to}});
  return {{"topics", topics},
          {"ambiguous_terms", amb},
          {"drift", drift},
          {"modifiers", s.modifiers},
          {"modifier_rate", s.modifier_rate},
          {"noise_rate", s.noise_rate},
          {"session_count", s.session_count},
          {"min_queries", s.min_queries},
          {"max_queries", s.max_queries},
          {"users", s.users},
          {"pins_per_topic", s.pins_per_topic},
          {"interactions_per_user", s.interactions_per_user},
          {"pin_fillers", s.pin_fillers},
          {"pin_ambiguous_rate", s.pin_ambiguous_rate},
          {"pin_sibling_leak", s.pin_sibling_leak},
          {"pin_cross_leak", s.pin_cross_leak},
          {"start_ts", s.start_ts},
          {"window_seconds", s.window_seconds}};
}

inline PlantedSpec planted_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidSpec, "spec must be a JSON object");
  PlantedSpec s;
  const auto known = to_json(s);
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw Error(ErrorCode::InvalidSpec, "unknown spec key '" + key + "'");
  try {
    for (const auto& t : j.at("topics"))
      s.topics.push_back({t.at("name").get<std::string>(), t.at("phrases").get<std::vector<std::string>>(),
                          t.value("popularity", 1.0), t.value("style", std::string()), t.value("substyle", std::string())});
    if (j.contains("ambiguous_terms"))
      for (const auto& a : j.at("ambiguous_terms"))
        s.ambiguous_terms.push_back({a.at("phrase").get<std::string>(), a.at("topics").get<std::vector<std::string>>()});
    if (j.contains("drift"))
      for (const auto& d : j.at("drift"))
        s.drift.push_back({d.at("topic").get<std::string>(), d.at("from").get<std::string>(), d.at("to").get<std::string>()});
    auto get = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("modifiers", s.modifiers);
    get("modifier_rate", s.modifier_rate);
    get("noise_rate", s.noise_rate);
    get("session_count", s.session_count);
    get("min_queries", s.min_queries);
    get("max_queries", s.max_queries);
    get("users", s.users);
    get("pins_per_topic", s.pins_per_topic);
    get("interactions_per_user", s.interactions_per_user);
    get("pin_fillers", s.pin_fillers);
    get("pin_ambiguous_rate", s.pin_ambiguous_rate);
    get("pin_sibling_leak", s.pin_sibling_leak);
    get("pin_cross_leak", s.pin_cross_leak);
    get("start_ts", s.start_ts);
    get("window_seconds", s.window_seconds);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, e.what());
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic vocabularies

struct SyntheticParams {
  int topics = 20;
  int phrases_min = 30;
  int phrases_max = 80;
  double zipf_s = 1.1;
  double two_word_fraction = 0.5;
  int styles = 0;              // > 0 groups topics into styles x substyles
  int ambiguous_within_style = 0;
  int ambiguous_cross_style = 0;
  int ambiguous_any = 0;       // shared by two random topics when no styles are set
  int modifiers = 6;
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

inline std::size_t pick_weighted(std::mt19937_64& rng, const std::vector<double>& cumulative) {
  double x = uniform01(rng) * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
  return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

inline std::vector<double> cumulative(const std::vector<double>& w) {
  std::vector<double> c(w.size());
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) c[i] = (s += w[i]);
  return c;
}

class WordMaker {
 public:
  explicit WordMaker(std::uint64_t seed) : rng_(seed) {}
  std::string next() {
    static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "st", "gl"};
    static const char* vowels[] = {"a", "e", "i", "o", "u", "ai", "oa"};
    while (true) {
      std::string w;
      int syllables = uniform_int(rng_, 2, 3);
      for (int i = 0; i < syllables; ++i) {
        w += onsets[uniform_index(rng_, std::size(onsets))];
        w += vowels[uniform_index(rng_, std::size(vowels))];
      }
      if (used_.insert(w).second) return w;
    }
  }

 private:
  std::mt19937_64 rng_;
  std::set<std::string> used_;
};

}  // namespace detail

// Builds a spec with pseudo-word vocabularies: unique words per phrase, Zipf topic
// popularity, optional style grouping with shared phrases inside and across styles.
inline PlantedSpec synthetic_spec(const SyntheticParams& p, std::uint64_t seed) {
  if (p.topics < 1 || p.phrases_min < 5 || p.phrases_max < p.phrases_min)
    throw Error(ErrorCode::InvalidSpec, "synthetic params out of range");
  std::mt19937_64 rng(mix_seed(seed, 0x51));
  detail::WordMaker words(mix_seed(seed, 0x77));
  PlantedSpec spec;
  const int substyles = p.styles > 0 ? (p.topics + p.styles - 1) / p.styles : 0;
  for (int t = 0; t < p.topics; ++t) {
    PlantedTopic topic;
    topic.name = "topic" + std::to_string(t);
    topic.popularity = 1.0 / std::pow(static_cast<double>(t + 1), p.zipf_s);
    int count = detail::uniform_int(rng, p.phrases_min, p.phrases_max);
    for (int i = 0; i < count; ++i) {
      std::string phrase = words.next();
      if (detail::uniform01(rng) < p.two_word_fraction) phrase += " " + words.next();
      topic.phrases.push_back(std::move(phrase));
    }
    if (p.styles > 0) {
      int style = t / substyles;
      topic.style = "style" + std::to_string(style);
      topic.substyle = topic.style + "/sub" + std::to_string(t % substyles);
    }
    spec.topics.push_back(std::move(topic));
  }
  auto shared_phrase = [&] { return words.next() + " " + words.next(); };
  if (p.styles > 0 && substyles >= 2) {
    for (int s = 0; s < p.styles; ++s) {
      std::vector<int> members;
      for (int t = 0; t < p.topics; ++t)
        if (t / substyles == s) members.push_back(t);
      if (members.size() < 2) continue;
      for (int k = 0; k < p.ambiguous_within_style; ++k) {
        auto a = members[detail::uniform_index(rng, members.size())];
        auto b = a;
        while (b == a) b = members[detail::uniform_index(rng, members.size())];
        spec.ambiguous_terms.push_back({shared_phrase(), {spec.topics[a].name, spec.topics[b].name}});
      }
    }
    for (int k = 0; k < p.ambiguous_cross_style && p.styles > 1; ++k) {
      int a = static_cast<int>(detail::uniform_index(rng, static_cast<std::size_t>(p.topics)));
      int b = a;
      while (b / substyles == a / substyles) b = static_cast<int>(detail::uniform_index(rng, static_cast<std::size_t>(p.topics)));
      spec.ambiguous_terms.push_back({shared_phrase(), {spec.topics[a].name, spec.topics[b].name}});
    }
  }
  for (int k = 0; k < p.ambiguous_any && p.topics > 1; ++k) {
    int a = static_cast<int>(detail::uniform_index(rng, static_cast<std::size_t>(p.topics)));
    int b = a;
    while (b == a) b = static_cast<int>(detail::uniform_index(rng, static_cast<std::size_t>(p.topics)));
    spec.ambiguous_terms.push_back({shared_phrase(), {spec.topics[a].name, spec.topics[b].name}});
  }
  for (int m = 0; m < p.modifiers; ++m) spec.modifiers.push_back(words.next());
  return spec;
}

// Equal-popularity topics with small vocabularies; each shared phrase joins two topics
// whose sessions use it about equally often.
inline PlantedSpec overlap_spec(std::uint64_t seed, int topics = 8, int shared = 4) {
  SyntheticParams p;
  p.topics = topics;
  p.zipf_s = 0;
  p.phrases_min = 12;
  p.phrases_max = 16;
  p.ambiguous_any = shared;
  auto spec = synthetic_spec(p, seed);
  spec.session_count = 30000;
  spec.users = 600;
  return spec;
}

// One broad topic whose vocabulary includes a handful of narrow phrases, plus a popular
// topic searched only with those narrow phrases, among ordinary background topics.
inline PlantedSpec granularity_spec(std::uint64_t seed, int narrow_phrases = 8) {
  SyntheticParams p;
  p.topics = 6;
  p.zipf_s = 0;
  p.phrases_min = 30;
  p.phrases_max = 40;
  auto spec = synthetic_spec(p, seed);
  auto& broad = spec.topics[0];
  broad.name = "broad";
  PlantedTopic narrow;
  narrow.name = "narrow";
  narrow.popularity = 2.0;
  for (int i = 0; i < narrow_phrases; ++i) narrow.phrases.push_back(spec.topics[1].phrases[static_cast<std::size_t>(i)]);
  broad.phrases.insert(broad.phrases.end(), narrow.phrases.begin(), narrow.phrases.end());
  spec.topics[1] = std::move(narrow);
  spec.session_count = 40000;
  spec.users = 800;
  return spec;
}

// Two windows; in the second one a phrase of the first topic is replaced by a new one.
inline PlantedSpec drift_spec(std::uint64_t seed) {
  SyntheticParams p;
  p.topics = 6;
  p.zipf_s = 0;
  p.phrases_min = 20;
  p.phrases_max = 30;
  auto spec = synthetic_spec(p, seed);
  detail::WordMaker words(mix_seed(seed, 0xd1));
  std::set<std::string> used;
  for (const auto& t : spec.topics)
    for (const auto& ph : t.phrases)
      for (auto& w : tokenize(ph)) used.insert(w);
  for (const auto& m : spec.modifiers) used.insert(m);
  auto unused_word = [&] {
    auto w = words.next();
    while (used.count(w)) w = words.next();
    used.insert(w);
    return w;
  };
  std::string fresh = unused_word() + " " + unused_word();
  spec.drift.push_back({spec.topics[0].name, spec.topics[0].phrases.front(), fresh});
  spec.session_count = 30000;
  spec.users = 600;
  return spec;
}

// ---------------------------------------------------------------------------
// Corpus generation

struct PinTruth {
  std::string pin;
  std::size_t topic = 0;
};

struct GroundTruth {
  // phrase pools per topic (own phrases plus shared ones), per window
  std::vector<std::vector<std::vector<std::string>>> vocab;  // [window][topic] -> phrases
  std::vector<TimeWindow> windows;
  std::vector<std::size_t> session_topic;   // planted topic of each generated session
  std::vector<std::size_t> session_window;
  std::vector<PinTruth> pins;
  std::map<std::string, std::vector<std::pair<std::size_t, double>>> user_topics;  // user -> (topic, weight)
};

struct GeneratedCorpus {
  std::vector<QueryEvent> events;
  std::vector<Pin> pins;
  std::vector<Interaction> interactions;
  GroundTruth truth;
};

inline GeneratedCorpus generate_corpus(const PlantedSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(mix_seed(seed, 0x9e));
  const std::size_t T = spec.topics.size();
  const std::size_t windows = spec.window_count();
  GeneratedCorpus out;
  auto& truth = out.truth;
  for (std::size_t w = 0; w < windows; ++w)
    truth.windows.push_back(TimeWindow::make(spec.start_ts + static_cast<std::int64_t>(w) * spec.window_seconds,
                                             spec.start_ts + static_cast<std::int64_t>(w + 1) * spec.window_seconds));

  std::map<std::string, std::size_t> topic_index;
  for (std::size_t t = 0; t < T; ++t) topic_index[spec.topics[t].name] = t;
  std::vector<std::vector<std::string>> shared(T);
  for (const auto& a : spec.ambiguous_terms)
    for (const auto& name : a.topics) shared[topic_index.at(name)].push_back(a.phrase);

  truth.vocab.assign(windows, std::vector<std::vector<std::string>>(T));
  for (std::size_t w = 0; w < windows; ++w) {
    for (std::size_t t = 0; t < T; ++t) {
      auto pool = spec.topics[t].phrases;
      if (w == 1) {
        for (const auto& d : spec.drift) {
          if (d.topic != spec.topics[t].name) continue;
          std::replace(pool.begin(), pool.end(), d.from, d.to);
        }
      }
      pool.insert(pool.end(), shared[t].begin(), shared[t].end());
      truth.vocab[w][t] = std::move(pool);
    }
  }

  // users: one primary topic, sometimes a secondary one (80/20)
  std::vector<double> pop;
  for (const auto& t : spec.topics) pop.push_back(t.popularity);
  const auto pop_cum = detail::cumulative(pop);
  std::vector<std::string> user_ids;
  std::vector<std::vector<std::pair<std::size_t, double>>> user_prefs(spec.users);
  std::vector<std::vector<std::size_t>> users_of_topic(T);
  for (std::size_t u = 0; u < spec.users; ++u) {
    user_ids.push_back("u" + std::to_string(u));
    std::size_t primary = u < T ? u : detail::pick_weighted(rng, pop_cum);
    user_prefs[u].push_back({primary, 1.0});
    if (T > 1 && detail::uniform01(rng) < 0.5) {
      std::size_t secondary = primary;
      while (secondary == primary) secondary = detail::pick_weighted(rng, pop_cum);
      user_prefs[u] = {{primary, 0.8}, {secondary, 0.2}};
    }
    for (auto [t, weight] : user_prefs[u]) users_of_topic[t].push_back(u);
  }
  for (std::size_t t = 0; t < T; ++t)
    if (users_of_topic[t].empty()) users_of_topic[t].push_back(t % spec.users);

  // sessions
  struct Draft {
    std::size_t user;
    std::size_t window;
    std::vector<std::string> queries;
  };
  std::vector<Draft> drafts;
  drafts.reserve(spec.session_count);
  for (std::size_t s = 0; s < spec.session_count; ++s) {
    std::size_t t = detail::pick_weighted(rng, pop_cum);
    std::size_t w = windows == 1 ? 0 : detail::uniform_index(rng, windows);
    const auto& pool = truth.vocab[w][t];
    int m = std::min<int>(detail::uniform_int(rng, spec.min_queries, spec.max_queries), static_cast<int>(pool.size()));
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (int i = 0; i < m; ++i) std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i) + detail::uniform_index(rng, idx.size() - static_cast<std::size_t>(i))]);
    Draft d{users_of_topic[t][detail::uniform_index(rng, users_of_topic[t].size())], w, {}};
    for (int i = 0; i < m; ++i) {
      if (T > 1 && detail::uniform01(rng) < spec.noise_rate) {
        std::size_t other = t;
        while (other == t) other = detail::uniform_index(rng, T);
        const auto& op = truth.vocab[w][other];
        d.queries.push_back(op[detail::uniform_index(rng, op.size())]);
        continue;
      }
      std::string q = pool[idx[static_cast<std::size_t>(i)]];
      if (!spec.modifiers.empty() && detail::uniform01(rng) < spec.modifier_rate)
        q += " " + spec.modifiers[detail::uniform_index(rng, spec.modifiers.size())];
      d.queries.push_back(std::move(q));
    }
    truth.session_topic.push_back(t);
    truth.session_window.push_back(w);
    drafts.push_back(std::move(d));
  }

  // timestamps: spread each user's sessions evenly over each window
  std::vector<std::vector<std::vector<std::size_t>>> by_user(spec.users, std::vector<std::vector<std::size_t>>(windows));
  for (std::size_t s = 0; s < drafts.size(); ++s) by_user[drafts[s].user][drafts[s].window].push_back(s);
  for (std::size_t u = 0; u < spec.users; ++u) {
    for (std::size_t w = 0; w < windows; ++w) {
      const auto& list = by_user[u][w];
      if (list.empty()) continue;
      const std::int64_t spacing = spec.window_seconds / static_cast<std::int64_t>(list.size());
      for (std::size_t k = 0; k < list.size(); ++k) {
        const auto& d = drafts[list[k]];
        std::int64_t ts = truth.windows[w].start + static_cast<std::int64_t>(k) * spacing +
                          static_cast<std::int64_t>(detail::uniform_index(rng, static_cast<std::size_t>(std::max<std::int64_t>(1, spacing / 8))));
        for (const auto& q : d.queries) {
          out.events.push_back({user_ids[u], ts, q});
          ts += detail::uniform_int(rng, 10, 120);
        }
      }
    }
  }
  std::stable_sort(out.events.begin(), out.events.end(), [](const QueryEvent& a, const QueryEvent& b) {
    return std::tie(a.ts, a.user) < std::tie(b.ts, b.user);
  });

  // pins
  std::vector<std::vector<std::size_t>> siblings(T), others(T);
  for (std::size_t a = 0; a < T; ++a) {
    for (std::size_t b = 0; b < T; ++b) {
      if (a == b) continue;
      bool sibling = !spec.topics[a].style.empty() && spec.topics[a].style == spec.topics[b].style;
      (sibling ? siblings[a] : others[a]).push_back(b);
    }
  }
  std::vector<std::vector<std::string>> pins_of_topic(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& own = spec.topics[t].phrases;
    for (int k = 0; k < spec.pins_per_topic; ++k) {
      std::vector<std::string> parts;
      int n_own = detail::uniform_int(rng, 1, std::min<int>(3, static_cast<int>(own.size())));
      for (int i = 0; i < n_own; ++i) parts.push_back(own[detail::uniform_index(rng, own.size())]);
      if (!shared[t].empty() && detail::uniform01(rng) < spec.pin_ambiguous_rate)
        parts.push_back(shared[t][detail::uniform_index(rng, shared[t].size())]);
      if (!siblings[t].empty() && detail::uniform01(rng) < spec.pin_sibling_leak) {
        const auto& sp = spec.topics[siblings[t][detail::uniform_index(rng, siblings[t].size())]].phrases;
        parts.push_back(sp[detail::uniform_index(rng, sp.size())]);
      }
      if (!others[t].empty() && detail::uniform01(rng) < spec.pin_cross_leak) {
        const auto& op = spec.topics[others[t][detail::uniform_index(rng, others[t].size())]].phrases;
        parts.push_back(op[detail::uniform_index(rng, op.size())]);
      }
      for (std::size_t i = 1; i < parts.size(); ++i)
        std::swap(parts[i], parts[detail::uniform_index(rng, i + 1)]);
      std::string desc;
      for (const auto& part : parts) desc += (desc.empty() ? "" : " ") + part;
      if (!spec.pin_fillers.empty()) desc += " " + spec.pin_fillers[detail::uniform_index(rng, spec.pin_fillers.size())];
      std::string id = "p" + std::to_string(t) + "_" + std::to_string(k);
      out.pins.push_back({id, desc, std::nullopt});
      truth.pins.push_back({id, t});
      pins_of_topic[t].push_back(id);
    }
  }

  // interactions, concentrated on each user's preferred topics
  static constexpr Action actions[] = {Action::Save, Action::Click, Action::Closeup};
  for (std::size_t u = 0; u < spec.users; ++u) {
    std::vector<double> w;
    for (auto [t, weight] : user_prefs[u]) w.push_back(weight);
    auto cum = detail::cumulative(w);
    for (int k = 0; k < spec.interactions_per_user; ++k) {
      auto t = user_prefs[u][detail::pick_weighted(rng, cum)].first;
      if (pins_of_topic[t].empty()) continue;
      std::size_t win = detail::uniform_index(rng, windows);
      out.interactions.push_back({user_ids[u], pins_of_topic[t][detail::uniform_index(rng, pins_of_topic[t].size())],
                                  actions[detail::uniform_index(rng, 3)],
                                  truth.windows[win].start + static_cast<std::int64_t>(detail::uniform_index(rng, static_cast<std::size_t>(spec.window_seconds)))});
    }
    truth.user_topics[user_ids[u]] = user_prefs[u];
  }
  std::stable_sort(out.interactions.begin(), out.interactions.end(),
                   [](const Interaction& a, const Interaction& b) { return std::tie(a.ts, a.user) < std::tie(b.ts, b.user); });
  return out;
}

// ---------------------------------------------------------------------------
// Recovery scoring

struct TopicRecovery {
  std::string planted;
  double f1 = 0;
  double precision = 0;
  double recall = 0;
  std::string matched_topic;  // empty when unmatched
};

struct RecoveryReport {
  std::vector<TopicRecovery> topics;
  double recovered_fraction = 0;  // share of planted topics with F1 >= 0.8
  double mean_f1 = 0;
  std::map<std::string, std::size_t> ambiguous_topic_counts;  // shared phrase -> discovered topics containing it
};

inline std::vector<std::string> phrase_ngrams(const std::vector<std::string>& phrases, const PipelineConfig& config) {
  const auto stop = config.stopword_set();
  std::vector<std::string> out;
  for (const auto& p : phrases) {
    auto g = extract_ngrams(normalize_query(p), config.n_max, stop);
    out.insert(out.end(), g.begin(), g.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct F1Parts {
  double precision = 0, recall = 0, f1 = 0;
};

inline F1Parts set_f1(const std::vector<std::string>& discovered, const std::vector<std::string>& planted) {
  std::vector<std::string> common;
  std::set_intersection(discovered.begin(), discovered.end(), planted.begin(), planted.end(), std::back_inserter(common));
  if (common.empty()) return {};
  double p = static_cast<double>(common.size()) / static_cast<double>(discovered.size());
  double r = static_cast<double>(common.size()) / static_cast<double>(planted.size());
  return {p, r, 2 * p * r / (p + r)};
}

// One-to-one greedy matching by descending F1 between planted n-gram sets and discovered
// topics; unmatched planted topics score 0.
inline RecoveryReport score_recovery(const std::vector<MicroTopic>& discovered,
                                     const std::vector<std::pair<std::string, std::vector<std::string>>>& planted) {
  struct Pair {
    double f1;
    std::size_t p, d;
    F1Parts parts;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < planted.size(); ++p)
    for (std::size_t d = 0; d < discovered.size(); ++d) {
      auto parts = set_f1(discovered[d].ngrams, planted[p].second);
      if (parts.f1 > 0) pairs.push_back({parts.f1, p, d, parts});
    }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.f1 != b.f1) return a.f1 > b.f1;
    return std::tie(a.p, a.d) < std::tie(b.p, b.d);
  });
  RecoveryReport report;
  for (const auto& [name, grams] : planted) report.topics.push_back({name, 0, 0, 0, {}});
  std::vector<bool> p_used(planted.size()), d_used(discovered.size());
  for (const auto& pr : pairs) {
    if (p_used[pr.p] || d_used[pr.d]) continue;
    p_used[pr.p] = d_used[pr.d] = true;
    auto& r = report.topics[pr.p];
    r.f1 = pr.f1;
    r.precision = pr.parts.precision;
    r.recall = pr.parts.recall;
    r.matched_topic = discovered[pr.d].id;
  }
  std::size_t recovered = 0;
  double sum = 0;
  for (const auto& r : report.topics) {
    if (r.f1 >= 0.8) ++recovered;
    sum += r.f1;
  }
  if (!report.topics.empty()) {
    report.recovered_fraction = static_cast<double>(recovered) / static_cast<double>(report.topics.size());
    report.mean_f1 = sum / static_cast<double>(report.topics.size());
  }
  return report;
}

// Planted n-gram sets of the first window, by topic name.
inline std::vector<std::pair<std::string, std::vector<std::string>>> planted_ngram_sets(
    const PlantedSpec& spec, const GroundTruth& truth, const PipelineConfig& config, std::size_t window = 0) {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  for (std::size_t t = 0; t < spec.topics.size(); ++t)
    out.emplace_back(spec.topics[t].name, phrase_ngrams(truth.vocab.at(window)[t], config));
  return out;
}

inline RecoveryReport score_recovery(const std::vector<MicroTopic>& discovered, const PlantedSpec& spec,
                                     const GroundTruth& truth, const PipelineConfig& config) {
  auto report = score_recovery(discovered, planted_ngram_sets(spec, truth, config));
  for (const auto& a : spec.ambiguous_terms) {
    auto gram = normalize_query(a.phrase);
    std::size_t count = 0;
    for (const auto& t : discovered)
      if (t.contains(gram)) ++count;
    report.ambiguous_topic_counts[a.phrase] = count;
  }
  return report;
}

inline nlohmann::json to_json(const RecoveryReport& r) {
  nlohmann::json topics = nlohmann::json::array();
  for (const auto& t : r.topics)
    topics.push_back({{"planted", t.planted},
                      {"f1", t.f1},
                      {"precision", t.precision},
                      {"recall", t.recall},
                      {"matched_topic", t.matched_topic}});
  return {{"topics", topics},
          {"recovered_fraction", r.recovered_fraction},
          {"mean_f1", r.mean_f1},
          {"ambiguous_topic_counts", r.ambiguous_topic_counts}};
}

// ---------------------------------------------------------------------------
// Classification against planted styles

struct ClassificationReport {
  std::size_t sampled = 0;
  double style_precision = 0;
  double substyle_precision = 0;
  std::size_t substyle_errors = 0;
  std::size_t contained_errors = 0;  // wrong sub-style whose parent is the planted style
  double containment = 0;
  std::map<std::string, double> node_precision;  // per sub-style node name
};

// Taxonomy with one node per planted style and one child per planted sub-style; each
// sub-style gets the discovered topic that best matches its planted topic.
inline Taxonomy planted_taxonomy(const PlantedSpec& spec, const RecoveryReport& recovery) {
  Taxonomy tax;
  std::map<std::string, std::string> style_node, sub_node;
  for (const auto& t : spec.topics) {
    if (t.style.empty() || t.substyle.empty()) continue;
    if (!style_node.count(t.style)) style_node[t.style] = tax.add_node(t.style, std::nullopt, "eval", 0).id;
    if (!sub_node.count(t.substyle)) sub_node[t.substyle] = tax.add_node(t.substyle, style_node[t.style], "eval", 0).id;
  }
  for (std::size_t i = 0; i < spec.topics.size(); ++i) {
    const auto& t = spec.topics[i];
    if (t.substyle.empty() || i >= recovery.topics.size() || recovery.topics[i].matched_topic.empty()) continue;
    tax.attach(sub_node[t.substyle], recovery.topics[i].matched_topic, "eval", 0);
  }
  return tax;
}

// Classifies every pin, samples the `per_node` highest-scoring pins predicted for each
// sub-style, and checks predictions against the planted labels.
inline ClassificationReport evaluate_classification(const PlantedSpec& spec, const GroundTruth& truth,
                                                    const Taxonomy& tax, const Catalog& cat, std::size_t per_node = 50) {
  std::map<std::string, std::size_t> pin_topic;
  for (const auto& p : truth.pins) pin_topic[p.pin] = p.topic;
  struct Prediction {
    std::string pin;
    double score;
    const TaxonomyNode* sub;
  };
  std::map<std::string, std::vector<Prediction>> by_node;
  for (std::uint32_t p = 0; p < cat.pins().size(); ++p) {
    const auto& pin = cat.pins().pins()[p];
    if (!pin_topic.count(pin.id)) continue;
    for (const auto& s : classify_pin_runs(cat.pins().runs(p), tax, cat)) {
      const auto& node = tax.node(s.node);
      if (tax.is_style(node)) continue;
      by_node[node.id].push_back({pin.id, s.score, &node});
      break;
    }
  }
  ClassificationReport r;
  std::size_t style_ok = 0, sub_ok = 0;
  for (auto& [node, preds] : by_node) {
    std::stable_sort(preds.begin(), preds.end(), [](const Prediction& a, const Prediction& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.pin < b.pin;
    });
    if (preds.size() > per_node) preds.resize(per_node);
    std::size_t node_ok = 0;
    for (const auto& pr : preds) {
      const auto& planted = spec.topics[pin_topic[pr.pin]];
      const auto& parent = tax.node(*pr.sub->parent);
      bool sub_right = pr.sub->name == planted.substyle;
      bool style_right = parent.name == planted.style;
      ++r.sampled;
      if (sub_right) {
        ++sub_ok;
        ++node_ok;
      } else {
        ++r.substyle_errors;
        if (style_right) ++r.contained_errors;
      }
      if (style_right) ++style_ok;
    }
    if (!preds.empty()) r.node_precision[preds.front().sub->name] = static_cast<double>(node_ok) / static_cast<double>(preds.size());
  }
  if (r.sampled) {
    r.style_precision = static_cast<double>(style_ok) / static_cast<double>(r.sampled);
    r.substyle_precision = static_cast<double>(sub_ok) / static_cast<double>(r.sampled);
  }
  r.containment = r.substyle_errors ? static_cast<double>(r.contained_errors) / static_cast<double>(r.substyle_errors) : 1.0;
  return r;
}

inline nlohmann::json to_json(const ClassificationReport& r) {
  return {{"sampled", r.sampled},
          {"style_precision", r.style_precision},
          {"substyle_precision", r.substyle_precision},
          {"substyle_errors", r.substyle_errors},
          {"contained_errors", r.contained_errors},
          {"containment", r.containment},
          {"node_precision", r.node_precision}};
}

// ---------------------------------------------------------------------------
// End-to-end evaluation

struct WindowRun {
  Bigraph bigraph;
  std::vector<MicroTopic> topics;
};

inline WindowRun discover_window(const Corpus& corpus, const TimeWindow& window, const PipelineConfig& config) {
  WindowRun run{build_bigraph(corpus, window, config), {}};
  run.topics = discover_communities(build_simgraph(run.bigraph, config.threshold, config.threads), config);
  return run;
}

inline bool lists_query(const std::vector<RankedQuery>& queries, const std::string& text) {
  return std::any_of(queries.begin(), queries.end(), [&](const RankedQuery& q) { return q.text == text; });
}

// Generates a corpus from `spec`, runs discovery on every window and scores it against the
// planted truth. Classification is scored when the spec plants styles.
inline nlohmann::json run_eval(const PlantedSpec& spec, std::uint64_t seed, const PipelineConfig& config) {
  auto gen = generate_corpus(spec, seed);
  auto corpus = build_corpus(gen.events, config);
  std::vector<WindowRun> runs;
  for (const auto& w : gen.truth.windows) runs.push_back(discover_window(corpus, w, config));

  nlohmann::json windows = nlohmann::json::array();
  std::vector<RecoveryReport> reports;
  for (std::size_t w = 0; w < runs.size(); ++w) {
    auto rep = w == 0 ? score_recovery(runs[w].topics, spec, gen.truth, config)
                      : score_recovery(runs[w].topics, planted_ngram_sets(spec, gen.truth, config, w));
    windows.push_back({{"window", to_json(gen.truth.windows[w])}, {"topics", runs[w].topics.size()}, {"recovery", to_json(rep)}});
    reports.push_back(std::move(rep));
  }
  nlohmann::json report = {{"seed", seed}, {"config_hash", config.hash()}, {"windows", windows}};

  nlohmann::json drift = nlohmann::json::array();
  for (const auto& d : spec.drift) {
    std::size_t t = 0;
    while (t < spec.topics.size() && spec.topics[t].name != d.topic) ++t;
    nlohmann::json entry = {{"topic", d.topic}, {"from", d.from}, {"to", d.to}};
    const auto& id = reports[0].topics[t].matched_topic;
    const MicroTopic* topic = nullptr;
    for (const auto& m : runs[0].topics)
      if (m.id == id) topic = &m;
    nlohmann::json per_window = nlohmann::json::array();
    for (const auto& run : runs) {
      auto qs = topic ? topic_queries(*topic, run.bigraph, static_cast<std::size_t>(config.k_queries)) : std::vector<RankedQuery>{};
      per_window.push_back({{"from_listed", lists_query(qs, normalize_query(d.from))},
                            {"to_listed", lists_query(qs, normalize_query(d.to))}});
    }
    entry["matched_topic"] = id;
    entry["windows"] = per_window;
    drift.push_back(entry);
  }
  report["drift"] = drift;

  bool styled = std::any_of(spec.topics.begin(), spec.topics.end(), [](const PlantedTopic& t) { return !t.substyle.empty(); });
  if (styled) {
    auto tax = planted_taxonomy(spec, reports[0]);
    Catalog cat(runs[0].bigraph, runs[0].topics, gen.pins, gen.interactions, gen.events, config);
    report["classification"] = to_json(evaluate_classification(spec, gen.truth, tax, cat));
  }
  return report;
}

}  // namespace forge
