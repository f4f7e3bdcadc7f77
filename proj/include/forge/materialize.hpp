#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "forge/bigraph.hpp"
#include "forge/common.hpp"
#include "forge/communities.hpp"
#include "forge/config.hpp"
#include "forge/corpus.hpp"
#include "forge/text.hpp"

namespace forge {

struct RankedQuery {
  QueryId query = 0;
  std::string text;
  double score = 0;
  std::uint32_t popularity = 0;
};

struct RankedPin {
  std::string pin;
  double score = 0;    // distinct topic n-grams matched
  int longest = 0;     // token length of the longest matched n-gram
};

struct TopicMaterialization {
  std::string topic_id;
  TimeWindow window;
  std::vector<RankedQuery> queries;
  std::vector<RankedPin> pins;
  std::vector<std::string> users;  // sorted
};

// score(q) = sum over the topic's n-grams of W[n, q]; absent n-grams contribute nothing.
inline std::vector<RankedQuery> topic_queries(const MicroTopic& topic, const Bigraph& b, std::size_t k) {
  std::map<QueryId, double> score;
  for (const auto& g : topic.ngrams) {
    auto id = b.ngrams().find(g);
    if (!id) continue;
    auto row = b.row(*id);
    for (std::size_t i = 0; i < row.size(); ++i) score[row.ids[i]] += row.weights[i];
  }
  std::vector<RankedQuery> out;
  out.reserve(score.size());
  for (auto [q, s] : score)
    if (s > 0) out.push_back({q, b.queries().str(q), s, b.query_popularity(q)});
  std::sort(out.begin(), out.end(), [](const RankedQuery& x, const RankedQuery& y) {
    if (x.score != y.score) return x.score > y.score;
    if (x.popularity != y.popularity) return x.popularity > y.popularity;
    return x.query < y.query;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

// Tokens of a pin description: normalized, split on spaces, each token stripped of
// surrounding punctuation so "decor," matches "decor".
inline std::vector<std::string> pin_tokens(std::string_view description) {
  std::vector<std::string> out;
  for (auto& t : tokenize(normalize_query(description))) {
    auto clean = normalize_query(t);
    if (!clean.empty()) out.push_back(std::move(clean));
  }
  return out;
}

// Every contiguous token run of length 1..n_max, sorted and unique.
inline std::vector<std::string> token_runs(const std::vector<std::string>& tokens, int n_max) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::string run;
    for (std::size_t n = 0; n < static_cast<std::size_t>(n_max) && i + n < tokens.size(); ++n) {
      if (n) run += ' ';
      run += tokens[i + n];
      out.push_back(run);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline int token_count(std::string_view gram) {
  return 1 + static_cast<int>(std::count(gram.begin(), gram.end(), ' '));
}

// Inverted index from token runs to the pins whose description contains them.
class PinIndex {
 public:
  PinIndex() = default;
  PinIndex(std::vector<Pin> pins, int n_max) : pins_(std::move(pins)) {
    std::sort(pins_.begin(), pins_.end(), [](const Pin& a, const Pin& b) { return a.id < b.id; });
    runs_.reserve(pins_.size());
    for (std::uint32_t i = 0; i < pins_.size(); ++i) {
      tokens_.push_back(pin_tokens(pins_[i].description));
      runs_.push_back(token_runs(tokens_.back(), n_max));
      for (const auto& r : runs_.back()) postings_[r].push_back(i);
      by_id_.emplace(pins_[i].id, i);
    }
  }

  const std::vector<Pin>& pins() const { return pins_; }
  std::size_t size() const { return pins_.size(); }
  const std::vector<std::string>& tokens(std::uint32_t i) const { return tokens_[i]; }
  const std::vector<std::string>& runs(std::uint32_t i) const { return runs_[i]; }

  const std::vector<std::uint32_t>& postings(const std::string& gram) const {
    static const std::vector<std::uint32_t> none;
    auto it = postings_.find(gram);
    return it == postings_.end() ? none : it->second;
  }

  std::optional<std::uint32_t> find(std::string_view pin_id) const {
    auto it = by_id_.find(std::string(pin_id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<Pin> pins_;  // sorted by id
  std::vector<std::vector<std::string>> tokens_;
  std::vector<std::vector<std::string>> runs_;
  std::unordered_map<std::string, std::vector<std::uint32_t>> postings_;
  std::unordered_map<std::string, std::uint32_t> by_id_;
};

// Match of one topic against one pin's token runs.
inline RankedPin pin_match(const MicroTopic& topic, const std::vector<std::string>& pin_runs, std::string pin_id = {}) {
  RankedPin m{std::move(pin_id), 0, 0};
  std::size_t i = 0, j = 0;
  while (i < topic.ngrams.size() && j < pin_runs.size()) {
    if (topic.ngrams[i] == pin_runs[j]) {
      m.score += 1;
      m.longest = std::max(m.longest, token_count(topic.ngrams[i]));
      ++i;
      ++j;
    } else if (topic.ngrams[i] < pin_runs[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return m;
}

inline std::vector<RankedPin> topic_pins(const MicroTopic& topic, const PinIndex& index, std::size_t k) {
  std::map<std::uint32_t, RankedPin> hits;
  for (const auto& g : topic.ngrams) {
    for (auto p : index.postings(g)) {
      auto& h = hits[p];
      h.score += 1;
      h.longest = std::max(h.longest, token_count(g));
    }
  }
  std::vector<RankedPin> out;
  out.reserve(hits.size());
  for (auto& [p, h] : hits) out.push_back({index.pins()[p].id, h.score, h.longest});
  std::sort(out.begin(), out.end(), [](const RankedPin& x, const RankedPin& y) {
    if (x.score != y.score) return x.score > y.score;
    if (x.longest != y.longest) return x.longest > y.longest;
    return x.pin < y.pin;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

// Users with at least min_interactions interactions on the given pins inside the window.
inline std::vector<std::string> topic_users(const std::vector<RankedPin>& pins, const std::vector<Interaction>& interactions,
                                            const TimeWindow& window, int min_interactions) {
  std::vector<std::string> ids;
  for (const auto& p : pins) ids.push_back(p.pin);
  std::sort(ids.begin(), ids.end());
  std::map<std::string, int> count;
  for (const auto& i : interactions) {
    if (!window.contains(i.ts)) continue;
    if (std::binary_search(ids.begin(), ids.end(), i.pin)) ++count[i.user];
  }
  std::vector<std::string> out;
  for (const auto& [u, c] : count)
    if (c >= min_interactions) out.push_back(u);
  return out;
}

inline TopicMaterialization materialize_topic(const MicroTopic& topic, const Bigraph& b, const PinIndex& pins,
                                              const std::vector<Interaction>& interactions, const PipelineConfig& config) {
  TopicMaterialization m;
  m.topic_id = topic.id;
  m.window = b.window();
  m.queries = topic_queries(topic, b, static_cast<std::size_t>(config.k_queries));
  m.pins = topic_pins(topic, pins, static_cast<std::size_t>(config.k_pins));
  m.users = topic_users(m.pins, interactions, b.window(), config.min_interactions);
  return m;
}

// ---------------------------------------------------------------------------
// Reverse lookup

struct TopicAssociation {
  std::size_t topic = 0;  // index into the topic list
  double score = 0;
};

// Maps the topics' n-grams onto one bigraph so query lookups walk a single column.
class TopicIndex {
 public:
  TopicIndex() = default;
  TopicIndex(const std::vector<MicroTopic>& topics, const Bigraph& b) : by_ngram_(b.ngrams().size()) {
    for (std::size_t t = 0; t < topics.size(); ++t) {
      for (const auto& g : topics[t].ngrams) {
        auto id = b.ngrams().find(g);
        if (id) by_ngram_[*id].push_back(t);
      }
      by_id_.emplace(topics[t].id, t);
    }
    for (QueryId q = 0; q < b.queries().size(); ++q) {
      auto toks = tokenize(b.queries().str(q));
      std::sort(toks.begin(), toks.end());
      toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
      for (const auto& t : toks) queries_by_token_[t].push_back(q);
      query_tokens_.push_back(std::move(toks));
    }
  }

  const std::vector<std::size_t>& topics_of(NgramId n) const { return by_ngram_[n]; }
  const std::vector<std::string>& query_tokens(QueryId q) const { return query_tokens_[q]; }

  const std::vector<QueryId>& queries_with_token(const std::string& token) const {
    static const std::vector<QueryId> none;
    auto it = queries_by_token_.find(token);
    return it == queries_by_token_.end() ? none : it->second;
  }

  std::optional<std::size_t> find(std::string_view topic_id) const {
    auto it = by_id_.find(std::string(topic_id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<std::vector<std::size_t>> by_ngram_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::vector<std::vector<std::string>> query_tokens_;  // sorted, unique
  std::unordered_map<std::string, std::vector<QueryId>> queries_by_token_;
};

// Topics with some n-gram n where W[n, q] > 0, ranked by sum of W[n, q] over the topic.
inline std::vector<TopicAssociation> topics_for_query(QueryId q, const std::vector<MicroTopic>& topics,
                                                      const TopicIndex& index, const Bigraph& b) {
  if (q >= b.queries().size()) throw Error(ErrorCode::UnknownQuery, "query id " + std::to_string(q));
  std::map<std::size_t, double> score;
  auto col = b.column(q);
  for (std::size_t i = 0; i < col.size(); ++i) {
    if (!(col.weights[i] > 0)) continue;
    for (auto t : index.topics_of(col.ids[i])) score[t] += col.weights[i];
  }
  std::vector<TopicAssociation> out;
  for (auto [t, s] : score) out.push_back({t, s});
  std::sort(out.begin(), out.end(), [&](const TopicAssociation& x, const TopicAssociation& y) {
    if (x.score != y.score) return x.score > y.score;
    return topics[x.topic].id < topics[y.topic].id;
  });
  return out;
}

struct QuerySuggestion {
  QueryId query = 0;
  std::string text;
  std::uint32_t popularity = 0;
  std::vector<std::string> novel_topic_ids;
};

// Queries whose token set strictly contains the seed's and that reach at least one topic
// the seed does not; most popular first.
inline std::vector<QuerySuggestion> suggest_specialized_queries(QueryId seed, const std::vector<MicroTopic>& topics,
                                                                const TopicIndex& index, const Bigraph& b,
                                                                std::size_t k) {
  if (seed >= b.queries().size()) throw Error(ErrorCode::UnknownQuery, "query id " + std::to_string(seed));
  const auto& seed_tokens = index.query_tokens(seed);
  std::vector<std::size_t> seed_topics;
  for (const auto& a : topics_for_query(seed, topics, index, b)) seed_topics.push_back(a.topic);
  std::sort(seed_topics.begin(), seed_topics.end());

  std::vector<QueryId> candidates;
  if (seed_tokens.empty()) return {};
  const std::vector<QueryId>* shortest = &index.queries_with_token(seed_tokens.front());
  for (const auto& t : seed_tokens) {
    const auto& list = index.queries_with_token(t);
    if (list.size() < shortest->size()) shortest = &list;
  }
  for (auto c : *shortest) {
    const auto& ct = index.query_tokens(c);
    if (ct.size() <= seed_tokens.size()) continue;
    if (std::includes(ct.begin(), ct.end(), seed_tokens.begin(), seed_tokens.end())) candidates.push_back(c);
  }

  std::vector<QuerySuggestion> out;
  for (auto c : candidates) {
    QuerySuggestion s{c, b.queries().str(c), b.query_popularity(c), {}};
    for (const auto& a : topics_for_query(c, topics, index, b))
      if (!std::binary_search(seed_topics.begin(), seed_topics.end(), a.topic)) s.novel_topic_ids.push_back(topics[a.topic].id);
    if (!s.novel_topic_ids.empty()) out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const QuerySuggestion& x, const QuerySuggestion& y) {
    if (x.popularity != y.popularity) return x.popularity > y.popularity;
    return x.query < y.query;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const TimeWindow& w) { return {{"start", w.start}, {"end", w.end}}; }

inline nlohmann::json to_json(const RankedQuery& q) {
  return {{"query", q.text}, {"score", q.score}, {"popularity", q.popularity}};
}

inline nlohmann::json to_json(const RankedPin& p) { return {{"pin", p.pin}, {"score", p.score}}; }

inline nlohmann::json to_json(const TopicMaterialization& m) {
  nlohmann::json queries = nlohmann::json::array(), pins = nlohmann::json::array();
  for (const auto& q : m.queries) queries.push_back(to_json(q));
  for (const auto& p : m.pins) pins.push_back(to_json(p));
  return {{"topic_id", m.topic_id}, {"window", to_json(m.window)}, {"queries", queries}, {"pins", pins}, {"users", m.users}};
}

inline nlohmann::json to_json(const QuerySuggestion& s) {
  return {{"query", s.text}, {"popularity", s.popularity}, {"novel_topic_ids", s.novel_topic_ids}};
}

}  // namespace forge
