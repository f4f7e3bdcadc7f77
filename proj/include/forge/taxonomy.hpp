#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/bigraph.hpp"
#include "forge/binio.hpp"
#include "forge/common.hpp"
#include "forge/communities.hpp"
#include "forge/config.hpp"
#include "forge/corpus.hpp"
#include "forge/materialize.hpp"
#include "forge/text.hpp"

namespace forge {

// Everything classification reads: one window's bigraph, the topics, the pins and each
// user's history inside the window. Immutable once built.
class Catalog {
 public:
  Catalog(Bigraph b, std::vector<MicroTopic> topics, std::vector<Pin> pins, std::vector<Interaction> interactions,
          const std::vector<QueryEvent>& events, PipelineConfig config)
      : bigraph_(std::move(b)),
        topics_(std::move(topics)),
        pins_(std::move(pins), config.n_max),
        topic_index_(topics_, bigraph_),
        config_(std::move(config)) {
    for (auto& i : interactions) {
      if (!bigraph_.window().contains(i.ts) || !pins_.find(i.pin)) continue;
      user_interactions_[i.user].push_back(i);
      interactions_.push_back(std::move(i));
    }
    for (const auto& e : events) {
      if (!bigraph_.window().contains(e.ts)) continue;
      auto q = bigraph_.queries().find(normalize_query(e.query));
      if (q) user_queries_[e.user].push_back({e.ts, *q});
    }
  }

  const Bigraph& bigraph() const { return bigraph_; }
  const std::vector<MicroTopic>& topics() const { return topics_; }
  const PinIndex& pins() const { return pins_; }
  const TopicIndex& topic_index() const { return topic_index_; }
  const std::vector<Interaction>& interactions() const { return interactions_; }
  const PipelineConfig& config() const { return config_; }

  const MicroTopic* find_topic(std::string_view id) const {
    auto t = topic_index_.find(id);
    return t ? &topics_[*t] : nullptr;
  }
  const MicroTopic& topic(std::string_view id) const {
    auto* t = find_topic(id);
    if (!t) throw Error(ErrorCode::UnknownTopic, std::string(id));
    return *t;
  }

  const std::vector<Interaction>& interactions_of(const std::string& user) const {
    static const std::vector<Interaction> none;
    auto it = user_interactions_.find(user);
    return it == user_interactions_.end() ? none : it->second;
  }
  const std::vector<TimedQuery>& queries_of(const std::string& user) const {
    static const std::vector<TimedQuery> none;
    auto it = user_queries_.find(user);
    return it == user_queries_.end() ? none : it->second;
  }

  TopicMaterialization materialize(const MicroTopic& t) const {
    return materialize_topic(t, bigraph_, pins_, interactions_, config_);
  }

 private:
  Bigraph bigraph_;
  std::vector<MicroTopic> topics_;
  PinIndex pins_;
  TopicIndex topic_index_;
  std::vector<Interaction> interactions_;
  std::map<std::string, std::vector<Interaction>> user_interactions_;
  std::map<std::string, std::vector<TimedQuery>> user_queries_;
  PipelineConfig config_;
};

// ---------------------------------------------------------------------------
// Taxonomy document

struct TaxonomyNode {
  std::string id;
  std::string name;
  std::optional<std::string> parent;
  std::vector<std::string> topics;  // sorted
};

struct AuditEntry {
  std::int64_t ts = 0;
  std::string actor;
  std::string action;
  std::string node;
  std::string topic;
};

struct MutationResult {
  std::uint64_t version = 0;
  bool changed = false;
  bool warning = false;  // requested change was already in effect
};

class Taxonomy {
 public:
  std::uint64_t version() const { return version_; }
  const std::vector<TaxonomyNode>& nodes() const { return nodes_; }
  const std::vector<AuditEntry>& audit() const { return audit_; }

  const TaxonomyNode* find(std::string_view id) const {
    for (const auto& n : nodes_)
      if (n.id == id) return &n;
    return nullptr;
  }
  const TaxonomyNode& node(std::string_view id) const {
    auto* n = find(id);
    if (!n) throw Error(ErrorCode::UnknownNode, std::string(id));
    return *n;
  }
  bool is_style(const TaxonomyNode& n) const { return !n.parent.has_value(); }

  const TaxonomyNode& add_node(const std::string& name, std::optional<std::string> parent, const std::string& actor,
                               std::int64_t ts) {
    if (normalize_query(name).empty()) throw Error(ErrorCode::Config, "node name must not be empty");
    if (parent) {
      const auto& p = node(*parent);
      if (p.parent) throw Error(ErrorCode::Config, "taxonomy is limited to two levels; '" + *parent + "' is a sub-style");
    }
    for (const auto& n : nodes_)
      if (n.parent == parent && n.name == name) throw Error(ErrorCode::Config, "duplicate sibling name '" + name + "'");
    nodes_.push_back({"n" + std::to_string(next_id()), name, std::move(parent), {}});
    ++version_;
    audit_.push_back({ts, actor, "add_node", nodes_.back().id, ""});
    return nodes_.back();
  }

  MutationResult attach(std::string_view node_id, const std::string& topic_id, const std::string& actor, std::int64_t ts) {
    auto& n = mutable_node(node_id);
    auto it = std::lower_bound(n.topics.begin(), n.topics.end(), topic_id);
    if (it != n.topics.end() && *it == topic_id) return {version_, false, true};
    n.topics.insert(it, topic_id);
    ++version_;
    audit_.push_back({ts, actor, "attach", n.id, topic_id});
    return {version_, true, false};
  }

  MutationResult detach(std::string_view node_id, const std::string& topic_id, const std::string& actor, std::int64_t ts) {
    auto& n = mutable_node(node_id);
    auto it = std::lower_bound(n.topics.begin(), n.topics.end(), topic_id);
    if (it == n.topics.end() || *it != topic_id) return {version_, false, true};
    n.topics.erase(it);
    ++version_;
    audit_.push_back({ts, actor, "detach", n.id, topic_id});
    return {version_, true, false};
  }

  nlohmann::json to_json() const {
    nlohmann::json nodes = nlohmann::json::array(), audit = nlohmann::json::array();
    for (const auto& n : nodes_) {
      nlohmann::json j = {{"id", n.id}, {"name", n.name}, {"parent", nullptr}, {"topics", n.topics}};
      if (n.parent) j["parent"] = *n.parent;
      nodes.push_back(std::move(j));
    }
    for (const auto& a : audit_)
      audit.push_back({{"ts", a.ts}, {"actor", a.actor}, {"action", a.action}, {"node", a.node}, {"topic", a.topic}});
    return {{"version", version_}, {"nodes", nodes}, {"audit", audit}};
  }

  static Taxonomy from_json(const nlohmann::json& j) {
    Taxonomy t;
    try {
      t.version_ = j.at("version").get<std::uint64_t>();
      for (const auto& n : j.at("nodes")) {
        TaxonomyNode node{n.at("id").get<std::string>(), n.at("name").get<std::string>(), std::nullopt,
                          n.value("topics", std::vector<std::string>{})};
        if (n.contains("parent") && !n.at("parent").is_null()) node.parent = n.at("parent").get<std::string>();
        std::sort(node.topics.begin(), node.topics.end());
        node.topics.erase(std::unique(node.topics.begin(), node.topics.end()), node.topics.end());
        if (t.find(node.id)) throw Error(ErrorCode::Parse, "duplicate taxonomy node id '" + node.id + "'");
        t.nodes_.push_back(std::move(node));
      }
      if (j.contains("audit"))
        for (const auto& a : j.at("audit"))
          t.audit_.push_back({a.at("ts").get<std::int64_t>(), a.at("actor").get<std::string>(),
                              a.at("action").get<std::string>(), a.at("node").get<std::string>(),
                              a.value("topic", std::string())});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, std::string("taxonomy: ") + e.what());
    }
    for (const auto& n : t.nodes_) {
      if (!n.parent) continue;
      auto* p = t.find(*n.parent);
      if (!p) throw Error(ErrorCode::Parse, "taxonomy node '" + n.id + "' has unknown parent '" + *n.parent + "'");
      if (p->parent) throw Error(ErrorCode::Parse, "taxonomy node '" + n.id + "' is nested deeper than two levels");
    }
    return t;
  }

 private:
  TaxonomyNode& mutable_node(std::string_view id) {
    for (auto& n : nodes_)
      if (n.id == id) return n;
    throw Error(ErrorCode::UnknownNode, std::string(id));
  }

  std::uint64_t next_id() const {
    std::uint64_t m = 0;
    for (const auto& n : nodes_) {
      if (n.id.size() < 2 || n.id[0] != 'n') continue;
      try {
        m = std::max<std::uint64_t>(m, std::stoull(n.id.substr(1)));
      } catch (const std::exception&) {
      }
    }
    return m + 1;
  }

  std::uint64_t version_ = 0;
  std::vector<TaxonomyNode> nodes_;
  std::vector<AuditEntry> audit_;
};

inline std::int64_t unix_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

// Single-writer taxonomy state. Mutations are serialized, checked against an optional
// expected version and persisted before they become visible; readers get immutable copies.
class TaxonomyStore {
 private:
  template <class F>
  auto mutate(std::optional<std::uint64_t> expected, F&& f) {
    std::lock_guard lock(mu_);
    if (expected && *expected != current_->version())
      throw Error(ErrorCode::VersionConflict,
                  "expected version " + std::to_string(*expected) + ", current is " + std::to_string(current_->version()));
    auto next = std::make_shared<Taxonomy>(*current_);
    auto result = f(*next);
    if (next->version() != current_->version()) {
      if (!path_.empty()) binio::write_json(path_, next->to_json());
      current_ = std::move(next);
    }
    return result;
  }


 public:
  using TopicCheck = std::function<bool(std::string_view)>;
  using Clock = std::function<std::int64_t()>;

  explicit TaxonomyStore(std::filesystem::path path = {}, Clock clock = unix_now)
      : path_(std::move(path)), clock_(std::move(clock)) {
    if (!path_.empty() && std::filesystem::exists(path_))
      current_ = std::make_shared<const Taxonomy>(Taxonomy::from_json(binio::read_json(path_)));
    else
      current_ = std::make_shared<const Taxonomy>();
  }

  std::shared_ptr<const Taxonomy> snapshot() const {
    std::lock_guard lock(mu_);
    return current_;
  }

  TaxonomyNode add_node(const std::string& name, std::optional<std::string> parent, const std::string& actor,
                        std::optional<std::uint64_t> expected = std::nullopt) {
    return mutate(expected, [&](Taxonomy& t) -> TaxonomyNode { return t.add_node(name, std::move(parent), actor, clock_()); });
  }

  MutationResult attach(const std::string& node, const std::string& topic, const std::string& actor,
                        const TopicCheck& topic_exists, std::optional<std::uint64_t> expected = std::nullopt) {
    if (topic_exists && !topic_exists(topic)) throw Error(ErrorCode::UnknownTopic, topic);
    return mutate(expected, [&](Taxonomy& t) { return t.attach(node, topic, actor, clock_()); });
  }

  MutationResult detach(const std::string& node, const std::string& topic, const std::string& actor,
                        std::optional<std::uint64_t> expected = std::nullopt) {
    return mutate(expected, [&](Taxonomy& t) { return t.detach(node, topic, actor, clock_()); });
  }

 private:
  std::filesystem::path path_;
  Clock clock_;
  mutable std::mutex mu_;
  std::shared_ptr<const Taxonomy> current_;
};

// ---------------------------------------------------------------------------
// Classification

struct NodeScore {
  std::string node;
  double score = 0;
};

using NodeScores = std::map<std::string, double>;

// Adds each sub-style's score to its parent, keeps positive scores, ranks them.
inline std::vector<NodeScore> roll_up(const Taxonomy& tax, NodeScores direct) {
  NodeScores total = direct;
  for (const auto& n : tax.nodes())
    if (n.parent && direct.count(n.id)) total[*n.parent] += direct[n.id];
  std::vector<NodeScore> out;
  for (const auto& [id, s] : total)
    if (s > 0) out.push_back({id, s});
  std::sort(out.begin(), out.end(), [](const NodeScore& a, const NodeScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.node < b.node;
  });
  return out;
}

inline std::vector<NodeScore> classify_pin_runs(const std::vector<std::string>& pin_runs, const Taxonomy& tax,
                                                const Catalog& cat) {
  NodeScores direct;
  for (const auto& n : tax.nodes()) {
    for (const auto& tid : n.topics) {
      auto* t = cat.find_topic(tid);
      if (t) direct[n.id] += pin_match(*t, pin_runs).score;
    }
  }
  return roll_up(tax, std::move(direct));
}

inline std::vector<NodeScore> classify_pin(const Pin& pin, const Taxonomy& tax, const Catalog& cat) {
  return classify_pin_runs(token_runs(pin_tokens(pin.description), cat.config().n_max), tax, cat);
}

inline std::vector<NodeScore> classify_query(QueryId q, const Taxonomy& tax, const Catalog& cat) {
  std::map<std::size_t, double> assoc;
  for (const auto& a : topics_for_query(q, cat.topics(), cat.topic_index(), cat.bigraph())) assoc[a.topic] = a.score;
  NodeScores direct;
  for (const auto& n : tax.nodes()) {
    for (const auto& tid : n.topics) {
      auto t = cat.topic_index().find(tid);
      if (!t) continue;
      auto it = assoc.find(*t);
      if (it != assoc.end()) direct[n.id] += it->second;
    }
  }
  return roll_up(tax, std::move(direct));
}

struct StyleAffinity {
  std::string user;
  std::map<std::string, double> scores;  // rolled-up score per node; absent means 0
};

// Sum of classify_pin scores over the user's interactions and classify_query scores over
// the user's queries, each weighted by exp(-age / tau) with age measured from `now`.
inline StyleAffinity user_affinity(const std::string& user, const Taxonomy& tax, const Catalog& cat, std::int64_t now,
                                   double decay_days) {
  StyleAffinity aff{user, {}};
  const double tau = decay_days * 86400.0;
  auto add = [&](const std::vector<NodeScore>& scores, std::int64_t ts) {
    double age = std::max<double>(0, static_cast<double>(now - ts));
    double w = std::exp(-age / tau);
    for (const auto& s : scores) aff.scores[s.node] += w * s.score;
  };
  for (const auto& i : cat.interactions_of(user)) {
    if (i.ts > now) continue;
    auto p = cat.pins().find(i.pin);
    if (p) add(classify_pin_runs(cat.pins().runs(*p), tax, cat), i.ts);
  }
  for (const auto& q : cat.queries_of(user)) {
    if (q.ts > now) continue;
    add(classify_query(q.query, tax, cat), q.ts);
  }
  std::erase_if(aff.scores, [](const auto& kv) { return !(kv.second > 0); });
  return aff;
}

inline StyleAffinity user_affinity(const std::string& user, const Taxonomy& tax, const Catalog& cat) {
  return user_affinity(user, tax, cat, cat.bigraph().window().end, cat.config().decay_days);
}

// ---------------------------------------------------------------------------
// Triggering

struct StyleModule {
  std::string node;
  std::string name;
  double affinity = 0;
  std::vector<RankedPin> pins;
};

struct TriggerResult {
  bool triggered = false;
  std::string reason;  // why nothing was triggered
  double top_share = 0;
  std::vector<StyleModule> modules;
};

// A pin is relevant to a query when its tokens include every non-stopword token of it.
inline bool pin_relevant(const std::vector<std::string>& pin_tokens_sorted, const std::vector<std::string>& query_tokens,
                         const Stopwords& stop) {
  for (const auto& t : query_tokens) {
    if (stop.contains(t)) continue;
    if (!std::binary_search(pin_tokens_sorted.begin(), pin_tokens_sorted.end(), t)) return false;
  }
  return true;
}

// Shows style modules for broad queries to users interested in several styles. A query is
// broad when no style holds more than dominance_share of its classify_query mass.
inline TriggerResult trigger(QueryId q, const StyleAffinity& affinity, const Taxonomy& tax, const Catalog& cat,
                             const PipelineConfig& config) {
  TriggerResult r;
  double mass = 0, top = 0;
  for (const auto& s : classify_query(q, tax, cat)) {
    auto& n = tax.node(s.node);
    if (!tax.is_style(n)) continue;
    mass += s.score;
    top = std::max(top, s.score);
  }
  r.top_share = mass > 0 ? top / mass : 0;
  if (r.top_share > config.dominance_share) {
    r.reason = "narrow_query";
    return r;
  }

  std::vector<NodeScore> styles;
  for (const auto& [id, s] : affinity.scores) {
    auto* n = tax.find(id);
    if (n && tax.is_style(*n) && s > 0) styles.push_back({id, s});
  }
  if (styles.size() < static_cast<std::size_t>(config.min_styles)) {
    r.reason = "insufficient_affinity";
    return r;
  }
  std::sort(styles.begin(), styles.end(), [](const NodeScore& a, const NodeScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.node < b.node;
  });

  const auto stop = config.stopword_set();
  const auto query_tokens = tokenize(cat.bigraph().queries().str(q));
  const auto& pins = cat.pins();
  // relevant pins with their best-scoring style
  std::vector<std::pair<std::uint32_t, NodeScore>> relevant;
  for (std::uint32_t p = 0; p < pins.size(); ++p) {
    auto toks = pins.tokens(p);
    std::sort(toks.begin(), toks.end());
    if (!pin_relevant(toks, query_tokens, stop)) continue;
    for (const auto& c : classify_pin_runs(pins.runs(p), tax, cat)) {
      if (!tax.is_style(tax.node(c.node))) continue;
      relevant.push_back({p, c});
      break;
    }
  }

  for (const auto& s : styles) {
    if (r.modules.size() >= static_cast<std::size_t>(config.max_trigger_styles)) break;
    StyleModule m{s.node, tax.node(s.node).name, s.score, {}};
    for (const auto& [p, c] : relevant)
      if (c.node == s.node) m.pins.push_back({pins.pins()[p].id, c.score, 0});
    if (m.pins.size() < static_cast<std::size_t>(config.min_pins)) continue;
    std::sort(m.pins.begin(), m.pins.end(), [](const RankedPin& a, const RankedPin& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.pin < b.pin;
    });
    if (m.pins.size() > static_cast<std::size_t>(config.k_pins)) m.pins.resize(static_cast<std::size_t>(config.k_pins));
    r.modules.push_back(std::move(m));
  }
  if (r.modules.empty()) {
    r.reason = "no_matching_pins";
    return r;
  }
  r.triggered = true;
  return r;
}

inline nlohmann::json to_json(const std::vector<NodeScore>& scores) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : scores) out.push_back({{"node", s.node}, {"score", s.score}});
  return out;
}

inline nlohmann::json to_json(const StyleAffinity& a) { return {{"user", a.user}, {"scores", a.scores}}; }

inline nlohmann::json to_json(const TriggerResult& r) {
  nlohmann::json modules = nlohmann::json::array();
  for (const auto& m : r.modules) {
    nlohmann::json pins = nlohmann::json::array();
    for (const auto& p : m.pins) pins.push_back({{"pin", p.pin}, {"score", p.score}});
    modules.push_back({{"node", m.node}, {"name", m.name}, {"affinity", m.affinity}, {"pins", pins}});
  }
  nlohmann::json j = {{"triggered", r.triggered}, {"top_share", r.top_share}, {"modules", modules}};
  if (!r.triggered) j["reason"] = r.reason;
  return j;
}

}  // namespace forge
