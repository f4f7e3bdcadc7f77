#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "forge/common.hpp"
#include "forge/config.hpp"
#include "forge/text.hpp"

namespace forge {

struct QueryEvent {
  std::string user;
  std::int64_t ts = 0;
  std::string query;
};

struct TimedQuery {
  std::int64_t ts = 0;
  QueryId query = 0;
};

struct Session {
  std::string user;
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::vector<QueryId> queries;  // first-occurrence order, no duplicates
};

struct Pin {
  std::string id;
  std::string description;
  std::optional<std::string> image_url;
};

enum class Action { Save, Click, Closeup };

inline const char* action_name(Action a) {
  switch (a) {
    case Action::Save: return "save";
    case Action::Click: return "click";
    case Action::Closeup: return "close-up";
  }
  return "save";
}

inline std::optional<Action> parse_action(std::string_view s) {
  if (s == "save") return Action::Save;
  if (s == "click") return Action::Click;
  if (s == "close-up" || s == "closeup") return Action::Closeup;
  return std::nullopt;
}

struct Interaction {
  std::string user;
  std::string pin;
  Action action = Action::Save;
  std::int64_t ts = 0;
};

// Splits one user's time-ordered events into sessions: a new session starts whenever
// the gap to the previous event exceeds `gap`.
inline std::vector<Session> sessionize(std::string_view user, std::span<const TimedQuery> events, std::int64_t gap) {
  std::vector<Session> out;
  std::unordered_set<QueryId> seen;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (out.empty() || e.ts - events[i - 1].ts > gap) {
      out.push_back(Session{std::string(user), e.ts, e.ts, {}});
      seen.clear();
    }
    auto& s = out.back();
    s.end = e.ts;
    if (seen.insert(e.query).second) s.queries.push_back(e.query);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON-lines readers

struct LineError {
  std::size_t line = 0;
  std::string message;
};

template <class T>
struct ReadResult {
  std::vector<T> records;
  std::vector<LineError> errors;
};

namespace detail {

template <class T, class Parse>
ReadResult<T> read_jsonl(std::istream& in, const std::string& source, bool strict, Parse parse) {
  ReadResult<T> result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string message;
    try {
      auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw std::runtime_error("expected a JSON object");
      result.records.push_back(parse(j));
      continue;
    } catch (const std::exception& e) {
      message = e.what();
    }
    result.errors.push_back({lineno, message});
    if (strict) throw Error(ErrorCode::Parse, source + ":" + std::to_string(lineno) + ": " + message);
  }
  return result;
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw std::runtime_error(std::string("missing field '") + key + "'");
  return j.at(key);
}

inline std::string require_string(const nlohmann::json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) throw std::runtime_error(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline std::int64_t require_ts(const nlohmann::json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_number_integer()) throw std::runtime_error(std::string("field '") + key + "' must be an integer");
  auto ts = v.get<std::int64_t>();
  if (ts < 0) throw std::runtime_error(std::string("field '") + key + "' must be >= 0");
  return ts;
}

template <class T, class Parse>
ReadResult<T> read_jsonl_file(const std::string& path, bool strict, Parse parse) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open " + path);
  return read_jsonl<T>(in, path, strict, parse);
}

}  // namespace detail

inline QueryEvent parse_query_event(const nlohmann::json& j) {
  QueryEvent e{detail::require_string(j, "user"), detail::require_ts(j, "ts"), detail::require_string(j, "query")};
  if (normalize_query(e.query).empty()) throw std::runtime_error("query is empty after normalization");
  return e;
}

inline Pin parse_pin(const nlohmann::json& j) {
  Pin p{detail::require_string(j, "pin"), detail::require_string(j, "description"), std::nullopt};
  if (j.contains("image_url") && !j.at("image_url").is_null()) {
    if (!j.at("image_url").is_string()) throw std::runtime_error("field 'image_url' must be a string or null");
    p.image_url = j.at("image_url").get<std::string>();
  }
  return p;
}

inline Interaction parse_interaction(const nlohmann::json& j) {
  auto action = parse_action(detail::require_string(j, "action"));
  if (!action) throw std::runtime_error("field 'action' must be one of save, click, close-up");
  return Interaction{detail::require_string(j, "user"), detail::require_string(j, "pin"), *action,
                     detail::require_ts(j, "ts")};
}

inline ReadResult<QueryEvent> read_query_events(std::istream& in, const std::string& source = "<stream>",
                                                bool strict = false) {
  return detail::read_jsonl<QueryEvent>(in, source, strict, parse_query_event);
}
inline ReadResult<QueryEvent> read_query_events(const std::string& path, bool strict = false) {
  return detail::read_jsonl_file<QueryEvent>(path, strict, parse_query_event);
}

inline ReadResult<Pin> read_pins(std::istream& in, const std::string& source = "<stream>", bool strict = false) {
  std::unordered_set<std::string> ids;
  return detail::read_jsonl<Pin>(in, source, strict, [&ids](const nlohmann::json& j) {
    auto p = parse_pin(j);
    if (!ids.insert(p.id).second) throw std::runtime_error("duplicate pin id '" + p.id + "'");
    return p;
  });
}
inline ReadResult<Pin> read_pins(const std::string& path, bool strict = false) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open " + path);
  return read_pins(in, path, strict);
}

inline ReadResult<Interaction> read_interactions(std::istream& in, const std::string& source = "<stream>",
                                                 bool strict = false) {
  return detail::read_jsonl<Interaction>(in, source, strict, parse_interaction);
}
inline ReadResult<Interaction> read_interactions(const std::string& path, bool strict = false) {
  return detail::read_jsonl_file<Interaction>(path, strict, parse_interaction);
}

// Drops interactions whose pin was not ingested.
inline std::vector<Interaction> filter_known_pins(std::vector<Interaction> interactions, const std::vector<Pin>& pins) {
  std::unordered_set<std::string> known;
  for (const auto& p : pins) known.insert(p.id);
  std::erase_if(interactions, [&](const Interaction& i) { return !known.contains(i.pin); });
  return interactions;
}

inline nlohmann::json to_json(const QueryEvent& e) { return {{"user", e.user}, {"ts", e.ts}, {"query", e.query}}; }
inline nlohmann::json to_json(const Pin& p) {
  return {{"pin", p.id}, {"description", p.description},
          {"image_url", p.image_url ? nlohmann::json(*p.image_url) : nlohmann::json(nullptr)}};
}
inline nlohmann::json to_json(const Interaction& i) {
  return {{"user", i.user}, {"pin", i.pin}, {"action", action_name(i.action)}, {"ts", i.ts}};
}

template <class T>
std::string to_jsonl(const std::vector<T>& records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + '\n';
  return out;
}

template <class T>
void write_jsonl(const std::string& path, const std::vector<T>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << to_jsonl(records);
}

// ---------------------------------------------------------------------------

// Normalized query vocabulary plus sessions over it. Immutable after build_corpus.
struct Corpus {
  Interner queries;
  std::vector<std::uint32_t> query_frequency;  // event occurrences per query id
  std::vector<Session> sessions;               // ordered by (user, start)
  std::size_t dropped_events = 0;              // empty or below min_query_frequency
};

// Normalizes events, interns queries seen at least `min_query_frequency` times (ids in
// lexicographic order), then sessionizes each user's remaining events.
inline Corpus build_corpus(const std::vector<QueryEvent>& events, const PipelineConfig& config) {
  struct Normalized {
    std::size_t user;
    std::int64_t ts;
    std::size_t order;
    std::string query;
  };
  std::vector<Normalized> norm;
  norm.reserve(events.size());
  std::map<std::string, std::uint32_t> counts;
  Interner users;
  Corpus corpus;
  for (std::size_t i = 0; i < events.size(); ++i) {
    auto q = normalize_query(events[i].query);
    if (q.empty()) {
      ++corpus.dropped_events;
      continue;
    }
    ++counts[q];
    norm.push_back({users.intern(events[i].user), events[i].ts, i, std::move(q)});
  }

  std::vector<std::string> vocab;
  for (const auto& [q, n] : counts) {
    if (n >= static_cast<std::uint32_t>(config.min_query_frequency)) {
      vocab.push_back(q);
      corpus.query_frequency.push_back(n);
    }
  }
  corpus.queries = Interner::from_strings(std::move(vocab));

  std::vector<std::pair<std::size_t, std::size_t>> order;  // (user rank, index into norm)
  std::vector<std::size_t> user_rank(users.size());
  {
    std::vector<std::size_t> ids(users.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    std::sort(ids.begin(), ids.end(), [&](auto a, auto b) { return users.str(a) < users.str(b); });
    for (std::size_t r = 0; r < ids.size(); ++r) user_rank[ids[r]] = r;
  }
  std::vector<std::vector<TimedQuery>> per_user(users.size());
  std::sort(norm.begin(), norm.end(), [](const Normalized& a, const Normalized& b) {
    return std::tie(a.user, a.ts, a.order) < std::tie(b.user, b.ts, b.order);
  });
  for (const auto& n : norm) {
    auto id = corpus.queries.find(n.query);
    if (!id) {
      ++corpus.dropped_events;
      continue;
    }
    per_user[user_rank[n.user]].push_back({n.ts, *id});
  }
  std::vector<std::string> user_by_rank(users.size());
  for (std::size_t u = 0; u < users.size(); ++u) user_by_rank[user_rank[u]] = users.str(static_cast<std::uint32_t>(u));
  for (std::size_t r = 0; r < per_user.size(); ++r) {
    auto sessions = sessionize(user_by_rank[r], per_user[r], config.session_gap);
    for (auto& s : sessions) corpus.sessions.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace forge
