#pragma once

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "forge/common.hpp"
#include "forge/config.hpp"
#include "forge/materialize.hpp"
#include "forge/pipeline.hpp"
#include "forge/taxonomy.hpp"

namespace forge {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path snapshot_dir;
  std::filesystem::path taxonomy;
  std::filesystem::path static_dir;
  std::filesystem::path pipeline_config;

  // File keys: host, port, snapshot_dir, taxonomy, static_dir, pipeline_config.
  static ServiceConfig from_json(const nlohmann::json& j) {
    ServiceConfig c;
    for (const auto& [key, value] : j.items()) {
      if (key != "host" && key != "port" && key != "snapshot_dir" && key != "taxonomy" && key != "static_dir" &&
          key != "pipeline_config")
        throw Error(ErrorCode::Config, "unknown service config key '" + key + "'");
    }
    try {
      c.host = j.value("host", c.host);
      c.port = j.value("port", c.port);
      c.snapshot_dir = j.value("snapshot_dir", std::string());
      c.taxonomy = j.value("taxonomy", std::string());
      c.static_dir = j.value("static_dir", std::string());
      c.pipeline_config = j.value("pipeline_config", std::string());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Config, e.what());
    }
    return c;
  }

  void apply_env() {
    if (const char* dir = std::getenv("FORGE_SNAPSHOT_DIR"); dir && *dir) snapshot_dir = dir;
  }
};

struct Snapshot {
  std::string id;
  std::shared_ptr<const Catalog> catalog;
};

// Identifies a snapshot by the content of its bigraph and topics.
inline std::string snapshot_id_of(const std::filesystem::path& dir) {
  return json_hash({binio::file_hash(dir / snapshot_files::kBigraph), binio::file_hash(dir / snapshot_files::kTopics)});
}

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownQuery:
    case ErrorCode::UnknownTopic:
    case ErrorCode::UnknownNode:
    case ErrorCode::UnknownNgram:
      return 404;
    case ErrorCode::VersionConflict: return 409;
    case ErrorCode::Config:
    case ErrorCode::Parse:
    case ErrorCode::InvalidSpec:
      return 400;
    default: return 500;
  }
}

// Endpoint logic, independent of the HTTP transport. Reads run against whichever snapshot
// is active when they start; activate() swaps in a fully loaded one.
class Api {
 public:
  Api(std::shared_ptr<TaxonomyStore> store, PipelineConfig config) : store_(std::move(store)), config_(std::move(config)) {}

  void activate(Snapshot s) {
    auto next = std::make_shared<const Snapshot>(std::move(s));
    std::lock_guard lock(mu_);
    active_ = std::move(next);
  }

  std::shared_ptr<const Snapshot> active() const {
    std::lock_guard lock(mu_);
    return active_;
  }

  const PipelineConfig& config() const { return config_; }
  TaxonomyStore& store() { return *store_; }

  ApiResponse health() const {
    auto s = active();
    return {200, {{"status", s ? "ok" : "no_snapshot"}, {"snapshot_id", s ? nlohmann::json(s->id) : nlohmann::json()}}};
  }

  ApiResponse topics_for(std::string_view raw_query) const {
    return with_snapshot([&](const Snapshot& s) {
      const auto& cat = *s.catalog;
      auto q = cat.bigraph().require_query(normalize_query(raw_query));
      nlohmann::json list = nlohmann::json::array();
      for (const auto& a : topics_for_query(q, cat.topics(), cat.topic_index(), cat.bigraph())) {
        const auto& t = cat.topics()[a.topic];
        nlohmann::json queries = nlohmann::json::array(), pins = nlohmann::json::array();
        for (const auto& rq : topic_queries(t, cat.bigraph(), 5)) queries.push_back(to_json(rq));
        for (const auto& rp : topic_pins(t, cat.pins(), 5)) pins.push_back(pin_json(cat, rp));
        list.push_back({{"topic_id", t.id}, {"score", a.score}, {"ngrams", t.ngrams}, {"size", t.size()},
                        {"preview", {{"queries", queries}, {"pins", pins}}}});
      }
      return ApiResponse{200, {{"query", cat.bigraph().queries().str(q)}, {"topics", list}}};
    });
  }

  ApiResponse topic(std::string_view id) const {
    return with_snapshot([&](const Snapshot& s) {
      const auto& cat = *s.catalog;
      const auto& t = cat.topic(id);
      auto m = cat.materialize(t);
      auto body = to_json(m);
      nlohmann::json pins = nlohmann::json::array();
      for (const auto& p : m.pins) pins.push_back(pin_json(cat, p));
      body["pins"] = pins;
      body["ngrams"] = t.ngrams;
      body["density"] = t.density;
      body["egos"] = t.egos;
      return ApiResponse{200, body};
    });
  }

  ApiResponse suggestions(std::string_view raw_query, std::size_t k) const {
    return with_snapshot([&](const Snapshot& s) {
      const auto& cat = *s.catalog;
      auto q = cat.bigraph().require_query(normalize_query(raw_query));
      nlohmann::json list = nlohmann::json::array();
      for (const auto& sg : suggest_specialized_queries(q, cat.topics(), cat.topic_index(), cat.bigraph(), k))
        list.push_back(to_json(sg));
      return ApiResponse{200, {{"query", cat.bigraph().queries().str(q)}, {"suggestions", list}}};
    });
  }

  ApiResponse taxonomy() const {
    auto t = store_->snapshot();
    auto s = active();
    auto body = t->to_json();
    body["snapshot_id"] = s ? nlohmann::json(s->id) : nlohmann::json();
    return {200, body};
  }

  ApiResponse add_node(const nlohmann::json& req, const std::string& actor, std::optional<std::uint64_t> expected) {
    return guarded([&] {
      if (!req.is_object() || !req.contains("name") || !req.at("name").is_string())
        throw Error(ErrorCode::Parse, "body must be an object with a string 'name'");
      std::optional<std::string> parent;
      if (req.contains("parent") && !req.at("parent").is_null()) parent = req.at("parent").get<std::string>();
      auto node = store_->add_node(req.at("name").get<std::string>(), parent, actor, expected);
      return ApiResponse{200, {{"node", node_json(node)}, {"version", store_->snapshot()->version()}}};
    });
  }

  ApiResponse attach(const std::string& node, const nlohmann::json& req, const std::string& actor,
                     std::optional<std::uint64_t> expected) {
    auto s = active();
    if (!s) return no_snapshot();
    return guarded([&] {
      if (!req.is_object() || !req.contains("topic_id") || !req.at("topic_id").is_string())
        throw Error(ErrorCode::Parse, "body must be an object with a string 'topic_id'");
      auto r = store_->attach(node, req.at("topic_id").get<std::string>(), actor,
                              [&](std::string_view id) { return s->catalog->find_topic(id) != nullptr; }, expected);
      return mutation_json(r, s->id);
    });
  }

  ApiResponse detach(const std::string& node, const std::string& topic, const std::string& actor,
                     std::optional<std::uint64_t> expected) {
    auto s = active();
    return guarded([&] { return mutation_json(store_->detach(node, topic, actor, expected), s ? s->id : std::string()); });
  }

  ApiResponse trigger_for(const std::string& user, std::string_view raw_query) const {
    return with_snapshot([&](const Snapshot& s) {
      const auto& cat = *s.catalog;
      auto q = cat.bigraph().require_query(normalize_query(raw_query));
      auto tax = store_->snapshot();
      auto aff = user_affinity(user, *tax, cat);
      auto body = to_json(trigger(q, aff, *tax, cat, config_));
      body["user"] = user;
      body["query"] = cat.bigraph().queries().str(q);
      body["taxonomy_version"] = tax->version();
      return ApiResponse{200, body};
    });
  }

 private:
  static ApiResponse no_snapshot() { return {503, {{"error", "NoSnapshot"}, {"message", "no active snapshot"}}}; }

  static ApiResponse error_response(const Error& e) {
    return {http_status(e.code()), {{"error", error_name(e.code())}, {"message", e.what()}}};
  }

  template <class F>
  static ApiResponse guarded(F&& f) {
    try {
      return f();
    } catch (const Error& e) {
      return error_response(e);
    } catch (const nlohmann::json::exception& e) {
      return {400, {{"error", error_name(ErrorCode::Parse)}, {"message", e.what()}}};
    }
  }

  template <class F>
  ApiResponse with_snapshot(F&& f) const {
    auto s = active();
    if (!s) return no_snapshot();
    auto r = guarded([&] { return f(*s); });
    r.body["snapshot_id"] = s->id;
    return r;
  }

  static nlohmann::json pin_json(const Catalog& cat, const RankedPin& p) {
    nlohmann::json j = {{"pin", p.pin}, {"score", p.score}};
    if (auto i = cat.pins().find(p.pin)) {
      const auto& pin = cat.pins().pins()[*i];
      j["description"] = pin.description;
      j["image_url"] = pin.image_url ? nlohmann::json(*pin.image_url) : nlohmann::json();
    }
    return j;
  }

  static nlohmann::json node_json(const TaxonomyNode& n) {
    return {{"id", n.id}, {"name", n.name}, {"parent", n.parent ? nlohmann::json(*n.parent) : nlohmann::json()},
            {"topics", n.topics}};
  }

  static ApiResponse mutation_json(const MutationResult& r, const std::string& snapshot_id) {
    return {200, {{"version", r.version}, {"changed", r.changed}, {"warning", r.warning}, {"snapshot_id", snapshot_id}}};
  }

  std::shared_ptr<TaxonomyStore> store_;
  PipelineConfig config_;
  mutable std::mutex mu_;
  std::shared_ptr<const Snapshot> active_;
};

inline Snapshot load_snapshot(const std::filesystem::path& dir, const PipelineConfig& config,
                              const Logger& log = stderr_logger) {
  return {snapshot_id_of(dir), load_catalog(dir, config, log)};
}

namespace detail {

// Accepts `3`, `"3"` and `W/"3"`.
inline std::optional<std::uint64_t> parse_if_match(const httplib::Request& req) {
  if (!req.has_header("If-Match")) return std::nullopt;
  std::string v = req.get_header_value("If-Match");
  if (v.rfind("W/", 0) == 0) v = v.substr(2);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw Error(ErrorCode::Parse, "If-Match must carry a taxonomy version number");
  return std::stoull(v);
}

inline std::string actor_of(const httplib::Request& req, const nlohmann::json& body) {
  if (body.is_object() && body.contains("actor") && body.at("actor").is_string()) return body.at("actor").get<std::string>();
  if (req.has_header("X-Actor")) return req.get_header_value("X-Actor");
  return "anonymous";
}

inline void reply(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

inline nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("request body: ") + e.what());
  }
}

}  // namespace detail

// Registers every endpoint on `server`. Request logs go to `log` as one JSON object per request.
inline void mount(httplib::Server& server, Api& api, const ServiceConfig& sc, const Logger& log = stderr_logger) {
  using httplib::Request;
  using httplib::Response;
  auto mutation = [&api](auto&& body_fn) {
    return [&api, body_fn](const Request& req, Response& res) {
      try {
        auto body = detail::parse_body(req);
        detail::reply(res, body_fn(req, body, detail::actor_of(req, body), detail::parse_if_match(req)));
      } catch (const Error& e) {
        detail::reply(res, {http_status(e.code()), {{"error", error_name(e.code())}, {"message", e.what()}}});
      }
      res.set_header("ETag", "\"" + std::to_string(api.store().snapshot()->version()) + "\"");
    };
  };

  server.Get("/health", [&api](const Request&, Response& res) { detail::reply(res, api.health()); });
  server.Get("/topics", [&api](const Request& req, Response& res) {
    if (!req.has_param("query")) return detail::reply(res, {400, {{"error", error_name(ErrorCode::Parse)}, {"message", "missing query"}}});
    detail::reply(res, api.topics_for(req.get_param_value("query")));
  });
  server.Get("/topics/:id", [&api](const Request& req, Response& res) {
    detail::reply(res, api.topic(req.path_params.at("id")));
  });
  server.Get("/suggestions", [&api](const Request& req, Response& res) {
    if (!req.has_param("query")) return detail::reply(res, {400, {{"error", error_name(ErrorCode::Parse)}, {"message", "missing query"}}});
    std::size_t k = 50;
    if (req.has_param("k")) {
      try {
        k = std::stoul(req.get_param_value("k"));
      } catch (const std::exception&) {
        return detail::reply(res, {400, {{"error", error_name(ErrorCode::Parse)}, {"message", "k must be a number"}}});
      }
    }
    detail::reply(res, api.suggestions(req.get_param_value("query"), k));
  });
  server.Get("/taxonomy", [&api](const Request&, Response& res) {
    detail::reply(res, api.taxonomy());
    res.set_header("ETag", "\"" + std::to_string(api.store().snapshot()->version()) + "\"");
  });
  server.Post("/taxonomy/nodes", mutation([&api](const Request&, const nlohmann::json& body, const std::string& actor,
                                                 std::optional<std::uint64_t> expected) {
                return api.add_node(body, actor, expected);
              }));
  server.Post("/taxonomy/nodes/:id/topics",
              mutation([&api](const Request& req, const nlohmann::json& body, const std::string& actor,
                              std::optional<std::uint64_t> expected) {
                return api.attach(req.path_params.at("id"), body, actor, expected);
              }));
  server.Delete("/taxonomy/nodes/:id/topics/:tid",
                mutation([&api](const Request& req, const nlohmann::json&, const std::string& actor,
                                std::optional<std::uint64_t> expected) {
                  return api.detach(req.path_params.at("id"), req.path_params.at("tid"), actor, expected);
                }));
  server.Get("/trigger", [&api](const Request& req, Response& res) {
    if (!req.has_param("user") || !req.has_param("query"))
      return detail::reply(res, {400, {{"error", error_name(ErrorCode::Parse)}, {"message", "user and query are required"}}});
    detail::reply(res, api.trigger_for(req.get_param_value("user"), req.get_param_value("query")));
  });
  server.Post("/snapshot/reload", [&api, sc, log](const Request&, Response& res) {
    if (sc.snapshot_dir.empty()) return detail::reply(res, {400, {{"error", error_name(ErrorCode::Config)}, {"message", "no snapshot dir"}}});
    try {
      api.activate(load_snapshot(sc.snapshot_dir, api.config(), log));
      detail::reply(res, api.health());
    } catch (const Error& e) {
      detail::reply(res, {503, {{"error", error_name(e.code())}, {"message", e.what()}}});
    }
  });
  if (!sc.static_dir.empty() && std::filesystem::is_directory(sc.static_dir))
    server.set_mount_point("/", sc.static_dir.string());

  server.set_logger([log, &api](const Request& req, const Response& res) {
    if (!log) return;
    auto s = api.active();
    log({{"event", "request"},
         {"method", req.method},
         {"path", req.path},
         {"status", res.status},
         {"snapshot_id", s ? nlohmann::json(s->id) : nlohmann::json()}});
  });
}

}  // namespace forge
