#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "forge/bigraph.hpp"
#include "forge/binio.hpp"
#include "forge/communities.hpp"
#include "forge/config.hpp"
#include "forge/corpus.hpp"
#include "forge/evalharness.hpp"
#include "forge/materialize.hpp"
#include "forge/pipeline.hpp"
#include "forge/service.hpp"
#include "forge/simgraph.hpp"
#include "forge/taxonomy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

forge::PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  if (!fs::exists(path)) throw forge::Error(forge::ErrorCode::MissingInput, "config file " + path);
  return forge::PipelineConfig::load(path);
}

json read_json_file(const std::string& path) {
  if (!fs::exists(path)) throw forge::Error(forge::ErrorCode::MissingInput, path);
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw forge::Error(forge::ErrorCode::Parse, path + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  forge::binio::write_file(path, j.dump(2) + "\n");
}

void require(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw forge::Error(forge::ErrorCode::MissingInput, std::string(what) + " not found: " + path);
}

std::optional<forge::TimeWindow> window_of(const std::optional<std::int64_t>& from, const std::optional<std::int64_t>& to) {
  if (!from && !to) return std::nullopt;
  if (!from || !to) throw forge::Error(forge::ErrorCode::Config, "--from and --to must be given together");
  return forge::TimeWindow::make(*from, *to);
}

forge::PlantedSpec preset_spec(const std::string& name, std::uint64_t seed) {
  if (name == "synthetic") return forge::synthetic_spec({}, seed);
  if (name == "styled") {
    forge::SyntheticParams p;
    p.styles = 5;
    p.ambiguous_within_style = 2;
    p.ambiguous_cross_style = 2;
    return forge::synthetic_spec(p, seed);
  }
  if (name == "overlap") return forge::overlap_spec(seed);
  if (name == "granularity") return forge::granularity_spec(seed);
  if (name == "drift") return forge::drift_spec(seed);
  throw forge::Error(forge::ErrorCode::InvalidSpec, "unknown preset '" + name + "'");
}

forge::PlantedSpec spec_from(const std::string& spec_path, const std::string& preset, std::uint64_t seed) {
  if (!spec_path.empty()) return forge::planted_spec_from_json(read_json_file(spec_path));
  return preset_spec(preset.empty() ? "synthetic" : preset, seed);
}

int exit_code(forge::ErrorCode c) {
  switch (c) {
    case forge::ErrorCode::Config:
    case forge::ErrorCode::Parse:
    case forge::ErrorCode::InvalidSpec:
    case forge::ErrorCode::EmptyWindow:
      return 2;
    case forge::ErrorCode::MissingInput: return 3;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge: query topic discovery and style taxonomy tooling"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "pipeline config (JSON)");
  bool strict = false;
  app.add_flag("--strict", strict, "abort on the first malformed input line");
  std::function<void()> action;

  // generate
  auto* gen = app.add_subcommand("generate", "write a planted synthetic corpus");
  std::string gen_spec, gen_preset, gen_out;
  std::uint64_t gen_seed = 7;
  gen->add_option("--spec", gen_spec, "planted spec JSON");
  gen->add_option("--preset", gen_preset, "synthetic | styled | overlap | granularity | drift");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out", gen_out)->required();
  gen->callback([&] {
    action = [&] {
      auto spec = spec_from(gen_spec, gen_preset, gen_seed);
      auto corpus = forge::generate_corpus(spec, gen_seed);
      fs::create_directories(gen_out);
      forge::binio::write_file(fs::path(gen_out) / "events.jsonl", forge::to_jsonl(corpus.events));
      forge::binio::write_file(fs::path(gen_out) / "pins.jsonl", forge::to_jsonl(corpus.pins));
      forge::binio::write_file(fs::path(gen_out) / "interactions.jsonl", forge::to_jsonl(corpus.interactions));
      write_json_file(fs::path(gen_out) / "spec.json", forge::to_json(spec));
      std::cout << json{{"events", corpus.events.size()}, {"pins", corpus.pins.size()},
                        {"interactions", corpus.interactions.size()}}.dump() << "\n";
    };
  });

  // bigraph
  auto* big = app.add_subcommand("bigraph", "build the n-gram/query bigraph for one window");
  std::string big_sessions, big_out;
  std::optional<std::int64_t> big_from, big_to;
  big->add_option("--sessions", big_sessions, "query events JSONL")->required();
  big->add_option("--from", big_from, "window start (unix seconds)");
  big->add_option("--to", big_to, "window end (unix seconds, exclusive)");
  big->add_option("--out", big_out)->required();
  big->callback([&] {
    action = [&] {
      auto cfg = load_config(config_path);
      require(big_sessions, "sessions");
      auto events = forge::detail::checked(forge::read_query_events(big_sessions, strict), big_sessions, forge::stderr_logger);
      auto window = window_of(big_from, big_to).value_or(forge::span_of(events));
      auto b = forge::build_bigraph(forge::build_corpus(events, cfg), window, cfg);
      fs::create_directories(big_out);
      b.save(big_out);
      json summary = {{"window", forge::to_json(b.window())}, {"ngrams", b.ngrams().size()},
                      {"queries", b.queries().size()},  {"entries", b.entry_count()},
                      {"sessions", b.session_count()},  {"config_hash", b.config_hash()}};
      write_json_file(fs::path(big_out) / "bigraph.json", summary);
      std::cout << summary.dump() << "\n";
    };
  });

  // simgraph
  auto* sim = app.add_subcommand("simgraph", "build the thresholded n-gram similarity graph");
  std::string sim_in, sim_out;
  std::optional<double> sim_threshold;
  sim->add_option("--bigraph", sim_in, "bigraph snapshot directory")->required();
  sim->add_option("--threshold", sim_threshold);
  sim->add_option("--out", sim_out)->required();
  sim->callback([&] {
    action = [&] {
      auto cfg = load_config(config_path);
      if (sim_threshold) cfg.threshold = *sim_threshold;
      cfg.validate();
      require((fs::path(sim_in) / forge::snapshot_files::kBigraph).string(), "bigraph");
      auto g = forge::build_simgraph(forge::Bigraph::load(sim_in), cfg.threshold, cfg.threads);
      fs::create_directories(sim_out);
      g.save(sim_out);
      std::cout << json{{"nodes", g.node_count()}, {"edges", g.edge_count()}, {"threshold", g.threshold()}}.dump() << "\n";
    };
  });

  // topics
  auto* top = app.add_subcommand("topics", "discover micro-topics from a similarity graph");
  std::string top_in, top_out;
  top->add_option("--simgraph", top_in, "simgraph snapshot directory")->required();
  top->add_option("--out", top_out, "topics JSONL")->required();
  top->callback([&] {
    action = [&] {
      auto cfg = load_config(config_path);
      require((fs::path(top_in) / forge::snapshot_files::kSimgraph).string(), "simgraph");
      forge::CommunityStats stats;
      auto topics = forge::discover_communities(forge::SimGraph::load(top_in), cfg, &stats);
      if (fs::path(top_out).has_parent_path()) fs::create_directories(fs::path(top_out).parent_path());
      forge::write_topics(top_out, topics);
      std::cout << json{{"topics", topics.size()}, {"candidates", stats.candidates}, {"unconverged", stats.unconverged}}.dump()
                << "\n";
    };
  });

  // materialize
  auto* mat = app.add_subcommand("materialize", "rank queries, pins and users per topic");
  std::string mat_topics, mat_bigraph, mat_pins, mat_inter, mat_out;
  mat->add_option("--topics", mat_topics)->required();
  mat->add_option("--bigraph", mat_bigraph)->required();
  mat->add_option("--pins", mat_pins)->required();
  mat->add_option("--interactions", mat_inter)->required();
  mat->add_option("--out", mat_out, "directory for one JSON file per topic")->required();
  mat->callback([&] {
    action = [&] {
      auto cfg = load_config(config_path);
      require(mat_topics, "topics");
      require(mat_pins, "pins");
      require(mat_inter, "interactions");
      require((fs::path(mat_bigraph) / forge::snapshot_files::kBigraph).string(), "bigraph");
      auto b = forge::Bigraph::load(mat_bigraph);
      auto topics = forge::read_topics(mat_topics);
      auto pins = forge::detail::checked(forge::read_pins(mat_pins, strict), mat_pins, forge::stderr_logger);
      auto inter =
          forge::detail::checked(forge::read_interactions(mat_inter, strict), mat_inter, forge::stderr_logger);
      inter = forge::filter_known_pins(std::move(inter), pins);
      forge::PinIndex index(std::move(pins), cfg.n_max);
      fs::create_directories(mat_out);
      for (const auto& t : topics) {
        auto j = forge::to_json(forge::materialize_topic(t, b, index, inter, cfg));
        j["ngrams"] = t.ngrams;
        write_json_file(fs::path(mat_out) / (t.id + ".json"), j);
      }
      std::cout << json{{"topics", topics.size()}}.dump() << "\n";
    };
  });

  // run
  auto* run = app.add_subcommand("run", "run a range of pipeline stages with caching");
  std::string run_events, run_pins, run_inter, run_out, run_first = "bigraph", run_last = "materialize";
  std::optional<std::int64_t> run_from, run_to;
  run->add_option("--events", run_events);
  run->add_option("--pins", run_pins);
  run->add_option("--interactions", run_inter);
  run->add_option("--from", run_from);
  run->add_option("--to", run_to);
  run->add_option("--first", run_first, "first stage");
  run->add_option("--last", run_last, "last stage");
  run->add_option("--out", run_out, "snapshot directory")->required();
  run->callback([&] {
    action = [&] {
      auto cfg = load_config(config_path);
      forge::PipelineInputs in{run_events, run_pins, run_inter, window_of(run_from, run_to), strict};
      auto reports = forge::run_pipeline(cfg, in, run_out, forge::parse_stage(run_first), forge::parse_stage(run_last));
      json out = json::array();
      for (const auto& r : reports)
        out.push_back({{"stage", forge::stage_name(r.stage)}, {"cached", r.cached}, {"seconds", r.seconds}});
      std::cout << out.dump() << "\n";
    };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "generate a planted corpus, discover topics and score them");
  std::string ev_spec, ev_preset, ev_out;
  std::uint64_t ev_seed = 7;
  ev->add_option("--spec", ev_spec, "planted spec JSON");
  ev->add_option("--preset", ev_preset, "synthetic | styled | overlap | granularity | drift");
  ev->add_option("--seed", ev_seed);
  ev->add_option("--out", ev_out, "report JSON")->required();
  ev->callback([&] {
    action = [&] {
      auto cfg = load_config(config_path);
      auto report = forge::run_eval(spec_from(ev_spec, ev_preset, ev_seed), ev_seed, cfg);
      write_json_file(ev_out, report);
      std::cout << json{{"recovered_fraction", report["windows"][0]["recovery"]["recovered_fraction"]},
                        {"mean_f1", report["windows"][0]["recovery"]["mean_f1"]}}.dump()
                << "\n";
    };
  });

  // classify-pin
  auto* cls = app.add_subcommand("classify-pin", "score a pin against the taxonomy");
  std::string cls_snap, cls_tax, cls_pin, cls_text;
  cls->add_option("--snapshot", cls_snap, "pipeline snapshot directory")->required();
  cls->add_option("--taxonomy", cls_tax)->required();
  auto* pin_opt = cls->add_option("--pin", cls_pin, "pin id from the snapshot's pin file");
  cls->add_option("--text", cls_text, "free-text description")->excludes(pin_opt);
  cls->callback([&] {
    action = [&] {
      auto cfg = load_config(config_path);
      auto cat = forge::load_catalog(cls_snap, cfg);
      auto tax = forge::Taxonomy::from_json(read_json_file(cls_tax));
      forge::Pin pin;
      if (!cls_pin.empty()) {
        auto i = cat->pins().find(cls_pin);
        if (!i) throw forge::Error(forge::ErrorCode::MissingInput, "pin " + cls_pin);
        pin = cat->pins().pins()[*i];
      } else if (!cls_text.empty()) {
        pin.id = "<text>";
        pin.description = cls_text;
      } else {
        throw forge::Error(forge::ErrorCode::Config, "one of --pin or --text is required");
      }
      std::cout << json{{"pin", pin.id}, {"scores", forge::to_json(forge::classify_pin(pin, tax, *cat))}}.dump(2) << "\n";
    };
  });

  // trigger
  auto* trg = app.add_subcommand("trigger", "decide whether a query gets style modules for a user");
  std::string trg_snap, trg_tax, trg_user, trg_query;
  trg->add_option("--snapshot", trg_snap)->required();
  trg->add_option("--taxonomy", trg_tax)->required();
  trg->add_option("--user", trg_user)->required();
  trg->add_option("--query", trg_query)->required();
  trg->callback([&] {
    action = [&] {
      auto cfg = load_config(config_path);
      auto cat = forge::load_catalog(trg_snap, cfg);
      auto tax = forge::Taxonomy::from_json(read_json_file(trg_tax));
      auto q = cat->bigraph().require_query(forge::normalize_query(trg_query));
      auto aff = forge::user_affinity(trg_user, tax, *cat);
      auto out = forge::to_json(forge::trigger(q, aff, tax, *cat, cfg));
      out["affinity"] = forge::to_json(aff);
      std::cout << out.dump(2) << "\n";
    };
  });

  // serve
  auto* srv = app.add_subcommand("serve", "serve the HTTP API over a snapshot");
  std::string srv_conf, srv_snap, srv_tax, srv_static, srv_host;
  std::optional<int> srv_port;
  srv->add_option("--service", srv_conf, "service config JSON (host, port, snapshot_dir, taxonomy, static_dir)");
  srv->add_option("--snapshot", srv_snap);
  srv->add_option("--taxonomy", srv_tax);
  srv->add_option("--static", srv_static, "directory served at /");
  srv->add_option("--host", srv_host);
  srv->add_option("--port", srv_port);
  srv->callback([&] {
    action = [&] {
      forge::ServiceConfig sc;
      if (!srv_conf.empty()) sc = forge::ServiceConfig::from_json(read_json_file(srv_conf));
      if (!srv_snap.empty()) sc.snapshot_dir = srv_snap;
      if (!srv_tax.empty()) sc.taxonomy = srv_tax;
      if (!srv_static.empty()) sc.static_dir = srv_static;
      if (!srv_host.empty()) sc.host = srv_host;
      if (srv_port) sc.port = *srv_port;
      sc.apply_env();
      if (config_path.empty() && !sc.pipeline_config.empty()) config_path = sc.pipeline_config.string();
      auto cfg = load_config(config_path);
      if (sc.taxonomy.empty()) sc.taxonomy = "taxonomy.json";
      auto store = std::make_shared<forge::TaxonomyStore>(sc.taxonomy);
      forge::Api api(store, cfg);
      if (!sc.snapshot_dir.empty()) api.activate(forge::load_snapshot(sc.snapshot_dir, cfg));
      httplib::Server server;
      forge::mount(server, api, sc);
      forge::stderr_logger({{"event", "listening"}, {"host", sc.host}, {"port", sc.port},
                            {"snapshot_id", api.active() ? json(api.active()->id) : json()}});
      if (!server.listen(sc.host, sc.port))
        throw forge::Error(forge::ErrorCode::Io, "cannot listen on " + sc.host + ":" + std::to_string(sc.port));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    action();
    return 0;
  } catch (const forge::Error& e) {
    std::cerr << json{{"event", "error"}, {"error", forge::error_name(e.code())}, {"message", e.what()}}.dump() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << json{{"event", "error"}, {"error", "Internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
}
