#include <filesystem>
#include <thread>

#include <unistd.h>

#include <gtest/gtest.h>

#include "demo_fixture.hpp"
#include "forge/service.hpp"

using namespace forge;
namespace fs = std::filesystem;

namespace {

struct Running {
  std::shared_ptr<TaxonomyStore> store = std::make_shared<TaxonomyStore>();
  Api api{store, PipelineConfig{}};
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit Running(const ServiceConfig& sc) {
    mount(server, api, sc, nullptr);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~Running() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

nlohmann::json body(const httplib::Result& r) { return nlohmann::json::parse(r->body); }

class Service : public ::testing::Test {
 protected:
  static inline std::unique_ptr<demo::DemoSnapshot> demo;
  static inline fs::path work = fs::temp_directory_path() / ("forge_test_service_" + std::to_string(::getpid()));

  static void SetUpTestSuite() {
    fs::remove_all(work);
    demo = std::make_unique<demo::DemoSnapshot>(demo::build_demo(FORGE_DEMO_DIR, work));
  }
  static void TearDownTestSuite() {
    demo.reset();
    fs::remove_all(work);
  }

  ServiceConfig config() const {
    ServiceConfig sc;
    sc.snapshot_dir = demo->dir;
    return sc;
  }
};

}  // namespace

TEST_F(Service, DemoSnapshotHasTopics) {
  EXPECT_FALSE(read_topics((demo->dir / "topics.jsonl").string()).empty());
  EXPECT_EQ(snapshot_id_of(demo->dir), snapshot_id_of(demo->dir));
}

TEST_F(Service, NoSnapshotGives503) {
  Running s(ServiceConfig{});
  auto cli = s.client();
  auto h = cli.Get("/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 200);
  EXPECT_EQ(body(h)["status"], "no_snapshot");
  EXPECT_EQ(cli.Get("/topics?query=nautical%20decor")->status, 503);
  EXPECT_EQ(cli.Get("/trigger?user=u0&query=kitchen%20ideas")->status, 503);
  EXPECT_EQ(cli.Get("/taxonomy")->status, 200);
  EXPECT_EQ(cli.Post("/snapshot/reload")->status, 400);
}

TEST_F(Service, ReadEndpoints) {
  Running s(config());
  auto cli = s.client();
  ASSERT_EQ(cli.Post("/snapshot/reload")->status, 200);

  auto t = cli.Get("/topics?query=Nautical%20Decor");
  ASSERT_EQ(t->status, 200);
  auto tj = body(t);
  EXPECT_EQ(tj["query"], "nautical decor");
  ASSERT_GE(tj["topics"].size(), 2u);
  EXPECT_EQ(tj["snapshot_id"], snapshot_id_of(demo->dir));
  EXPECT_LE(tj["topics"][0]["preview"]["queries"].size(), 5u);

  // repeated reads are byte-identical
  EXPECT_EQ(cli.Get("/topics?query=Nautical%20Decor")->body, t->body);

  std::string id = tj["topics"][0]["topic_id"];
  auto one = cli.Get("/topics/" + id);
  ASSERT_EQ(one->status, 200);
  EXPECT_EQ(body(one)["topic_id"], id);
  EXPECT_FALSE(body(one)["ngrams"].empty());

  EXPECT_EQ(cli.Get("/topics/ffffffffffffffff")->status, 404);
  EXPECT_EQ(cli.Get("/topics?query=zzzz%20qqqq")->status, 404);
  EXPECT_EQ(cli.Get("/topics")->status, 400);
  EXPECT_EQ(cli.Get("/suggestions?query=coastal%20decor&k=x")->status, 400);

  auto sg = cli.Get("/suggestions?query=coastal%20decor&k=3");
  ASSERT_EQ(sg->status, 200);
  EXPECT_LE(body(sg)["suggestions"].size(), 3u);
}

TEST_F(Service, CurationFlow) {
  Running s(config());
  s.api.activate(load_snapshot(demo->dir, PipelineConfig{}, nullptr));
  auto cli = s.client();
  std::string topic = demo->catalog->topics().front().id;

  auto n = cli.Post("/taxonomy/nodes", R"({"name":"coastal","actor":"alice"})", "application/json");
  ASSERT_EQ(n->status, 200);
  std::string node = body(n)["node"]["id"];
  EXPECT_EQ(body(n)["version"], 1);

  nlohmann::json attach = {{"topic_id", topic}};
  auto a = cli.Post("/taxonomy/nodes/" + node + "/topics", attach.dump(), "application/json");
  ASSERT_EQ(a->status, 200);
  EXPECT_EQ(a->get_header_value("ETag"), "\"2\"");

  // repeating it is not an error and does not bump the version
  auto again = cli.Post("/taxonomy/nodes/" + node + "/topics", attach.dump(), "application/json");
  EXPECT_EQ(again->status, 200);
  EXPECT_EQ(s.store->snapshot()->version(), 2u);

  httplib::Headers stale = {{"If-Match", "\"1\""}};
  auto conflict = cli.Post("/taxonomy/nodes/" + node + "/topics", stale, attach.dump(), "application/json");
  EXPECT_EQ(conflict->status, 409);
  EXPECT_EQ(body(conflict)["error"], "VersionConflict");
  httplib::Headers junk = {{"If-Match", "abc"}};
  EXPECT_EQ(cli.Post("/taxonomy/nodes/" + node + "/topics", junk, attach.dump(), "application/json")->status, 400);

  nlohmann::json bogus = {{"topic_id", "0000000000000000"}};
  EXPECT_EQ(cli.Post("/taxonomy/nodes/" + node + "/topics", bogus.dump(), "application/json")->status, 404);
  EXPECT_EQ(cli.Post("/taxonomy/nodes/n99/topics", attach.dump(), "application/json")->status, 404);
  EXPECT_EQ(cli.Post("/taxonomy/nodes", "{bad", "application/json")->status, 400);

  auto tax = cli.Get("/taxonomy");
  EXPECT_EQ(body(tax)["nodes"][0]["topics"][0], topic);
  EXPECT_EQ(body(tax)["audit"][1]["actor"], "anonymous");
  EXPECT_EQ(tax->get_header_value("ETag"), "\"2\"");

  httplib::Headers actor = {{"X-Actor", "bob"}};
  auto d = cli.Delete("/taxonomy/nodes/" + node + "/topics/" + topic, actor);
  ASSERT_EQ(d->status, 200);
  EXPECT_EQ(s.store->snapshot()->version(), 3u);
  EXPECT_EQ(s.store->snapshot()->audit().back().actor, "bob");
  EXPECT_TRUE(s.store->snapshot()->node(node).topics.empty());
}

TEST_F(Service, ConcurrentWritersOneWins) {
  Running s(config());
  s.api.activate(load_snapshot(demo->dir, PipelineConfig{}, nullptr));
  auto node = s.store->add_node("coastal", std::nullopt, "setup").id;
  const auto& topics = demo->catalog->topics();
  ASSERT_GE(topics.size(), 2u);
  std::vector<int> status(2);
  std::vector<std::thread> writers;
  for (int i = 0; i < 2; ++i) {
    writers.emplace_back([&, i] {
      auto cli = s.client();
      httplib::Headers h = {{"If-Match", "1"}};
      nlohmann::json b = {{"topic_id", topics[static_cast<std::size_t>(i)].id}};
      status[static_cast<std::size_t>(i)] = cli.Post("/taxonomy/nodes/" + node + "/topics", h, b.dump(), "application/json")->status;
    });
  }
  for (auto& w : writers) w.join();
  std::sort(status.begin(), status.end());
  EXPECT_EQ(status, (std::vector<int>{200, 409}));
  EXPECT_EQ(s.store->snapshot()->version(), 2u);
}

TEST_F(Service, TriggerEndpoint) {
  Running s(config());
  s.api.activate(load_snapshot(demo->dir, PipelineConfig{}, nullptr));
  demo::curate(*s.store, demo->spec, *demo->catalog);
  auto cli = s.client();
  auto broad = body(cli.Get("/trigger?user=u0&query=kitchen%20ideas"));
  EXPECT_EQ(broad["user"], "u0");
  EXPECT_EQ(broad["taxonomy_version"], s.store->snapshot()->version());
  EXPECT_TRUE(broad["triggered"].get<bool>());
  auto narrow = body(cli.Get("/trigger?user=u0&query=farmhouse%20kitchen"));
  EXPECT_FALSE(narrow["triggered"].get<bool>());
  EXPECT_EQ(narrow["reason"], "narrow_query");
  EXPECT_EQ(cli.Get("/trigger?user=u0")->status, 400);
}

TEST(ServiceConfig, RejectsUnknownKeys) {
  auto sc = ServiceConfig::from_json({{"port", 9000}, {"snapshot_dir", "/tmp/x"}});
  EXPECT_EQ(sc.port, 9000);
  EXPECT_EQ(sc.snapshot_dir, "/tmp/x");
  EXPECT_THROW(ServiceConfig::from_json({{"prot", 9000}}), Error);
  EXPECT_EQ(http_status(ErrorCode::UnknownTopic), 404);
  EXPECT_EQ(http_status(ErrorCode::VersionConflict), 409);
  EXPECT_EQ(http_status(ErrorCode::Parse), 400);
  EXPECT_EQ(http_status(ErrorCode::Io), 500);
}
