#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "forge/evalharness.hpp"
#include "forge/pipeline.hpp"

using namespace forge;
namespace fs = std::filesystem;

namespace {

class Pipeline : public ::testing::Test {
 protected:
  fs::path root = fs::temp_directory_path() / "forge_test_pipeline";
  fs::path snap = root / "snap";
  PipelineInputs in;

  void SetUp() override {
    fs::remove_all(root);
    fs::create_directories(root);
    SyntheticParams p;
    p.topics = 4;
    p.phrases_min = 10;
    p.phrases_max = 12;
    auto spec = synthetic_spec(p, 2);
    spec.session_count = 3000;
    spec.users = 150;
    auto g = generate_corpus(spec, 2);
    write_jsonl((root / "events.jsonl").string(), g.events);
    write_jsonl((root / "pins.jsonl").string(), g.pins);
    write_jsonl((root / "interactions.jsonl").string(), g.interactions);
    in = {root / "events.jsonl", root / "pins.jsonl", root / "interactions.jsonl", std::nullopt, false};
  }
  void TearDown() override { fs::remove_all(root); }

  std::vector<bool> cached(const std::vector<StageReport>& r) {
    std::vector<bool> out;
    for (const auto& s : r) out.push_back(s.cached);
    return out;
  }
};

}  // namespace

TEST_F(Pipeline, SecondRunIsCached) {
  PipelineConfig cfg;
  EXPECT_EQ(cached(run_pipeline(cfg, in, snap, Stage::Bigraph, Stage::Materialize, nullptr)),
            (std::vector<bool>{false, false, false, false}));
  for (auto f : {"bigraph.bin", "simgraph.bin", "topics.jsonl", "materialized.jsonl", "manifest.json"})
    EXPECT_TRUE(fs::exists(snap / f)) << f;
  EXPECT_GT(read_topics((snap / "topics.jsonl").string()).size(), 0u);
  EXPECT_EQ(cached(run_pipeline(cfg, in, snap, Stage::Bigraph, Stage::Materialize, nullptr)),
            (std::vector<bool>{true, true, true, true}));
}

TEST_F(Pipeline, ConfigChangeRerunsDownstreamOnly) {
  PipelineConfig cfg;
  run_pipeline(cfg, in, snap, Stage::Bigraph, Stage::Materialize, nullptr);
  cfg.threshold = 0.35;
  EXPECT_EQ(cached(run_pipeline(cfg, in, snap, Stage::Bigraph, Stage::Materialize, nullptr)),
            (std::vector<bool>{true, false, false, false}));
}

TEST_F(Pipeline, TamperedOutputIsRebuilt) {
  PipelineConfig cfg;
  run_pipeline(cfg, in, snap, Stage::Bigraph, Stage::Materialize, nullptr);
  auto before = binio::read_file(snap / "topics.jsonl");
  std::ofstream(snap / "topics.jsonl", std::ios::app) << "\n";
  auto r = run_pipeline(cfg, in, snap, Stage::Bigraph, Stage::Materialize, nullptr);
  EXPECT_EQ(cached(r), (std::vector<bool>{true, true, false, false}));
  EXPECT_EQ(binio::read_file(snap / "topics.jsonl"), before);
}

TEST_F(Pipeline, StageSubsetsReuseRememberedInputs) {
  PipelineConfig cfg;
  run_pipeline(cfg, in, snap, Stage::Bigraph, Stage::Bigraph, nullptr);
  run_pipeline(cfg, {}, snap, Stage::Simgraph, Stage::Topics, nullptr);
  auto r = run_pipeline(cfg, {}, snap, Stage::Materialize, Stage::Materialize, nullptr);
  EXPECT_FALSE(r[0].cached);
  auto cat = load_catalog(snap, cfg, nullptr);
  EXPECT_GT(cat->pins().size(), 0u);
  EXPECT_GT(cat->topics().size(), 0u);
}

TEST_F(Pipeline, DeterministicOutput) {
  PipelineConfig cfg;
  run_pipeline(cfg, in, snap, Stage::Bigraph, Stage::Materialize, nullptr);
  auto other = root / "snap2";
  cfg.threads = 3;
  run_pipeline(cfg, in, other, Stage::Bigraph, Stage::Materialize, nullptr);
  EXPECT_EQ(binio::read_file(snap / "topics.jsonl"), binio::read_file(other / "topics.jsonl"));
  EXPECT_EQ(binio::read_file(snap / "materialized.jsonl"), binio::read_file(other / "materialized.jsonl"));
}

TEST_F(Pipeline, CorruptManifestThrows) {
  PipelineConfig cfg;
  run_pipeline(cfg, in, snap, Stage::Bigraph, Stage::Bigraph, nullptr);
  std::ofstream(snap / "manifest.json") << "{not json";
  try {
    run_pipeline(cfg, in, snap, Stage::Bigraph, Stage::Materialize, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptManifest);
  }
}

TEST_F(Pipeline, MissingInputsAndBadConfig) {
  PipelineConfig cfg;
  PipelineInputs missing = in;
  missing.events = root / "nope.jsonl";
  try {
    run_pipeline(cfg, missing, snap, Stage::Bigraph, Stage::Materialize, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingInput);
  }
  try {
    run_pipeline(cfg, in, root / "fresh", Stage::Simgraph, Stage::Simgraph, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingInput);
  }
  cfg.threshold = 0;
  EXPECT_THROW(run_pipeline(cfg, in, snap, Stage::Bigraph, Stage::Materialize, nullptr), Error);
  EXPECT_THROW(run_pipeline(PipelineConfig{}, in, snap, Stage::Topics, Stage::Bigraph, nullptr), Error);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  PipelineConfig c;
  c.threshold = 0.4;
  c.stopwords = {"the"};
  auto back = PipelineConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  auto j = c.to_json();
  j["thresold"] = 0.2;
  EXPECT_THROW(PipelineConfig::from_json(j), Error);
}
