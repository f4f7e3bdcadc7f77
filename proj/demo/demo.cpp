// Walks the curation flow on the home-decor demo corpus: build a snapshot, look up a query,
// follow specialized queries, curate a taxonomy and ask the trigger for style modules.
#include <filesystem>
#include <iostream>

#include "../tests/demo_fixture.hpp"
#include "forge/materialize.hpp"
#include "forge/taxonomy.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "forge-demo";
  forge::PipelineConfig config;
  auto demo = forge::demo::build_demo(FORGE_DEMO_DIR, work, config);
  const auto& cat = *demo.catalog;
  std::cout << "snapshot " << demo.dir << ": " << cat.topics().size() << " topics\n\n";

  auto q = cat.bigraph().require_query("nautical decor");
  auto assoc = forge::topics_for_query(q, cat.topics(), cat.topic_index(), cat.bigraph());
  std::cout << "[nautical decor] -> " << assoc.size() << " topics\n";
  for (std::size_t i = 0; i < assoc.size() && i < 5; ++i) {
    const auto& t = cat.topics()[assoc[i].topic];
    std::cout << "  " << t.id << " score " << assoc[i].score << ":";
    for (const auto& rq : forge::topic_queries(t, cat.bigraph(), 4)) std::cout << " [" << rq.text << "]";
    std::cout << "\n";
  }

  auto coastal = cat.bigraph().require_query("coastal decor");
  std::cout << "\nspecialized queries for [coastal decor]:\n";
  for (const auto& s : forge::suggest_specialized_queries(coastal, cat.topics(), cat.topic_index(), cat.bigraph(), 5))
    std::cout << "  " << s.text << " (popularity " << s.popularity << ", " << s.novel_topic_ids.size() << " new topics)\n";

  fs::remove(work / "taxonomy.json");
  forge::TaxonomyStore store(work / "taxonomy.json");
  forge::demo::curate(store, demo.spec, cat);
  auto tax = store.snapshot();
  std::cout << "\ntaxonomy v" << tax->version() << " with " << tax->nodes().size() << " nodes\n";

  auto affinity = forge::user_affinity("u0", *tax, cat);
  for (const char* query : {"kitchen ideas", "farmhouse kitchen"}) {
    auto r = forge::trigger(cat.bigraph().require_query(query), affinity, *tax, cat, config);
    std::cout << "trigger u0 [" << query << "]: " << (r.triggered ? "modules" : "no modules (" + r.reason + ")");
    for (const auto& m : r.modules) std::cout << " " << m.name << ":" << m.pins.size() << " pins";
    std::cout << "\n";
  }
}
