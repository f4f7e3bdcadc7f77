#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/binio.hpp"
#include "forge/common.hpp"
#include "forge/config.hpp"
#include "forge/corpus.hpp"
#include "forge/text.hpp"

namespace forge {

struct TimeWindow {
  std::int64_t start = 0;
  std::int64_t end = 0;  // exclusive

  static TimeWindow make(std::int64_t start, std::int64_t end) {
    if (!(start < end)) throw Error(ErrorCode::Config, "time window requires start < end");
    return {start, end};
  }
  bool contains(std::int64_t ts) const { return ts >= start && ts < end; }
  bool operator==(const TimeWindow&) const = default;
};

// A non-owning sparse vector: sorted ids with matching nonnegative weights.
struct SparseView {
  std::span<const std::uint32_t> ids;
  std::span<const double> weights;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  double l1() const {
    double s = 0;
    for (double w : weights) s += w;
    return s;
  }
};

// Owning counterpart of SparseView, handy for tests and ad-hoc vectors.
struct SparseVector {
  std::vector<std::uint32_t> ids;
  std::vector<double> weights;

  SparseVector() = default;
  SparseVector(std::initializer_list<std::pair<std::uint32_t, double>> entries) {
    std::vector<std::pair<std::uint32_t, double>> sorted(entries);
    std::sort(sorted.begin(), sorted.end());
    for (auto [id, w] : sorted) {
      ids.push_back(id);
      weights.push_back(w);
    }
  }
  SparseView view() const { return {ids, weights}; }
};

// Bipartite n-gram/query graph over one time window. Weight W[n,q] counts the sessions
// in which q was issued and some query of the session contained n.
class Bigraph {
 public:
  const TimeWindow& window() const { return window_; }
  const Interner& ngrams() const { return ngrams_; }
  const Interner& queries() const { return queries_; }
  std::size_t entry_count() const { return row_queries_.size(); }
  std::uint64_t session_count() const { return session_count_; }
  const std::string& config_hash() const { return config_hash_; }

  std::uint32_t query_popularity(QueryId q) const { return query_popularity_.at(q); }
  std::uint32_t ngram_session_count(NgramId n) const { return ngram_session_count_.at(n); }

  SparseView row(NgramId n) const {
    auto b = row_offsets_[n], e = row_offsets_[n + 1];
    return {std::span(row_queries_).subspan(b, e - b), std::span(row_weights_).subspan(b, e - b)};
  }
  SparseView column(QueryId q) const {
    auto b = col_offsets_[q], e = col_offsets_[q + 1];
    return {std::span(col_ngrams_).subspan(b, e - b), std::span(col_weights_).subspan(b, e - b)};
  }

  // W[n, .] as stored (raw counts, no normalization).
  SparseView query_distribution(NgramId n) const {
    if (n >= ngrams_.size()) throw Error(ErrorCode::UnknownNgram, "ngram id " + std::to_string(n));
    return row(n);
  }
  SparseView query_distribution(std::string_view ngram) const {
    auto id = ngrams_.find(ngram);
    if (!id) throw Error(ErrorCode::UnknownNgram, std::string(ngram));
    return row(*id);
  }

  double weight(NgramId n, QueryId q) const {
    auto r = row(n);
    auto it = std::lower_bound(r.ids.begin(), r.ids.end(), q);
    if (it == r.ids.end() || *it != q) return 0;
    return r.weights[static_cast<std::size_t>(it - r.ids.begin())];
  }

  QueryId require_query(std::string_view normalized) const {
    auto id = queries_.find(normalized);
    if (!id) throw Error(ErrorCode::UnknownQuery, std::string(normalized));
    return *id;
  }

  void save(const std::filesystem::path& dir) const;
  static Bigraph load(const std::filesystem::path& dir);

  friend Bigraph build_bigraph(const Corpus&, const TimeWindow&, const PipelineConfig&);
  friend Bigraph bigraph_from_rows(const TimeWindow&, std::vector<std::string>, std::vector<std::string>,
                                   const std::vector<std::vector<std::pair<QueryId, double>>>&,
                                   std::vector<std::uint32_t>);

 private:
  void build_columns() {
    col_offsets_.assign(queries_.size() + 1, 0);
    for (auto q : row_queries_) ++col_offsets_[q + 1];
    for (std::size_t q = 0; q < queries_.size(); ++q) col_offsets_[q + 1] += col_offsets_[q];
    col_ngrams_.resize(row_queries_.size());
    col_weights_.resize(row_queries_.size());
    auto cursor = col_offsets_;
    for (NgramId n = 0; n < ngrams_.size(); ++n) {
      for (auto i = row_offsets_[n]; i < row_offsets_[n + 1]; ++i) {
        auto pos = cursor[row_queries_[i]]++;
        col_ngrams_[pos] = n;
        col_weights_[pos] = row_weights_[i];
      }
    }
  }

  TimeWindow window_;
  Interner ngrams_;
  Interner queries_;
  std::vector<std::uint64_t> row_offsets_{0};
  std::vector<std::uint32_t> row_queries_;
  std::vector<double> row_weights_;
  std::vector<std::uint64_t> col_offsets_{0};
  std::vector<std::uint32_t> col_ngrams_;
  std::vector<double> col_weights_;
  std::vector<std::uint32_t> query_popularity_;
  std::vector<std::uint32_t> ngram_session_count_;
  std::uint64_t session_count_ = 0;
  std::string config_hash_;
};

inline Bigraph build_bigraph(const Corpus& corpus, const TimeWindow& window, const PipelineConfig& config) {
  std::vector<const Session*> in_window;
  for (const auto& s : corpus.sessions) {
    if (window.contains(s.start)) in_window.push_back(&s);
  }
  if (in_window.empty()) {
    throw Error(ErrorCode::EmptyWindow,
                "no sessions in [" + std::to_string(window.start) + ", " + std::to_string(window.end) + ")");
  }

  // n-grams per corpus query, with provisional ids
  const auto stop = config.stopword_set();
  Interner provisional;
  std::vector<std::vector<std::uint32_t>> query_grams(corpus.queries.size());
  std::vector<bool> have(corpus.queries.size(), false);
  for (const auto* s : in_window) {
    for (auto q : s->queries) {
      if (have[q]) continue;
      have[q] = true;
      for (const auto& g : extract_ngrams(corpus.queries.str(q), config.n_max, stop))
        query_grams[q].push_back(provisional.intern(g));
    }
  }

  // (provisional ngram, corpus query) keys, one per session-level co-occurrence
  const unsigned shards = shard_count(in_window.size(), config.threads);
  std::vector<std::vector<std::uint64_t>> keys(shards);
  std::vector<std::vector<std::uint32_t>> gram_sessions(shards, std::vector<std::uint32_t>(provisional.size(), 0));
  std::vector<std::vector<std::uint32_t>> popularity(shards, std::vector<std::uint32_t>(corpus.queries.size(), 0));
  parallel_shards(in_window.size(), config.threads, [&](unsigned shard, std::size_t begin, std::size_t end) {
    std::vector<std::uint32_t> grams;
    auto& out = keys[shard];
    for (std::size_t i = begin; i < end; ++i) {
      const auto& s = *in_window[i];
      grams.clear();
      for (auto q : s.queries) grams.insert(grams.end(), query_grams[q].begin(), query_grams[q].end());
      std::sort(grams.begin(), grams.end());
      grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
      for (auto g : grams) {
        ++gram_sessions[shard][g];
        for (auto q : s.queries) out.push_back((std::uint64_t{g} << 32) | q);
      }
      for (auto q : s.queries) ++popularity[shard][q];
    }
    std::sort(out.begin(), out.end());
  });
  std::vector<std::uint64_t> all;
  for (auto& k : keys) {
    auto mid = all.size();
    all.insert(all.end(), k.begin(), k.end());
    std::inplace_merge(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(mid), all.end());
    k.clear();
    k.shrink_to_fit();
  }
  for (unsigned s = 1; s < shards; ++s) {
    for (std::size_t g = 0; g < provisional.size(); ++g) gram_sessions[0][g] += gram_sessions[s][g];
    for (std::size_t q = 0; q < corpus.queries.size(); ++q) popularity[0][q] += popularity[s][q];
  }

  struct Triple {
    std::uint32_t gram, query;
    double weight;
  };
  std::vector<Triple> kept;
  std::vector<bool> gram_kept(provisional.size(), false);
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j] == all[i]) ++j;
    auto w = static_cast<double>(j - i);
    if (w >= config.min_cooccurrence) {
      auto g = static_cast<std::uint32_t>(all[i] >> 32);
      kept.push_back({g, static_cast<std::uint32_t>(all[i] & 0xffffffffu), w});
      gram_kept[g] = true;
    }
    i = j;
  }

  Bigraph b;
  b.window_ = window;
  b.session_count_ = in_window.size();
  b.config_hash_ = config.hash();

  // queries: every query issued in the window; corpus ids are already lexicographic
  std::vector<std::uint32_t> query_local(corpus.queries.size(), UINT32_MAX);
  std::vector<std::string> query_strings;
  for (QueryId q = 0; q < corpus.queries.size(); ++q) {
    if (popularity[0][q] == 0) continue;
    query_local[q] = static_cast<std::uint32_t>(query_strings.size());
    query_strings.push_back(corpus.queries.str(q));
    b.query_popularity_.push_back(popularity[0][q]);
  }
  b.queries_ = Interner::from_strings(std::move(query_strings));

  // n-grams with at least one surviving entry, in lexicographic order
  std::vector<std::uint32_t> gram_order;
  for (std::uint32_t g = 0; g < provisional.size(); ++g)
    if (gram_kept[g]) gram_order.push_back(g);
  std::sort(gram_order.begin(), gram_order.end(),
            [&](auto x, auto y) { return provisional.str(x) < provisional.str(y); });
  std::vector<std::uint32_t> gram_local(provisional.size(), UINT32_MAX);
  std::vector<std::string> gram_strings;
  for (auto g : gram_order) {
    gram_local[g] = static_cast<std::uint32_t>(gram_strings.size());
    gram_strings.push_back(provisional.str(g));
    b.ngram_session_count_.push_back(gram_sessions[0][g]);
  }
  b.ngrams_ = Interner::from_strings(std::move(gram_strings));

  for (auto& t : kept) {
    t.gram = gram_local[t.gram];
    t.query = query_local[t.query];
  }
  std::sort(kept.begin(), kept.end(),
            [](const Triple& x, const Triple& y) { return std::tie(x.gram, x.query) < std::tie(y.gram, y.query); });
  b.row_offsets_.assign(b.ngrams_.size() + 1, 0);
  b.row_queries_.reserve(kept.size());
  b.row_weights_.reserve(kept.size());
  for (const auto& t : kept) {
    ++b.row_offsets_[t.gram + 1];
    b.row_queries_.push_back(t.query);
    b.row_weights_.push_back(t.weight);
  }
  for (std::size_t n = 0; n < b.ngrams_.size(); ++n) b.row_offsets_[n + 1] += b.row_offsets_[n];
  b.build_columns();
  return b;
}

// Assembles a bigraph directly from rows. Used by tests and synthetic benchmarks that
// need arbitrary weight patterns; rows must use query ids < queries.size().
inline Bigraph bigraph_from_rows(const TimeWindow& window, std::vector<std::string> ngrams,
                                 std::vector<std::string> queries,
                                 const std::vector<std::vector<std::pair<QueryId, double>>>& rows,
                                 std::vector<std::uint32_t> popularity) {
  if (rows.size() != ngrams.size()) throw Error(ErrorCode::Config, "one row per ngram required");
  if (popularity.size() != queries.size()) throw Error(ErrorCode::Config, "one popularity per query required");
  Bigraph b;
  b.window_ = window;
  b.ngrams_ = Interner::from_strings(std::move(ngrams));
  b.queries_ = Interner::from_strings(std::move(queries));
  b.query_popularity_ = std::move(popularity);
  b.row_offsets_.assign(1, 0);
  for (const auto& r : rows) {
    auto sorted = r;
    std::sort(sorted.begin(), sorted.end());
    std::uint32_t sessions = 0;
    for (auto [q, w] : sorted) {
      if (q >= b.queries_.size()) throw Error(ErrorCode::UnknownQuery, "query id " + std::to_string(q));
      if (!(w > 0)) continue;
      b.row_queries_.push_back(q);
      b.row_weights_.push_back(w);
      sessions = std::max(sessions, static_cast<std::uint32_t>(w));
    }
    b.ngram_session_count_.push_back(sessions);
    b.row_offsets_.push_back(b.row_queries_.size());
  }
  b.build_columns();
  return b;
}

namespace detail {
inline constexpr const char* kBigraphMagic = "FRGBGR01";
}

inline void Bigraph::save(const std::filesystem::path& dir) const {
  binio::Writer w(detail::kBigraphMagic);
  w.put<std::uint32_t>(1);
  w.put(window_.start);
  w.put(window_.end);
  w.put(session_count_);
  w.put(config_hash_);
  w.put(ngrams_.strings());
  w.put(queries_.strings());
  w.put(row_offsets_);
  w.put(row_queries_);
  w.put(row_weights_);
  w.put(query_popularity_);
  w.put(ngram_session_count_);
  binio::write_file(dir / "bigraph.bin", w.bytes());
}

inline Bigraph Bigraph::load(const std::filesystem::path& dir) {
  auto path = dir / "bigraph.bin";
  binio::Reader r(binio::read_file(path), detail::kBigraphMagic, path.string());
  if (r.get<std::uint32_t>() != 1) r.fail("unsupported format version");
  Bigraph b;
  b.window_.start = r.get<std::int64_t>();
  b.window_.end = r.get<std::int64_t>();
  b.session_count_ = r.get<std::uint64_t>();
  b.config_hash_ = r.get_string();
  b.ngrams_ = Interner::from_strings(r.get_vector<std::string>());
  b.queries_ = Interner::from_strings(r.get_vector<std::string>());
  b.row_offsets_ = r.get_vector<std::uint64_t>();
  b.row_queries_ = r.get_vector<std::uint32_t>();
  b.row_weights_ = r.get_vector<double>();
  b.query_popularity_ = r.get_vector<std::uint32_t>();
  b.ngram_session_count_ = r.get_vector<std::uint32_t>();
  r.expect_end();
  if (b.row_offsets_.size() != b.ngrams_.size() + 1 || b.row_offsets_.back() != b.row_queries_.size() ||
      b.row_weights_.size() != b.row_queries_.size() || b.query_popularity_.size() != b.queries_.size() ||
      b.ngram_session_count_.size() != b.ngrams_.size())
    r.fail("inconsistent array sizes");
  for (auto q : b.row_queries_)
    if (q >= b.queries_.size()) r.fail("query id out of range");
  b.build_columns();
  return b;
}

}  // namespace forge
