#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

namespace forge {

using QueryId = std::uint32_t;
using NgramId = std::uint32_t;

enum class ErrorCode {
  Parse,
  Config,
  MissingInput,
  EmptyWindow,
  UnknownNgram,
  UnknownQuery,
  UnknownNode,
  UnknownTopic,
  BothZero,
  InvalidSpec,
  VersionConflict,
  CorruptManifest,
  Io,
};

inline const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::UnknownNgram: return "UnknownNgram";
    case ErrorCode::UnknownQuery: return "UnknownQuery";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::UnknownTopic: return "UnknownTopic";
    case ErrorCode::BothZero: return "BothZero";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::VersionConflict: return "VersionConflict";
    case ErrorCode::CorruptManifest: return "CorruptManifest";
    case ErrorCode::Io: return "IoError";
  }
  return "Error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// FNV-1a, 64 bit. Used for content hashes and stable topic ids; not cryptographic.
class Fnv1a {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view bytes) {
  Fnv1a h;
  h.update(bytes);
  return h.digest();
}

inline std::string to_hex(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

struct StringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
};

// Bidirectional string <-> dense id mapping. Ids are assigned in insertion order.
class Interner {
 public:
  std::uint32_t intern(std::string_view s) {
    if (auto it = index_.find(s); it != index_.end()) return it->second;
    auto id = static_cast<std::uint32_t>(strings_.size());
    strings_.emplace_back(s);
    index_.emplace(strings_.back(), id);
    return id;
  }

  std::optional<std::uint32_t> find(std::string_view s) const {
    if (auto it = index_.find(s); it != index_.end()) return it->second;
    return std::nullopt;
  }

  bool contains(std::string_view s) const { return index_.find(s) != index_.end(); }
  const std::string& str(std::uint32_t id) const { return strings_.at(id); }
  std::size_t size() const { return strings_.size(); }
  const std::vector<std::string>& strings() const { return strings_; }

  static Interner from_strings(std::vector<std::string> strings) {
    Interner out;
    out.strings_ = std::move(strings);
    out.index_.reserve(out.strings_.size());
    for (std::uint32_t i = 0; i < out.strings_.size(); ++i) out.index_.emplace(out.strings_[i], i);
    return out;
  }

 private:
  std::vector<std::string> strings_;
  std::unordered_map<std::string, std::uint32_t, StringHash, std::equal_to<>> index_;
};

// Runs fn(shard_index, begin, end) over [0, n) split into contiguous shards.
// Results must be merged by the caller in shard order to stay deterministic.
inline void parallel_shards(std::size_t n, unsigned threads,
                            const std::function<void(unsigned, std::size_t, std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::jthread> pool;
  std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    std::size_t begin = std::min(n, t * chunk);
    std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&fn, t, begin, end] { fn(t, begin, end); });
  }
}

inline unsigned shard_count(std::size_t n, unsigned threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(threads, std::max<std::size_t>(n, 1))));
}

}  // namespace forge
