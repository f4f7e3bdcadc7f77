#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "forge/common.hpp"

// Little-endian binary records used by snapshot files. Layout: 8-byte magic, u32 format
// version, then fields in declaration order. Vectors are u64 length + elements;
// strings are u64 length + bytes.
namespace forge::binio {

static_assert(std::endian::native == std::endian::little, "snapshot format assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::string magic) { raw(magic.data(), 8); }

  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    raw(&v, sizeof v);
  }
  void put(const std::string& s) {
    put<std::uint64_t>(s.size());
    raw(s.data(), s.size());
  }
  template <class T>
  void put(const std::vector<T>& v) {
    put<std::uint64_t>(v.size());
    if constexpr (std::is_arithmetic_v<T>) {
      raw(v.data(), v.size() * sizeof(T));
    } else {
      for (const auto& x : v) put(x);
    }
  }

  const std::string& bytes() const { return buf_; }

 private:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string bytes, const std::string& magic, std::string source)
      : buf_(std::move(bytes)), source_(std::move(source)) {
    if (buf_.size() < 8 || buf_.compare(0, 8, magic.substr(0, 8)) != 0) fail("bad magic");
    pos_ = 8;
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    T v;
    need(sizeof v);
    std::memcpy(&v, buf_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string get_string() {
    auto n = get<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <class T>
  std::vector<T> get_vector() {
    auto n = get<std::uint64_t>();
    std::vector<T> v;
    if constexpr (std::is_arithmetic_v<T>) {
      if (n > (buf_.size() - pos_) / sizeof(T)) fail("truncated");
      v.resize(n);
      std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(T));
      pos_ += n * sizeof(T);
    } else {
      static_assert(std::is_same_v<T, std::string>);
      if (n > buf_.size() - pos_) fail("truncated");
      v.reserve(n);
      for (std::uint64_t i = 0; i < n; ++i) v.push_back(get_string());
    }
    return v;
  }
  void expect_end() {
    if (pos_ != buf_.size()) fail("trailing bytes");
  }
  [[noreturn]] void fail(const std::string& why) const { throw Error(ErrorCode::Parse, source_ + ": " + why); }

 private:
  void need(std::uint64_t n) const {
    if (n > buf_.size() - pos_) fail("truncated");
  }
  std::string buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Writes to a sibling temp file and renames it over the target.
inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string file_hash(const std::filesystem::path& path) { return to_hex(fnv1a(read_file(path))); }

inline nlohmann::json read_json(const std::filesystem::path& path) {
  auto text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

}  // namespace forge::binio
