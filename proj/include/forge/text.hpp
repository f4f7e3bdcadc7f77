#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "forge/common.hpp"

namespace forge {

// Lowercase, NFC, whitespace runs collapsed to one space, leading/trailing
// whitespace and punctuation removed. Whitespace-only input yields "".
inline std::string normalize_query(std::string_view raw) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorCode::Io, "ICU NFC normalizer unavailable");

  icu::UnicodeString text = icu::UnicodeString::fromUTF8(icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  text = nfc->normalize(text, status);
  text.toLower();
  text = nfc->normalize(text, status);
  if (U_FAILURE(status)) throw Error(ErrorCode::Parse, "cannot normalize query");

  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < text.length();) {
    UChar32 c = text.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c) || c == 0) {
      pending_space = true;
      continue;
    }
    if (pending_space && collapsed.length() > 0) collapsed.append(static_cast<UChar>(u' '));
    pending_space = false;
    collapsed.append(c);
  }

  auto strippable = [](UChar32 c) { return u_ispunct(c) || u_isUWhiteSpace(c); };
  int32_t begin = 0;
  int32_t end = collapsed.length();
  while (begin < end) {
    UChar32 c = collapsed.char32At(begin);
    if (!strippable(c)) break;
    begin += U16_LENGTH(c);
  }
  while (end > begin) {
    int32_t prev = collapsed.moveIndex32(end, -1);
    UChar32 c = collapsed.char32At(prev);
    if (!strippable(c)) break;
    end = prev;
  }

  std::string out;
  collapsed.tempSubStringBetween(begin, end).toUTF8String(out);
  return out;
}

// Splits an already-normalized string on single spaces.
inline std::vector<std::string> tokenize(std::string_view normalized) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < normalized.size()) {
    std::size_t next = normalized.find(' ', pos);
    if (next == std::string_view::npos) next = normalized.size();
    if (next > pos) tokens.emplace_back(normalized.substr(pos, next - pos));
    pos = next + 1;
  }
  return tokens;
}

class Stopwords {
 public:
  Stopwords() = default;
  explicit Stopwords(const std::vector<std::string>& words) : words_(words.begin(), words.end()) {}

  static Stopwords english_default() {
    return Stopwords({"a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "how", "in", "is", "it", "my",
                      "of", "on", "or", "the", "to", "what", "with", "your"});
  }

  bool contains(std::string_view w) const { return words_.find(std::string(w)) != words_.end(); }
  std::vector<std::string> sorted() const {
    std::vector<std::string> out(words_.begin(), words_.end());
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::unordered_set<std::string> words_;
};

// All contiguous word n-grams of length 1..n_max, minus those made solely of stopwords.
// Output is sorted and deduplicated.
inline std::vector<std::string> ngrams_of_tokens(const std::vector<std::string>& tokens, int n_max,
                                                 const Stopwords& stop) {
  std::vector<std::string> out;
  if (n_max < 1) return out;
  std::vector<bool> is_stop(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) is_stop[i] = stop.contains(tokens[i]);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::string gram;
    bool all_stop = true;
    for (std::size_t n = 1; n <= static_cast<std::size_t>(n_max) && i + n <= tokens.size(); ++n) {
      if (n > 1) gram.push_back(' ');
      gram += tokens[i + n - 1];
      all_stop = all_stop && is_stop[i + n - 1];
      if (!all_stop) out.push_back(gram);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::vector<std::string> extract_ngrams(std::string_view normalized_query, int n_max, const Stopwords& stop) {
  return ngrams_of_tokens(tokenize(normalized_query), n_max, stop);
}

}  // namespace forge
