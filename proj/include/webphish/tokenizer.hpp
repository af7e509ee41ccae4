#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "webphish/common.hpp"
#include "webphish/corpus.hpp"

namespace webphish {

using TokenId = std::int32_t;

inline constexpr TokenId kPaddingId = 0;
inline constexpr TokenId kUnknownId = 1;
inline constexpr TokenId kFirstCharId = 2;

/// Character dictionary. Index 0 is padding, 1 is unknown; characters take 2.. in
/// order of first appearance. Case-sensitive.
class CharVocabulary {
 public:
  CharVocabulary() = default;

  /// Rebuilds a vocabulary from its characters listed in index order (index = position + 2).
  static CharVocabulary from_chars(const std::u32string& chars) {
    CharVocabulary v;
    for (char32_t c : chars) {
      if (v.index_of_.count(c)) throw DataError("duplicate character in vocabulary");
      v.index_of_.emplace(c, static_cast<TokenId>(v.chars_.size()) + kFirstCharId);
      v.chars_.push_back(c);
    }
    return v;
  }

  TokenId lookup(char32_t c) const {
    auto it = index_of_.find(c);
    return it == index_of_.end() ? kUnknownId : it->second;
  }

  bool contains(char32_t c) const { return index_of_.count(c) != 0; }

  /// Character at index `id`; only valid for id >= 2.
  char32_t char_at(TokenId id) const { return chars_.at(static_cast<std::size_t>(id - kFirstCharId)); }

  /// Total index count including the two reserved slots.
  std::size_t size() const { return chars_.size() + 2; }

  const std::u32string& chars() const { return chars_; }

  bool operator==(const CharVocabulary& other) const { return chars_ == other.chars_; }

  void add(char32_t c) {
    if (index_of_.emplace(c, static_cast<TokenId>(chars_.size()) + kFirstCharId).second) chars_.push_back(c);
  }

  /// Inspection export: {"<char>": index, ...} in index order.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    j["<pad>"] = kPaddingId;
    j["<unk>"] = kUnknownId;
    for (std::size_t i = 0; i < chars_.size(); ++i) {
      std::string key;
      utf8::append(key, chars_[i]);
      j[key] = static_cast<TokenId>(i) + kFirstCharId;
    }
    return j;
  }

 private:
  std::u32string chars_;
  std::unordered_map<char32_t, TokenId> index_of_;
};

/// One entry per distinct scalar value across `texts`, in first-appearance order.
inline CharVocabulary build_vocab(const std::vector<std::string_view>& texts) {
  CharVocabulary v;
  for (auto t : texts)
    for (char32_t c : utf8::decode(t)) v.add(c);
  if (v.chars().empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  return v;
}

inline CharVocabulary build_vocab(const std::vector<std::string>& texts) {
  std::vector<std::string_view> views(texts.begin(), texts.end());
  return build_vocab(views);
}

/// Maps the first `max_len` characters to indices (unknown -> 1) and pads with 0.
inline std::vector<TokenId> encode(std::string_view text, const CharVocabulary& vocab, std::size_t max_len) {
  std::vector<TokenId> out(max_len, kPaddingId);
  // Every scalar takes at most 4 bytes, so this prefix holds the first max_len characters.
  const auto head = utf8::decode(text.substr(0, std::min(text.size(), max_len * 4)));
  const std::size_t n = std::min(head.size(), max_len);
  for (std::size_t i = 0; i < n; ++i) out[i] = vocab.lookup(head[i]);
  return out;
}

/// Inverse of encode on the non-padded region; unknown ids become U+FFFD.
inline std::string decode_ids(const std::vector<TokenId>& ids, const CharVocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    if (id == kPaddingId) break;
    utf8::append(out, id == kUnknownId ? utf8::kReplacement : vocab.char_at(id));
  }
  return out;
}

struct EncoderConfig {
  std::size_t url_len = 180;
  std::size_t html_len = 2000;
};

struct VocabularyPair {
  CharVocabulary url;
  CharVocabulary html;

  bool operator==(const VocabularyPair&) const = default;
};

struct EncodedSample {
  std::vector<TokenId> url_ids;
  std::vector<TokenId> html_ids;
  Label label = Label::legitimate;
};

/// Builds both vocabularies from training samples only (normalized URL, HTML).
inline VocabularyPair build_vocabularies(const std::vector<WebPageSample>& train) {
  std::vector<std::string_view> urls, htmls;
  for (const auto& s : train) {
    urls.push_back(s.normalized_url);
    htmls.push_back(s.html);
  }
  return {build_vocab(urls), build_vocab(htmls)};
}

inline EncodedSample encode_sample(const WebPageSample& s, const VocabularyPair& vocab, const EncoderConfig& cfg) {
  return {encode(s.normalized_url, vocab.url, cfg.url_len), encode(s.html, vocab.html, cfg.html_len), s.label};
}

inline std::vector<EncodedSample> encode_samples(const std::vector<WebPageSample>& samples,
                                                 const VocabularyPair& vocab, const EncoderConfig& cfg) {
  std::vector<EncodedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(encode_sample(s, vocab, cfg));
  return out;
}

}  // namespace webphish
