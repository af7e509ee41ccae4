#pragma once

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "webphish/common.hpp"
#include "webphish/corpus.hpp"
#include "webphish/table.hpp"

namespace webphish {

// ---------------------------------------------------------------------------
// Tag scanner

struct TagEvent {
  std::string name;                                         // lower-cased
  std::vector<std::pair<std::string, std::string>> attributes;  // names lower-cased, first occurrence wins
  bool self_closing = false;
  std::string body;  // raw contents for <script>, empty otherwise

  const std::string* attr(std::string_view key) const {
    for (const auto& [k, v] : attributes)
      if (k == key) return &v;
    return nullptr;
  }
};

namespace detail::scan {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
inline bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

/// Case-insensitive search for an ASCII needle.
inline std::size_t ifind(std::string_view hay, std::string_view needle, std::size_t from) {
  if (needle.size() > hay.size()) return std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    std::size_t k = 0;
    while (k < needle.size() && ascii_lower(hay[i + k]) == needle[k]) ++k;
    if (k == needle.size()) return i;
  }
  return std::string_view::npos;
}

}  // namespace detail::scan

/// Start tags in document order. Comments, end tags, doctype/processing instructions
/// and the bodies of <script> elements produce no events. Never repairs markup and
/// never fails: an unterminated tag or quoted value extends to the end of input, and a
/// '<' not followed by a letter is text.
inline std::vector<TagEvent> scan_tags(std::string_view html) {
  using namespace detail::scan;
  std::vector<TagEvent> events;
  const std::size_t n = html.size();
  std::size_t i = 0;
  while (i < n) {
    const std::size_t lt = html.find('<', i);
    if (lt == std::string_view::npos) break;
    i = lt + 1;
    if (i >= n) break;
    if (html.compare(lt, 4, "<!--") == 0) {
      const std::size_t end = html.find("-->", lt + 4);
      i = end == std::string_view::npos ? n : end + 3;
      continue;
    }
    const char c = html[i];
    if (c == '!' || c == '?' || c == '/') {
      const std::size_t end = html.find('>', i);
      i = end == std::string_view::npos ? n : end + 1;
      continue;
    }
    if (!is_alpha(c)) continue;

    TagEvent ev;
    while (i < n && !is_space(html[i]) && html[i] != '/' && html[i] != '>') ev.name.push_back(ascii_lower(html[i++]));

    // Attributes until '>' or end of input.
    while (i < n && html[i] != '>') {
      if (is_space(html[i])) {
        ++i;
        continue;
      }
      if (html[i] == '/') {
        ++i;
        if (i < n && html[i] == '>') ev.self_closing = true;
        continue;
      }
      std::string key;
      while (i < n && !is_space(html[i]) && html[i] != '=' && html[i] != '>' && !(html[i] == '/' && key.size()))
        key.push_back(ascii_lower(html[i++]));
      while (i < n && is_space(html[i])) ++i;
      std::string value;
      if (i < n && html[i] == '=') {
        ++i;
        while (i < n && is_space(html[i])) ++i;
        if (i < n && (html[i] == '"' || html[i] == '\'')) {
          const char q = html[i++];
          const std::size_t end = html.find(q, i);
          const std::size_t stop = end == std::string_view::npos ? n : end;
          value.assign(html.substr(i, stop - i));
          i = end == std::string_view::npos ? n : end + 1;
        } else {
          while (i < n && !is_space(html[i]) && html[i] != '>') value.push_back(html[i++]);
        }
      }
      if (key.empty()) continue;
      if (!ev.attr(key)) ev.attributes.emplace_back(std::move(key), std::move(value));
    }
    if (i < n) ++i;  // consume '>'

    if (ev.name == "script" && !ev.self_closing) {
      const std::size_t end = ifind(html, "</script", i);
      const std::size_t stop = end == std::string_view::npos ? n : end;
      ev.body.assign(html.substr(i, stop - i));
      i = stop;
    }
    events.push_back(std::move(ev));
  }
  return events;
}

// ---------------------------------------------------------------------------
// Feature records

inline constexpr std::size_t kUrlFeatureCount = 12;
inline constexpr std::size_t kHtmlFeatureCount = 19;
inline constexpr std::size_t kFeatureCount = kUrlFeatureCount + kHtmlFeatureCount;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "url_misleading_word_count",
    "url_slash_question_count",
    "url_digit_count",
    "url_dot_count",
    "url_hyphen_underscore_count",
    "url_equals_ampersand_count",
    "url_two_letter_subdomain_count",
    "url_semicolon_count",
    "url_subdomain_count",
    "url_has_subdomain",
    "url_hostname_digit_percent",
    "url_length",
    "html_has_script",
    "html_has_noscript",
    "html_has_internal_script",
    "html_has_external_script",
    "html_has_embedded_script",
    "html_script_count",
    "html_noscript_count",
    "html_internal_script_count",
    "html_external_script_count",
    "html_embedded_script_count",
    "html_has_internal_link",
    "html_has_external_link",
    "html_has_image",
    "html_has_iframe",
    "html_image_count",
    "html_internal_link_count",
    "html_external_link_count",
    "html_iframe_count",
    "html_whitespace_percent",
};

struct UrlFeatures {
  double misleading_word_count = 0;
  double slash_question_count = 0;
  double digit_count = 0;
  double dot_count = 0;
  double hyphen_underscore_count = 0;
  double equals_ampersand_count = 0;
  double two_letter_subdomain_count = 0;
  double semicolon_count = 0;
  double subdomain_count = 0;
  double has_subdomain = 0;
  double hostname_digit_percent = 0;
  double url_length = 0;

  std::array<double, kUrlFeatureCount> values() const {
    return {misleading_word_count, slash_question_count,    digit_count,     dot_count,
            hyphen_underscore_count, equals_ampersand_count, two_letter_subdomain_count, semicolon_count,
            subdomain_count,       has_subdomain,           hostname_digit_percent, url_length};
  }
};

struct HtmlFeatures {
  double has_script = 0;
  double has_noscript = 0;
  double has_internal_script = 0;
  double has_external_script = 0;
  double has_embedded_script = 0;
  double script_count = 0;
  double noscript_count = 0;
  double internal_script_count = 0;
  double external_script_count = 0;
  double embedded_script_count = 0;
  double has_internal_link = 0;
  double has_external_link = 0;
  double has_image = 0;
  double has_iframe = 0;
  double image_count = 0;
  double internal_link_count = 0;
  double external_link_count = 0;
  double iframe_count = 0;
  double whitespace_percent = 0;

  std::array<double, kHtmlFeatureCount> values() const {
    return {has_script,          has_noscript,          has_internal_script,   has_external_script,
            has_embedded_script, script_count,          noscript_count,        internal_script_count,
            external_script_count, embedded_script_count, has_internal_link,   has_external_link,
            has_image,           has_iframe,            image_count,           internal_link_count,
            external_link_count, iframe_count,          whitespace_percent};
  }
};

using FeatureVector = std::array<double, kFeatureCount>;

inline FeatureVector to_feature_vector(const UrlFeatures& u, const HtmlFeatures& h) {
  FeatureVector v{};
  const auto a = u.values();
  const auto b = h.values();
  std::copy(a.begin(), a.end(), v.begin());
  std::copy(b.begin(), b.end(), v.begin() + kUrlFeatureCount);
  return v;
}

// ---------------------------------------------------------------------------
// URL features

struct MisleadingWords {
  std::vector<std::string> words;  // lower-case, non-empty

  static MisleadingWords defaults() {
    return {{"login", "signin", "bank", "account", "admin", "secure", "verify", "update", "confirm", "paypal"}};
  }

  /// One word per line; blank lines and lines starting with '#' are ignored.
  static MisleadingWords load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open word list: " + path.string());
    MisleadingWords out;
    std::string line;
    while (std::getline(in, line)) {
      const auto w = trim(line);
      if (w.empty() || w.front() == '#') continue;
      out.words.push_back(to_lower(w));
    }
    if (out.words.empty()) throw DataError("word list is empty: " + path.string());
    return out;
  }
};

/// Host part of a normalized URL: text before the first '/', '?' or '#', without
/// userinfo or port, lower-cased.
inline std::string url_hostname(std::string_view url) {
  std::string_view h = url.substr(0, std::min(url.size(), url.find_first_of("/?#")));
  if (const auto at = h.rfind('@'); at != std::string_view::npos) h.remove_prefix(at + 1);
  if (const auto colon = h.find(':'); colon != std::string_view::npos) h = h.substr(0, colon);
  return to_lower(h);
}

namespace detail {

inline std::vector<std::string_view> split_labels(std::string_view host) {
  std::vector<std::string_view> labels;
  std::size_t start = 0;
  while (true) {
    const auto dot = host.find('.', start);
    labels.push_back(host.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return labels;
}

/// Non-overlapping occurrences of `needle` in `hay` (both already lower-cased).
inline std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t count = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++count;
  return count;
}

inline std::size_t count_chars(std::string_view s, std::string_view set) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [&](char c) { return set.find(c) != std::string_view::npos; }));
}

inline std::size_t count_digits(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }));
}

}  // namespace detail

inline UrlFeatures extract_url_features(std::string_view normalized_url,
                                        const MisleadingWords& words = MisleadingWords::defaults()) {
  if (normalized_url.empty()) throw DataError("cannot extract features from an empty URL");
  UrlFeatures f;
  const std::string lower = to_lower(normalized_url);
  for (const auto& w : words.words) f.misleading_word_count += static_cast<double>(detail::count_occurrences(lower, w));
  f.slash_question_count = static_cast<double>(detail::count_chars(normalized_url, "/?"));
  f.digit_count = static_cast<double>(detail::count_digits(normalized_url));
  f.dot_count = static_cast<double>(detail::count_chars(normalized_url, "."));
  f.hyphen_underscore_count = static_cast<double>(detail::count_chars(normalized_url, "-_"));
  f.equals_ampersand_count = static_cast<double>(detail::count_chars(normalized_url, "=&"));
  f.semicolon_count = static_cast<double>(detail::count_chars(normalized_url, ";"));

  const std::string host = url_hostname(normalized_url);
  const auto labels = detail::split_labels(host);
  // Registered domain = last two labels; everything before is a subdomain.
  const std::size_t subdomains = labels.size() > 2 ? labels.size() - 2 : 0;
  f.subdomain_count = static_cast<double>(subdomains);
  f.has_subdomain = subdomains > 0 ? 1.0 : 0.0;
  for (std::size_t i = 0; i < subdomains; ++i) f.two_letter_subdomain_count += labels[i].size() == 2 ? 1.0 : 0.0;
  if (const std::size_t host_chars = utf8::decode(host).size(); host_chars > 0)
    f.hostname_digit_percent =
        100.0 * static_cast<double>(detail::count_digits(host)) / static_cast<double>(host_chars);
  f.url_length = static_cast<double>(utf8::decode(normalized_url).size());
  return f;
}

// ---------------------------------------------------------------------------
// HTML features

namespace detail {

/// Host compared for internal/external decisions: lower-case, no leading "www.".
inline std::string comparable_host(std::string_view host) {
  std::string h = to_lower(host);
  while (h.rfind("www.", 0) == 0) h.erase(0, 4);
  return h;
}

enum class RefKind { internal, external };

/// Relative references are internal; http(s) and protocol-relative references are
/// internal iff their host matches the page host; any other scheme is external.
inline RefKind classify_reference(std::string_view ref, std::string_view page_host) {
  const std::string_view r = trim(ref);
  std::string_view rest;
  if (istarts_with(r, "http://")) {
    rest = r.substr(7);
  } else if (istarts_with(r, "https://")) {
    rest = r.substr(8);
  } else if (r.starts_with("//")) {
    rest = r.substr(2);
  } else {
    // A scheme is letters/digits/+/-/. followed by ':' before any '/', '?' or '#'.
    const auto colon = r.find(':');
    const auto delim = r.find_first_of("/?#");
    if (colon != std::string_view::npos && colon > 0 && (delim == std::string_view::npos || colon < delim)) {
      const auto scheme = r.substr(0, colon);
      const bool valid = scan::is_alpha(scheme[0]) && std::all_of(scheme.begin(), scheme.end(), [](char c) {
                           return scan::is_alpha(c) || (c >= '0' && c <= '9') || c == '+' || c == '-' || c == '.';
                         });
      if (valid) return RefKind::external;
    }
    return RefKind::internal;
  }
  return comparable_host(url_hostname(rest)) == comparable_host(page_host) ? RefKind::internal : RefKind::external;
}

}  // namespace detail

inline HtmlFeatures extract_html_features(std::string_view html, std::string_view page_host) {
  HtmlFeatures f;
  for (const auto& ev : scan_tags(html)) {
    for (const auto& [k, v] : ev.attributes)
      if (k.size() > 2 && k[0] == 'o' && k[1] == 'n') f.embedded_script_count += 1;
    if (ev.name == "script") {
      f.script_count += 1;
      if (const auto* src = ev.attr("src")) {
        if (detail::classify_reference(*src, page_host) == detail::RefKind::external)
          f.external_script_count += 1;
        else
          f.internal_script_count += 1;
      } else if (!trim(ev.body).empty()) {
        f.internal_script_count += 1;
      }
    } else if (ev.name == "noscript") {
      f.noscript_count += 1;
    } else if (ev.name == "a") {
      if (const auto* href = ev.attr("href")) {
        if (detail::classify_reference(*href, page_host) == detail::RefKind::external)
          f.external_link_count += 1;
        else
          f.internal_link_count += 1;
      }
    } else if (ev.name == "img") {
      f.image_count += 1;
    } else if (ev.name == "iframe") {
      f.iframe_count += 1;
    }
  }
  auto flag = [](double count) { return count > 0 ? 1.0 : 0.0; };
  f.has_script = flag(f.script_count);
  f.has_noscript = flag(f.noscript_count);
  f.has_internal_script = flag(f.internal_script_count);
  f.has_external_script = flag(f.external_script_count);
  f.has_embedded_script = flag(f.embedded_script_count);
  f.has_internal_link = flag(f.internal_link_count);
  f.has_external_link = flag(f.external_link_count);
  f.has_image = flag(f.image_count);
  f.has_iframe = flag(f.iframe_count);

  const auto text = utf8::decode(html);
  if (!text.empty()) {
    const auto spaces = std::count_if(text.begin(), text.end(), is_ascii_space);
    f.whitespace_percent = 100.0 * static_cast<double>(spaces) / static_cast<double>(text.size());
  }
  return f;
}

inline FeatureVector extract_features(const WebPageSample& s, const MisleadingWords& words = MisleadingWords::defaults()) {
  return to_feature_vector(extract_url_features(s.normalized_url, words),
                           extract_html_features(s.html, url_hostname(s.normalized_url)));
}

struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<FeatureVector> rows;
  std::vector<int> labels;
};

inline FeatureTable extract_feature_table(const std::vector<WebPageSample>& samples,
                                          const MisleadingWords& words = MisleadingWords::defaults()) {
  FeatureTable t;
  for (const auto& s : samples) {
    t.ids.push_back(s.id);
    t.rows.push_back(extract_features(s, words));
    t.labels.push_back(label_value(s.label));
  }
  return t;
}

/// CSV: id,label, then the 31 feature columns in canonical order.
inline void write_feature_csv(std::ostream& out, const FeatureTable& t) {
  out << "id,label";
  for (auto name : kFeatureNames) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    out << csv_field(t.ids[i]) << ',' << (t.labels[i] ? "phishing" : "legitimate");
    for (double v : t.rows[i]) out << ',' << format_number(v);
    out << '\n';
  }
}

inline LabeledTable to_labeled_table(const FeatureTable& t) {
  LabeledTable out;
  out.columns.assign(kFeatureNames.begin(), kFeatureNames.end());
  out.ids = t.ids;
  out.labels = t.labels;
  for (const auto& r : t.rows) out.rows.emplace_back(r.begin(), r.end());
  return out;
}

}  // namespace webphish
