#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "webphish/common.hpp"

namespace webphish {

enum class Label : int { legitimate = 0, phishing = 1 };

inline std::string_view label_name(Label label) {
  return label == Label::phishing ? "phishing" : "legitimate";
}

inline Label parse_label(std::string_view text) {
  if (text == "phishing") return Label::phishing;
  if (text == "legitimate") return Label::legitimate;
  throw DataError("unknown label '" + std::string(text) + "' (expected legitimate|phishing)");
}

inline int label_value(Label label) { return static_cast<int>(label); }

struct Prediction {
  Label label = Label::legitimate;
  double score = 0.0;
};

/// Phishing iff score > threshold (a score equal to the threshold is legitimate).
inline Label decide(double score, double threshold = 0.5) {
  return score > threshold ? Label::phishing : Label::legitimate;
}

struct WebPageSample {
  std::string id;
  std::string raw_url;
  std::string normalized_url;
  std::string html;  // always valid UTF-8
  Label label = Label::legitimate;
};

/// Strips a leading "http://" or "https://" (any case), then a leading "www.".
/// Everything else is preserved verbatim.
inline std::string normalize_url(std::string_view raw_url) {
  std::string_view u = raw_url;
  // Strip to a fixed point: the result never starts with a scheme or "www.", which also
  // makes the function idempotent on inputs such as "http://www.https://x".
  for (bool changed = true; changed;) {
    changed = false;
    for (std::string_view prefix : {"http://", "https://", "www."}) {
      if (istarts_with(u, prefix)) {
        u.remove_prefix(prefix.size());
        changed = true;
      }
    }
  }
  return std::string(u);
}

struct SanitizationReport {
  std::size_t records_read = 0;
  std::size_t kept = 0;
  std::size_t dropped_empty_html = 0;
  std::size_t dropped_duplicate = 0;

  std::string to_text() const {
    std::ostringstream os;
    os << "records_read: " << records_read << "\n"
       << "kept: " << kept << "\n"
       << "dropped_empty_html: " << dropped_empty_html << "\n"
       << "dropped_duplicate: " << dropped_duplicate << "\n";
    return os.str();
  }

  SanitizationReport& operator+=(const SanitizationReport& other) {
    records_read += other.records_read;
    kept += other.kept;
    dropped_empty_html += other.dropped_empty_html;
    dropped_duplicate += other.dropped_duplicate;
    return *this;
  }
};

struct ManifestLoad {
  std::vector<WebPageSample> samples;
  SanitizationReport report;
};

namespace detail {

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Drops empty/whitespace-only pages and (normalized_url, html) duplicates, keeping
/// the first occurrence. Survivors keep their relative order.
inline ManifestLoad sanitize(std::vector<WebPageSample> samples) {
  ManifestLoad result;
  result.report.records_read = samples.size();
  std::unordered_map<std::string, std::vector<std::size_t>> seen;
  for (auto& s : samples) {
    if (trim(s.html).empty()) {
      ++result.report.dropped_empty_html;
      continue;
    }
    std::string key = s.normalized_url;
    key.push_back('\0');
    key += std::to_string(crc32(s.html));
    auto& bucket = seen[key];
    bool duplicate = false;
    for (std::size_t idx : bucket) {
      if (result.samples[idx].html == s.html) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) {
      ++result.report.dropped_duplicate;
      continue;
    }
    bucket.push_back(result.samples.size());
    result.samples.push_back(std::move(s));
  }
  result.report.kept = result.samples.size();
  return result;
}

/// Reads a JSON-Lines manifest. Each record carries id, url, label and either an
/// inline "html" string or an "html_path" relative to the manifest's directory.
/// Unknown fields are ignored.
inline ManifestLoad load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  const auto base = path.parent_path();

  std::vector<WebPageSample> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + "malformed JSON record: " + e.what());
    }
    if (!rec.is_object()) throw DataError(where + "record is not an object");
    auto get_string = [&](const char* key) -> std::string {
      auto it = rec.find(key);
      if (it == rec.end() || !it->is_string()) throw DataError(where + "missing string field '" + key + "'");
      return it->get<std::string>();
    };
    WebPageSample s;
    s.id = get_string("id");
    s.raw_url = get_string("url");
    if (s.raw_url.empty()) throw DataError(where + "empty url");
    try {
      s.label = parse_label(get_string("label"));
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (auto it = rec.find("html"); it != rec.end() && it->is_string()) {
      s.html = utf8::sanitize(it->get<std::string>());
    } else if (auto p = rec.find("html_path"); p != rec.end() && p->is_string()) {
      std::filesystem::path html_path = p->get<std::string>();
      if (html_path.is_relative()) html_path = base / html_path;
      if (!std::filesystem::exists(html_path))
        throw DataError(where + "referenced HTML file not found: " + html_path.string());
      s.html = utf8::sanitize(detail::read_file_bytes(html_path));
    } else {
      throw DataError(where + "record needs either 'html' or 'html_path'");
    }
    s.normalized_url = normalize_url(s.raw_url);
    raw.push_back(std::move(s));
  }
  return sanitize(std::move(raw));
}

/// Writes samples as a self-contained manifest with inline HTML.
inline void write_manifest(const std::vector<WebPageSample>& samples, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  for (const auto& s : samples) {
    nlohmann::ordered_json rec;
    rec["id"] = s.id;
    rec["url"] = s.raw_url;
    rec["html"] = s.html;
    rec["label"] = label_name(s.label);
    out << rec.dump() << '\n';
  }
}

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<WebPageSample> train;
  std::vector<WebPageSample> validation;
  std::vector<WebPageSample> test;
  std::uint64_t seed = 0;
};

/// Largest-remainder apportionment of `count` items over the given fractions.
/// Ties in the fractional parts go to the earlier bucket.
inline std::array<std::size_t, 3> apportion(std::size_t count, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> out{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = static_cast<double>(count) * fractions[i];
    out[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    rem[i] = quota - static_cast<double>(out[i]);
    assigned += out[i];
  }
  while (assigned > count) {
    // Only reachable through the epsilon above; take back from the smallest remainder.
    int j = 0;
    for (int i = 1; i < 3; ++i)
      if (out[i] > 0 && (out[j] == 0 || rem[i] < rem[j])) j = i;
    --out[j];
    --assigned;
  }
  std::array<bool, 3> bumped{};
  while (assigned < count) {
    int best = -1;
    for (int i = 0; i < 3; ++i) {
      if (bumped[i] || fractions[i] <= 0.0) continue;
      if (best < 0 || rem[i] > rem[best]) best = i;
    }
    if (best < 0) best = 0;
    ++out[best];
    bumped[best] = true;
    ++assigned;
  }
  return out;
}

/// Stratified, seeded split. Each class is shuffled independently and apportioned by
/// largest remainder; every nonzero split receives at least one member of every
/// non-empty class.
inline DatasetSplit split(const std::vector<WebPageSample>& samples, std::uint64_t seed,
                          const SplitRatios& ratios = {}) {
  if (samples.empty()) throw DataError("cannot split an empty sample list");
  const std::array<double, 3> fr{ratios.train, ratios.validation, ratios.test};
  for (double f : fr)
    if (!(f >= 0.0)) throw ConfigError("split ratios must be non-negative");
  if (std::abs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  const std::size_t nonzero = static_cast<std::size_t>((fr[0] > 0) + (fr[1] > 0) + (fr[2] > 0));

  Rng rng(seed);
  DatasetSplit out;
  out.seed = seed;
  std::array<std::vector<WebPageSample>*, 3> dest{&out.train, &out.validation, &out.test};

  for (Label cls : {Label::legitimate, Label::phishing}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].label == cls) idx.push_back(i);
    if (idx.empty()) continue;
    if (idx.size() < nonzero)
      throw DataError("class '" + std::string(label_name(cls)) + "' has " + std::to_string(idx.size()) +
                      " samples, fewer than the " + std::to_string(nonzero) + " nonzero splits");
    shuffle(idx, rng);
    auto counts = apportion(idx.size(), fr);
    for (int i = 0; i < 3; ++i) {
      if (fr[i] <= 0.0 || counts[i] > 0) continue;
      int donor = 0;
      for (int j = 1; j < 3; ++j)
        if (counts[j] > counts[donor]) donor = j;
      --counts[donor];
      ++counts[i];
    }
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < counts[i]; ++k) dest[i]->push_back(samples[idx[pos++]]);
  }
  for (auto* d : dest) shuffle(*d, rng);
  return out;
}

}  // namespace webphish
