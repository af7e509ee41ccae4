#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "webphish/common.hpp"
#include "webphish/corpus.hpp"

namespace webphish {

/// Which family of phishing markers to plant. `shifted` uses a disjoint marker set,
/// standing in for a later, differently-built phishing campaign.
enum class SyntheticProfile { primary, shifted };

struct SyntheticConfig {
  std::size_t count = 1100;
  std::size_t legit_per_phish = 10;
  double url_signal_rate = 1.0;   // probability a phishing URL carries markers
  double html_signal_rate = 1.0;  // probability a phishing page carries markers
  SyntheticProfile profile = SyntheticProfile::primary;
  std::uint64_t seed = 1;
};

namespace detail::synth {

inline constexpr std::array<std::string_view, 40> kWords = {
    "river", "maple",  "north",  "studio", "garden", "harbor", "pixel",  "summit", "cedar",  "orbit",
    "lumen", "falcon", "meadow", "copper", "atlas",  "willow", "ember",  "quartz", "delta",  "nimbus",
    "canyon", "birch", "coral",  "prairie", "aurora", "timber", "glacier", "saffron", "marble", "lantern",
    "violet", "tundra", "beacon", "cobalt", "juniper", "mosaic", "pebble", "sierra", "thistle", "zephyr"};

inline constexpr std::array<std::string_view, 24> kText = {
    "the",   "our",   "news",    "team",   "local",   "weather", "recipes", "travel",
    "guide", "today", "events",  "review", "history", "science", "music",   "photos",
    "story", "city",  "markets", "health", "library", "season",  "report",  "notes"};

inline constexpr std::array<std::string_view, 5> kTlds = {".com", ".org", ".net", ".io", ".co.uk"};

inline constexpr std::array<std::string_view, 8> kPrimaryWords = {"login", "secure", "account", "verify",
                                                                   "update", "signin", "bank",   "confirm"};
inline constexpr std::array<std::string_view, 6> kShiftedWords = {"wallet", "unlock", "recovery",
                                                                   "billing", "support", "refund"};
inline constexpr std::array<std::string_view, 4> kBadTlds = {".ru", ".tk", ".xyz", ".top"};

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& a, Rng& rng) {
  return a[uniform_index(rng, N)];
}

inline std::string number(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::to_string(lo + uniform_index(rng, hi - lo + 1));
}

inline std::string scheme(Rng& rng) {
  switch (uniform_index(rng, 4)) {
    case 0: return "http://";
    case 1: return "https://";
    case 2: return "https://www.";
    default: return "http://www.";
  }
}

inline std::string benign_url(Rng& rng) {
  std::string u = scheme(rng) + std::string(pick(kWords, rng));
  if (uniform01(rng) < 0.4) u += pick(kWords, rng);
  u += pick(kTlds, rng);
  switch (uniform_index(rng, 4)) {
    case 0: break;
    case 1: u += "/" + std::string(pick(kText, rng)); break;
    case 2: u += "/" + std::string(pick(kText, rng)) + "/" + std::string(pick(kWords, rng)) + "-" + number(rng, 1, 99); break;
    default: u += "/" + std::string(pick(kText, rng)) + "?page=" + number(rng, 1, 20); break;
  }
  return u;
}

inline std::string phishing_url(SyntheticProfile profile, Rng& rng) {
  const std::string brand(pick(kWords, rng));
  if (profile == SyntheticProfile::primary) {
    std::string u = scheme(rng) + std::string(pick(kPrimaryWords, rng)) + "-" + std::string(pick(kPrimaryWords, rng)) + "." +
                    brand + "-" + std::string(pick(kPrimaryWords, rng)) + std::string(pick(kBadTlds, rng)) + "/" +
                    std::string(pick(kPrimaryWords, rng)) + "/index.php?session=" + number(rng, 100000, 999999);
    return u;
  }
  return "http://" + number(rng, 11, 223) + "." + number(rng, 0, 255) + "." + number(rng, 0, 255) + "." +
         number(rng, 1, 254) + "/~" + brand + "/" + std::string(pick(kShiftedWords, rng)) + "_" +
         std::string(pick(kShiftedWords, rng)) + "/step" + number(rng, 1, 9) + ".html";
}

inline std::string sentence(Rng& rng, std::size_t words) {
  std::string s;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) s += ' ';
    s += pick(kText, rng);
  }
  return s;
}

inline std::string benign_body(const std::string& brand, Rng& rng) {
  std::string b = "<body>\n<nav>";
  const std::size_t links = 2 + uniform_index(rng, 5);
  for (std::size_t i = 0; i < links; ++i) {
    const std::string page(pick(kText, rng));
    b += "<a href=\"/" + page + "\">" + page + "</a> ";
  }
  b += "</nav>\n<main>\n<h1>" + brand + " " + std::string(pick(kText, rng)) + "</h1>\n";
  const std::size_t paras = 2 + uniform_index(rng, 8);
  for (std::size_t i = 0; i < paras; ++i) {
    b += "<p>" + sentence(rng, 12 + uniform_index(rng, 40)) + "</p>\n";
    if (uniform01(rng) < 0.35) b += "<img src=\"/images/" + std::string(pick(kWords, rng)) + ".jpg\" alt=\"photo\">\n";
  }
  b += "</main>\n<footer><a href=\"/contact\">contact</a> &copy; " + brand + "</footer>\n</body>\n</html>\n";
  return b;
}

inline std::string benign_head(const std::string& brand, Rng& rng) {
  std::string h = "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>" + brand + " | " +
                  std::string(pick(kText, rng)) + "</title>\n";
  h += "<link rel=\"stylesheet\" href=\"/static/" + std::string(pick(kWords, rng)) + ".css\">\n";
  if (uniform01(rng) < 0.7) h += "<script src=\"/static/app" + number(rng, 1, 9) + ".js\"></script>\n";
  if (uniform01(rng) < 0.3) h += "<script>window.dataLayer = window.dataLayer || [];</script>\n";
  h += "</head>\n";
  return h;
}

inline std::string phishing_markers(SyntheticProfile profile, Rng& rng) {
  const std::string host = std::string(pick(kWords, rng)) + number(rng, 10, 99) + std::string(pick(kBadTlds, rng));
  if (profile == SyntheticProfile::primary) {
    return "<script src=\"http://cdn." + host + "/kit/" + number(rng, 1, 999) + ".js\"></script>\n"
           "<iframe src=\"http://frame." + host + "/p\" width=\"0\" height=\"0\" style=\"display:none\"></iframe>\n";
  }
  return "<meta http-equiv=\"refresh\" content=\"30;url=http://" + host + "/next\">\n"
         "<embed src=\"http://media." + host + "/x.swf\" type=\"application/x-shockwave-flash\">\n"
         "<div onmouseover=\"document.location='http://" + host + "/c'\"></div>\n";
}

}  // namespace detail::synth

/// Labeled synthetic pages. Legitimate pages come from benign templates; phishing pages
/// plant credential vocabulary in the URL and foreign-hosted script/iframe (or, for the
/// shifted profile, refresh/embed/handler) markers near the top of the HTML. The mix
/// is shuffled, ids are unique, and every value derives from `seed`.
inline std::vector<WebPageSample> generate_synthetic(const SyntheticConfig& cfg) {
  using namespace detail::synth;
  if (cfg.count < 2) throw ConfigError("synthetic corpus needs at least 2 samples");
  Rng rng(cfg.seed);
  const std::size_t phish = std::max<std::size_t>(1, (cfg.count + cfg.legit_per_phish / 2) / (cfg.legit_per_phish + 1));
  const std::size_t legit = cfg.count - phish;
  const char* tag = cfg.profile == SyntheticProfile::primary ? "" : "s";

  std::vector<WebPageSample> out;
  out.reserve(cfg.count);
  for (std::size_t i = 0; i < legit + phish; ++i) {
    const bool is_phish = i >= legit;
    const std::string brand(pick(kWords, rng));
    WebPageSample s;
    s.label = is_phish ? Label::phishing : Label::legitimate;
    s.id = std::string(is_phish ? "phish" : "legit") + tag + "-" + std::to_string(is_phish ? i - legit : i);
    const bool url_signal = is_phish && uniform01(rng) < cfg.url_signal_rate;
    const bool html_signal = is_phish && uniform01(rng) < cfg.html_signal_rate;
    s.raw_url = url_signal ? phishing_url(cfg.profile, rng) : benign_url(rng);
    std::string head = benign_head(brand, rng);
    if (html_signal) head.insert(head.find("</title>\n") + 9, phishing_markers(cfg.profile, rng));
    std::string body = benign_body(brand, rng);
    if (html_signal && cfg.profile == SyntheticProfile::primary)
      body.insert(body.find("<main>\n") + 7,
                  "<form action=\"http://collect." + brand + number(rng, 10, 99) +
                      ".xyz/post.php\" method=\"post\"><input type=\"password\" name=\"pass\"></form>\n");
    s.html = head + body;
    s.normalized_url = normalize_url(s.raw_url);
    out.push_back(std::move(s));
  }
  shuffle(out, rng);
  return out;
}

}  // namespace webphish
