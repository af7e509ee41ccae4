#pragma once

#include <netdb.h>
#include <sys/socket.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "webphish/common.hpp"
#include "webphish/corpus.hpp"

namespace webphish {

enum class FetchError {
  invalid_url,
  dns_failure,
  connect_timeout,
  connection_failed,
  read_timeout,
  too_many_redirects,
  http_error,
  non_html_content,
  body_too_large,
};

inline constexpr std::array<FetchError, 9> kFetchErrors = {
    FetchError::invalid_url,     FetchError::dns_failure,        FetchError::connect_timeout,
    FetchError::connection_failed, FetchError::read_timeout,     FetchError::too_many_redirects,
    FetchError::http_error,      FetchError::non_html_content,   FetchError::body_too_large};

inline std::string_view fetch_error_name(FetchError e) {
  switch (e) {
    case FetchError::invalid_url: return "invalid_url";
    case FetchError::dns_failure: return "dns_failure";
    case FetchError::connect_timeout: return "connect_timeout";
    case FetchError::connection_failed: return "connection_failed";
    case FetchError::read_timeout: return "read_timeout";
    case FetchError::too_many_redirects: return "too_many_redirects";
    case FetchError::http_error: return "http_error";
    case FetchError::non_html_content: return "non_html_content";
    case FetchError::body_too_large: return "body_too_large";
  }
  return "unknown";
}

inline constexpr std::size_t kMaxBodyBytes = 5u * 1024u * 1024u;

struct FetchJob {
  std::string url;
  double timeout_seconds = 20.0;
  int max_redirects = 10;
  std::string user_agent = "webphish-fetcher/1.0";
};

/// Exactly one of `html` and `error` is set. `final_url` is set once any response
/// arrived; `http_status` is the last status seen (0 if none).
struct FetchResult {
  std::string requested_url;
  std::string final_url;
  int http_status = 0;
  std::optional<std::string> html;
  std::optional<FetchError> error;
  std::string fetched_at;  // ISO-8601 UTC
  double duration_ms = 0.0;
};

struct ParsedUrl {
  std::string scheme;  // http or https
  std::string host;    // lowercased, brackets kept for IPv6 literals
  int port = 0;
  std::string target;  // path and query, at least "/"

  std::string origin() const {
    const bool default_port = (scheme == "http" && port == 80) || (scheme == "https" && port == 443);
    return scheme + "://" + host + (default_port ? "" : ":" + std::to_string(port));
  }
  std::string str() const { return origin() + target; }
};

/// Adds https:// to scheme-less input.
inline std::string with_default_scheme(std::string_view url) {
  const auto t = trim(url);
  if (t.find("://") == std::string_view::npos) return "https://" + std::string(t);
  return std::string(t);
}

inline std::optional<ParsedUrl> parse_http_url(std::string_view url) {
  ParsedUrl u;
  const auto sep = url.find("://");
  if (sep == std::string_view::npos) return std::nullopt;
  u.scheme = to_lower(url.substr(0, sep));
  if (u.scheme != "http" && u.scheme != "https") return std::nullopt;
  auto rest = url.substr(sep + 3);
  const auto auth_end = rest.find_first_of("/?#");
  auto authority = rest.substr(0, auth_end);
  auto tail = auth_end == std::string_view::npos ? std::string_view{} : rest.substr(auth_end);
  if (auto at = authority.rfind('@'); at != std::string_view::npos) authority.remove_prefix(at + 1);
  u.port = u.scheme == "https" ? 443 : 80;
  std::string_view host = authority;
  std::string_view port;
  if (!authority.empty() && authority.front() == '[') {
    const auto close = authority.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    host = authority.substr(0, close + 1);
    if (close + 1 < authority.size()) {
      if (authority[close + 1] != ':') return std::nullopt;
      port = authority.substr(close + 2);
    }
  } else if (auto colon = authority.find(':'); colon != std::string_view::npos) {
    host = authority.substr(0, colon);
    port = authority.substr(colon + 1);
  }
  if (host.empty()) return std::nullopt;
  if (!port.empty()) {
    int p = 0;
    const auto r = std::from_chars(port.data(), port.data() + port.size(), p);
    if (r.ec != std::errc{} || r.ptr != port.data() + port.size() || p <= 0 || p > 65535) return std::nullopt;
    u.port = p;
  }
  for (char c : host)
    if (static_cast<unsigned char>(c) <= 0x20) return std::nullopt;
  u.host = to_lower(host);
  if (auto hash = tail.find('#'); hash != std::string_view::npos) tail = tail.substr(0, hash);
  u.target = tail.empty() || tail.front() != '/' ? "/" + std::string(tail) : std::string(tail);
  return u;
}

/// Resolves a Location header against the URL that produced it.
inline std::string resolve_location(const ParsedUrl& base, std::string_view location) {
  location = trim(location);
  if (location.find("://") != std::string_view::npos) return std::string(location);
  if (location.starts_with("//")) return base.scheme + ":" + std::string(location);
  if (location.starts_with("/")) return base.origin() + std::string(location);
  std::string path = base.target.substr(0, base.target.find('?'));
  if (location.starts_with("?")) return base.origin() + path + std::string(location);
  path = path.substr(0, path.rfind('/') + 1);
  return base.origin() + path + std::string(location);
}

inline bool is_html_content_type(std::string_view content_type) {
  // A missing header is accepted: many small servers omit it for HTML.
  if (trim(content_type).empty()) return true;
  const auto mime = to_lower(trim(content_type.substr(0, content_type.find(';'))));
  return mime == "text/html" || mime == "application/xhtml+xml";
}

namespace detail {

inline std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline bool resolves(const std::string& host) {
  std::string h = host;
  if (h.size() > 2 && h.front() == '[') h = h.substr(1, h.size() - 2);
  addrinfo hints{};
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const int rc = getaddrinfo(h.c_str(), nullptr, &hints, &res);
  if (res) freeaddrinfo(res);
  return rc == 0;
}

}  // namespace detail

/// Called before every HTTP request with the target host; may block.
using RequestGate = std::function<void(const std::string& host)>;

/// Fetches one URL, following redirects by hand so every hop is visible. Never
/// throws: every failure becomes an error reason on the result.
inline FetchResult fetch(const FetchJob& job, const RequestGate& gate = {}) {
  const auto start = std::chrono::steady_clock::now();
  FetchResult r;
  r.requested_url = job.url;
  r.fetched_at = detail::utc_timestamp(std::chrono::system_clock::now());
  auto finish = [&](std::optional<FetchError> err) {
    r.error = err;
    if (err) r.html.reset();
    r.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
  };

  std::string current = with_default_scheme(job.url);
  const auto timeout = std::chrono::microseconds(static_cast<long long>(job.timeout_seconds * 1e6));
  for (int hop = 0;; ++hop) {
    const auto url = parse_http_url(current);
    if (!url) return finish(FetchError::invalid_url);
    if (!detail::resolves(url->host)) return finish(FetchError::dns_failure);
    if (gate) gate(url->host);

    int status = 0;
    std::string location, content_type;
    bool too_large = false;
    std::string body;
    const auto t0 = std::chrono::steady_clock::now();
    httplib::Result res{nullptr, httplib::Error::Unknown};
    try {
      httplib::Client cli(url->origin());
      cli.set_connection_timeout(timeout);
      cli.set_read_timeout(timeout);
      cli.set_write_timeout(timeout);
      cli.set_follow_location(false);
      cli.set_keep_alive(false);
      res = cli.Get(
          url->target, httplib::Headers{{"User-Agent", job.user_agent}, {"Accept", "text/html,*/*;q=0.5"}},
          [&](const httplib::Response& head) {
            status = head.status;
            location = head.get_header_value("Location");
            content_type = head.get_header_value("Content-Type");
            if (status < 200 || status >= 300 || !is_html_content_type(content_type)) return false;
            const auto len = head.get_header_value("Content-Length");
            if (!len.empty() && std::strtoull(len.c_str(), nullptr, 10) > kMaxBodyBytes) {
              too_large = true;
              return false;
            }
            return true;
          },
          [&](const char* data, std::size_t n) {
            if (body.size() + n > kMaxBodyBytes) {
              too_large = true;
              return false;
            }
            body.append(data, n);
            return true;
          });
    } catch (...) {
      return finish(FetchError::connection_failed);
    }

    if (status != 0) {
      r.http_status = status;
      r.final_url = url->str();
    }
    if (status == 0) {
      const auto elapsed = std::chrono::steady_clock::now() - t0;
      switch (res.error()) {
        case httplib::Error::ConnectionTimeout: return finish(FetchError::connect_timeout);
        case httplib::Error::Read:
          return finish(elapsed >= timeout * 0.9 ? FetchError::read_timeout : FetchError::connection_failed);
        default: return finish(FetchError::connection_failed);
      }
    }
    if (status >= 300 && status < 400 && !location.empty()) {
      if (hop >= job.max_redirects) return finish(FetchError::too_many_redirects);
      current = resolve_location(*url, location);
      continue;
    }
    if (status < 200 || status >= 300) return finish(FetchError::http_error);
    if (!is_html_content_type(content_type)) return finish(FetchError::non_html_content);
    if (too_large) return finish(FetchError::body_too_large);
    if (res.error() != httplib::Error::Success) {
      const auto elapsed = std::chrono::steady_clock::now() - t0;
      return finish(elapsed >= timeout * 0.9 ? FetchError::read_timeout : FetchError::connection_failed);
    }
    r.html = utf8::sanitize(body);
    return finish(std::nullopt);
  }
}

/// Global request spacing (1/rate seconds, no bursts) combined with a minimum
/// interval between requests to the same host. Slots are handed out in call order.
class RateLimiter {
 public:
  RateLimiter(double requests_per_second, double per_host_interval_seconds)
      : spacing_(requests_per_second > 0 ? std::chrono::duration<double>(1.0 / requests_per_second)
                                         : std::chrono::duration<double>(0)),
        host_spacing_(std::max(0.0, per_host_interval_seconds)) {}

  void acquire(const std::string& host) {
    Clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      slot = std::max(Clock::now(), next_);
      if (auto it = host_next_.find(host); it != host_next_.end()) slot = std::max(slot, it->second);
      next_ = slot + std::chrono::duration_cast<Clock::duration>(spacing_);
      host_next_[host] = slot + std::chrono::duration_cast<Clock::duration>(host_spacing_);
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  using Clock = std::chrono::steady_clock;
  std::chrono::duration<double> spacing_;
  std::chrono::duration<double> host_spacing_;
  std::mutex mu_;
  Clock::time_point next_{};
  std::map<std::string, Clock::time_point> host_next_;
};

struct CorpusOptions {
  std::size_t concurrency = 4;
  double rate_limit = 1.0;             // requests per second across all hosts; <= 0 disables
  double per_host_interval = 1.0;      // seconds between requests to one host
  double timeout_seconds = 20.0;
  int max_redirects = 10;
  std::string user_agent = "webphish-fetcher/1.0";
};

struct CorpusReport {
  std::vector<FetchResult> results;  // input order
  std::vector<std::string> new_ids;  // ids of manifest records appended by this run
  std::map<FetchError, std::size_t> error_counts;
  double duration_ms = 0.0;

  std::size_t succeeded() const { return new_ids.size(); }
  std::size_t failed() const { return results.size() - new_ids.size(); }

  /// Everything except timestamps and durations, so it can be compared exactly.
  nlohmann::ordered_json summary_json() const {
    nlohmann::ordered_json j;
    j["total"] = results.size();
    j["succeeded"] = succeeded();
    j["failed"] = failed();
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    for (auto e : kFetchErrors) {
      const auto it = error_counts.find(e);
      counts[std::string(fetch_error_name(e))] = it == error_counts.end() ? 0 : it->second;
    }
    j["errors"] = counts;
    nlohmann::ordered_json failures = nlohmann::ordered_json::array();
    for (const auto& r : results)
      if (r.error)
        failures.push_back({{"url", r.requested_url},
                            {"error", fetch_error_name(*r.error)},
                            {"http_status", r.http_status}});
    j["failures"] = failures;
    return j;
  }

  nlohmann::ordered_json to_json() const {
    auto j = summary_json();
    nlohmann::ordered_json per_url = nlohmann::ordered_json::array();
    for (const auto& r : results)
      per_url.push_back({{"url", r.requested_url},
                         {"final_url", r.final_url},
                         {"http_status", r.http_status},
                         {"error", r.error ? nlohmann::ordered_json(fetch_error_name(*r.error)) : nullptr},
                         {"fetched_at", r.fetched_at},
                         {"duration_ms", r.duration_ms}});
    j["results"] = per_url;
    j["duration_ms"] = duration_ms;
    return j;
  }
};

/// One URL per line; blank lines and lines starting with '#' are skipped.
inline std::vector<std::string> read_url_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open URL list: " + path.string());
  std::vector<std::string> urls;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    urls.emplace_back(t);
  }
  if (urls.empty()) throw DataError("URL list is empty: " + path.string());
  return urls;
}

namespace detail {

/// Highest numeric suffix among existing "<label>_NNNNNN" ids in the manifest.
inline std::size_t last_id_number(const std::filesystem::path& manifest, std::string_view label) {
  std::size_t last = 0;
  std::ifstream in(manifest);
  std::string line;
  const std::string prefix = std::string(label) + "_";
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto rec = nlohmann::json::parse(line, nullptr, false);
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string()) continue;
    const auto id = rec["id"].get<std::string>();
    if (!id.starts_with(prefix)) continue;
    std::size_t n = 0;
    const auto digits = std::string_view(id).substr(prefix.size());
    const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), n);
    if (res.ec == std::errc{} && res.ptr == digits.data() + digits.size()) last = std::max(last, n);
  }
  return last;
}

}  // namespace detail

/// Fetches every URL with bounded parallelism and writes, under `out_dir`:
/// manifest.jsonl (appended, successes only, input order), html/<id>.html and
/// fetch_report.json. Existing manifest records are left untouched and new ids
/// continue after the highest existing one for the label.
inline CorpusReport build_corpus(const std::vector<std::string>& urls, Label label,
                                 const std::filesystem::path& out_dir, const CorpusOptions& opt = {}) {
  if (urls.empty()) throw DataError("URL list is empty");
  if (opt.concurrency == 0) throw ConfigError("concurrency must be at least 1");
  if (!(opt.timeout_seconds > 0)) throw ConfigError("timeout must be positive");
  if (opt.max_redirects < 0) throw ConfigError("max_redirects must be non-negative");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "html", ec);
  const auto manifest_path = out_dir / "manifest.jsonl";
  {
    std::ofstream probe(manifest_path, std::ios::app);
    if (ec || !probe) throw DataError("output directory is not writable: " + out_dir.string());
  }

  const auto start = std::chrono::steady_clock::now();
  CorpusReport report;
  report.results.resize(urls.size());
  RateLimiter limiter(opt.rate_limit, opt.per_host_interval);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < urls.size();) {
      FetchJob job{urls[i], opt.timeout_seconds, opt.max_redirects, opt.user_agent};
      report.results[i] = fetch(job, [&](const std::string& host) { limiter.acquire(host); });
    }
  };
  std::vector<std::thread> pool;
  const std::size_t threads = std::min(opt.concurrency, urls.size());
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::size_t number = detail::last_id_number(manifest_path, label_name(label));
  std::ofstream manifest(manifest_path, std::ios::app | std::ios::binary);
  for (const auto& r : report.results) {
    if (r.error) {
      ++report.error_counts[*r.error];
      continue;
    }
    char id[64];
    std::snprintf(id, sizeof id, "%s_%06zu", std::string(label_name(label)).c_str(), ++number);
    const std::string rel = "html/" + std::string(id) + ".html";
    {
      std::ofstream html(out_dir / rel, std::ios::binary);
      html << *r.html;
      if (!html) throw DataError("cannot write " + (out_dir / rel).string());
    }
    nlohmann::ordered_json rec;
    rec["id"] = id;
    rec["url"] = r.requested_url;
    rec["final_url"] = r.final_url;
    rec["label"] = label_name(label);
    rec["html_path"] = rel;
    rec["http_status"] = r.http_status;
    manifest << rec.dump() << '\n';
    report.new_ids.emplace_back(id);
  }
  if (!manifest) throw DataError("cannot append to " + manifest_path.string());
  report.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  std::ofstream(out_dir / "fetch_report.json") << report.to_json().dump(2) << '\n';
  return report;
}

}  // namespace webphish
