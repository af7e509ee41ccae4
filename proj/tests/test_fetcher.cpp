#include <chrono>
#include <fstream>

#include <gtest/gtest.h>

#include "stub_server.hpp"
#include "test_util.hpp"
#include "webphish/fetcher.hpp"

using namespace webphish;
using webphish::testing::StubServer;
using webphish::testing::TempDir;

namespace {

FetchJob job(const std::string& url, double timeout = 5.0) { return FetchJob{url, timeout, 10, "test-agent"}; }

CorpusOptions fast_options() {
  CorpusOptions o;
  o.rate_limit = 0;
  o.per_host_interval = 0;
  o.timeout_seconds = 0.5;
  o.concurrency = 4;
  return o;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(Url, ParseAndDefaults) {
  EXPECT_EQ(with_default_scheme("example.com/a"), "https://example.com/a");
  EXPECT_EQ(with_default_scheme("http://x.org"), "http://x.org");
  const auto u = parse_http_url("HTTP://User:pw@Example.COM:8080/a/b?q=1#frag");
  ASSERT_TRUE(u);
  EXPECT_EQ(u->scheme, "http");
  EXPECT_EQ(u->host, "example.com");
  EXPECT_EQ(u->port, 8080);
  EXPECT_EQ(u->target, "/a/b?q=1");
  EXPECT_EQ(u->str(), "http://example.com:8080/a/b?q=1");
  EXPECT_EQ(parse_http_url("https://x.org")->str(), "https://x.org/");
  EXPECT_EQ(parse_http_url("https://x.org?a")->target, "/?a");
  EXPECT_EQ(parse_http_url("http://[::1]:81/")->host, "[::1]");
  EXPECT_FALSE(parse_http_url("ftp://x.org/"));
  EXPECT_FALSE(parse_http_url("http:///path"));
  EXPECT_FALSE(parse_http_url("http://x.org:99999/"));
  EXPECT_FALSE(parse_http_url("http://x.org:abc/"));
}

TEST(Url, ResolveLocation) {
  const auto base = *parse_http_url("http://h.com:81/dir/page?x=1");
  EXPECT_EQ(resolve_location(base, "https://o.org/p"), "https://o.org/p");
  EXPECT_EQ(resolve_location(base, "//o.org/p"), "http://o.org/p");
  EXPECT_EQ(resolve_location(base, "/root"), "http://h.com:81/root");
  EXPECT_EQ(resolve_location(base, "next"), "http://h.com:81/dir/next");
  EXPECT_EQ(resolve_location(base, "?y=2"), "http://h.com:81/dir/page?y=2");
}

TEST(Url, HtmlContentTypes) {
  EXPECT_TRUE(is_html_content_type("text/html"));
  EXPECT_TRUE(is_html_content_type("Text/HTML; charset=utf-8"));
  EXPECT_TRUE(is_html_content_type("application/xhtml+xml"));
  EXPECT_TRUE(is_html_content_type(""));
  EXPECT_FALSE(is_html_content_type("image/png"));
  EXPECT_FALSE(is_html_content_type("text/plain"));
}

TEST(Fetch, OutcomesAgainstStubServer) {
  StubServer stub;

  auto ok = fetch(job(stub.url("/ok")));
  EXPECT_FALSE(ok.error);
  EXPECT_EQ(ok.http_status, 200);
  EXPECT_EQ(*ok.html, "<html><body>ok</body></html>");
  EXPECT_EQ(ok.final_url, stub.url("/ok"));
  EXPECT_EQ(ok.fetched_at.size(), 20u);

  auto redirected = fetch(job(stub.url("/hop/1")));  // two redirects
  EXPECT_FALSE(redirected.error);
  EXPECT_EQ(redirected.final_url, stub.url("/landing"));
  EXPECT_EQ(redirected.requested_url, stub.url("/hop/1"));

  auto missing = fetch(job(stub.url("/missing")));
  EXPECT_EQ(missing.error, FetchError::http_error);
  EXPECT_EQ(missing.http_status, 404);
  EXPECT_FALSE(missing.html);

  // /hop/9 takes exactly ten redirects; /hop/10 takes eleven.
  EXPECT_FALSE(fetch(job(stub.url("/hop/9"))).error);
  EXPECT_EQ(fetch(job(stub.url("/hop/10"))).error, FetchError::too_many_redirects);
  auto none = job(stub.url("/hop/0"));
  none.max_redirects = 0;
  EXPECT_EQ(fetch(none).error, FetchError::too_many_redirects);

  EXPECT_EQ(fetch(job(stub.url("/image"))).error, FetchError::non_html_content);
  EXPECT_EQ(fetch(job(stub.url("/huge"))).error, FetchError::body_too_large);
  EXPECT_EQ(fetch(job(stub.url("/slow"), 0.3)).error, FetchError::read_timeout);
  EXPECT_EQ(*fetch(job(stub.url("/latin1"))).html, "<p>caf\xEF\xBF\xBD</p>");
}

TEST(Fetch, NetworkFailuresAreRecorded) {
  EXPECT_EQ(fetch(job("ftp://example.com/")).error, FetchError::invalid_url);
  EXPECT_EQ(fetch(job("http://no-such-host.invalid/")).error, FetchError::dns_failure);
  // Port 1 on loopback refuses connections.
  const auto refused = fetch(job("http://127.0.0.1:1/"));
  EXPECT_EQ(refused.error, FetchError::connection_failed);
  EXPECT_EQ(refused.http_status, 0);
  EXPECT_TRUE(refused.final_url.empty());
}

TEST(BuildCorpus, ManifestInInputOrderWithReport) {
  StubServer stub;
  TempDir dir;
  const std::vector<std::string> urls{stub.url("/slow"), stub.url("/ok"),    stub.url("/missing"),
                                      stub.url("/hop/2"), stub.url("/image"), stub.url("/landing")};
  const auto report = build_corpus(urls, Label::phishing, dir.path, fast_options());

  const auto lines = read_lines(dir.path / "manifest.jsonl");
  ASSERT_EQ(lines.size(), 3u);
  const std::vector<std::string> expected{
      R"({"id":"phishing_000001","url":")" + stub.url("/ok") + R"(","final_url":")" + stub.url("/ok") +
          R"(","label":"phishing","html_path":"html/phishing_000001.html","http_status":200})",
      R"({"id":"phishing_000002","url":")" + stub.url("/hop/2") + R"(","final_url":")" + stub.url("/landing") +
          R"(","label":"phishing","html_path":"html/phishing_000002.html","http_status":200})",
      R"({"id":"phishing_000003","url":")" + stub.url("/landing") + R"(","final_url":")" +
          stub.url("/landing") + R"(","label":"phishing","html_path":"html/phishing_000003.html","http_status":200})"};
  EXPECT_EQ(lines, expected);

  const auto summary = report.summary_json();
  EXPECT_EQ(summary["total"], 6);
  EXPECT_EQ(summary["succeeded"], 3);
  EXPECT_EQ(summary["errors"]["read_timeout"], 1);
  EXPECT_EQ(summary["errors"]["http_error"], 1);
  EXPECT_EQ(summary["errors"]["non_html_content"], 1);
  EXPECT_EQ(summary["errors"]["dns_failure"], 0);
  ASSERT_EQ(summary["failures"].size(), 3u);
  EXPECT_EQ(summary["failures"][0]["url"], stub.url("/slow"));
  EXPECT_EQ(summary["failures"][1]["http_status"], 404);

  // The written manifest loads through the corpus reader.
  const auto loaded = load_manifest(dir.path / "manifest.jsonl");
  ASSERT_EQ(loaded.samples.size(), 3u);
  EXPECT_EQ(loaded.samples[0].html, "<html><body>ok</body></html>");
  EXPECT_EQ(loaded.samples[0].label, Label::phishing);
  EXPECT_TRUE(std::filesystem::exists(dir.path / "fetch_report.json"));
}

TEST(BuildCorpus, RerunAppendsFreshIds) {
  StubServer stub;
  TempDir dir;
  build_corpus({stub.url("/ok")}, Label::legitimate, dir.path, fast_options());
  const auto second = build_corpus({stub.url("/landing"), stub.url("/ok")}, Label::legitimate, dir.path,
                                   fast_options());
  EXPECT_EQ(second.new_ids, (std::vector<std::string>{"legitimate_000002", "legitimate_000003"}));
  const auto lines = read_lines(dir.path / "manifest.jsonl");
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_NE(lines[0].find("legitimate_000001"), std::string::npos);
}

TEST(BuildCorpus, RateLimitSpacesRequests) {
  StubServer stub;
  TempDir dir;
  auto opt = fast_options();
  opt.rate_limit = 2.0;
  const std::vector<std::string> urls(10, stub.url("/ok"));
  const auto t0 = std::chrono::steady_clock::now();
  build_corpus(urls, Label::legitimate, dir.path, opt);
  EXPECT_GE(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 4.5);
}

TEST(BuildCorpus, InputErrors) {
  TempDir dir;
  EXPECT_THROW(build_corpus({}, Label::phishing, dir.path), DataError);
  std::ofstream(dir.path / "file") << "x";
  EXPECT_THROW(build_corpus({"http://x/"}, Label::phishing, dir.path / "file" / "sub"), DataError);
  std::ofstream(dir.path / "list.txt") << "# comment\n\n  a.com  \nb.org/x\n";
  EXPECT_EQ(read_url_list(dir.path / "list.txt"), (std::vector<std::string>{"a.com", "b.org/x"}));
  std::ofstream(dir.path / "empty.txt") << "# nothing\n";
  EXPECT_THROW(read_url_list(dir.path / "empty.txt"), DataError);
}
