#pragma once

#include <chrono>
#include <string>
#include <thread>

#include <httplib.h>

namespace webphish::testing {

/// Local HTTP server with one route per fetch outcome. Binds an ephemeral port on
/// 127.0.0.1 and stops on destruction.
class StubServer {
 public:
  StubServer() {
    server_.Get("/ok", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("<html><body>ok</body></html>", "text/html; charset=utf-8");
    });
    server_.Get("/landing", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("<html><a href=\"/x\">landing</a></html>", "text/html");
    });
    server_.Get("/missing", [](const httplib::Request&, httplib::Response& res) {
      res.status = 404;
      res.set_content("not found", "text/plain");
    });
    // /hop/N redirects to /hop/N-1; /hop/0 redirects to the landing page.
    server_.Get(R"(/hop/(\d+))", [](const httplib::Request& req, httplib::Response& res) {
      const int n = std::stoi(req.matches[1]);
      res.status = 302;
      res.set_header("Location", n == 0 ? std::string("/landing") : "/hop/" + std::to_string(n - 1));
    });
    server_.Get("/slow", [](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1500));
      res.set_content("<html>late</html>", "text/html");
    });
    server_.Get("/image", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(std::string("\x89PNG\r\n", 6), "image/png");
    });
    server_.Get("/huge", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(std::string(6u * 1024u * 1024u, 'a'), "text/html");
    });
    server_.Get("/latin1", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(std::string("<p>caf\xe9</p>"), "text/html");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace webphish::testing
