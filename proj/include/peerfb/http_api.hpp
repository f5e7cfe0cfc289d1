#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>

#include "peerfb/service.hpp"

namespace peerfb {

struct ApiRequest {
  std::string method;  // GET or POST
  std::string path;
  std::string body;
  std::string bearer_token;
  std::map<std::string, std::string> query;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

int http_status(Errc code);

struct ApiOptions {
  // Token that acts as the built-in admin. Empty disables it.
  std::string admin_token;
  std::function<Timestamp()> clock = [] {
    return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  };
};

// REST front end over a Platform. Tokens are issued by instructors and held
// in memory; restart the server and reissue them with POST /admin/tokens.
class ApiServer {
 public:
  ApiServer(Platform& platform, ApiOptions options);
  ~ApiServer();

  // Routes a request without a socket. The HTTP server uses the same path.
  ApiResponse handle(const ApiRequest& request);

  std::string issue_token(const ParticipantId& participant);

  // Binds to host on a free port and returns it; serve() then blocks.
  int bind_any_port(const std::string& host);
  bool listen(const std::string& host, int port);
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace peerfb
