// Minimal blocking HTTP/1.1 client used by the CLIs and tests.
#pragma once

#include <cstdint>
#include <string>

namespace iwast::net {

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string content_type;
};

/// Throws std::runtime_error when the connection fails.
HttpResponse http_request(const std::string& host, std::uint16_t port, const std::string& method,
                          const std::string& target, const std::string& body = {},
                          const std::string& content_type = "application/json");

}  // namespace iwast::net
