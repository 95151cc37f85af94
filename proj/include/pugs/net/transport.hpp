#pragma once

#include <string>
#include <utility>
#include <vector>

namespace pugs::net {

struct HttpRequest {
  std::string url;
  std::string body;
  std::string content_type = "application/json";
  std::vector<std::pair<std::string, std::string>> headers;
  double timeout_seconds = 120.0;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Blocking POST. Implementations throw TransportError on connection failure or non-2xx status.
class Transport {
public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

/// HTTP(S) transport over cpp-httplib.
class HttpTransport : public Transport {
public:
  HttpResponse post(const HttpRequest& request) override;
};

/// Splits "scheme://host[:port]/path" into ("scheme://host[:port]", "/path").
std::pair<std::string, std::string> split_url(const std::string& url);

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(const std::string& data);

std::string base64_encode(const std::string& data);

}  // namespace pugs::net
