#include "cooper/http_json.hpp"

#include <cstdlib>

#include "httplib.h"

namespace cooper {

nlohmann::json post_json(const std::string& url, const nlohmann::json& body, int timeout_seconds) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || url.compare(0, scheme_end, "http") != 0)
    throw EndpointError("endpoint must be an http:// URL: '" + url + "'");
  const auto path_begin = url.find('/', scheme_end + 3);
  const std::string host = url.substr(0, path_begin);
  const std::string path = path_begin == std::string::npos ? "/" : url.substr(path_begin);

  httplib::Client cli(host);
  cli.set_connection_timeout(timeout_seconds, 0);
  cli.set_read_timeout(timeout_seconds, 0);
  httplib::Headers headers;
  if (const char* token = std::getenv("COOPER_ENDPOINT_TOKEN")) headers.emplace("Authorization", std::string("Bearer ") + token);
  auto res = cli.Post(path, headers, body.dump(), "application/json");
  if (!res) throw EndpointError("POST " + url + " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw EndpointError("POST " + url + " returned HTTP " + std::to_string(res->status));
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw EndpointError("POST " + url + " returned invalid JSON: " + e.what());
  }
}

}  // namespace cooper
