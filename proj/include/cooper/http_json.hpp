#pragma once

#include <stdexcept>
#include <string>

#include "json.hpp"

namespace cooper {

class EndpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// POSTs `body` as JSON to an http:// URL and parses the JSON reply. If the
/// environment variable COOPER_ENDPOINT_TOKEN is set it is sent as a bearer
/// token. Throws EndpointError on transport failure, non-2xx status or an
/// unparsable reply.
nlohmann::json post_json(const std::string& url, const nlohmann::json& body, int timeout_seconds = 10);

}  // namespace cooper
