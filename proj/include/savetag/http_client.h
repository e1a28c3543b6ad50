#pragma once

#include <functional>
#include <string>

#include <json.hpp>

#include "savetag/util.h"

namespace savetag {

class TransportError : public Error {
 public:
  using Error::Error;
};

/// Connection settings shared by the embeddings and chat-completions clients.
struct HttpOptions {
  std::string base_url;     // e.g. "http://127.0.0.1:8000" or "https://host/prefix"
  double timeout_s = 60.0;
  int retries = 3;          // extra attempts after the first
  int backoff_ms = 250;     // doubled after every failed attempt
  std::string api_key_env;  // name of the environment variable holding the key
};

// POSTs `body` as JSON to base_url + path and returns the parsed response.
// Transport failures, non-2xx statuses, unparseable bodies and exceptions
// thrown by `validate` all count as a failed attempt. After the last attempt
// a TransportError describing the final failure is thrown. The API key is
// sent as a bearer token and never appears in error messages.
nlohmann::json post_json(const HttpOptions& options, const std::string& path,
                         const nlohmann::json& body,
                         const std::function<void(const nlohmann::json&)>& validate = {});

}  // namespace savetag
