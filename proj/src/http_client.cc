#include "savetag/http_client.h"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace savetag {
namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

SplitUrl split_base(const std::string& base) {
  const auto scheme_end = base.find("://");
  if (scheme_end == std::string::npos) throw Error("base url needs a scheme: " + base);
  const auto path_start = base.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.origin = base;
  } else {
    out.origin = base.substr(0, path_start);
    out.prefix = base.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  }
  return out;
}

}  // namespace

nlohmann::json post_json(const HttpOptions& options, const std::string& path,
                         const nlohmann::json& body,
                         const std::function<void(const nlohmann::json&)>& validate) {
  const SplitUrl url = split_base(options.base_url);
  httplib::Client client(url.origin);
  const auto timeout = std::chrono::duration<double>(options.timeout_s);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!options.api_key_env.empty()) {
    if (const char* key = std::getenv(options.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  const std::string payload = body.dump();
  const std::string target = url.prefix + path;
  std::string last_error;
  int backoff = options.backoff_ms;
  for (int attempt = 0; attempt <= options.retries; ++attempt) {
    if (attempt > 0 && backoff > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
    auto res = client.Post(target, headers, payload, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    try {
      auto parsed = nlohmann::json::parse(res->body);
      if (validate) validate(parsed);
      return parsed;
    } catch (const std::exception& e) {
      last_error = std::string("bad response: ") + e.what();
    }
  }
  throw TransportError("POST " + target + " failed after " + std::to_string(options.retries + 1) +
                       " attempts: " + last_error);
}

}  // namespace savetag
