#include <doctest.h>

#include <cstdlib>

#include "savetag/embedding.h"
#include "savetag/generation.h"
#include "support/stub_server.h"

using namespace savetag;
using nlohmann::json;

namespace {

HttpOptions fast(const StubServer& s) {
  HttpOptions h;
  h.base_url = s.base_url();
  h.timeout_s = 5;
  h.retries = 2;
  h.backoff_ms = 1;
  return h;
}

}  // namespace

TEST_CASE("embeddings request shape and batch order") {
  StubServer stub;
  stub.respond(embeddings_ok);
  EncoderConfig cfg;
  cfg.kind = EncoderKind::Remote;
  cfg.http = fast(stub);
  cfg.model = "enc-model";
  cfg.batch_size = 2;
  const auto emb = encode_remote({"a", "bbb", "cc"}, cfg);

  const auto reqs = stub.requests();
  REQUIRE(reqs.size() == 2);
  CHECK(reqs[0].body == json{{"model", "enc-model"}, {"input", {"a", "bbb"}}});
  CHECK(reqs[1].body == json{{"model", "enc-model"}, {"input", {"cc"}}});
  REQUIRE(emb.size() == 3);
  // Rows come back reordered by index and normalized: [len, 1, call].
  Eigen::RowVector3d r1(3, 1, 0);
  CHECK((emb.rows.row(1) - r1.normalized()).norm() < 1e-15);
  Eigen::RowVector3d r2(2, 1, 1);
  CHECK((emb.rows.row(2) - r2.normalized()).norm() < 1e-15);
  CHECK(emb.encoder_id == "remote:enc-model");
}

TEST_CASE("embeddings already unit length pass through") {
  StubServer stub;
  stub.respond([](const json&, int, httplib::Response& res) {
    res.set_content(R"({"data": [{"index": 0, "embedding": [0.6, 0.8]}]})", "application/json");
  });
  EncoderConfig cfg;
  cfg.http = fast(stub);
  const auto emb = encode_remote({"x"}, cfg);
  CHECK(emb.rows(0, 0) == 0.6);
  CHECK(emb.rows(0, 1) == 0.8);
}

TEST_CASE("retries then success") {
  StubServer stub;
  stub.respond([](const json& body, int call, httplib::Response& res) {
    if (call < 2) {
      res.status = 500;
      return;
    }
    embeddings_ok(body, call, res);
  });
  EncoderConfig cfg;
  cfg.http = fast(stub);
  const auto emb = encode_remote({"a"}, cfg);
  CHECK(stub.requests().size() == 3);
  CHECK(emb.size() == 1);
}

TEST_CASE("exhausted retries name the batch and hide the key") {
  StubServer stub;
  stub.respond([](const json&, int, httplib::Response& res) { res.status = 503; });
  setenv("SAVETAG_TEST_KEY", "sk-very-secret", 1);
  EncoderConfig cfg;
  cfg.http = fast(stub);
  cfg.http.api_key_env = "SAVETAG_TEST_KEY";
  cfg.batch_size = 1;
  std::string message;
  try {
    encode_remote({"a"}, cfg);
  } catch (const TransportError& e) {
    message = e.what();
  }
  CHECK(message.find("embedding batch 0") != std::string::npos);
  CHECK(message.find("503") != std::string::npos);
  CHECK(message.find("sk-very-secret") == std::string::npos);
  const auto reqs = stub.requests();
  CHECK(reqs.size() == 3);
  CHECK(reqs[0].authorization == "Bearer sk-very-secret");
  unsetenv("SAVETAG_TEST_KEY");
}

TEST_CASE("malformed embedding responses are retried") {
  StubServer stub;
  stub.respond([](const json& body, int call, httplib::Response& res) {
    if (call == 0) {
      res.set_content(R"({"data": []})", "application/json");
    } else if (call == 1) {
      res.set_content("not json", "application/json");
    } else {
      embeddings_ok(body, call, res);
    }
  });
  EncoderConfig cfg;
  cfg.http = fast(stub);
  CHECK(encode_remote({"a", "b"}, cfg).size() == 2);
}

TEST_CASE("dimension change across batches is fatal") {
  StubServer stub;
  stub.respond([](const json&, int call, httplib::Response& res) {
    json data = {{{"index", 0}, {"embedding", call == 0 ? json{1.0, 0.0} : json{1.0, 0.0, 0.0}}}};
    res.set_content(json{{"data", data}}.dump(), "application/json");
  });
  EncoderConfig cfg;
  cfg.http = fast(stub);
  cfg.batch_size = 1;
  CHECK_THROWS_AS(encode_remote({"a", "b"}, cfg), TransportError);
}

TEST_CASE("base url with a path prefix") {
  StubServer stub;
  stub.respond(embeddings_ok);
  EncoderConfig cfg;
  cfg.http = fast(stub);
  cfg.http.base_url += "/prefix/";
  encode_remote({"a"}, cfg);
  CHECK(stub.requests().at(0).path == "/prefix/v1/embeddings");
}

TEST_CASE("chat completions request shape") {
  StubServer stub;
  stub.respond([](const json&, int, httplib::Response& res) { chat_ok("<START>made up<END>", res); });
  HttpOptions http = fast(stub);
  const std::vector<ChatMessage> msgs = {{"system", "s"}, {"user", "u"}};
  const auto out = chat_completion(http, "llm", msgs, 0.7, 128);
  CHECK(out == "<START>made up<END>");
  const auto reqs = stub.requests();
  REQUIRE(reqs.size() == 1);
  CHECK(reqs[0].path == "/v1/chat/completions");
  CHECK(reqs[0].body == json{{"model", "llm"},
                             {"messages", {{{"role", "system"}, {"content", "s"}}, {{"role", "user"}, {"content", "u"}}}},
                             {"temperature", 0.7},
                             {"max_tokens", 128}});
}

TEST_CASE("chat responses without content are retried") {
  StubServer stub;
  stub.respond([](const json&, int call, httplib::Response& res) {
    if (call == 0) {
      res.set_content(R"({"choices": []})", "application/json");
    } else {
      chat_ok("ok", res);
    }
  });
  CHECK(chat_completion(fast(stub), "m", {{"user", "u"}}, 0.0, 8) == "ok");
  CHECK(stub.requests().size() == 2);
}
