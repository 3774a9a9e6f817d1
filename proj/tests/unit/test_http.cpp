#include <doctest.h>

#include <cstdlib>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "vocabdiff/prompting.hpp"

using namespace vocabdiff;

namespace {

const char* kLegacy = R"({"choices":[{"text":"3","logprobs":{"tokens":["3"],"token_logprobs":[-0.1],
    "top_logprobs":[{"3":-0.1,"4":-2.4,"2":-4.0}]}}]})";
const char* kChat = R"({"choices":[{"message":{"content":"YES"},"logprobs":{"content":[{"token":"YES","logprob":-0.05,
    "top_logprobs":[{"token":"NO","logprob":-3.0},{"token":"YES","logprob":-0.05}]}]}}]})";

struct LocalServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;
    nlohmann::json last_body;
    std::string last_auth;

    explicit LocalServer(std::string response, int status = 200) {
        server.Post("/v1/completions", [this, response, status](const httplib::Request& req, httplib::Response& res) {
            last_body = nlohmann::json::parse(req.body);
            last_auth = req.get_header_value("Authorization");
            res.status = status;
            res.set_content(response, "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer() {
        server.stop();
        thread.join();
    }
    HttpClientConfig config() const {
        HttpClientConfig cfg;
        cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
        cfg.model = "test-model";
        cfg.api_key_env = "VOCABDIFF_TEST_KEY";
        cfg.timeout_seconds = 5;
        return cfg;
    }
};

}  // namespace

TEST_CASE("legacy completions layout over HTTP") {
    ::setenv("VOCABDIFF_TEST_KEY", "sk-test", 1);
    LocalServer srv(kLegacy);
    HttpCompletionClient client(srv.config());
    const auto r = client.complete({"basic", "Rate this", 1, 5});
    CHECK(r.generated_text == "3");
    REQUIRE(r.first_token_candidates().size() == 3);
    CHECK(r.first_token_candidates()[0].token == "3");
    CHECK(r.first_token_candidates()[1].logprob == -2.4);
    CHECK(srv.last_body.at("prompt") == "Rate this");
    CHECK(srv.last_body.at("temperature") == 0);
    CHECK(srv.last_body.at("max_tokens") == 1);
    CHECK(srv.last_body.at("logprobs") == 5);
    CHECK(srv.last_body.at("model") == "test-model");
    CHECK(srv.last_auth == "Bearer sk-test");
    ::unsetenv("VOCABDIFF_TEST_KEY");
}

TEST_CASE("chat layout over HTTP") {
    LocalServer srv(kChat);
    HttpCompletionClient client(srv.config());
    const auto r = client.complete({"ambiguity", "Is it?", 1, 5});
    CHECK(r.generated_text == "YES");
    CHECK(r.first_token_candidates()[0].token == "YES");
    CHECK(srv.last_auth.empty());
    CHECK(feature_from_rating_prompt({r}, SurfaceScale::binary(), 1.0)[0] > 0.9);
}

TEST_CASE("protocol and network errors are distinct") {
    {
        LocalServer srv(R"({"choices":[{"text":"3"}]})");
        HttpCompletionClient client(srv.config());
        CHECK_THROWS_WITH_AS(client.complete({"basic", "x", 1, 5}), doctest::Contains("logprobs"), ProtocolError);
    }
    {
        LocalServer srv("not json");
        HttpCompletionClient client(srv.config());
        CHECK_THROWS_AS(client.complete({"basic", "x", 1, 5}), ProtocolError);
    }
    {
        LocalServer srv("{}", 500);
        HttpCompletionClient client(srv.config());
        CHECK_THROWS_AS(client.complete({"basic", "x", 1, 5}), NetworkError);
    }
    HttpClientConfig dead;
    dead.base_url = "http://127.0.0.1:1";
    dead.timeout_seconds = 2;
    HttpCompletionClient client(dead);
    CHECK_THROWS_AS(client.complete({"basic", "x", 1, 5}), NetworkError);
}

TEST_CASE("parse_completion_body rejects malformed layouts") {
    CHECK_THROWS_AS(parse_completion_body(nlohmann::json::parse(R"({"choices":[]})")), ProtocolError);
    CHECK_THROWS_AS(parse_completion_body(nlohmann::json::parse(R"({"choices":[{"logprobs":{"tokens":["a"],"token_logprobs":[]}}]})")),
                    ProtocolError);
    CHECK_THROWS_AS(parse_completion_body(nlohmann::json::parse(R"({"choices":[{"logprobs":{"content":[{"token":"a","logprob":0.3,"top_logprobs":[{"token":"a","logprob":0.3}]}]}}]})")),
                    ProtocolError);
}
