#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <algorithm>
#include <cstdlib>

#include "vocabdiff/error.hpp"
#include "vocabdiff/prompting.hpp"

namespace vocabdiff {

namespace {

void sort_candidates(std::vector<TokenCandidate>& top) {
    std::sort(top.begin(), top.end(), [](const auto& a, const auto& b) {
        return a.logprob != b.logprob ? a.logprob > b.logprob : a.token < b.token;
    });
}

LogProbResponse parse_legacy(const nlohmann::json& choice) {
    const auto& lp = choice.at("logprobs");
    if (!lp.is_object()) throw ProtocolError("response is missing the logprobs field");
    const auto& tokens = lp.at("tokens");
    const auto& token_lps = lp.at("token_logprobs");
    const auto& tops = lp.at("top_logprobs");
    if (!tokens.is_array() || tokens.size() != token_lps.size() || tokens.size() != tops.size())
        throw ProtocolError("logprobs arrays have inconsistent lengths");
    LogProbResponse r;
    r.generated_text = choice.value("text", std::string{});
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        TokenStep step{tokens[i].get<std::string>(), token_lps[i].get<double>(), {}};
        if (!tops[i].is_object()) throw ProtocolError("top_logprobs entry is not an object");
        for (const auto& [tok, v] : tops[i].items()) step.top.push_back({tok, v.get<double>()});
        sort_candidates(step.top);
        r.steps.push_back(std::move(step));
    }
    return r;
}

LogProbResponse parse_chat(const nlohmann::json& choice) {
    const auto& content = choice.at("logprobs").at("content");
    if (!content.is_array()) throw ProtocolError("logprobs.content is not an array");
    LogProbResponse r;
    if (choice.contains("message")) r.generated_text = choice["message"].value("content", std::string{});
    for (const auto& t : content) {
        TokenStep step{t.at("token").get<std::string>(), t.at("logprob").get<double>(), {}};
        for (const auto& c : t.at("top_logprobs")) step.top.push_back({c.at("token").get<std::string>(), c.at("logprob").get<double>()});
        sort_candidates(step.top);
        r.steps.push_back(std::move(step));
    }
    return r;
}

}  // namespace

LogProbResponse parse_completion_body(const nlohmann::json& body) {
    try {
        const auto& choices = body.at("choices");
        if (!choices.is_array() || choices.empty()) throw ProtocolError("response has no choices");
        const auto& choice = choices[0];
        if (!choice.contains("logprobs") || choice["logprobs"].is_null())
            throw ProtocolError("response is missing the logprobs field");
        LogProbResponse r = choice["logprobs"].contains("content") ? parse_chat(choice) : parse_legacy(choice);
        r.validate();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("malformed completion response: ") + e.what());
    }
}

HttpCompletionClient::HttpCompletionClient(HttpClientConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.base_url.empty()) throw InputError("HTTP client needs a base URL");
}

LogProbResponse HttpCompletionClient::complete(const CompletionRequest& request) {
    nlohmann::json body{{"prompt", request.prompt},
                        {"temperature", 0},
                        {"max_tokens", request.max_tokens},
                        {"logprobs", request.top_logprobs}};
    if (!cfg_.model.empty()) body["model"] = cfg_.model;

    httplib::Client cli(cfg_.base_url);
    cli.set_connection_timeout(cfg_.timeout_seconds);
    cli.set_read_timeout(cfg_.timeout_seconds);
    httplib::Headers headers;
    if (!cfg_.api_key_env.empty())
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);

    auto res = cli.Post(cfg_.path, headers, body.dump(), "application/json");
    if (!res) throw NetworkError("request to " + cfg_.base_url + cfg_.path + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw NetworkError("request to " + cfg_.base_url + cfg_.path + " returned HTTP " + std::to_string(res->status));
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("response body is not JSON: ") + e.what());
    }
    return parse_completion_body(parsed);
}

}  // namespace vocabdiff
