#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vocabdiff/data_model.hpp"
#include "vocabdiff/soft_target.hpp"

namespace vocabdiff {

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

enum class TemplateId {
    basic,
    short_prompt,
    regression,
    regression_mask,
    ambiguity,
    spelling,
    calque,
    calque_v1,
    trick_short,
    trick_long,
    difficulty,
};

std::string_view to_string(TemplateId id);
TemplateId template_from_string(std::string_view name);
const std::vector<TemplateId>& all_templates();

// Raw template text with {placeholder} markers. regression_mask has no body
// of its own; it wraps another template (see render).
std::string_view template_body(TemplateId id);

// Placeholder names used by a template body, in order of first appearance.
std::vector<std::string> placeholders(std::string_view body);

// Substitutes {name} markers. Throws InputError("<name> unbound") for the
// first marker without a binding.
std::string substitute(std::string_view body, const std::map<std::string, std::string>& bindings);

using Bindings = std::map<std::string, std::string>;

// Item fields are bound as l1_name, l1_word, l1_context, clue and en_word;
// empty item fields count as unbound. `extras` add template-specific
// bindings and override item fields. regression_mask renders
// "[CLS] <inner> [MASK] [SEP]" where the inner template is extras["mask_template"]
// (default "basic").
std::string render(TemplateId id, const TestItem& item, const Bindings& extras = {});

// "<L1> word: ...\n<L1> context: ...\nEnglish word: ..." one-shot block for the
// trickiness prompts.
std::string format_solve_example(std::string_view l1_name, std::string_view l1_word, std::string_view l1_context,
                                 std::string_view en_word);

struct DifficultyExample {
    TestItem item;
    int rating;  // 1 = very easy ... 5 = very difficult
};

// Few-shot block for the difficulty prompt; examples are separated by a
// blank line and the block ends with a line break.
std::string format_difficulty_examples(const std::vector<DifficultyExample>& examples);

// Picks the training items of one L1 whose prompt rating (k + 1 - to_scale(gold),
// so that 1 = very easy) lies closest to 1, 3 and 5.
std::vector<DifficultyExample> select_difficulty_examples(const std::vector<TestItem>& train, const ScaleMap& scale,
                                                          std::string_view l1);

// Demonstration bindings quoted in the published prompt listings: the
// "bank" ambiguity pair for Spanish, the Erdbeere solve example, and the
// hot dog calque pair. Only the pieces that exist for `l1` are returned.
Bindings reference_demonstrations(TemplateId id, std::string_view l1);

// ---------------------------------------------------------------------------
// Log-probability responses
// ---------------------------------------------------------------------------

struct TokenCandidate {
    std::string token;
    double logprob;
    bool operator==(const TokenCandidate&) const = default;
};

// One generated token with its top-k alternatives.
struct TokenStep {
    std::string token;
    double logprob;
    std::vector<TokenCandidate> top;
    bool operator==(const TokenStep&) const = default;
};

struct LogProbResponse {
    std::string generated_text;
    std::vector<TokenStep> steps;

    const std::vector<TokenCandidate>& first_token_candidates() const;
    // Throws ProtocolError unless steps exist, candidate lists are nonempty and
    // every log-probability is <= 0.
    void validate() const;
    bool operator==(const LogProbResponse&) const = default;
};

// A response reduced to a single step with the given candidates.
LogProbResponse single_step_response(std::string generated_text, std::vector<TokenCandidate> candidates);

nlohmann::json to_json(const LogProbResponse& r);
LogProbResponse response_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Prompt-derived features
// ---------------------------------------------------------------------------

// Maps response token surfaces onto scale points.
struct SurfaceScale {
    ScaleTokens scale;
    // Normalised surface (trimmed, upper-cased) -> scale point.
    std::map<std::string, int> surfaces;

    static SurfaceScale digits(int lo = 1, int hi = 5);
    // {0, 1} with "0"/"NO" -> 0 and "1"/"YES" -> 1.
    static SurfaceScale binary();

    std::optional<int> point_of(std::string_view token) const;
};

// Per-point log-probabilities (log-sum-exp over surfaces that map to the
// same point, -infinity when absent). Throws InputError when no candidate
// maps onto the scale.
std::vector<double> scale_logprobs(const std::vector<TokenCandidate>& candidates, const SurfaceScale& scale);

std::vector<double> feature_from_rating_prompt(const std::vector<LogProbResponse>& responses,
                                               const SurfaceScale& scale, double temperature);

// The spelling prompt answers "d,d,d" for Chinese, Spanish, German. Returns
// the candidates at the position of the `l1_index`-th digit token.
std::vector<TokenCandidate> spelling_candidates(const LogProbResponse& response, std::size_t l1_index);
// Chinese, Spanish, German order used by the spelling prompt.
std::size_t spelling_l1_index(std::string_view l1);

// 1 - P(correct answer), matching answers case-insensitively after trimming.
double trickiness(const LogProbResponse& response, const TestItem& item);

// ---------------------------------------------------------------------------
// Completion clients
// ---------------------------------------------------------------------------

class NetworkError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FixtureMissError : public std::runtime_error {
public:
    explicit FixtureMissError(const std::string& key)
        : std::runtime_error("no recorded response for prompt hash " + key), key_(key) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

struct CompletionRequest {
    std::string template_id;
    std::string prompt;
    int max_tokens = 1;
    int top_logprobs = 5;
};

// SHA-256 (hex) of template id and rendered prompt.
std::string fixture_key(std::string_view template_id, std::string_view prompt);

class CompletionClient {
public:
    virtual ~CompletionClient() = default;
    virtual LogProbResponse complete(const CompletionRequest& request) = 0;
};

// JSON-lines store of {key, prompt, response} records in <dir>/fixtures.jsonl.
class FixtureStore {
public:
    explicit FixtureStore(std::filesystem::path dir);

    std::optional<LogProbResponse> find(const std::string& key) const;
    // Appends and flushes one record; replaces an in-memory entry with the same key.
    void record(const std::string& key, const std::string& prompt, const LogProbResponse& response);
    std::size_t size() const;
    const std::filesystem::path& file() const { return file_; }

private:
    std::filesystem::path file_;
    mutable std::mutex mu_;
    std::map<std::string, LogProbResponse> records_;
};

// Replays recorded responses; a miss is fatal.
class ReplayClient : public CompletionClient {
public:
    explicit ReplayClient(std::shared_ptr<const FixtureStore> store) : store_(std::move(store)) {}
    LogProbResponse complete(const CompletionRequest& request) override;

private:
    std::shared_ptr<const FixtureStore> store_;
};

struct HttpClientConfig {
    std::string base_url;  // scheme://host[:port]
    std::string path = "/v1/completions";
    std::string model;
    // Name of the environment variable holding the bearer token; the token
    // itself is never logged.
    std::string api_key_env = "OPENAI_API_KEY";
    int timeout_seconds = 60;
};

// POSTs {model, prompt, temperature: 0, max_tokens, logprobs: k}.
class HttpCompletionClient : public CompletionClient {
public:
    explicit HttpCompletionClient(HttpClientConfig cfg);
    LogProbResponse complete(const CompletionRequest& request) override;

private:
    HttpClientConfig cfg_;
};

// Parses either the legacy completions layout (choices[0].logprobs.tokens /
// token_logprobs / top_logprobs) or the chat layout
// (choices[0].logprobs.content[].top_logprobs[]).
LogProbResponse parse_completion_body(const nlohmann::json& body);

// Live client whose responses are written to a fixture store.
class RecordingClient : public CompletionClient {
public:
    RecordingClient(std::shared_ptr<CompletionClient> live, std::shared_ptr<FixtureStore> store)
        : live_(std::move(live)), store_(std::move(store)) {}
    LogProbResponse complete(const CompletionRequest& request) override;

private:
    std::shared_ptr<CompletionClient> live_;
    std::shared_ptr<FixtureStore> store_;
};

// Runs requests with at most `max_in_flight` concurrent calls. Results are
// aligned with `requests` regardless of completion order; the first failure
// is rethrown after all workers stop.
std::vector<LogProbResponse> complete_all(CompletionClient& client, const std::vector<CompletionRequest>& requests,
                                          std::size_t max_in_flight = 4);

}  // namespace vocabdiff
