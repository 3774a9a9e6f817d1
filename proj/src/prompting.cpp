#include "vocabdiff/prompting.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <thread>

#include "vocabdiff/digest.hpp"
#include "vocabdiff/error.hpp"
#include "vocabdiff/text.hpp"

namespace vocabdiff {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct TemplateName {
    TemplateId id;
    std::string_view name;
};

constexpr TemplateName kTemplateNames[] = {
    {TemplateId::basic, "basic"},
    {TemplateId::short_prompt, "short"},
    {TemplateId::regression, "regression"},
    {TemplateId::regression_mask, "regression_mask"},
    {TemplateId::ambiguity, "ambiguity"},
    {TemplateId::spelling, "spelling"},
    {TemplateId::calque, "calque"},
    {TemplateId::calque_v1, "calque_v1"},
    {TemplateId::trick_short, "trick_short"},
    {TemplateId::trick_long, "trick_long"},
    {TemplateId::difficulty, "difficulty"},
};

std::string normalise_answer(std::string_view s) {
    auto cps = text::to_u32(text::trim(s));
    for (auto& c : cps) c = text::to_lower(c);
    return text::to_utf8(cps);
}

std::string normalise_surface(std::string_view s) {
    std::string out = text::trim(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

std::string_view to_string(TemplateId id) {
    for (const auto& t : kTemplateNames)
        if (t.id == id) return t.name;
    throw InputError("unknown template");
}

TemplateId template_from_string(std::string_view name) {
    for (const auto& t : kTemplateNames)
        if (t.name == name) return t.id;
    throw InputError("unknown template '" + std::string(name) + "'");
}

const std::vector<TemplateId>& all_templates() {
    static const std::vector<TemplateId> ids = [] {
        std::vector<TemplateId> v;
        for (const auto& t : kTemplateNames) v.push_back(t.id);
        return v;
    }();
    return ids;
}

std::vector<std::string> placeholders(std::string_view body) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = body.find('{', pos)) != std::string_view::npos) {
        const auto end = body.find('}', pos);
        if (end == std::string_view::npos) break;
        std::string name(body.substr(pos + 1, end - pos - 1));
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
        pos = end + 1;
    }
    return out;
}

std::string substitute(std::string_view body, const Bindings& bindings) {
    std::string out;
    out.reserve(body.size() * 2);
    std::size_t pos = 0;
    while (pos < body.size()) {
        const auto open = body.find('{', pos);
        if (open == std::string_view::npos) {
            out.append(body.substr(pos));
            break;
        }
        const auto close = body.find('}', open);
        if (close == std::string_view::npos) throw InputError("unterminated placeholder in template");
        out.append(body.substr(pos, open - pos));
        const std::string name(body.substr(open + 1, close - open - 1));
        const auto it = bindings.find(name);
        if (it == bindings.end() || it->second.empty()) throw InputError(name + " unbound");
        out.append(it->second);
        pos = close + 1;
    }
    return out;
}

std::string render(TemplateId id, const TestItem& item, const Bindings& extras) {
    Bindings b;
    if (is_known_language(item.l1)) b["l1_name"] = language_name(item.l1);
    b["l1_word"] = item.l1_word;
    b["l1_context"] = item.l1_context;
    b["en_word"] = item.en_word;
    b["clue"] = item.clue.empty() && !item.en_word.empty() ? make_clue(item.en_word) : item.clue;
    for (const auto& [k, v] : extras) b[k] = v;

    if (id == TemplateId::regression_mask) {
        const auto it = b.find("mask_template");
        const TemplateId inner = it == b.end() ? TemplateId::basic : template_from_string(it->second);
        if (inner == TemplateId::regression_mask) throw InputError("regression_mask cannot wrap itself");
        b["prompt"] = render(inner, item, extras);
    }
    return substitute(template_body(id), b);
}

std::string format_solve_example(std::string_view l1_name, std::string_view l1_word, std::string_view l1_context,
                                 std::string_view en_word) {
    std::string s;
    s.append(l1_name).append(" word: ").append(l1_word).append("\n");
    s.append(l1_name).append(" context: ").append(l1_context).append("\n");
    s.append("English word: ").append(en_word);
    return s;
}

std::string format_difficulty_examples(const std::vector<DifficultyExample>& examples) {
    std::string s;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& it = examples[i].item;
        const auto& name = language_name(it.l1);
        if (i) s += "\n";
        s += name + " word: " + it.l1_word + "\n";
        s += name + " context: " + it.l1_context + "\n";
        s += "Clue: " + (it.clue.empty() ? make_clue(it.en_word) : it.clue) + "\n";
        s += "English word: " + it.en_word + "\n";
        s += "Difficulty: " + std::to_string(examples[i].rating) + "\n";
    }
    return s;
}

std::vector<DifficultyExample> select_difficulty_examples(const std::vector<TestItem>& train, const ScaleMap& scale,
                                                          std::string_view l1) {
    std::vector<DifficultyExample> out;
    for (int wanted : {1, 3, 5}) {
        const TestItem* best = nullptr;
        double best_d = std::numeric_limits<double>::infinity();
        for (const auto& it : train) {
            if (it.l1 != l1) continue;
            const double rating = scale.k() + 1 - scale.to_scale(it.gold_score);
            const double d = std::abs(rating - wanted);
            if (d < best_d) {
                best_d = d;
                best = &it;
            }
        }
        if (!best) throw InputError("no training items for L1 '" + std::string(l1) + "'");
        out.push_back({*best, wanted});
    }
    return out;
}

// --- responses --------------------------------------------------------------

const std::vector<TokenCandidate>& LogProbResponse::first_token_candidates() const {
    if (steps.empty()) throw ProtocolError("response has no generated tokens");
    return steps.front().top;
}

void LogProbResponse::validate() const {
    if (steps.empty()) throw ProtocolError("response has no generated tokens");
    for (const auto& s : steps) {
        if (s.top.empty()) throw ProtocolError("empty candidate list for token '" + s.token + "'");
        if (!(s.logprob <= 0.0)) throw ProtocolError("log-probability above zero");
        for (const auto& c : s.top)
            if (!(c.logprob <= 0.0)) throw ProtocolError("candidate log-probability above zero");
    }
}

LogProbResponse single_step_response(std::string generated_text, std::vector<TokenCandidate> candidates) {
    LogProbResponse r;
    r.generated_text = std::move(generated_text);
    TokenStep step;
    if (!candidates.empty()) {
        const auto top = std::max_element(candidates.begin(), candidates.end(),
                                          [](const auto& a, const auto& b) { return a.logprob < b.logprob; });
        step.token = top->token;
        step.logprob = top->logprob;
    } else {
        step.token = r.generated_text;
        step.logprob = 0.0;
    }
    step.top = std::move(candidates);
    r.steps.push_back(std::move(step));
    return r;
}

nlohmann::json to_json(const LogProbResponse& r) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : r.steps) {
        nlohmann::json top = nlohmann::json::array();
        for (const auto& c : s.top) top.push_back({{"token", c.token}, {"logprob", c.logprob}});
        steps.push_back({{"token", s.token}, {"logprob", s.logprob}, {"top", std::move(top)}});
    }
    return {{"generated_text", r.generated_text}, {"steps", std::move(steps)}};
}

LogProbResponse response_from_json(const nlohmann::json& j) {
    LogProbResponse r;
    r.generated_text = j.at("generated_text").get<std::string>();
    for (const auto& s : j.at("steps")) {
        TokenStep step{s.at("token").get<std::string>(), s.at("logprob").get<double>(), {}};
        for (const auto& c : s.at("top")) step.top.push_back({c.at("token").get<std::string>(), c.at("logprob").get<double>()});
        r.steps.push_back(std::move(step));
    }
    r.validate();
    return r;
}

// --- prompt-derived features -----------------------------------------------

SurfaceScale SurfaceScale::digits(int lo, int hi) {
    SurfaceScale s{ScaleTokens::consecutive(lo, hi, 0, hi - lo + 1), {}};
    for (int p = lo; p <= hi; ++p) s.surfaces[std::to_string(p)] = p;
    return s;
}

SurfaceScale SurfaceScale::binary() {
    SurfaceScale s{ScaleTokens::consecutive(0, 1, 0, 2), {}};
    s.surfaces = {{"0", 0}, {"NO", 0}, {"1", 1}, {"YES", 1}};
    return s;
}

std::optional<int> SurfaceScale::point_of(std::string_view token) const {
    const auto it = surfaces.find(normalise_surface(token));
    if (it == surfaces.end()) return std::nullopt;
    return it->second;
}

std::vector<double> scale_logprobs(const std::vector<TokenCandidate>& candidates, const SurfaceScale& scale) {
    std::vector<double> lp(scale.scale.size(), kNegInf);
    bool any = false;
    for (const auto& c : candidates) {
        const auto p = scale.point_of(c.token);
        if (!p) continue;
        any = true;
        double& slot = lp[static_cast<std::size_t>(*p - scale.scale.min_point())];
        // log(exp(slot) + exp(c.logprob))
        const double hi = std::max(slot, c.logprob), lo = std::min(slot, c.logprob);
        slot = lo == kNegInf ? hi : hi + std::log1p(std::exp(lo - hi));
    }
    if (!any) throw InputError("no scale token among response candidates");
    return lp;
}

std::vector<double> feature_from_rating_prompt(const std::vector<LogProbResponse>& responses,
                                               const SurfaceScale& scale, double temperature) {
    std::vector<double> out;
    out.reserve(responses.size());
    for (const auto& r : responses)
        out.push_back(gscale(scale_logprobs(r.first_token_candidates(), scale), temperature, scale.scale));
    return out;
}

std::size_t spelling_l1_index(std::string_view l1) {
    if (l1 == "zh") return 0;
    if (l1 == "es") return 1;
    if (l1 == "de") return 2;
    throw InputError("spelling prompt has no slot for L1 '" + std::string(l1) + "'");
}

std::vector<TokenCandidate> spelling_candidates(const LogProbResponse& response, std::size_t l1_index) {
    std::size_t seen = 0;
    for (const auto& step : response.steps) {
        const std::string t = text::trim(step.token);
        if (t.size() == 1 && t[0] >= '0' && t[0] <= '9') {
            if (seen == l1_index) return step.top;
            ++seen;
        }
    }
    throw InputError("spelling response has no digit token for position " + std::to_string(l1_index));
}

double trickiness(const LogProbResponse& response, const TestItem& item) {
    const std::string target = normalise_answer(item.en_word);
    double p_correct = 0.0;
    bool matched = false;
    for (const auto& c : response.first_token_candidates()) {
        if (normalise_answer(c.token) == target) {
            p_correct += std::exp(c.logprob);
            matched = true;
        }
    }
    // Multi-token answers: the first candidate token cannot spell the whole
    // word, so credit the first token's probability when the full generation
    // is correct.
    if (!matched && !response.steps.empty() && normalise_answer(response.generated_text) == target)
        p_correct = std::exp(response.steps.front().logprob);
    return 1.0 - std::clamp(p_correct, 0.0, 1.0);
}

// --- clients -----------------------------------------------------------------

std::string fixture_key(std::string_view template_id, std::string_view prompt) {
    std::string buf(template_id);
    buf.push_back('\0');
    buf.append(prompt);
    return sha256_hex(buf);
}

FixtureStore::FixtureStore(std::filesystem::path dir) : file_(std::move(dir) / "fixtures.jsonl") {
    std::ifstream in(file_);
    if (!in) return;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            records_[j.at("key").get<std::string>()] = response_from_json(j.at("response"));
        } catch (const std::exception& e) {
            throw InputError(file_.string() + ": line " + std::to_string(row) + ": " + e.what());
        }
    }
}

std::optional<LogProbResponse> FixtureStore::find(const std::string& key) const {
    std::lock_guard lock(mu_);
    const auto it = records_.find(key);
    if (it == records_.end()) return std::nullopt;
    return it->second;
}

void FixtureStore::record(const std::string& key, const std::string& prompt, const LogProbResponse& response) {
    std::lock_guard lock(mu_);
    std::filesystem::create_directories(file_.parent_path());
    std::ofstream out(file_, std::ios::app);
    if (!out) throw InputError("cannot append to '" + file_.string() + "'");
    out << nlohmann::json{{"key", key}, {"prompt", prompt}, {"response", to_json(response)}}.dump() << '\n';
    out.flush();
    records_[key] = response;
}

std::size_t FixtureStore::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

LogProbResponse ReplayClient::complete(const CompletionRequest& request) {
    const auto key = fixture_key(request.template_id, request.prompt);
    auto r = store_->find(key);
    if (!r) throw FixtureMissError(key);
    return *r;
}

LogProbResponse RecordingClient::complete(const CompletionRequest& request) {
    const auto key = fixture_key(request.template_id, request.prompt);
    if (auto r = store_->find(key)) return *r;
    auto r = live_->complete(request);
    store_->record(key, request.prompt, r);
    return r;
}

std::vector<LogProbResponse> complete_all(CompletionClient& client, const std::vector<CompletionRequest>& requests,
                                          std::size_t max_in_flight) {
    std::vector<LogProbResponse> out(requests.size());
    const std::size_t workers = std::max<std::size_t>(1, std::min(max_in_flight, requests.size()));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex err_mu;

    auto work = [&] {
        while (!failed.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= requests.size()) return;
            try {
                out[i] = client.complete(requests[i]);
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return out;
}

}  // namespace vocabdiff
