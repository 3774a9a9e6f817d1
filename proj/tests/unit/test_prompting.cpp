#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "vocabdiff/error.hpp"
#include "vocabdiff/prompting.hpp"

using namespace vocabdiff;

namespace {

const TestItem kHouse{"k1", "es", "casa", "Vivo en una casa grande que tiene tres dormitorios.", "house", "noun",
                      "h _ _ _ _", 3.07};

std::string golden(const std::string& name) {
    std::ifstream in(std::filesystem::path(VOCABDIFF_GOLDEN_DIR) / (name + ".txt"), std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TestItem spanish(std::string id, std::string word, std::string context, std::string en) {
    std::string clue = make_clue(en);
    return {std::move(id), "es", std::move(word), std::move(context), std::move(en), "", std::move(clue), 0.0};
}

Bindings golden_bindings(TemplateId id) {
    switch (id) {
        case TemplateId::ambiguity:
            return reference_demonstrations(id, "es");
        case TemplateId::spelling: {
            Bindings b = reference_demonstrations(id, "es");
            b.insert({{"en_pron", "HH AW S"}, {"l1_word_cn", "房子"}, {"l1_word_es", "casa"}, {"l1_word_de", "Haus"},
                      {"hard_pron", "K Y UW"}, {"hard_cn", "队列"}, {"hard_es", "cola"}, {"hard_de", "Schlange"},
                      {"easy_pron", "B UH K"}, {"easy_cn", "书"}, {"easy_es", "libro"}, {"easy_de", "Buch"}});
            return b;
        }
        case TemplateId::calque_v1:
            return reference_demonstrations(id, "zh");
        case TemplateId::trick_short:
        case TemplateId::trick_long:
            return reference_demonstrations(id, "de");
        case TemplateId::difficulty:
            return {{"examples",
                     format_difficulty_examples(
                         {{spanish("d1", "perro", "El perro duerme en el sofá.", "dog"), 1},
                          {spanish("d2", "lograr", "Quiero lograr mis metas.", "achieve"), 3},
                          {spanish("d3", "umbral", "Se detuvo en el umbral de la puerta.", "threshold"), 5}})}};
        default:
            return {};
    }
}

LogProbResponse resp(std::string text, std::vector<TokenCandidate> c) { return single_step_response(std::move(text), std::move(c)); }

class CountingClient : public CompletionClient {
public:
    std::atomic<int> calls{0};
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    LogProbResponse complete(const CompletionRequest& r) override {
        ++calls;
        const int now = ++in_flight;
        int p = peak.load();
        while (now > p && !peak.compare_exchange_weak(p, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<int>(r.prompt.size() % 5)));
        --in_flight;
        if (r.prompt == "boom") throw NetworkError("boom");
        return resp(r.prompt, {{r.prompt, 0.0}});
    }
};

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("vocabdiff_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("every template matches its golden rendering") {
    for (TemplateId id : all_templates()) {
        CAPTURE(to_string(id));
        CHECK(render(id, kHouse, golden_bindings(id)) == golden(std::string(to_string(id))));
    }
}

TEST_CASE("template examples") {
    CHECK(render(TemplateId::short_prompt, kHouse) ==
          "casa ### Vivo en una casa grande que tiene tres dormitorios. ### h _ _ _ _ ### house ### Difficulty (1 to 5):");
    CHECK(render(TemplateId::basic, kHouse)
              .starts_with("Rate how difficult it is for learners to guess the English word based on the Spanish word, "
                           "context and clue on a scale from 1 to 5 (1=very easy, 5=very difficult)."));
    CHECK(render(TemplateId::regression_mask, kHouse) == "[CLS] " + render(TemplateId::basic, kHouse) + " [MASK] [SEP]");

    TestItem no_ctx = kHouse;
    no_ctx.l1_context.clear();
    CHECK_THROWS_WITH_AS(render(TemplateId::basic, no_ctx), "l1_context unbound", InputError);
    CHECK_THROWS_WITH_AS(render(TemplateId::ambiguity, kHouse), "ex_en_word unbound", InputError);
}

TEST_CASE("rendered templates contain no placeholder markers") {
    for (TemplateId id : all_templates()) {
        const auto out = render(id, kHouse, golden_bindings(id));
        for (const auto& name : placeholders(template_body(id)))
            CHECK(out.find("{" + name + "}") == std::string::npos);
    }
    CHECK(substitute("{a} and {b}", {{"a", "1"}, {"b", "{a}"}}) == "1 and {a}");
}

TEST_CASE("difficulty example selection") {
    std::vector<TestItem> train;
    for (int i = 0; i < 9; ++i) {
        auto it = spanish("t" + std::to_string(i), "w", "c w.", "word");
        it.gold_score = i;
        train.push_back(it);
    }
    auto other = train[0];
    other.l1 = "de";
    other.item_id = "de0";
    train.push_back(other);
    const auto scale = fit_scale({0, 8}, 5);
    const auto ex = select_difficulty_examples(train, scale, "es");
    REQUIRE(ex.size() == 3);
    CHECK(ex[0].rating == 1);
    CHECK(ex[0].item.item_id == "t8");
    CHECK(ex[1].item.item_id == "t4");
    CHECK(ex[2].item.item_id == "t0");
}

TEST_CASE("feature_from_rating_prompt") {
    const auto digits = SurfaceScale::digits();
    const auto v = feature_from_rating_prompt({resp("3", {{"3", std::log(0.9)}, {"4", std::log(0.1)}})}, digits, 1.0);
    CHECK(v[0] == doctest::Approx(3.1).epsilon(1e-12));
    CHECK(feature_from_rating_prompt({resp("YES", {{"YES", 0.0}})}, SurfaceScale::binary(), 1.0)[0] == 1.0);
    CHECK(feature_from_rating_prompt({resp("No", {{" No", std::log(0.8)}, {"yes", std::log(0.2)}})}, SurfaceScale::binary(),
                                     1.0)[0] == doctest::Approx(0.2));
    CHECK_THROWS_AS(feature_from_rating_prompt({resp("maybe", {{"maybe", 0.0}, {"the", -1.0}})}, digits, 1.0), InputError);
    // Surfaces mapping to one point add up.
    CHECK(feature_from_rating_prompt({resp("1", {{"1", std::log(0.25)}, {" 1", std::log(0.25)}, {"5", std::log(0.5)}})},
                                     digits, 1.0)[0] == doctest::Approx(3.0));
}

TEST_CASE("feature_from_rating_prompt moves toward the midpoint as temperature grows") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.01, 1.0), slope(-3.0, 3.0);
    const auto digits = SurfaceScale::digits();
    const auto binary = SurfaceScale::binary();
    for (int t = 0; t < 100; ++t) {
        // Log-linear responses over the digits and arbitrary binary responses.
        const double a = slope(rng), pyes = u(rng);
        std::vector<TokenCandidate> c;
        for (int p = 1; p <= 5; ++p) c.push_back({std::to_string(p), a * p - 20.0});
        const auto r = resp("1", c);
        const auto rb = resp("YES", {{"YES", std::log(pyes)}, {"NO", std::log1p(-pyes)}});
        double prev = 1e300, prev_b = 1e300;
        for (double temp : default_temperature_grid()) {
            const double d = std::abs(feature_from_rating_prompt({r}, digits, temp)[0] - 3.0);
            const double db = std::abs(feature_from_rating_prompt({rb}, binary, temp)[0] - 0.5);
            CHECK(d <= prev + 1e-12);
            CHECK(db <= prev_b + 1e-12);
            prev = d;
            prev_b = db;
        }
        CHECK(prev < 0.1);
    }
}

TEST_CASE("spelling candidates") {
    LogProbResponse r;
    r.generated_text = "5,4,1";
    r.steps = {{"5", -0.1, {{"5", -0.1}, {"4", -2.5}}},
               {",", 0.0, {{",", 0.0}}},
               {"4", -0.3, {{"4", -0.3}, {"3", -1.4}}},
               {",", 0.0, {{",", 0.0}}},
               {"1", -0.05, {{"1", -0.05}}}};
    CHECK(spelling_candidates(r, spelling_l1_index("zh"))[0].token == "5");
    CHECK(spelling_candidates(r, spelling_l1_index("es"))[1].token == "3");
    CHECK(spelling_candidates(r, spelling_l1_index("de"))[0].token == "1");
    CHECK_THROWS_AS(spelling_candidates(r, 3), InputError);
}

TEST_CASE("trickiness") {
    CHECK(trickiness(resp("house", {{"house", 0.0}}), kHouse) == 0.0);
    TestItem instantly = kHouse;
    instantly.en_word = "instantly";
    CHECK(trickiness(resp("immediately", {{"immediately", 0.0}}), instantly) == 1.0);
    CHECK(trickiness(resp("house", {{"house", std::log(0.7)}, {"home", std::log(0.3)}}), kHouse) ==
          doctest::Approx(0.3).epsilon(1e-12));
    CHECK(trickiness(resp("House", {{" House ", std::log(0.6)}, {"home", std::log(0.4)}}), kHouse) ==
          doctest::Approx(0.4).epsilon(1e-12));

    TestItem hotdog = kHouse;
    hotdog.en_word = "hot dog";
    LogProbResponse multi;
    multi.generated_text = "hot dog";
    multi.steps = {{"hot", std::log(0.8), {{"hot", std::log(0.8)}, {"sausage", std::log(0.2)}}},
                   {" dog", 0.0, {{" dog", 0.0}}}};
    CHECK(trickiness(multi, hotdog) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("trickiness property: in [0,1], zero iff all mass on the answer") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<std::string> words{"house", "home", "HOUSE", "hut", "flat"};
    for (int t = 0; t < 300; ++t) {
        std::vector<TokenCandidate> c;
        double total = 0;
        std::vector<double> w;
        for (std::size_t i = 0; i < words.size(); ++i) w.push_back(u(rng) < 0.3 ? 0.0 : u(rng)), total += w.back();
        if (total == 0) continue;
        double correct = 0;
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (w[i] == 0) continue;
            c.push_back({words[i], std::log(w[i] / total)});
            if (i == 0 || i == 2) correct += w[i] / total;
        }
        const double v = trickiness(resp(c.front().token, c), kHouse);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(v == doctest::Approx(1.0 - correct).epsilon(1e-12));
        const bool all_correct = std::all_of(c.begin(), c.end(), [](const auto& x) { return x.token == "house" || x.token == "HOUSE"; });
        CHECK((std::abs(v) < 1e-12) == all_correct);
    }
}

TEST_CASE("response validation and JSON round-trip") {
    CHECK_THROWS_AS(LogProbResponse{}.validate(), ProtocolError);
    CHECK_THROWS_AS(resp("x", {{"x", 0.5}}).validate(), ProtocolError);
    const auto r = resp("3", {{"3", -0.1}, {"4", -2.4}});
    CHECK(response_from_json(nlohmann::json::parse(to_json(r).dump())) == r);
}

TEST_CASE("fixture store replay and miss") {
    const auto dir = temp_dir("fixtures");
    const auto prompt = render(TemplateId::short_prompt, kHouse);
    const auto key = fixture_key("short", prompt);
    CHECK(key.size() == 64);
    CHECK(key != fixture_key("basic", prompt));
    const auto recorded = resp("3", {{"3", -0.2}, {"2", -1.8}});
    {
        auto store = std::make_shared<FixtureStore>(dir);
        store->record(key, prompt, recorded);
    }
    auto reopened = std::make_shared<const FixtureStore>(dir);
    CHECK(reopened->size() == 1);
    ReplayClient replay(reopened);
    const auto a = replay.complete({"short", prompt, 1, 5});
    const auto b = replay.complete({"short", prompt, 1, 5});
    CHECK(a == recorded);
    CHECK(to_json(a).dump() == to_json(b).dump());

    try {
        replay.complete({"short", prompt + "x", 1, 5});
        FAIL("expected a fixture miss");
    } catch (const FixtureMissError& e) {
        CHECK(e.key() == fixture_key("short", prompt + "x"));
        CHECK(std::string(e.what()).find(e.key()) != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("recording client stores live responses once") {
    const auto dir = temp_dir("recording");
    auto live = std::make_shared<CountingClient>();
    auto store = std::make_shared<FixtureStore>(dir);
    RecordingClient rec(live, store);
    const auto first = rec.complete({"basic", "hello", 1, 5});
    const auto second = rec.complete({"basic", "hello", 1, 5});
    CHECK(first == second);
    CHECK(live->calls == 1);
    CHECK(FixtureStore(dir).find(fixture_key("basic", "hello")) == first);
    std::filesystem::remove_all(dir);
}

TEST_CASE("complete_all keeps request order and bounds concurrency") {
    CountingClient client;
    std::vector<CompletionRequest> reqs;
    for (int i = 0; i < 40; ++i) reqs.push_back({"basic", "p" + std::to_string(i), 1, 5});
    const auto out = complete_all(client, reqs, 3);
    REQUIRE(out.size() == reqs.size());
    for (std::size_t i = 0; i < reqs.size(); ++i) CHECK(out[i].generated_text == reqs[i].prompt);
    CHECK(client.peak <= 3);

    reqs[17].prompt = "boom";
    CHECK_THROWS_AS(complete_all(client, reqs, 4), NetworkError);
}
