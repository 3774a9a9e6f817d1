#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "vocabdiff/error.hpp"
#include "vocabdiff/features.hpp"
#include "vocabdiff/text.hpp"

using namespace vocabdiff;

namespace {

const TestItem kHouse{"k1", "es", "casa", "Vivo en una casa grande que tiene tres dormitorios.", "house", "noun",
                      "h _ _ _ _", 3.07};

FeatureSchema schema_of(const std::string& json) { return schema_from_json(nlohmann::json::parse(json)); }

}  // namespace

TEST_CASE("log_frequency") {
    const FrequencyTable t("bnc", {{"house", 999}, {"zero", 0}, {"hot dog", 4}, {"hot", 9}});
    CHECK(*log_frequency(t, "house") == doctest::Approx(std::log(1000.0)).epsilon(1e-15));
    CHECK(*log_frequency(t, "house") == doctest::Approx(6.9078).epsilon(1e-4));
    CHECK(*log_frequency(t, "House") == *log_frequency(t, "house"));
    CHECK_FALSE(log_frequency(t, "absent"));
    CHECK(*log_frequency(t, "zero") == 0.0);
    CHECK(*log_frequency(t, "hot dog") == doctest::Approx(std::log(5.0)));
    CHECK(*log_frequency(t, "hot dog", MultiwordLookup::first_token) == doctest::Approx(std::log(10.0)));
    CHECK(t.total() == 1012);
}

TEST_CASE("log_frequency is monotone in count") {
    std::map<std::string, double> counts;
    for (int c = 0; c < 200; ++c) counts["w" + std::to_string(c)] = c * 3.5;
    const FrequencyTable t("x", counts);
    for (int c = 1; c < 200; ++c)
        CHECK(*log_frequency(t, "w" + std::to_string(c)) > *log_frequency(t, "w" + std::to_string(c - 1)));
}

TEST_CASE("frequency table loading") {
    std::istringstream in("word\tcount\nHouse\t3\nhouse\t2\ncat\t1\n");
    const auto t = FrequencyTable::load("bnc", in);
    CHECK(*t.count("house") == 5);
    std::istringstream bad("house\t-1\n");
    CHECK_THROWS_AS(FrequencyTable::load("bnc", bad), InputError);
}

TEST_CASE("l1_similarity examples") {
    CHECK(l1_similarity("house", "house") == 1.0);
    CHECK(l1_similarity("house", "casa") == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(l1_similarity("music", "Musik") == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(l1_similarity("sinonimo", "sinónimo") == 1.0);
    CHECK(l1_similarity("street", "Straße") == doctest::Approx(1.0 - oracle::levenshtein_matrix(U"street", U"strasse") / 7.0));
    CHECK_THROWS_AS(l1_similarity("", "x"), InputError);
}

TEST_CASE("l1_similarity properties against the DP oracle") {
    std::mt19937 rng(2024);
    const std::u32string alphabet = U"abcdeäöüéñ";
    std::uniform_int_distribution<int> len(1, 12);
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    auto random_word = [&] {
        std::u32string w;
        const int n = len(rng);
        for (int i = 0; i < n; ++i) w += alphabet[pick(rng)];
        return w;
    };
    for (int t = 0; t < 1000; ++t) {
        const auto a = random_word(), b = random_word();
        CHECK(levenshtein(a, b) == oracle::levenshtein_matrix(a, b));
        const auto au = text::to_utf8(a), bu = text::to_utf8(b);
        const double s = l1_similarity(au, bu);
        const auto fa = text::fold_for_comparison(au), fb = text::fold_for_comparison(bu);
        const double expect =
            1.0 - static_cast<double>(oracle::levenshtein_matrix(fa, fb)) / static_cast<double>(std::max(fa.size(), fb.size()));
        CHECK(s == doctest::Approx(expect).epsilon(1e-15));
        CHECK(s == l1_similarity(bu, au));
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
        CHECK((s == 1.0) == (fa == fb));
        CHECK(l1_similarity("sinónimo", au) == l1_similarity("sinonimo", au));
    }
}

TEST_CASE("word_length") {
    CHECK(word_length("house") == 5);
    CHECK(word_length("hot dog") == 6);
    CHECK(word_length("a") == 1);
    CHECK(word_length("x-ray") == 4);
}

TEST_CASE("CEFR encoding") {
    CHECK(*encode_cefr(CefrLevel::A1) == 1.0);
    CHECK(*encode_cefr(CefrLevel::C2) == 6.0);
    CHECK_FALSE(encode_cefr(std::nullopt));
    CHECK(parse_cefr("b2") == CefrLevel::B2);
    CHECK_FALSE(parse_cefr("NA"));
    CHECK_FALSE(parse_cefr(""));
    CHECK_THROWS_AS(parse_cefr("D1"), InputError);
    std::istringstream in("word\tlevel\nhouse\tA1\nhouse\tB2\nrare\tNA\n");
    const auto t = load_cefr_table(in);
    CHECK(t.at("house") == CefrLevel::A1);
    CHECK_FALSE(t.at("rare"));
}

TEST_CASE("assemble") {
    const auto len_only = schema_of(R"({"features":[{"name":"word_length","source":"word_length"}]})");
    const auto rows = assemble({kHouse}, len_only, {}, {}).rows;
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].item_id == "k1");
    CHECK(*rows[0].get("word_length") == 5.0);

    CHECK(assemble({}, len_only, {}, {}).rows.empty());

    const auto freq = schema_of(R"({"features":[{"name":"f","source":"log_freq:bnc"}]})");
    CHECK_THROWS_WITH_AS(assemble({kHouse}, freq, {}, {}), doctest::Contains("bnc"), InputError);

    Resources res;
    res.frequency.emplace("bnc", FrequencyTable("bnc", {{"house", 999}}));
    res.cefr["evp"] = {{"house", CefrLevel::A1}};
    const auto full = schema_of(R"({"features":[
        {"name":"len","source":"word_length","required":true},
        {"name":"sim","source":"l1_similarity"},
        {"name":"f","source":"log_freq:bnc","group":"frequency"},
        {"name":"cefr","source":"cefr:evp"},
        {"name":"amb","source":"prompt:ambiguity"}]})");
    TestItem zh = kHouse;
    zh.item_id = "k2";
    zh.l1 = "zh";
    zh.l1_word = "房子";
    zh.en_word = "abode";
    zh.clue = "a _ _ _ _";
    const PromptValues pv{{"ambiguity", {{"k1", 0.25}}}};
    const auto out = assemble({kHouse, zh}, full, res, pv);
    REQUIRE(out.rows.size() == 2);
    CHECK(out.rows[0].names == std::vector<std::string>{"len", "sim", "f", "cefr", "amb"});
    CHECK(*out.rows[0].get("sim") == doctest::Approx(0.2));
    CHECK(*out.rows[0].get("cefr") == 1.0);
    CHECK(*out.rows[0].get("amb") == 0.25);
    CHECK_FALSE(out.rows[1].get("sim"));
    CHECK_FALSE(out.rows[1].get("f"));
    CHECK(out.missing_rate.at("f") == 0.5);
    CHECK(out.missing_rate.at("len") == 0.0);
    CHECK(full.groups().at("frequency") == std::vector<std::string>{"f"});

    const auto required = schema_of(R"({"features":[{"name":"f","source":"log_freq:bnc","required":true}]})");
    CHECK_THROWS_AS(assemble({zh}, required, res, {}), InputError);

    // Deterministic and order-preserving.
    const auto again = assemble({kHouse, zh}, full, res, pv);
    CHECK(again.rows == out.rows);
    const auto reversed = assemble({zh, kHouse}, full, res, pv);
    CHECK(reversed.rows[0] == out.rows[1]);
    CHECK(reversed.rows[1] == out.rows[0]);
}

TEST_CASE("feature CSV round-trip") {
    std::vector<FeatureRow> rows{{"a", {"x", "y"}, {1.5, std::nullopt}}, {"b", {"x", "y"}, {-0.1, 2.0}}};
    std::ostringstream out;
    write_feature_csv(out, rows);
    CHECK(out.str().find("NA") != std::string::npos);
    std::istringstream in(out.str());
    CHECK(read_feature_csv(in) == rows);
}
