#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace vocabdiff {

// Display name for an L1 code ("es" -> "Spanish"). Throws InputError for
// codes outside the registry.
const std::string& language_name(std::string_view code);
bool is_known_language(std::string_view code);
// Languages written in an alphabet; L1 similarity is undefined for the rest.
bool is_alphabetic_language(std::string_view code);

// One vocabulary test item. gold_score is the GLMM intercept (log-odds of a
// correct response, higher = easier).
struct TestItem {
    std::string item_id;
    std::string l1;
    std::string l1_word;
    std::string l1_context;
    std::string en_word;
    std::string pos;
    std::string clue;
    double gold_score = 0.0;

    bool operator==(const TestItem&) const = default;
};

// Throws InputError when en_word is not letters with internal single spaces
// or hyphens.
void validate_en_word(std::string_view en_word);

// First letter lowercased, then one underscore per remaining letter, all
// space-separated. Spaces and hyphens inside the word are kept as literal
// tokens: "hot dog" -> "h _ _   _ _ _", "x-ray" -> "x - _ _ _".
std::string make_clue(std::string_view en_word);

// Header must name item_id, l1_word, l1_context, en_word, gold_score; l1, pos
// and clue are optional. An empty clue is generated; a present clue must
// match make_clue up to whitespace and case. When `l1` is non-empty it fills
// empty l1 cells and every row must agree with it.
std::vector<TestItem> parse_items(std::istream& in, std::string_view l1 = {});
void write_items(std::ostream& out, const std::vector<TestItem>& items);

enum class ScaleMode { linear, expit_then_linear };

std::string_view to_string(ScaleMode mode);
ScaleMode scale_mode_from_string(std::string_view name);

// Affine bijection between raw scores and the rating scale [1, k]. In
// expit mode the raw score is squashed by the logistic function first and
// lo_raw/hi_raw live in probability space.
class ScaleMap {
public:
    ScaleMap(double lo_raw, double hi_raw, int k, ScaleMode mode = ScaleMode::linear);

    double lo_raw() const { return lo_; }
    double hi_raw() const { return hi_; }
    int k() const { return k_; }
    ScaleMode mode() const { return mode_; }

    double to_scale(double raw) const;
    double from_scale(double scaled) const;
    // True when raw falls outside the fitted range and to_scale extrapolates.
    bool extrapolates(double raw) const;

    bool operator==(const ScaleMap&) const = default;

private:
    double lo_;
    double hi_;
    int k_;
    ScaleMode mode_;
};

// Highest training score -> k, lowest -> 1.
ScaleMap fit_scale(const std::vector<double>& train_scores, int k, ScaleMode mode = ScaleMode::linear);

double expit(double x);
double logit(double p);

void to_json(nlohmann::json& j, const TestItem& item);
void from_json(const nlohmann::json& j, TestItem& item);
void to_json(nlohmann::json& j, const ScaleMap& m);
ScaleMap scale_map_from_json(const nlohmann::json& j);

}  // namespace vocabdiff
