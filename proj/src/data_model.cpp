#include "vocabdiff/data_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "vocabdiff/error.hpp"
#include "vocabdiff/text.hpp"
#include "vocabdiff/tsv.hpp"

namespace vocabdiff {

namespace {

struct Language {
    std::string code;
    std::string name;
    bool alphabetic;
};

const std::array<Language, 3>& languages() {
    static const std::array<Language, 3> table{{
        {"zh", "Chinese", false},
        {"de", "German", true},
        {"es", "Spanish", true},
    }};
    return table;
}

const Language* find_language(std::string_view code) {
    for (const auto& l : languages())
        if (l.code == code) return &l;
    return nullptr;
}

std::string collapse_ws_lower(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (char c : s) {
        if (c == ' ' || c == '\t') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return text::lower_first(out);
}

}  // namespace

const std::string& language_name(std::string_view code) {
    if (const auto* l = find_language(code)) return l->name;
    throw InputError("unknown L1 code '" + std::string(code) + "'");
}

bool is_known_language(std::string_view code) { return find_language(code) != nullptr; }

bool is_alphabetic_language(std::string_view code) {
    const auto* l = find_language(code);
    return l && l->alphabetic;
}

void validate_en_word(std::string_view en_word) {
    if (en_word.empty()) throw InputError("empty English word");
    const auto cps = text::to_u32(en_word);
    for (std::size_t i = 0; i < cps.size(); ++i) {
        const char32_t c = cps[i];
        if (c == U' ' || c == U'-') {
            const bool internal = i > 0 && i + 1 < cps.size();
            const bool doubled = i > 0 && (cps[i - 1] == U' ' || cps[i - 1] == U'-');
            if (!internal || doubled)
                throw InputError("English word '" + std::string(en_word) +
                                 "' has a leading, trailing or repeated separator");
            continue;
        }
        if (!text::is_letter(c))
            throw InputError("English word '" + std::string(en_word) + "' contains a non-letter");
    }
}

std::string make_clue(std::string_view en_word) {
    validate_en_word(en_word);
    const auto cps = text::to_u32(en_word);
    std::u32string out;
    out.push_back(text::to_lower(cps[0]));
    for (std::size_t i = 1; i < cps.size(); ++i) {
        out.push_back(U' ');
        const char32_t c = cps[i];
        out.push_back(c == U' ' || c == U'-' ? c : U'_');
    }
    return text::to_utf8(out);
}

std::vector<TestItem> parse_items(std::istream& in, std::string_view l1) {
    tsv::Reader reader(in);
    const auto c_id = reader.require("item_id");
    const auto c_word = reader.require("l1_word");
    const auto c_ctx = reader.require("l1_context");
    const auto c_en = reader.require("en_word");
    const auto c_gold = reader.require("gold_score");
    const auto c_l1 = reader.column("l1");
    const auto c_pos = reader.column("pos");
    const auto c_clue = reader.column("clue");
    if (!c_l1 && l1.empty()) throw InputError("missing column 'l1' and no L1 given");

    std::vector<TestItem> items;
    std::vector<std::string> f;
    while (reader.next(f)) {
        const auto row = reader.row();
        TestItem item;
        item.item_id = f[c_id];
        if (item.item_id.empty()) throw RowError(row, "empty item_id");
        item.l1 = c_l1 ? f[*c_l1] : std::string{};
        if (item.l1.empty()) item.l1 = std::string(l1);
        if (!l1.empty() && item.l1 != l1)
            throw RowError(row, "L1 '" + item.l1 + "' does not match expected '" + std::string(l1) + "'");
        if (!is_known_language(item.l1)) throw RowError(row, "unknown L1 code '" + item.l1 + "'");
        item.l1_word = f[c_word];
        item.l1_context = f[c_ctx];
        item.en_word = f[c_en];
        item.pos = c_pos ? f[*c_pos] : std::string{};
        if (item.en_word.empty()) throw RowError(row, "empty English word");
        try {
            validate_en_word(item.en_word);
        } catch (const InputError& e) {
            throw RowError(row, e.what());
        }
        const auto gold = tsv::parse_double(f[c_gold]);
        if (!gold || !std::isfinite(*gold))
            throw RowError(row, "non-numeric gold score '" + f[c_gold] + "'");
        item.gold_score = *gold;

        const std::string derived = make_clue(item.en_word);
        const std::string given = c_clue ? f[*c_clue] : std::string{};
        if (given.empty()) {
            item.clue = derived;
        } else {
            if (collapse_ws_lower(given) != collapse_ws_lower(derived))
                throw RowError(row, "clue '" + given + "' does not match English word '" + item.en_word + "'");
            item.clue = given;
        }
        items.push_back(std::move(item));
    }
    return items;
}

void write_items(std::ostream& out, const std::vector<TestItem>& items) {
    tsv::write_row(out, {"item_id", "l1", "l1_word", "l1_context", "pos", "en_word", "clue", "gold_score"});
    for (const auto& it : items)
        tsv::write_row(out, {it.item_id, it.l1, it.l1_word, it.l1_context, it.pos, it.en_word, it.clue,
                             tsv::format_double(it.gold_score)});
}

std::string_view to_string(ScaleMode mode) {
    return mode == ScaleMode::linear ? "linear" : "expit-then-linear";
}

ScaleMode scale_mode_from_string(std::string_view name) {
    if (name == "linear") return ScaleMode::linear;
    if (name == "expit-then-linear" || name == "expit") return ScaleMode::expit_then_linear;
    throw InputError("unknown scale mode '" + std::string(name) + "'");
}

double expit(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

ScaleMap::ScaleMap(double lo_raw, double hi_raw, int k, ScaleMode mode)
    : lo_(lo_raw), hi_(hi_raw), k_(k), mode_(mode) {
    if (!(std::isfinite(lo_) && std::isfinite(hi_) && lo_ < hi_))
        throw InputError("scale map requires finite lo_raw < hi_raw");
    if (k_ < 2) throw InputError("scale needs at least two points");
}

double ScaleMap::to_scale(double raw) const {
    const double x = mode_ == ScaleMode::linear ? raw : expit(raw);
    return 1.0 + (k_ - 1) * ((x - lo_) / (hi_ - lo_));
}

double ScaleMap::from_scale(double scaled) const {
    const double x = lo_ + (scaled - 1.0) / (k_ - 1) * (hi_ - lo_);
    return mode_ == ScaleMode::linear ? x : logit(x);
}

bool ScaleMap::extrapolates(double raw) const {
    const double x = mode_ == ScaleMode::linear ? raw : expit(raw);
    return x < lo_ || x > hi_;
}

ScaleMap fit_scale(const std::vector<double>& train_scores, int k, ScaleMode mode) {
    if (train_scores.size() < 2) throw InputError("fit_scale needs at least two scores");
    const auto [lo_it, hi_it] = std::minmax_element(train_scores.begin(), train_scores.end());
    double lo = *lo_it, hi = *hi_it;
    if (!(lo < hi)) throw InputError("fit_scale: all training scores are identical");
    if (mode == ScaleMode::expit_then_linear) {
        lo = expit(lo);
        hi = expit(hi);
        if (!(lo < hi)) throw InputError("fit_scale: scores indistinguishable after expit");
    }
    return ScaleMap(lo, hi, k, mode);
}

void to_json(nlohmann::json& j, const TestItem& item) {
    j = nlohmann::json{{"l1", item.l1},           {"l1_word", item.l1_word}, {"l1_context", item.l1_context},
                       {"en_word", item.en_word}, {"pos", item.pos},         {"clue", item.clue},
                       {"gold_score", item.gold_score}, {"item_id", item.item_id}};
}

void from_json(const nlohmann::json& j, TestItem& item) {
    j.at("item_id").get_to(item.item_id);
    j.at("l1").get_to(item.l1);
    j.at("l1_word").get_to(item.l1_word);
    j.at("l1_context").get_to(item.l1_context);
    j.at("en_word").get_to(item.en_word);
    item.pos = j.value("pos", std::string{});
    item.clue = j.value("clue", std::string{});
    j.at("gold_score").get_to(item.gold_score);
    validate_en_word(item.en_word);
    if (!std::isfinite(item.gold_score)) throw InputError("gold_score must be finite");
    if (item.clue.empty()) item.clue = make_clue(item.en_word);
}

void to_json(nlohmann::json& j, const ScaleMap& m) {
    j = nlohmann::json{{"lo_raw", m.lo_raw()}, {"hi_raw", m.hi_raw()}, {"k", m.k()}, {"mode", to_string(m.mode())}};
}

ScaleMap scale_map_from_json(const nlohmann::json& j) {
    return ScaleMap(j.at("lo_raw").get<double>(), j.at("hi_raw").get<double>(), j.at("k").get<int>(),
                    scale_mode_from_string(j.at("mode").get<std::string>()));
}

}  // namespace vocabdiff
