#pragma once

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vocabdiff/data_model.hpp"

namespace vocabdiff {

// std::nullopt is the MISSING marker.
using FeatureValue = std::optional<double>;

enum class MultiwordLookup { exact, first_token };

// Word counts from one corpus. Lookup lowercases the query.
class FrequencyTable {
public:
    // total == 0 means "sum of counts".
    FrequencyTable(std::string name, std::map<std::string, double> counts, double total = 0.0);

    // Two-column TSV: word<TAB>count. An optional header row "word\tcount" is
    // skipped. Words are lowercased; duplicate words after lowercasing add up.
    static FrequencyTable load(std::string name, std::istream& in);

    const std::string& name() const { return name_; }
    double total() const { return total_; }
    std::optional<double> count(std::string_view word, MultiwordLookup lookup = MultiwordLookup::exact) const;

private:
    std::string name_;
    std::map<std::string, double> counts_;
    double total_;
};

// ln(count + 1); MISSING when the word is not in the table.
FeatureValue log_frequency(const FrequencyTable& table, std::string_view word,
                           MultiwordLookup lookup = MultiwordLookup::exact);

// Edit distance over Unicode code points.
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);

// 1 - lev(a', b') / max(|a'|, |b'|) on lowercased, diacritic-free forms.
double l1_similarity(std::string_view en_word, std::string_view l1_word);

// Letters only; spaces and hyphens do not count.
int word_length(std::string_view en_word);

enum class CefrLevel { A1 = 1, A2, B1, B2, C1, C2 };

// "A1".."C2" (case-insensitive); "", "NA" and "-" are MISSING. Other labels
// raise InputError.
std::optional<CefrLevel> parse_cefr(std::string_view label);
FeatureValue encode_cefr(std::optional<CefrLevel> level);

// word -> minimum CEFR level.
using CefrTable = std::map<std::string, std::optional<CefrLevel>>;
CefrTable load_cefr_table(std::istream& in);

// word -> arbitrary numeric value (Glasgow norms, other corpora, ...).
using NumericColumn = std::map<std::string, double>;
NumericColumn load_numeric_column(std::istream& in);

// One schema entry. `source` is one of
//   word_length | l1_similarity | log_freq:<table> | cefr:<table> |
//   column:<table> | prompt:<name>
// `group` names the SHAP aggregation group (defaults to the feature name).
struct FeatureSpec {
    std::string name;
    std::string source;
    bool required = false;
    std::string group;
};

struct FeatureSchema {
    std::vector<FeatureSpec> features;
    MultiwordLookup multiword = MultiwordLookup::exact;

    std::vector<std::string> names() const;
    // group -> member feature names, in schema order.
    std::map<std::string, std::vector<std::string>> groups() const;
};

FeatureSchema schema_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FeatureSchema& schema);

struct Resources {
    std::map<std::string, FrequencyTable> frequency;
    std::map<std::string, CefrTable> cefr;
    std::map<std::string, NumericColumn> columns;
};

// name -> item_id -> value, for prompt-derived and other per-item columns.
using PromptValues = std::map<std::string, std::map<std::string, double>>;

struct FeatureRow {
    std::string item_id;
    std::vector<std::string> names;
    std::vector<FeatureValue> values;

    FeatureValue get(std::string_view name) const;
    bool operator==(const FeatureRow&) const = default;
};

struct AssembledFeatures {
    std::vector<FeatureRow> rows;
    // feature name -> fraction of rows with MISSING.
    std::map<std::string, double> missing_rate;
};

// One row per item in input order. A required feature that resolves to
// MISSING raises InputError naming the item and feature.
AssembledFeatures assemble(const std::vector<TestItem>& items, const FeatureSchema& schema,
                           const Resources& resources, const PromptValues& prompt_values);

// item_id,<features...> with "NA" for MISSING.
void write_feature_csv(std::ostream& out, const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> read_feature_csv(std::istream& in);

}  // namespace vocabdiff
