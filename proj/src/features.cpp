#include "vocabdiff/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vocabdiff/error.hpp"
#include "vocabdiff/text.hpp"
#include "vocabdiff/tsv.hpp"

namespace vocabdiff {

namespace {

std::string lowercase(std::string_view s) {
    auto cps = text::to_u32(s);
    for (auto& c : cps) c = text::to_lower(c);
    return text::to_utf8(cps);
}

}  // namespace

FrequencyTable::FrequencyTable(std::string name, std::map<std::string, double> counts, double total)
    : name_(std::move(name)), counts_(std::move(counts)), total_(total) {
    double sum = 0.0;
    for (const auto& [w, c] : counts_) {
        if (!(c >= 0.0) || !std::isfinite(c))
            throw InputError("frequency table '" + name_ + "': negative or non-finite count for '" + w + "'");
        sum += c;
    }
    if (total_ == 0.0) total_ = sum;
    if (!(total_ > 0.0)) throw InputError("frequency table '" + name_ + "' has no positive total");
    for (const auto& [w, c] : counts_)
        if (c > total_) throw InputError("frequency table '" + name_ + "': count for '" + w + "' exceeds total");
}

FrequencyTable FrequencyTable::load(std::string name, std::istream& in) {
    std::map<std::string, double> counts;
    std::string line;
    std::size_t row = 0;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const auto f = tsv::split(line);
        if (f.size() != 2) throw RowError(row, "expected word<TAB>count");
        const auto c = tsv::parse_double(f[1]);
        if (first && !c) {
            first = false;
            continue;
        }
        first = false;
        if (!c) throw RowError(row, "non-numeric count '" + f[1] + "'");
        counts[lowercase(f[0])] += *c;
    }
    return FrequencyTable(std::move(name), std::move(counts));
}

std::optional<double> FrequencyTable::count(std::string_view word, MultiwordLookup lookup) const {
    std::string key = lowercase(word);
    if (lookup == MultiwordLookup::first_token) {
        const auto sp = key.find_first_of(" -");
        if (sp != std::string::npos) key.resize(sp);
    }
    const auto it = counts_.find(key);
    if (it == counts_.end()) return std::nullopt;
    return it->second;
}

FeatureValue log_frequency(const FrequencyTable& table, std::string_view word, MultiwordLookup lookup) {
    const auto c = table.count(word, lookup);
    if (!c) return std::nullopt;
    return std::log(*c + 1.0);
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double l1_similarity(std::string_view en_word, std::string_view l1_word) {
    if (en_word.empty() || l1_word.empty()) throw InputError("l1_similarity needs two non-empty words");
    const auto a = text::fold_for_comparison(en_word);
    const auto b = text::fold_for_comparison(l1_word);
    const std::size_t denom = std::max(a.size(), b.size());
    if (denom == 0) throw InputError("l1_similarity: words are empty after normalisation");
    return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(denom);
}

int word_length(std::string_view en_word) {
    const auto cps = text::to_u32(en_word);
    return static_cast<int>(std::count_if(cps.begin(), cps.end(), [](char32_t c) { return text::is_letter(c); }));
}

std::optional<CefrLevel> parse_cefr(std::string_view label) {
    const std::string s = text::trim(label);
    if (s.empty() || s == "NA" || s == "-") return std::nullopt;
    if (s.size() == 2) {
        const char band = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
        const char step = s[1];
        if ((band == 'A' || band == 'B' || band == 'C') && (step == '1' || step == '2'))
            return static_cast<CefrLevel>((band - 'A') * 2 + (step - '0'));
    }
    throw InputError("unknown CEFR label '" + s + "'");
}

FeatureValue encode_cefr(std::optional<CefrLevel> level) {
    if (!level) return std::nullopt;
    return static_cast<double>(static_cast<int>(*level));
}

CefrTable load_cefr_table(std::istream& in) {
    CefrTable table;
    std::string line;
    std::size_t row = 0;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const auto f = tsv::split(line);
        if (f.size() != 2) throw RowError(row, "expected word<TAB>level");
        std::optional<CefrLevel> level;
        try {
            level = parse_cefr(f[1]);
        } catch (const InputError& e) {
            if (first) {
                first = false;
                continue;
            }
            throw RowError(row, e.what());
        }
        first = false;
        auto& slot = table[lowercase(f[0])];
        // Keep the minimum level when a word is listed more than once.
        if (!slot || (level && *level < *slot)) slot = level;
    }
    return table;
}

NumericColumn load_numeric_column(std::istream& in) {
    NumericColumn col;
    std::string line;
    std::size_t row = 0;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const auto f = tsv::split(line);
        if (f.size() != 2) throw RowError(row, "expected key<TAB>value");
        const auto v = tsv::parse_double(f[1]);
        if (first && !v) {
            first = false;
            continue;
        }
        first = false;
        if (!v) throw RowError(row, "non-numeric value '" + f[1] + "'");
        col[f[0]] = *v;
    }
    return col;
}

std::vector<std::string> FeatureSchema::names() const {
    std::vector<std::string> out;
    for (const auto& f : features) out.push_back(f.name);
    return out;
}

std::map<std::string, std::vector<std::string>> FeatureSchema::groups() const {
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& f : features) out[f.group.empty() ? f.name : f.group].push_back(f.name);
    return out;
}

FeatureSchema schema_from_json(const nlohmann::json& j) {
    FeatureSchema schema;
    const nlohmann::json* list = &j;
    if (j.is_object()) {
        list = &j.at("features");
        const auto mw = j.value("multiword_lookup", std::string("exact"));
        if (mw == "exact")
            schema.multiword = MultiwordLookup::exact;
        else if (mw == "first_token")
            schema.multiword = MultiwordLookup::first_token;
        else
            throw InputError("unknown multiword_lookup '" + mw + "'");
    }
    if (!list->is_array()) throw InputError("feature schema must be a JSON list");
    std::map<std::string, int> seen;
    for (const auto& e : *list) {
        FeatureSpec f;
        f.name = e.at("name").get<std::string>();
        f.source = e.at("source").get<std::string>();
        f.required = e.value("required", false);
        f.group = e.value("group", std::string{});
        if (f.name.empty()) throw InputError("feature schema entry with empty name");
        if (seen[f.name]++) throw InputError("duplicate feature '" + f.name + "' in schema");
        schema.features.push_back(std::move(f));
    }
    return schema;
}

nlohmann::json to_json(const FeatureSchema& schema) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& f : schema.features) {
        nlohmann::json e{{"name", f.name}, {"source", f.source}, {"required", f.required}};
        if (!f.group.empty()) e["group"] = f.group;
        list.push_back(std::move(e));
    }
    return nlohmann::json{{"features", list},
                          {"multiword_lookup", schema.multiword == MultiwordLookup::exact ? "exact" : "first_token"}};
}

FeatureValue FeatureRow::get(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return values[i];
    throw InputError("feature '" + std::string(name) + "' not in row");
}

namespace {

enum class SourceKind { word_length, l1_similarity, log_freq, cefr, column, prompt };

struct ResolvedSource {
    SourceKind kind;
    const FrequencyTable* freq = nullptr;
    const CefrTable* cefr = nullptr;
    const NumericColumn* column = nullptr;
    const std::map<std::string, double>* prompt = nullptr;
};

ResolvedSource resolve(const FeatureSpec& spec, const Resources& res, const PromptValues& prompt_values) {
    const auto& s = spec.source;
    if (s == "word_length") return {SourceKind::word_length};
    if (s == "l1_similarity") return {SourceKind::l1_similarity};
    const auto colon = s.find(':');
    if (colon == std::string::npos)
        throw InputError("feature '" + spec.name + "': unknown source '" + s + "'");
    const std::string kind = s.substr(0, colon), ref = s.substr(colon + 1);
    auto absent = [&](const char* what) {
        return InputError("feature '" + spec.name + "': " + what + " '" + ref + "' not supplied");
    };
    if (kind == "log_freq") {
        const auto it = res.frequency.find(ref);
        if (it == res.frequency.end()) throw absent("frequency table");
        return {SourceKind::log_freq, &it->second};
    }
    if (kind == "cefr") {
        const auto it = res.cefr.find(ref);
        if (it == res.cefr.end()) throw absent("CEFR table");
        return {SourceKind::cefr, nullptr, &it->second};
    }
    if (kind == "column") {
        const auto it = res.columns.find(ref);
        if (it == res.columns.end()) throw absent("numeric column");
        return {SourceKind::column, nullptr, nullptr, &it->second};
    }
    if (kind == "prompt") {
        const auto it = prompt_values.find(ref);
        if (it == prompt_values.end()) throw absent("prompt values");
        return {SourceKind::prompt, nullptr, nullptr, nullptr, &it->second};
    }
    throw InputError("feature '" + spec.name + "': unknown source kind '" + kind + "'");
}

FeatureValue evaluate(const ResolvedSource& src, const TestItem& item, MultiwordLookup mw) {
    switch (src.kind) {
        case SourceKind::word_length:
            return static_cast<double>(word_length(item.en_word));
        case SourceKind::l1_similarity:
            if (!is_alphabetic_language(item.l1) || item.l1_word.empty()) return std::nullopt;
            return l1_similarity(item.en_word, item.l1_word);
        case SourceKind::log_freq:
            return log_frequency(*src.freq, item.en_word, mw);
        case SourceKind::cefr: {
            const auto it = src.cefr->find(lowercase(item.en_word));
            if (it == src.cefr->end()) return std::nullopt;
            return encode_cefr(it->second);
        }
        case SourceKind::column: {
            auto it = src.column->find(item.en_word);
            if (it == src.column->end()) it = src.column->find(lowercase(item.en_word));
            if (it == src.column->end()) return std::nullopt;
            return it->second;
        }
        case SourceKind::prompt: {
            const auto it = src.prompt->find(item.item_id);
            if (it == src.prompt->end()) return std::nullopt;
            return it->second;
        }
    }
    return std::nullopt;
}

}  // namespace

AssembledFeatures assemble(const std::vector<TestItem>& items, const FeatureSchema& schema,
                           const Resources& resources, const PromptValues& prompt_values) {
    std::vector<ResolvedSource> sources;
    for (const auto& f : schema.features) sources.push_back(resolve(f, resources, prompt_values));
    const auto names = schema.names();

    AssembledFeatures out;
    std::vector<std::size_t> missing(names.size(), 0);
    for (const auto& item : items) {
        FeatureRow row{item.item_id, names, {}};
        row.values.reserve(names.size());
        for (std::size_t i = 0; i < sources.size(); ++i) {
            const auto v = evaluate(sources[i], item, schema.multiword);
            if (!v) {
                if (schema.features[i].required)
                    throw InputError("item '" + item.item_id + "': required feature '" + names[i] + "' is missing");
                ++missing[i];
            }
            row.values.push_back(v);
        }
        out.rows.push_back(std::move(row));
    }
    for (std::size_t i = 0; i < names.size(); ++i)
        out.missing_rate[names[i]] =
            items.empty() ? 0.0 : static_cast<double>(missing[i]) / static_cast<double>(items.size());
    return out;
}

void write_feature_csv(std::ostream& out, const std::vector<FeatureRow>& rows) {
    if (rows.empty()) {
        out << "item_id\n";
        return;
    }
    std::vector<std::string> header{"item_id"};
    header.insert(header.end(), rows.front().names.begin(), rows.front().names.end());
    tsv::write_row(out, header, ',');
    for (const auto& r : rows) {
        if (r.names != rows.front().names) throw InputError("feature rows do not share a schema");
        std::vector<std::string> f{r.item_id};
        for (const auto& v : r.values) f.push_back(v ? tsv::format_double(*v) : "NA");
        tsv::write_row(out, f, ',');
    }
}

std::vector<FeatureRow> read_feature_csv(std::istream& in) {
    tsv::Reader reader(in, ',');
    const auto& header = reader.header();
    if (header.empty() || header[0] != "item_id") throw InputError("feature CSV must start with an item_id column");
    const std::vector<std::string> names(header.begin() + 1, header.end());
    std::vector<FeatureRow> rows;
    std::vector<std::string> f;
    while (reader.next(f)) {
        FeatureRow row{f[0], names, {}};
        for (std::size_t i = 1; i < f.size(); ++i) {
            if (f[i] == "NA") {
                row.values.emplace_back(std::nullopt);
                continue;
            }
            const auto v = tsv::parse_double(f[i]);
            if (!v) throw RowError(reader.row(), "non-numeric feature value '" + f[i] + "'");
            row.values.emplace_back(*v);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace vocabdiff
