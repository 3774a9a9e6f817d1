#include "vocabdiff/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "vocabdiff/data_model.hpp"
#include "vocabdiff/digest.hpp"
#include "vocabdiff/ensemble.hpp"
#include "vocabdiff/error.hpp"
#include "vocabdiff/evaluation.hpp"
#include "vocabdiff/features.hpp"
#include "vocabdiff/gbtree.hpp"
#include "vocabdiff/prompting.hpp"
#include "vocabdiff/toy_rater.hpp"
#include "vocabdiff/tsv.hpp"

namespace vocabdiff::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kAdditivityTolerance = 1e-9;

class InternalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// --- file helpers ---------------------------------------------------------------

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    return in;
}

std::string read_text(const std::string& path) {
    auto in = open_input(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::string& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw InputError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write '" + path.string() + "'");
        out << content;
        out.flush();
        if (!out) throw InternalError("write to '" + tmp.string() + "' failed");
    }
    fs::rename(tmp, path);
}

std::pair<std::string, std::string> split_assignment(const std::string& text, const std::string& flag) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError(flag + " expects name=value, got '" + text + "'");
    return {text.substr(0, eq), text.substr(eq + 1)};
}

// --- manifest -------------------------------------------------------------------

class Manifest {
public:
    Manifest(std::string subcommand, const CLI::App& sub) : sub_(std::move(subcommand)) {
        for (const CLI::Option* opt : sub.get_options()) {
            const std::string name = opt->get_name(false, true);
            if (name == "--help" || name == "-h" || name.empty()) continue;
            if (opt->count() > 0) {
                const auto& res = opt->results();
                config_[name] = res.size() == 1 && opt->get_expected_max() <= 1 ? json(res.front()) : json(res);
            } else if (!opt->get_default_str().empty()) {
                config_[name] = opt->get_default_str();
            }
        }
    }

    void input(const std::string& path) { inputs_[path] = sha256_file(path); }
    void seed(std::uint64_t s) { seed_ = s; }
    void output(const std::string& path) { outputs_.push_back(path); }
    void note(const std::string& key, json value) { extra_[key] = std::move(value); }

    void write(const fs::path& path) const {
        json j{{"subcommand", sub_}, {"config", config_}, {"inputs", inputs_}, {"outputs", outputs_}};
        j["seed"] = seed_ ? json(*seed_) : json(nullptr);
        for (const auto& [k, v] : extra_.items()) j[k] = v;
        write_atomic(path, j.dump(2) + "\n");
    }

private:
    std::string sub_;
    json config_ = json::object();
    json inputs_ = json::object();
    json outputs_ = json::array();
    json extra_ = json::object();
    std::optional<std::uint64_t> seed_;
};

fs::path manifest_path_for(const std::string& output) { return fs::path(output + ".manifest.json"); }

// --- shared readers -------------------------------------------------------------

std::vector<TestItem> load_items(const std::string& path, const std::string& l1 = {}) {
    auto in = open_input(path);
    try {
        return parse_items(in, l1);
    } catch (const RowError& e) {
        throw InputError(path + ": " + e.what());
    }
}

struct ScoreRow {
    std::string id;
    double value;
    std::string l1;
};

// Reads item_id plus the first present column among `value_columns`, and an
// optional l1 column.
std::vector<ScoreRow> load_scores(const std::string& path, const std::vector<std::string>& value_columns) {
    auto in = open_input(path);
    tsv::Reader r(in);
    const auto id_col = r.require("item_id");
    std::optional<std::size_t> val_col;
    for (const auto& c : value_columns)
        if ((val_col = r.column(c))) break;
    if (!val_col) throw InputError(path + ": missing column '" + value_columns.front() + "'");
    const auto l1_col = r.column("l1");
    std::vector<ScoreRow> rows;
    std::set<std::string> seen;
    std::vector<std::string> f;
    while (r.next(f)) {
        const auto v = tsv::parse_double(f[*val_col]);
        if (!v || !std::isfinite(*v))
            throw InputError(path + ": row " + std::to_string(r.row()) + ": bad number '" + f[*val_col] + "'");
        if (!seen.insert(f[id_col]).second)
            throw InputError(path + ": row " + std::to_string(r.row()) + ": duplicate item id '" + f[id_col] + "'");
        rows.push_back({f[id_col], *v, l1_col ? f[*l1_col] : std::string{}});
    }
    return rows;
}

struct ColumnTable {
    std::vector<std::string> ids;
    NamedColumns columns;
};

ColumnTable load_column_table(const std::string& path) {
    auto in = open_input(path);
    tsv::Reader r(in);
    const auto id_col = r.require("item_id");
    ColumnTable t;
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < r.header().size(); ++c)
        if (c != id_col) {
            cols.push_back(c);
            t.columns.names.push_back(r.header()[c]);
        }
    if (cols.empty()) throw InputError(path + ": no value columns");
    t.columns.columns.resize(cols.size());
    std::vector<std::string> f;
    while (r.next(f)) {
        t.ids.push_back(f[id_col]);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            const auto v = tsv::parse_double(f[cols[k]]);
            if (!v || !std::isfinite(*v))
                throw InputError(path + ": row " + std::to_string(r.row()) + ": bad number '" + f[cols[k]] + "'");
            t.columns.columns[k].push_back(*v);
        }
    }
    return t;
}

std::vector<FeatureRow> load_feature_rows(const std::string& path) {
    auto in = open_input(path);
    try {
        return read_feature_csv(in);
    } catch (const RowError& e) {
        throw InputError(path + ": " + e.what());
    }
}

void write_predictions(const std::string& path, const std::vector<std::string>& ids, const std::vector<double>& pred,
                       const std::vector<bool>& extrapolated) {
    std::ostringstream out;
    tsv::write_row(out, {"item_id", "prediction", "flag"});
    for (std::size_t i = 0; i < ids.size(); ++i)
        tsv::write_row(out, {ids[i], tsv::format_double(pred[i]), extrapolated[i] ? "extrapolated" : "ok"});
    write_atomic(path, out.str());
}

std::string html_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// --- prompt bindings ------------------------------------------------------------

struct PromptOptions {
    std::string template_name;
    std::vector<std::string> set;
    std::string bindings_path;
    bool demos = false;
    std::string examples_from;
    int scale_k = 5;
};

class BindingSource {
public:
    BindingSource(const PromptOptions& opt, Manifest& manifest) : opt_(opt), id_(template_from_string(opt.template_name)) {
        for (const auto& s : opt.set) fixed_.insert(split_assignment(s, "--set"));
        if (!opt.bindings_path.empty()) {
            manifest.input(opt.bindings_path);
            auto in = open_input(opt.bindings_path);
            tsv::Reader r(in);
            const auto id_col = r.require("item_id");
            std::vector<std::string> f;
            while (r.next(f)) {
                Bindings b;
                for (std::size_t c = 0; c < f.size(); ++c)
                    if (c != id_col && !f[c].empty()) b[r.header()[c]] = f[c];
                per_item_[f[id_col]] = std::move(b);
            }
        }
        if (!opt.examples_from.empty()) {
            manifest.input(opt.examples_from);
            train_ = load_items(opt.examples_from);
        }
    }

    TemplateId id() const { return id_; }

    Bindings for_item(const TestItem& item) {
        Bindings b = opt_.demos ? reference_demonstrations(id_, item.l1) : Bindings{};
        for (const auto& [k, v] : fixed_) b[k] = v;
        if (const auto it = per_item_.find(item.item_id); it != per_item_.end())
            for (const auto& [k, v] : it->second) b[k] = v;
        if (!train_.empty()) b["examples"] = examples_for(item.l1);
        return b;
    }

private:
    const std::string& examples_for(const std::string& l1) {
        auto it = examples_.find(l1);
        if (it != examples_.end()) return it->second;
        std::vector<double> scores;
        for (const auto& t : train_)
            if (t.l1 == l1) scores.push_back(t.gold_score);
        if (scores.size() < 2) throw InputError("not enough training items for L1 '" + l1 + "' to pick examples");
        const ScaleMap scale = fit_scale(scores, opt_.scale_k);
        return examples_[l1] = format_difficulty_examples(select_difficulty_examples(train_, scale, l1));
    }

    const PromptOptions& opt_;
    TemplateId id_;
    Bindings fixed_;
    std::map<std::string, Bindings> per_item_;
    std::vector<TestItem> train_;
    std::map<std::string, std::string> examples_;
};

void add_prompt_options(CLI::App* sub, PromptOptions& p) {
    sub->add_option("--template", p.template_name, "Template id")->required();
    sub->add_option("--set", p.set, "Extra binding name=value (repeatable)");
    sub->add_option("--bindings", p.bindings_path, "TSV of per-item bindings (item_id + placeholder columns)");
    sub->add_flag("--demos", p.demos, "Bind the reference demonstrations for the item's L1");
    sub->add_option("--examples-from", p.examples_from, "Items TSV to draw difficulty-prompt examples from");
    sub->add_option("--examples-scale", p.scale_k, "Scale size used to rate drawn examples")->capture_default_str();
}

// --- subcommands ----------------------------------------------------------------

struct Context {
    std::ostream& out;
    std::ostream& err;
};

struct IngestOpts {
    std::string items, l1, out, scale_out, scale_mode = "linear";
    int scale_k = 5;
};

void cmd_ingest(const IngestOpts& o, const CLI::App& sub, Context& ctx) {
    Manifest m("ingest", sub);
    m.input(o.items);
    const auto items = load_items(o.items, o.l1);
    std::ostringstream s;
    write_items(s, items);
    write_atomic(o.out, s.str());
    m.output(o.out);
    if (!o.scale_out.empty()) {
        std::vector<double> scores;
        for (const auto& it : items) scores.push_back(it.gold_score);
        json j;
        to_json(j, fit_scale(scores, o.scale_k, scale_mode_from_string(o.scale_mode)));
        write_atomic(o.scale_out, j.dump(2) + "\n");
        m.output(o.scale_out);
    }
    m.note("items", items.size());
    m.write(manifest_path_for(o.out));
    ctx.out << "ingested " << items.size() << " items\n";
}

struct FeaturesOpts {
    std::string items, schema, out;
    std::vector<std::string> freq, cefr, column, prompt_values;
};

void cmd_features(const FeaturesOpts& o, const CLI::App& sub, Context& ctx) {
    Manifest m("features", sub);
    m.input(o.items);
    m.input(o.schema);
    const auto items = load_items(o.items);
    FeatureSchema schema;
    try {
        schema = schema_from_json(read_json(o.schema));
    } catch (const json::exception& e) {
        throw InputError(o.schema + ": " + e.what());
    }
    Resources res;
    for (const auto& spec : o.freq) {
        const auto [name, path] = split_assignment(spec, "--freq");
        m.input(path);
        auto in = open_input(path);
        res.frequency.emplace(name, FrequencyTable::load(name, in));
    }
    for (const auto& spec : o.cefr) {
        const auto [name, path] = split_assignment(spec, "--cefr");
        m.input(path);
        auto in = open_input(path);
        res.cefr.emplace(name, load_cefr_table(in));
    }
    for (const auto& spec : o.column) {
        const auto [name, path] = split_assignment(spec, "--column");
        m.input(path);
        auto in = open_input(path);
        res.columns.emplace(name, load_numeric_column(in));
    }
    PromptValues pv;
    for (const auto& path : o.prompt_values) {
        m.input(path);
        const auto t = load_column_table(path);
        for (std::size_t c = 0; c < t.columns.names.size(); ++c)
            for (std::size_t i = 0; i < t.ids.size(); ++i) pv[t.columns.names[c]][t.ids[i]] = t.columns.columns[c][i];
    }
    const auto assembled = assemble(items, schema, res, pv);
    std::ostringstream s;
    write_feature_csv(s, assembled.rows);
    write_atomic(o.out, s.str());
    m.output(o.out);
    m.note("missing_rate", assembled.missing_rate);
    m.write(manifest_path_for(o.out));
    ctx.out << "wrote " << assembled.rows.size() << " feature rows\n";
}

std::vector<double> targets_for(const std::vector<FeatureRow>& rows, const std::string& items_path) {
    std::map<std::string, double> gold;
    for (const auto& it : load_items(items_path)) gold[it.item_id] = it.gold_score;
    std::vector<double> y;
    for (const auto& r : rows) {
        const auto it = gold.find(r.item_id);
        if (it == gold.end()) throw InputError("item '" + r.item_id + "' has no gold score in " + items_path);
        y.push_back(it->second);
    }
    return y;
}

struct TrainGbtOpts {
    std::string features, items, out, oof_out;
    std::uint64_t seed = 0;
    int oof_folds = 5;
    GbtParams params;
};

void cmd_train_gbt(const TrainGbtOpts& o, const CLI::App& sub, Context& ctx) {
    Manifest m("train-gbt", sub);
    m.seed(o.seed);
    m.input(o.features);
    m.input(o.items);
    const auto rows = load_feature_rows(o.features);
    const auto y = targets_for(rows, o.items);
    const auto x = to_matrix(rows);
    const GbtModel model = fit_gbt(x, y, o.params);
    write_atomic(o.out, to_json(model).dump(1) + "\n");
    m.output(o.out);

    if (!o.oof_out.empty()) {
        std::vector<std::string> ids;
        for (const auto& r : rows) ids.push_back(r.item_id);
        const FoldPlan plan = make_folds(ids, o.oof_folds, o.seed);
        const auto oof = oof_predictions(
            [&](const std::vector<std::size_t>& train, const std::vector<std::size_t>& test) {
                FeatureMatrix sub_x{x.names, train.size(), {}};
                std::vector<double> sub_y;
                for (auto i : train) {
                    const auto r = x.row(i);
                    sub_x.values.insert(sub_x.values.end(), r.begin(), r.end());
                    sub_y.push_back(y[i]);
                }
                const GbtModel fm = fit_gbt(sub_x, sub_y, o.params);
                std::vector<double> p;
                for (auto i : test) p.push_back(fm.predict_dense(x.row(i)));
                return p;
            },
            plan, std::max(1u, std::thread::hardware_concurrency()));
        std::ostringstream s;
        tsv::write_row(s, {"item_id", "gbt_oof"});
        for (std::size_t i = 0; i < ids.size(); ++i) tsv::write_row(s, {ids[i], tsv::format_double(oof[i])});
        write_atomic(o.oof_out, s.str());
        m.output(o.oof_out);
    }
    m.write(manifest_path_for(o.out));
    ctx.out << "trained " << model.trees().size() << " trees on " << rows.size() << " rows\n";
}

LossMode loss_from_string(const std::string& s) {
    if (s == "soft") return LossMode::soft;
    if (s == "hard") return LossMode::hard;
    throw InputError("unknown loss '" + s + "' (expected soft or hard)");
}

InferenceMode inference_from_string(const std::string& s) {
    if (s == "weighted") return InferenceMode::weighted;
    if (s == "argmax") return InferenceMode::argmax;
    throw InputError("unknown inference mode '" + s + "' (expected weighted or argmax)");
}

struct TrainToyOpts {
    std::string data, out, loss = "soft";
    std::uint64_t seed = 0;
    TrainConfig cfg;
};

void cmd_train_toy(TrainToyOpts o, const CLI::App& sub, Context& ctx) {
    Manifest m("train-toy", sub);
    m.seed(o.seed);
    m.input(o.data);
    auto in = open_input(o.data);
    tsv::Reader r(in, ',');
    const auto y_col = r.require("y");
    const auto id_col = r.column("item_id");
    std::vector<RaterExample> data;
    std::vector<std::string> f;
    while (r.next(f)) {
        RaterExample ex{{}, 0.0};
        for (std::size_t c = 0; c < f.size(); ++c) {
            if (id_col && c == *id_col) continue;
            const auto v = tsv::parse_double(f[c]);
            if (!v || !std::isfinite(*v))
                throw InputError(o.data + ": row " + std::to_string(r.row()) + ": bad number '" + f[c] + "'");
            (c == y_col ? ex.y : ex.features.emplace_back()) = *v;
        }
        data.push_back(std::move(ex));
    }
    o.cfg.seed = o.seed;
    o.cfg.loss_mode = loss_from_string(o.loss);
    const auto result = train_rater(data, o.cfg);
    json j;
    to_json(j, result.model);
    write_atomic(o.out, j.dump(1) + "\n");
    m.output(o.out);
    m.note("initial_loss", result.initial_loss);
    m.note("final_loss", result.final_loss);
    m.write(manifest_path_for(o.out));
    ctx.out << "loss " << result.initial_loss << " -> " << result.final_loss << "\n";
}

struct PredictOpts {
    std::string model, features, out, scale, inference = "weighted";
};

void cmd_predict(const PredictOpts& o, const CLI::App& sub, Context& ctx) {
    Manifest m("predict", sub);
    m.input(o.model);
    m.input(o.features);
    const json mj = read_json(o.model);
    const auto rows = load_feature_rows(o.features);
    std::optional<ScaleMap> scale;
    if (!o.scale.empty()) {
        m.input(o.scale);
        scale = scale_map_from_json(read_json(o.scale));
    }
    std::vector<std::string> ids;
    std::vector<double> pred;
    std::vector<bool> extrap;
    const std::string kind = mj.value("kind", std::string{});
    if (kind == "gbtree") {
        const GbtModel model = gbt_from_json(mj);
        for (const auto& r : rows) {
            const double p = predict(model, r);
            ids.push_back(r.item_id);
            if (scale) {
                pred.push_back(scale->to_scale(p));
                extrap.push_back(scale->extrapolates(p));
            } else {
                pred.push_back(p);
                extrap.push_back(p < model.target_min || p > model.target_max);
            }
        }
    } else if (kind == "toy_rater") {
        const RaterModel model = rater_from_json(mj);
        const InferenceMode mode = inference_from_string(o.inference);
        for (const auto& r : rows) {
            std::vector<double> x;
            for (std::size_t c = 0; c < r.values.size(); ++c) {
                if (!r.values[c]) throw InputError("item '" + r.item_id + "': toy rater cannot take missing '" + r.names[c] + "'");
                x.push_back(*r.values[c]);
            }
            ids.push_back(r.item_id);
            pred.push_back(predict(model, x, mode));
            extrap.push_back(false);
        }
    } else {
        throw InputError(o.model + ": unknown model kind '" + kind + "'");
    }
    write_predictions(o.out, ids, pred, extrap);
    m.output(o.out);
    m.write(manifest_path_for(o.out));
    ctx.out << "predicted " << ids.size() << " items\n";
}

struct ExplainOpts {
    std::string model, features, background, schema, out_dir, mode = "interventional";
};

ShapMode shap_mode_from_string(const std::string& s) {
    if (s == "interventional") return ShapMode::interventional;
    if (s == "path-dependent") return ShapMode::tree_path_dependent;
    throw InputError("unknown SHAP mode '" + s + "' (expected interventional or path-dependent)");
}

std::string explanation_html(const std::vector<std::string>& ids, const std::vector<Explanation>& expls,
                             const GlobalImportance& gi, const std::string& mode) {
    std::ostringstream h;
    h << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>SHAP report</title>\n"
      << "<style>body{font-family:sans-serif}table{border-collapse:collapse;margin-bottom:2em}"
      << "td,th{border:1px solid #999;padding:2px 6px;text-align:right}th:first-child,td:first-child{text-align:left}"
      << "</style></head><body>\n<h1>SHAP report (" << html_escape(mode) << ")</h1>\n";
    std::vector<std::pair<std::string, double>> groups(gi.groups.begin(), gi.groups.end());
    std::stable_sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    h << "<h2>Mean |SHAP| per group</h2>\n<table><tr><th>group</th><th>mean |SHAP|</th></tr>\n";
    for (const auto& [g, v] : groups) h << "<tr><td>" << html_escape(g) << "</td><td>" << tsv::format_double(v) << "</td></tr>\n";
    h << "</table>\n<h2>Per-item attributions</h2>\n<table><tr><th>item</th><th>base</th><th>prediction</th>";
    if (!expls.empty())
        for (const auto& [g, v] : expls.front().groups) h << "<th>" << html_escape(g) << "</th>";
    h << "</tr>\n";
    for (std::size_t i = 0; i < expls.size(); ++i) {
        h << "<tr><td>" << html_escape(ids[i]) << "</td><td>" << tsv::format_double(expls[i].base_value) << "</td><td>"
          << tsv::format_double(expls[i].prediction) << "</td>";
        for (const auto& [g, v] : expls[i].groups) h << "<td>" << tsv::format_double(v) << "</td>";
        h << "</tr>\n";
    }
    h << "</table>\n</body></html>\n";
    return h.str();
}

void cmd_explain(const ExplainOpts& o, const CLI::App& sub, Context& ctx) {
    Manifest m("explain", sub);
    m.input(o.model);
    m.input(o.features);
    const GbtModel model = gbt_from_json(read_json(o.model));
    const auto rows = load_feature_rows(o.features);
    const std::string bg_path = o.background.empty() ? o.features : o.background;
    if (!o.background.empty()) m.input(o.background);
    const auto background = to_matrix(load_feature_rows(bg_path));
    if (background.names != model.feature_names()) throw InputError(bg_path + ": columns do not match the model schema");
    std::map<std::string, std::vector<std::string>> grouping;
    if (!o.schema.empty()) {
        m.input(o.schema);
        try {
            grouping = schema_from_json(read_json(o.schema)).groups();
        } catch (const json::exception& e) {
            throw InputError(o.schema + ": " + e.what());
        }
    }
    const ShapMode mode = shap_mode_from_string(o.mode);

    std::vector<Explanation> expls;
    std::vector<std::string> ids;
    std::string jsonl;
    for (const auto& r : rows) {
        if (r.names != model.feature_names()) throw InputError("item '" + r.item_id + "' does not match the model schema");
        Explanation e = shap_values_dense(model, to_dense(r), background, mode);
        e.groups = group_shap(e, grouping);
        double total = e.base_value;
        for (double p : e.phis) total += p;
        const double f = predict(model, r);
        if (!(std::abs(total - f) <= kAdditivityTolerance))
            throw InternalError("additivity violated for item '" + r.item_id + "': base + sum(phi) = " +
                                tsv::format_double(total) + ", f(x) = " + tsv::format_double(f));
        jsonl += to_json(e, r.item_id).dump() + "\n";
        ids.push_back(r.item_id);
        expls.push_back(std::move(e));
    }
    const GlobalImportance gi = global_importance(expls);
    const fs::path dir(o.out_dir);
    write_atomic(dir / "explanations.jsonl", jsonl);
    const std::string mode_name = mode == ShapMode::interventional ? "interventional" : "path-dependent";
    write_atomic(dir / "global_importance.json",
                 json{{"mode", mode_name}, {"features", gi.features}, {"groups", gi.groups}}.dump(2) + "\n");
    write_atomic(dir / "explanations.html", explanation_html(ids, expls, gi, mode_name));
    for (const char* f : {"explanations.jsonl", "global_importance.json", "explanations.html"})
        m.output((dir / f).string());
    m.note("shap_mode", mode_name);
    m.write(dir / "manifest.json");
    ctx.out << "explained " << expls.size() << " items (" << mode_name << ")\n";
}

struct StackOpts {
    std::string inputs, items, l1, out, apply, predictions;
    bool average = false;
};

void cmd_stack(const StackOpts& o, const CLI::App& sub, Context& ctx) {
    Manifest m("stack", sub);
    m.input(o.inputs);
    const auto train = load_column_table(o.inputs);
    std::string primary;
    if (o.average) {
        if (o.predictions.empty()) throw InputError("--average needs --predictions");
        const auto& src = o.apply.empty() ? train : load_column_table(o.apply);
        if (!o.apply.empty()) m.input(o.apply);
        const auto avg = average_ensemble(src.columns.columns);
        write_predictions(o.predictions, src.ids, avg, std::vector<bool>(avg.size(), false));
        m.output(o.predictions);
        m.write(manifest_path_for(o.predictions));
        ctx.out << "averaged " << src.columns.names.size() << " columns\n";
        return;
    }
    if (o.items.empty() || o.out.empty()) throw InputError("stack fitting needs --items and --out");
    m.input(o.items);
    std::map<std::string, const ScoreRow*> by_id;
    const auto gold = load_scores(o.items, {"gold_score"});
    for (const auto& g : gold) by_id[g.id] = &g;
    std::vector<double> y;
    for (const auto& id : train.ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw InputError("item '" + id + "' has no gold score in " + o.items);
        if (!it->second->l1.empty() && it->second->l1 != o.l1)
            throw InputError("item '" + id + "' belongs to L1 '" + it->second->l1 + "', stack is for '" + o.l1 + "'");
        y.push_back(it->second->value);
    }
    const StackModel model = fit_stack(train.columns, y, o.l1);
    write_atomic(o.out, to_json(model).dump(2) + "\n");
    m.output(o.out);
    if (!o.apply.empty()) {
        if (o.predictions.empty()) throw InputError("--apply needs --predictions");
        m.input(o.apply);
        const auto full = load_column_table(o.apply);
        const auto p = predict_stack(model, full.columns);
        write_predictions(o.predictions, full.ids, p, std::vector<bool>(p.size(), false));
        m.output(o.predictions);
    }
    m.write(manifest_path_for(o.out));
    ctx.out << "stack for " << o.l1 << ": intercept " << tsv::format_double(model.intercept) << "\n";
}

struct EvalOpts {
    std::string pred, gold, l1, out, table, system = "system", column = "prediction";
};

void cmd_eval(const EvalOpts& o, const CLI::App& sub, Context& ctx) {
    Manifest m("eval", sub);
    m.input(o.pred);
    m.input(o.gold);
    const auto pred = load_scores(o.pred, {o.column});
    const auto gold = load_scores(o.gold, {"gold_score", "prediction"});
    std::map<std::string, const ScoreRow*> gold_by_id;
    for (const auto& g : gold) gold_by_id[g.id] = &g;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per_l1;
    std::vector<std::string> order;
    for (const auto& p : pred) {
        const auto it = gold_by_id.find(p.id);
        if (it == gold_by_id.end()) throw InputError("predicted item '" + p.id + "' is not in " + o.gold);
        std::string l1 = it->second->l1.empty() ? o.l1 : it->second->l1;
        if (l1.empty()) l1 = "all";
        if (!o.l1.empty() && l1 != o.l1) continue;
        if (!per_l1.count(l1)) order.push_back(l1);
        per_l1[l1].first.push_back(p.value);
        per_l1[l1].second.push_back(it->second->value);
    }
    if (per_l1.empty()) throw InputError("no predicted items to evaluate");
    std::vector<Report> reports;
    for (const auto& l1 : order) {
        const auto& [pv, gv] = per_l1[l1];
        Report r{l1, pv.size(), rmse(pv, gv), std::nan("")};
        try {
            r.pcc = pearson(pv, gv);
        } catch (const InputError&) {
            if (r.rmse != 0.0) throw;
            r.pcc = 1.0;  // identical constant vectors
        }
        reports.push_back(r);
    }
    const MultiReport mr = aggregate(std::move(reports));
    const std::string table = format_table({{o.system, mr}});
    ctx.out << table;
    if (!o.out.empty()) {
        write_atomic(o.out, to_json(mr).dump(2) + "\n");
        m.output(o.out);
    }
    if (!o.table.empty()) {
        write_atomic(o.table, table);
        m.output(o.table);
    }
    if (!o.out.empty()) m.write(manifest_path_for(o.out));
}

struct OptimumOpts {
    std::string corpus, eval_ids, out, l1;
    int width = -1;
};

void cmd_simulate_optimum(const OptimumOpts& o, const CLI::App& sub, Context& ctx) {
    Manifest m("simulate-optimum", sub);
    m.input(o.corpus);
    const auto corpus = load_scores(o.corpus, {"gold_score"});
    std::set<std::string> wanted;
    if (!o.eval_ids.empty()) {
        m.input(o.eval_ids);
        auto in = open_input(o.eval_ids);
        tsv::Reader r(in);
        const auto c = r.require("item_id");
        std::vector<std::string> f;
        while (r.next(f)) wanted.insert(f[c]);
    }
    const CiWidths widths = CiWidths::kvl_defaults();
    std::vector<std::string> l1s;
    for (const auto& row : corpus)
        if (std::find(l1s.begin(), l1s.end(), row.l1) == l1s.end()) l1s.push_back(row.l1);

    std::vector<std::string> ids;
    std::vector<double> pred;
    std::vector<Report> reports;
    for (const auto& l1 : l1s) {
        if (!o.l1.empty() && l1 != o.l1) continue;
        std::vector<std::string> cid;
        std::vector<double> cs;
        std::vector<std::string> eval;
        std::vector<double> gold;
        for (const auto& row : corpus)
            if (row.l1 == l1) {
                cid.push_back(row.id);
                cs.push_back(row.value);
                if (wanted.empty() || wanted.count(row.id)) {
                    eval.push_back(row.id);
                    gold.push_back(row.value);
                }
            }
        if (eval.empty()) continue;
        const RankedCorpus rc(cid, cs);
        const int w = o.width >= 0 ? o.width : widths.width(l1);
        const auto sim = statistical_optimum(rc, eval, w);
        ids.insert(ids.end(), eval.begin(), eval.end());
        pred.insert(pred.end(), sim.begin(), sim.end());
        reports.push_back(Report{l1.empty() ? "all" : l1, eval.size(), rmse(sim, gold), std::nan("")});
        ctx.out << (l1.empty() ? "all" : l1) << "\tw=" << w << "\tRMSE=" << tsv::format_double(reports.back().rmse) << "\n";
    }
    if (ids.empty()) throw InputError("no items to simulate");
    write_predictions(o.out, ids, pred, std::vector<bool>(ids.size(), false));
    m.output(o.out);
    json rj = json::array();
    for (const auto& r : reports) rj.push_back({{"l1", r.l1}, {"n", r.n}, {"rmse", r.rmse}});
    m.note("rmse", rj);
    m.write(manifest_path_for(o.out));
}

struct RenderOpts {
    PromptOptions prompt;
    std::string items, item_id, out;
};

const TestItem& pick_item(const std::vector<TestItem>& items, const std::string& id) {
    if (items.empty()) throw InputError("no items");
    if (id.empty()) return items.front();
    for (const auto& it : items)
        if (it.item_id == id) return it;
    throw InputError("item '" + id + "' not found");
}

void cmd_render_prompt(const RenderOpts& o, const CLI::App& sub, Context& ctx) {
    Manifest m("render-prompt", sub);
    m.input(o.items);
    const auto items = load_items(o.items);
    BindingSource bindings(o.prompt, m);
    const TestItem& item = pick_item(items, o.item_id);
    const std::string text = render(bindings.id(), item, bindings.for_item(item));
    if (o.out.empty()) {
        ctx.out << text << "\n";
        return;
    }
    write_atomic(o.out, text);
    m.output(o.out);
    m.write(manifest_path_for(o.out));
}

struct DeriveOpts {
    PromptOptions prompt;
    std::string items, name, out, fixtures, endpoint, path = "/v1/completions", model, api_key_env = "OPENAI_API_KEY",
                                                     record, calibrate;
    int concurrency = 4, max_tokens = 0, top_logprobs = 5, folds = 5, timeout = 60;
    double temperature = 1.0;
};

void cmd_derive(const DeriveOpts& o, const CLI::App& sub, Context& ctx) {
    Manifest m("derive-prompt-features", sub);
    m.input(o.items);
    const auto items = load_items(o.items);
    BindingSource bindings(o.prompt, m);
    const TemplateId id = bindings.id();
    const std::string tname(to_string(id));

    enum class Kind { digits, binary, spelling, trick } kind;
    switch (id) {
        case TemplateId::basic:
        case TemplateId::short_prompt:
        case TemplateId::difficulty: kind = Kind::digits; break;
        case TemplateId::ambiguity:
        case TemplateId::calque:
        case TemplateId::calque_v1: kind = Kind::binary; break;
        case TemplateId::spelling: kind = Kind::spelling; break;
        case TemplateId::trick_short:
        case TemplateId::trick_long: kind = Kind::trick; break;
        default: throw InputError("template '" + tname + "' does not produce a prompt feature");
    }

    std::vector<CompletionRequest> requests;
    const int max_tokens = o.max_tokens > 0 ? o.max_tokens : kind == Kind::spelling ? 6 : kind == Kind::trick ? 4 : 1;
    for (const auto& item : items)
        requests.push_back({tname, render(id, item, bindings.for_item(item)), max_tokens, o.top_logprobs});

    std::shared_ptr<CompletionClient> client;
    if (!o.fixtures.empty()) {
        if (!o.endpoint.empty()) throw InputError("--fixtures and --endpoint are mutually exclusive");
        auto store = std::make_shared<FixtureStore>(o.fixtures);
        m.input(store->file().string());
        client = std::make_shared<ReplayClient>(store);
    } else if (!o.endpoint.empty()) {
        HttpClientConfig cfg{o.endpoint, o.path, o.model, o.api_key_env, o.timeout};
        client = std::make_shared<HttpCompletionClient>(cfg);
        if (!o.record.empty()) client = std::make_shared<RecordingClient>(client, std::make_shared<FixtureStore>(o.record));
    } else {
        throw InputError("either --fixtures <dir> or --endpoint <url> is required");
    }
    const auto responses = complete_all(*client, requests, static_cast<std::size_t>(std::max(1, o.concurrency)));

    const SurfaceScale scale = kind == Kind::binary ? SurfaceScale::binary() : SurfaceScale::digits(1, 5);
    std::vector<double> values(items.size(), 0.0);
    double temperature = o.temperature;
    if (kind == Kind::trick) {
        if (!o.calibrate.empty()) throw InputError("trickiness has no temperature to calibrate");
        for (std::size_t i = 0; i < items.size(); ++i) values[i] = trickiness(responses[i], items[i]);
    } else {
        std::vector<std::vector<double>> lps;
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto& cands = kind == Kind::spelling
                                    ? spelling_candidates(responses[i], spelling_l1_index(items[i].l1))
                                    : responses[i].first_token_candidates();
            try {
                lps.push_back(scale_logprobs(cands, scale));
            } catch (const InputError& e) {
                throw InputError("item '" + items[i].item_id + "': " + e.what());
            }
        }
        if (!o.calibrate.empty()) {
            m.input(o.calibrate);
            std::map<std::string, std::size_t> pos;
            for (std::size_t i = 0; i < items.size(); ++i) pos[items[i].item_id] = i;
            std::vector<std::vector<double>> sub_lps;
            std::vector<double> targets;
            for (const auto& row : load_scores(o.calibrate, {"value", "gold_score", "prediction"})) {
                const auto it = pos.find(row.id);
                if (it == pos.end()) throw InputError("calibration item '" + row.id + "' is not among the items");
                sub_lps.push_back(lps[it->second]);
                targets.push_back(row.value);
            }
            temperature = fit_gscale_temperature(sub_lps, targets, o.folds, scale.scale);
        }
        for (std::size_t i = 0; i < items.size(); ++i) values[i] = gscale(lps[i], temperature, scale.scale);
    }

    const std::string column = o.name.empty() ? tname : o.name;
    std::ostringstream s;
    tsv::write_row(s, {"item_id", column});
    for (std::size_t i = 0; i < items.size(); ++i) tsv::write_row(s, {items[i].item_id, tsv::format_double(values[i])});
    write_atomic(o.out, s.str());
    m.output(o.out);
    if (kind != Kind::trick) m.note("temperature", temperature);
    m.write(manifest_path_for(o.out));
    ctx.out << "derived '" << column << "' for " << items.size() << " items\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Vocabulary test item difficulty modelling"};
    app.name(args.empty() ? "vocabdiff" : fs::path(args.front()).filename().string());
    app.require_subcommand(1);
    Context ctx{out, err};
    std::function<void()> action;
    std::string active;

    auto on = [&](CLI::App* sub, std::function<void()> fn) {
        sub->callback([&, sub, fn] {
            active = sub->get_name();
            action = fn;
        });
    };

    IngestOpts ingest;
    auto* s_ingest = app.add_subcommand("ingest", "Validate and normalise an items TSV");
    s_ingest->add_option("--items", ingest.items)->required()->check(CLI::ExistingFile);
    s_ingest->add_option("--l1", ingest.l1, "L1 code filling and checking the l1 column");
    s_ingest->add_option("--out", ingest.out)->required();
    s_ingest->add_option("--scale-out", ingest.scale_out, "Write the fitted score-to-scale map here");
    s_ingest->add_option("--scale-k", ingest.scale_k)->capture_default_str();
    s_ingest->add_option("--scale-mode", ingest.scale_mode)->capture_default_str();
    on(s_ingest, [&] { cmd_ingest(ingest, *s_ingest, ctx); });

    FeaturesOpts feats;
    auto* s_feat = app.add_subcommand("features", "Assemble feature rows from lookup resources");
    s_feat->add_option("--items", feats.items)->required()->check(CLI::ExistingFile);
    s_feat->add_option("--schema", feats.schema)->required()->check(CLI::ExistingFile);
    s_feat->add_option("--freq", feats.freq, "Frequency table name=path");
    s_feat->add_option("--cefr", feats.cefr, "CEFR table name=path");
    s_feat->add_option("--column", feats.column, "Numeric column name=path");
    s_feat->add_option("--prompt-values", feats.prompt_values, "TSV of per-item prompt features");
    s_feat->add_option("--out", feats.out)->required();
    on(s_feat, [&] { cmd_features(feats, *s_feat, ctx); });

    TrainGbtOpts gbt;
    auto* s_gbt = app.add_subcommand("train-gbt", "Fit the gradient-boosted tree regressor");
    s_gbt->add_option("--features", gbt.features)->required()->check(CLI::ExistingFile);
    s_gbt->add_option("--items", gbt.items, "Items TSV with gold scores")->required()->check(CLI::ExistingFile);
    s_gbt->add_option("--seed", gbt.seed)->required();
    s_gbt->add_option("--out", gbt.out)->required();
    s_gbt->add_option("--max-depth", gbt.params.max_depth)->capture_default_str();
    s_gbt->add_option("--learning-rate", gbt.params.learning_rate)->capture_default_str();
    s_gbt->add_option("--n-estimators", gbt.params.n_estimators)->capture_default_str();
    s_gbt->add_option("--min-child-weight", gbt.params.min_child_weight)->capture_default_str();
    s_gbt->add_option("--lambda", gbt.params.lambda)->capture_default_str();
    s_gbt->add_option("--oof-out", gbt.oof_out, "Also write out-of-fold predictions");
    s_gbt->add_option("--oof-folds", gbt.oof_folds)->capture_default_str();
    on(s_gbt, [&] { cmd_train_gbt(gbt, *s_gbt, ctx); });

    TrainToyOpts toy;
    auto* s_toy = app.add_subcommand("train-toy", "Train the toy soft-target rater");
    s_toy->add_option("--data", toy.data, "CSV with feature columns and y")->required()->check(CLI::ExistingFile);
    s_toy->add_option("--seed", toy.seed)->required();
    s_toy->add_option("--out", toy.out)->required();
    s_toy->add_option("--loss", toy.loss, "soft or hard")->capture_default_str();
    s_toy->add_option("--epochs", toy.cfg.epochs)->capture_default_str();
    s_toy->add_option("--learning-rate", toy.cfg.learning_rate)->capture_default_str();
    s_toy->add_option("--scale-points", toy.cfg.scale_points)->capture_default_str();
    s_toy->add_option("--distractors", toy.cfg.distractor_count)->capture_default_str();
    on(s_toy, [&] { cmd_train_toy(toy, *s_toy, ctx); });

    PredictOpts pred;
    auto* s_pred = app.add_subcommand("predict", "Predict with a trained model");
    s_pred->add_option("--model", pred.model)->required()->check(CLI::ExistingFile);
    s_pred->add_option("--features", pred.features)->required()->check(CLI::ExistingFile);
    s_pred->add_option("--out", pred.out)->required();
    s_pred->add_option("--scale", pred.scale, "Scale map JSON; predictions are mapped onto the scale")
        ->check(CLI::ExistingFile);
    s_pred->add_option("--inference", pred.inference, "weighted or argmax (toy rater)")->capture_default_str();
    on(s_pred, [&] { cmd_predict(pred, *s_pred, ctx); });

    ExplainOpts expl;
    auto* s_expl = app.add_subcommand("explain", "SHAP attributions for a tree model");
    s_expl->add_option("--model", expl.model)->required()->check(CLI::ExistingFile);
    s_expl->add_option("--features", expl.features)->required()->check(CLI::ExistingFile);
    s_expl->add_option("--background", expl.background, "Background rows (default: --features)")
        ->check(CLI::ExistingFile);
    s_expl->add_option("--schema", expl.schema, "Feature schema providing SHAP groups")->check(CLI::ExistingFile);
    s_expl->add_option("--mode", expl.mode, "interventional or path-dependent")->capture_default_str();
    s_expl->add_option("--out-dir", expl.out_dir)->required();
    on(s_expl, [&] { cmd_explain(expl, *s_expl, ctx); });

    StackOpts stack;
    auto* s_stack = app.add_subcommand("stack", "Fit a per-L1 linear stack or average columns");
    s_stack->add_option("--inputs", stack.inputs, "TSV item_id + out-of-fold columns")->required()->check(CLI::ExistingFile);
    s_stack->add_option("--items", stack.items, "Items TSV with gold scores")->check(CLI::ExistingFile);
    s_stack->add_option("--l1", stack.l1);
    s_stack->add_option("--out", stack.out, "Stack model JSON");
    s_stack->add_option("--apply", stack.apply, "TSV of full-data columns to predict")->check(CLI::ExistingFile);
    s_stack->add_option("--predictions", stack.predictions);
    s_stack->add_flag("--average", stack.average, "Average the columns instead of fitting");
    on(s_stack, [&] {
        if (!stack.average && stack.l1.empty()) throw InputError("stack fitting needs --l1");
        cmd_stack(stack, *s_stack, ctx);
    });

    EvalOpts ev;
    auto* s_eval = app.add_subcommand("eval", "RMSE and Pearson correlation per L1");
    s_eval->add_option("--pred", ev.pred)->required()->check(CLI::ExistingFile);
    s_eval->add_option("--gold", ev.gold)->required()->check(CLI::ExistingFile);
    s_eval->add_option("--column", ev.column, "Prediction column")->capture_default_str();
    s_eval->add_option("--l1", ev.l1, "Restrict to (or label as) this L1");
    s_eval->add_option("--system", ev.system, "System name in the table")->capture_default_str();
    s_eval->add_option("--out", ev.out, "Report JSON");
    s_eval->add_option("--table", ev.table, "Text table");
    on(s_eval, [&] { cmd_eval(ev, *s_eval, ctx); });

    OptimumOpts opt;
    auto* s_opt = app.add_subcommand("simulate-optimum", "Statistical-optimum simulation");
    s_opt->add_option("--corpus", opt.corpus, "Complete corpus TSV (item_id, gold_score, l1)")
        ->required()
        ->check(CLI::ExistingFile);
    s_opt->add_option("--eval", opt.eval_ids, "TSV whose item_id column selects evaluated items")
        ->check(CLI::ExistingFile);
    s_opt->add_option("--width", opt.width, "Rank width (default: per-L1 published widths)");
    s_opt->add_option("--l1", opt.l1);
    s_opt->add_option("--out", opt.out)->required();
    on(s_opt, [&] { cmd_simulate_optimum(opt, *s_opt, ctx); });

    RenderOpts rend;
    auto* s_rend = app.add_subcommand("render-prompt", "Render a prompt template for one item");
    add_prompt_options(s_rend, rend.prompt);
    s_rend->add_option("--items", rend.items)->required()->check(CLI::ExistingFile);
    s_rend->add_option("--item-id", rend.item_id, "Item to render (default: first)");
    s_rend->add_option("--out", rend.out);
    on(s_rend, [&] { cmd_render_prompt(rend, *s_rend, ctx); });

    DeriveOpts der;
    auto* s_der = app.add_subcommand("derive-prompt-features", "Prompt an LLM and derive per-item features");
    add_prompt_options(s_der, der.prompt);
    s_der->add_option("--items", der.items)->required()->check(CLI::ExistingFile);
    s_der->add_option("--out", der.out)->required();
    s_der->add_option("--name", der.name, "Output column name (default: template id)");
    s_der->add_option("--fixtures", der.fixtures, "Replay recorded responses from this directory (offline)");
    s_der->add_option("--endpoint", der.endpoint, "Completion service base URL");
    s_der->add_option("--path", der.path)->capture_default_str();
    s_der->add_option("--model", der.model);
    s_der->add_option("--api-key-env", der.api_key_env)->capture_default_str();
    s_der->add_option("--record", der.record, "Record live responses into this fixture directory");
    s_der->add_option("--concurrency", der.concurrency)->capture_default_str();
    s_der->add_option("--timeout", der.timeout)->capture_default_str();
    s_der->add_option("--max-tokens", der.max_tokens, "Default depends on the template");
    s_der->add_option("--top-logprobs", der.top_logprobs)->capture_default_str();
    s_der->add_option("--temperature", der.temperature)->capture_default_str();
    s_der->add_option("--calibrate", der.calibrate, "TSV item_id,value to fit the temperature by CV");
    s_der->add_option("--folds", der.folds)->capture_default_str();
    on(s_der, [&] { cmd_derive(der, *s_der, ctx); });

    if (args.size() > 1 && !args[1].empty() && args[1][0] != '-' && !app.get_subcommand_no_throw(args[1])) {
        err << app.get_name() << ": error: unknown subcommand '" << args[1] << "'\n" << app.help();
        return 1;
    }
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << app.get_name() << ": error: " << e.what() << "\n";
        const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return 1;
    }

    const std::string where = app.get_name() + " " + active;
    try {
        action();
        return 0;
    } catch (const FixtureMissError& e) {
        err << where << ": error: " << e.what() << "\n";
        return 1;
    } catch (const InputError& e) {
        err << where << ": error: " << e.what() << "\n";
        return 1;
    } catch (const json::exception& e) {
        err << where << ": error: malformed JSON input: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << where << ": internal error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace vocabdiff::cli
