#include "vocabdiff/gbtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "vocabdiff/error.hpp"

namespace vocabdiff {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool goes_left(const TreeNode& n, double v) { return std::isnan(v) ? n.default_left : v < n.threshold; }

}  // namespace

FeatureMatrix to_matrix(const std::vector<FeatureRow>& rows) {
    FeatureMatrix m;
    if (rows.empty()) return m;
    m.names = rows.front().names;
    m.rows = rows.size();
    m.values.reserve(rows.size() * m.names.size());
    for (const auto& r : rows) {
        if (r.names != m.names) throw InputError("row '" + r.item_id + "' does not match the feature schema");
        for (const auto& v : r.values) m.values.push_back(v ? *v : kNaN);
    }
    return m;
}

std::vector<double> to_dense(const FeatureRow& row) {
    std::vector<double> x;
    x.reserve(row.values.size());
    for (const auto& v : row.values) x.push_back(v ? *v : kNaN);
    return x;
}

double Tree::predict(std::span<const double> x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
        const auto& n = nodes[static_cast<std::size_t>(i)];
        i = goes_left(n, x[static_cast<std::size_t>(n.feature)]) ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
}

int Tree::depth() const {
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        best = std::max(best, d[i]);
        if (!nodes[i].is_leaf()) {
            d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
        }
    }
    return best;
}

GbtModel::GbtModel(std::vector<std::string> feature_names, double base_score, double learning_rate)
    : names_(std::move(feature_names)), base_(base_score), lr_(learning_rate) {}

void GbtModel::add_tree(Tree tree) { trees_.push_back(std::move(tree)); }

double GbtModel::predict_dense(std::span<const double> x) const {
    if (x.size() != names_.size()) throw InputError("row width does not match the model schema");
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict(x);
    return base_ + lr_ * s;
}

// --- fitting -------------------------------------------------------------------

namespace {

struct Split {
    int feature = -1;
    double threshold = 0.0;
    bool default_left = true;
    double gain = 0.0;
};

double leaf_objective(double g, double h, double lambda) { return g * g / (h + lambda); }

class TreeBuilder {
public:
    TreeBuilder(const FeatureMatrix& x, const std::vector<double>& residuals, const GbtParams& p)
        : x_(x), r_(residuals), p_(p) {}

    Tree build() {
        std::vector<std::size_t> idx(x_.rows);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        tree_.nodes.clear();
        grow(idx, 0);
        return std::move(tree_);
    }

private:
    // Returns the node index.
    int grow(const std::vector<std::size_t>& idx, int depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        double g = 0.0;
        for (auto i : idx) g += r_[i];
        const double h = static_cast<double>(idx.size());
        {
            auto& node = tree_.nodes.back();
            node.cover = h;
            node.value = g / (h + p_.lambda);
        }
        if (depth >= p_.max_depth || idx.size() < 2) return id;

        const Split s = best_split(idx, g, h);
        if (s.feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto i : idx) {
            const double v = x_.values[i * x_.cols() + static_cast<std::size_t>(s.feature)];
            const bool l = std::isnan(v) ? s.default_left : v < s.threshold;
            (l ? left : right).push_back(i);
        }
        const int l = grow(left, depth + 1);
        const int r = grow(right, depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = s.feature;
        node.threshold = s.threshold;
        node.default_left = s.default_left;
        node.left = l;
        node.right = r;
        node.value = 0.0;
        return id;
    }

    Split best_split(const std::vector<std::size_t>& idx, double g_total, double h_total) const {
        Split best;
        const double parent = leaf_objective(g_total, h_total, p_.lambda);
        std::vector<std::pair<double, double>> vals;  // (x, residual)
        for (std::size_t f = 0; f < x_.cols(); ++f) {
            vals.clear();
            double g_miss = 0.0, h_miss = 0.0;
            for (auto i : idx) {
                const double v = x_.values[i * x_.cols() + f];
                if (std::isnan(v)) {
                    g_miss += r_[i];
                    h_miss += 1.0;
                } else {
                    vals.emplace_back(v, r_[i]);
                }
            }
            if (vals.size() < 1) continue;
            std::sort(vals.begin(), vals.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            double gl = 0.0, hl = 0.0;
            for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
                gl += vals[k].second;
                hl += 1.0;
                if (!(vals[k].first < vals[k + 1].first)) continue;
                double thr = 0.5 * (vals[k].first + vals[k + 1].first);
                if (!(vals[k].first < thr)) thr = vals[k + 1].first;
                for (bool miss_left : {true, false}) {
                    const double gL = gl + (miss_left ? g_miss : 0.0);
                    const double hL = hl + (miss_left ? h_miss : 0.0);
                    const double gR = g_total - gL, hR = h_total - hL;
                    if (hL < p_.min_child_weight || hR < p_.min_child_weight) continue;
                    if (hL == 0.0 || hR == 0.0) continue;
                    const double gain =
                        leaf_objective(gL, hL, p_.lambda) + leaf_objective(gR, hR, p_.lambda) - parent;
                    if (gain > best.gain) best = Split{static_cast<int>(f), thr, miss_left, gain};
                }
            }
        }
        return best;
    }

    const FeatureMatrix& x_;
    const std::vector<double>& r_;
    const GbtParams& p_;
    Tree tree_;
};

void check_params(const GbtParams& p) {
    if (p.max_depth < 0) throw InputError("max_depth must be nonnegative");
    if (!(p.learning_rate > 0.0)) throw InputError("learning_rate must be positive");
    if (p.n_estimators < 0) throw InputError("n_estimators must be nonnegative");
    if (!(p.lambda >= 0.0)) throw InputError("lambda must be nonnegative");
    if (!(p.min_child_weight >= 0.0)) throw InputError("min_child_weight must be nonnegative");
}

}  // namespace

Tree grow_tree(const FeatureMatrix& x, const std::vector<double>& residuals, const GbtParams& params) {
    check_params(params);
    if (residuals.size() != x.rows) throw InputError("one residual per row expected");
    return TreeBuilder(x, residuals, params).build();
}

GbtModel fit_gbt(const FeatureMatrix& x, const std::vector<double>& targets, const GbtParams& params) {
    check_params(params);
    if (x.rows == 0) throw InputError("cannot fit on empty data");
    if (targets.size() != x.rows) throw InputError("one target per row expected");
    if (x.rows < 2) throw InputError("at least two rows are required");
    for (double t : targets)
        if (!std::isfinite(t)) throw InputError("targets must be finite");

    // Running mean is exact for constant targets.
    double base = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) base += (targets[i] - base) / static_cast<double>(i + 1);

    GbtModel model(x.names, base, params.learning_rate);
    model.params = params;
    const auto [lo, hi] = std::minmax_element(targets.begin(), targets.end());
    model.target_min = *lo;
    model.target_max = *hi;

    std::vector<double> pred(x.rows, base), resid(x.rows);
    for (int t = 0; t < params.n_estimators; ++t) {
        for (std::size_t i = 0; i < x.rows; ++i) resid[i] = targets[i] - pred[i];
        Tree tree = TreeBuilder(x, resid, params).build();
        for (std::size_t i = 0; i < x.rows; ++i) pred[i] += params.learning_rate * tree.predict(x.row(i));
        model.add_tree(std::move(tree));
    }
    return model;
}

GbtModel fit_gbt(const std::vector<FeatureRow>& rows, const std::vector<double>& targets, const GbtParams& params) {
    if (rows.empty()) throw InputError("cannot fit on empty data");
    return fit_gbt(to_matrix(rows), targets, params);
}

double predict(const GbtModel& model, const FeatureRow& row) {
    if (row.names != model.feature_names()) throw InputError("row '" + row.item_id + "' does not match the model schema");
    return model.predict_dense(to_dense(row));
}

// --- SHAP ------------------------------------------------------------------------

namespace {

double factorial(int n) {
    static const std::vector<double> table = [] {
        std::vector<double> t(171, 1.0);
        for (std::size_t i = 1; i < t.size(); ++i) t[i] = t[i - 1] * static_cast<double>(i);
        return t;
    }();
    return table.at(static_cast<std::size_t>(n));
}

// Interventional attribution of one tree for one (x, z) pair. A leaf is
// reached by the hybrid input (x on S, z elsewhere) exactly when the
// features that must come from x (A) are in S and those that must come from
// z (B) are not; the Shapley value of that unanimity-style game is
// (a-1)! b! / (a+b)! for members of A and -a! (b-1)! / (a+b)! for members of B.
class InterventionalWalker {
public:
    InterventionalWalker(const Tree& tree, std::span<const double> x, std::span<const double> z, double scale,
                         std::vector<double>& phi)
        : t_(tree), x_(x), z_(z), scale_(scale), phi_(phi), state_(x.size(), 0) {}

    void run() { walk(0); }

private:
    void walk(int id) {
        const auto& n = t_.nodes[static_cast<std::size_t>(id)];
        if (n.is_leaf()) {
            const int a = static_cast<int>(from_x_.size()), b = static_cast<int>(from_z_.size());
            if (a + b == 0) return;
            const double v = n.value * scale_;
            const double denom = factorial(a + b);
            if (a > 0) {
                const double w = factorial(a - 1) * factorial(b) / denom;
                for (int f : from_x_) phi_[static_cast<std::size_t>(f)] += v * w;
            }
            if (b > 0) {
                const double w = factorial(a) * factorial(b - 1) / denom;
                for (int f : from_z_) phi_[static_cast<std::size_t>(f)] -= v * w;
            }
            return;
        }
        const auto f = static_cast<std::size_t>(n.feature);
        const int xc = goes_left(n, x_[f]) ? n.left : n.right;
        const int zc = goes_left(n, z_[f]) ? n.left : n.right;
        if (xc == zc) return walk(xc);
        if (state_[f] == 1) return walk(xc);
        if (state_[f] == 2) return walk(zc);
        state_[f] = 1;
        from_x_.push_back(n.feature);
        walk(xc);
        from_x_.pop_back();
        state_[f] = 2;
        from_z_.push_back(n.feature);
        walk(zc);
        from_z_.pop_back();
        state_[f] = 0;
    }

    const Tree& t_;
    std::span<const double> x_, z_;
    double scale_;
    std::vector<double>& phi_;
    std::vector<char> state_;  // 0 free, 1 from x, 2 from z
    std::vector<int> from_x_, from_z_;
};

// Path-dependent TreeSHAP (polynomial-time recursion over unique paths).
struct PathElement {
    int feature;
    double zero_fraction;
    double one_fraction;
    double weight;
};

void extend_path(std::vector<PathElement>& path, double zero, double one, int feature) {
    const std::size_t depth = path.size();
    path.push_back({feature, zero, one, depth == 0 ? 1.0 : 0.0});
    for (std::size_t i = depth; i-- > 0;) {
        path[i + 1].weight += one * path[i].weight * static_cast<double>(i + 1) / static_cast<double>(depth + 1);
        path[i].weight = zero * path[i].weight * static_cast<double>(depth - i) / static_cast<double>(depth + 1);
    }
}

void unwind_path(std::vector<PathElement>& path, std::size_t index) {
    const std::size_t depth = path.size() - 1;
    const double one = path[index].one_fraction, zero = path[index].zero_fraction;
    double next = path[depth].weight;
    for (std::size_t i = depth; i-- > 0;) {
        if (one != 0.0) {
            const double tmp = path[i].weight;
            path[i].weight = next * static_cast<double>(depth + 1) / (static_cast<double>(i + 1) * one);
            next = tmp - path[i].weight * zero * static_cast<double>(depth - i) / static_cast<double>(depth + 1);
        } else {
            path[i].weight = path[i].weight * static_cast<double>(depth + 1) / (zero * static_cast<double>(depth - i));
        }
    }
    for (std::size_t i = index; i < depth; ++i) {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop_back();
}

double unwound_path_sum(const std::vector<PathElement>& path, std::size_t index) {
    const std::size_t depth = path.size() - 1;
    const double one = path[index].one_fraction, zero = path[index].zero_fraction;
    double next = path[depth].weight, total = 0.0;
    for (std::size_t i = depth; i-- > 0;) {
        if (one != 0.0) {
            const double tmp = next * static_cast<double>(depth + 1) / (static_cast<double>(i + 1) * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (static_cast<double>(depth - i) / static_cast<double>(depth + 1));
        } else {
            total += (path[i].weight / zero) / (static_cast<double>(depth - i) / static_cast<double>(depth + 1));
        }
    }
    return total;
}

void path_dependent(const Tree& t, std::span<const double> x, double scale, std::vector<double>& phi, int id,
                    std::vector<PathElement> path, double zero, double one, int feature) {
    extend_path(path, zero, one, feature);
    const auto& n = t.nodes[static_cast<std::size_t>(id)];
    if (n.is_leaf()) {
        for (std::size_t i = 1; i < path.size(); ++i) {
            const double w = unwound_path_sum(path, i);
            phi[static_cast<std::size_t>(path[i].feature)] +=
                w * (path[i].one_fraction - path[i].zero_fraction) * n.value * scale;
        }
        return;
    }
    const int hot = goes_left(n, x[static_cast<std::size_t>(n.feature)]) ? n.left : n.right;
    const int cold = hot == n.left ? n.right : n.left;
    const double hot_zero = t.nodes[static_cast<std::size_t>(hot)].cover / n.cover;
    const double cold_zero = t.nodes[static_cast<std::size_t>(cold)].cover / n.cover;
    double in_zero = 1.0, in_one = 1.0;
    for (std::size_t k = 1; k < path.size(); ++k) {
        if (path[k].feature == n.feature) {
            in_zero = path[k].zero_fraction;
            in_one = path[k].one_fraction;
            unwind_path(path, k);
            break;
        }
    }
    path_dependent(t, x, scale, phi, hot, path, hot_zero * in_zero, in_one, n.feature);
    path_dependent(t, x, scale, phi, cold, path, cold_zero * in_zero, 0.0, n.feature);
}

double expected_value(const Tree& t) {
    double s = 0.0;
    for (const auto& n : t.nodes)
        if (n.is_leaf()) s += n.value * n.cover;
    return s / t.nodes.front().cover;
}

}  // namespace

double Explanation::phi(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return phis[i];
    throw InputError("feature '" + name + "' not in explanation");
}

Explanation shap_values_dense(const GbtModel& model, std::span<const double> x, const FeatureMatrix& background,
                              ShapMode mode) {
    const std::size_t n = model.feature_names().size();
    if (x.size() != n) throw InputError("row width does not match the model schema");
    Explanation e;
    e.names = model.feature_names();
    e.phis.assign(n, 0.0);
    e.prediction = model.predict_dense(x);
    e.mode = mode;

    if (mode == ShapMode::interventional) {
        if (background.rows == 0) throw InputError("SHAP background set is empty");
        if (background.cols() != n) throw InputError("background does not match the model schema");
        const double inv = 1.0 / static_cast<double>(background.rows);
        double base = 0.0;
        for (std::size_t b = 0; b < background.rows; ++b) {
            const auto z = background.row(b);
            base += model.predict_dense(z) * inv;
            for (const auto& t : model.trees())
                InterventionalWalker(t, x, z, model.learning_rate() * inv, e.phis).run();
        }
        e.base_value = base;
    } else {
        double base = model.base_score();
        for (const auto& t : model.trees()) {
            base += model.learning_rate() * expected_value(t);
            path_dependent(t, x, model.learning_rate(), e.phis, 0, {}, 1.0, 1.0, -1);
        }
        e.base_value = base;
    }
    for (std::size_t i = 0; i < n; ++i) e.groups[e.names[i]] = e.phis[i];
    return e;
}

Explanation shap_values(const GbtModel& model, const FeatureRow& row, const std::vector<FeatureRow>& background,
                        ShapMode mode) {
    if (row.names != model.feature_names()) throw InputError("row '" + row.item_id + "' does not match the model schema");
    if (mode == ShapMode::interventional && background.empty()) throw InputError("SHAP background set is empty");
    return shap_values_dense(model, to_dense(row), to_matrix(background), mode);
}

std::map<std::string, double> group_shap(const Explanation& expl,
                                         const std::map<std::string, std::vector<std::string>>& grouping) {
    std::map<std::string, std::string> owner;
    for (const auto& [g, members] : grouping)
        for (const auto& f : members) {
            const auto [it, inserted] = owner.emplace(f, g);
            if (!inserted && it->second != g)
                throw InputError("feature '" + f + "' is in groups '" + it->second + "' and '" + g + "'");
        }
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < expl.names.size(); ++i) {
        const auto it = owner.find(expl.names[i]);
        out[it == owner.end() ? expl.names[i] : it->second] += expl.phis[i];
    }
    for (const auto& [g, members] : grouping) {
        for (const auto& f : members)
            if (std::find(expl.names.begin(), expl.names.end(), f) == expl.names.end())
                throw InputError("grouped feature '" + f + "' is not in the explanation");
        out.emplace(g, 0.0);
    }
    return out;
}

GlobalImportance global_importance(const std::vector<Explanation>& expls) {
    if (expls.empty()) throw InputError("no explanations to aggregate");
    GlobalImportance gi;
    const auto& names = expls.front().names;
    std::set<std::string> group_keys;
    for (const auto& [g, v] : expls.front().groups) group_keys.insert(g);
    const double inv = 1.0 / static_cast<double>(expls.size());
    for (const auto& e : expls) {
        if (e.names != names) throw InputError("explanations have inconsistent schemas");
        std::set<std::string> keys;
        for (const auto& [g, v] : e.groups) keys.insert(g);
        if (keys != group_keys) throw InputError("explanations have inconsistent groupings");
        for (std::size_t i = 0; i < names.size(); ++i) gi.features[names[i]] += std::abs(e.phis[i]) * inv;
        for (const auto& [g, v] : e.groups) gi.groups[g] += std::abs(v) * inv;
    }
    return gi;
}

// --- persistence -----------------------------------------------------------------

nlohmann::json to_json(const GbtModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : model.trees()) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            if (n.is_leaf()) {
                nodes.push_back({{"leaf", n.value}, {"cover", n.cover}});
            } else {
                nodes.push_back({{"feature", model.feature_names()[static_cast<std::size_t>(n.feature)]},
                                 {"threshold", n.threshold},
                                 {"default", n.default_left ? "left" : "right"},
                                 {"left", n.left},
                                 {"right", n.right},
                                 {"cover", n.cover}});
            }
        }
        trees.push_back({{"nodes", std::move(nodes)}});
    }
    const auto& p = model.params;
    return {{"kind", "gbtree"},
            {"base_score", model.base_score()},
            {"learning_rate", model.learning_rate()},
            {"features", model.feature_names()},
            {"params",
             {{"max_depth", p.max_depth},
              {"learning_rate", p.learning_rate},
              {"n_estimators", p.n_estimators},
              {"min_child_weight", p.min_child_weight},
              {"lambda", p.lambda}}},
            {"target_range", {model.target_min, model.target_max}},
            {"trees", std::move(trees)}};
}

GbtModel gbt_from_json(const nlohmann::json& j) {
    if (j.value("kind", std::string{}) != "gbtree") throw InputError("not a gradient-boosted tree model");
    const auto names = j.at("features").get<std::vector<std::string>>();
    GbtModel m(names, j.at("base_score").get<double>(), j.at("learning_rate").get<double>());
    if (j.contains("params")) {
        const auto& p = j["params"];
        m.params.max_depth = p.value("max_depth", m.params.max_depth);
        m.params.learning_rate = p.value("learning_rate", m.params.learning_rate);
        m.params.n_estimators = p.value("n_estimators", m.params.n_estimators);
        m.params.min_child_weight = p.value("min_child_weight", m.params.min_child_weight);
        m.params.lambda = p.value("lambda", m.params.lambda);
    }
    if (j.contains("target_range")) {
        m.target_min = j["target_range"].at(0).get<double>();
        m.target_max = j["target_range"].at(1).get<double>();
    }
    for (const auto& jt : j.at("trees")) {
        Tree t;
        for (const auto& jn : jt.at("nodes")) {
            TreeNode n;
            n.cover = jn.value("cover", 0.0);
            if (jn.contains("leaf")) {
                n.value = jn["leaf"].get<double>();
            } else {
                const auto fname = jn.at("feature").get<std::string>();
                const auto it = std::find(names.begin(), names.end(), fname);
                if (it == names.end()) throw InputError("tree splits on unknown feature '" + fname + "'");
                n.feature = static_cast<int>(it - names.begin());
                n.threshold = jn.at("threshold").get<double>();
                if (!std::isfinite(n.threshold)) throw InputError("non-finite split threshold");
                n.default_left = jn.at("default").get<std::string>() == "left";
                n.left = jn.at("left").get<int>();
                n.right = jn.at("right").get<int>();
            }
            t.nodes.push_back(n);
        }
        const int count = static_cast<int>(t.nodes.size());
        for (const auto& n : t.nodes)
            if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count))
                throw InputError("tree node refers to a missing child");
        if (t.nodes.empty()) throw InputError("empty tree in model");
        m.add_tree(std::move(t));
    }
    return m;
}

nlohmann::json to_json(const Explanation& expl, const std::string& item_id) {
    nlohmann::json phis = nlohmann::json::object();
    for (std::size_t i = 0; i < expl.names.size(); ++i) phis[expl.names[i]] = expl.phis[i];
    nlohmann::json j{{"base_value", expl.base_value}, {"phis", phis}, {"groups", expl.groups}};
    if (!item_id.empty()) j["item_id"] = item_id;
    j["prediction"] = expl.prediction;
    return j;
}

}  // namespace vocabdiff
