#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "vocabdiff/error.hpp"
#include "vocabdiff/gbtree.hpp"

using namespace vocabdiff;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

GbtModel stump_model() {
    GbtModel m({"x"}, 2.0, 0.1);
    Tree t;
    t.nodes = {{0, 0.5, true, 1, 2, 0.0, 2.0}, {-1, 0, true, -1, -1, -1.0, 1.0}, {-1, 0, true, -1, -1, 1.0, 1.0}};
    m.add_tree(t);
    return m;
}

FeatureMatrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double missing, int levels = 0) {
    FeatureMatrix x;
    for (std::size_t c = 0; c < cols; ++c) x.names.push_back("f" + std::to_string(c));
    x.rows = rows;
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> lv(0, std::max(levels - 1, 0));
    for (std::size_t i = 0; i < rows * cols; ++i)
        x.values.push_back(u(rng) < missing ? kNaN : levels > 0 ? lv(rng) : u(rng));
    return x;
}

std::vector<double> random_targets(std::mt19937_64& rng, const FeatureMatrix& x) {
    std::normal_distribution<double> n(0, 0.3);
    std::vector<double> y;
    for (std::size_t r = 0; r < x.rows; ++r) {
        const auto row = x.row(r);
        double v = n(rng);
        for (std::size_t c = 0; c < x.cols(); ++c)
            if (!std::isnan(row[c])) v += (c % 2 ? -1.0 : 1.0) * row[c] * (1.0 + c);
        if (x.cols() > 1 && !std::isnan(row[0]) && !std::isnan(row[1])) v += 2 * row[0] * row[1];
        y.push_back(v);
    }
    return y;
}

FeatureRow row_of(const FeatureMatrix& x, std::size_t r) {
    FeatureRow out{"r" + std::to_string(r), x.names, {}};
    for (double v : x.row(r)) out.values.push_back(std::isnan(v) ? FeatureValue{} : FeatureValue{v});
    return out;
}

double phi_sum(const Explanation& e) {
    double s = e.base_value;
    for (double p : e.phis) s += p;
    return s;
}

}  // namespace

TEST_CASE("hand-built stump") {
    const auto m = stump_model();
    CHECK(m.predict_dense(std::vector<double>{0.7}) == doctest::Approx(2.1).epsilon(1e-15));
    CHECK(m.predict_dense(std::vector<double>{0.3}) == doctest::Approx(1.9).epsilon(1e-15));
    CHECK(m.predict_dense(std::vector<double>{0.5}) == doctest::Approx(2.1).epsilon(1e-15));
    CHECK(m.predict_dense(std::vector<double>{kNaN}) == doctest::Approx(1.9).epsilon(1e-15));
    CHECK(GbtModel({"x"}, 4.5, 0.1).predict_dense(std::vector<double>{1.0}) == 4.5);
    CHECK(predict(m, FeatureRow{"a", {"x"}, {0.7}}) == doctest::Approx(2.1));
    CHECK_THROWS_AS(predict(m, FeatureRow{"a", {"y"}, {0.7}}), InputError);
}

TEST_CASE("fit examples") {
    SUBCASE("constant targets") {
        std::mt19937_64 rng(1);
        const auto x = random_matrix(rng, 30, 3, 0.2);
        const auto m = fit_gbt(x, std::vector<double>(30, -1.7));
        for (std::size_t r = 0; r < 30; ++r) CHECK(m.predict_dense(x.row(r)) == -1.7);
        CHECK(m.predict_dense(std::vector<double>{100, kNaN, -5}) == -1.7);
    }
    SUBCASE("two points, one split") {
        FeatureMatrix x{{"x"}, 2, {0.0, 1.0}};
        GbtParams p;
        p.max_depth = 1;
        p.learning_rate = 1.0;
        p.n_estimators = 1;
        p.lambda = 0.0;
        p.min_child_weight = 0.0;
        const auto m = fit_gbt(x, {0.0, 1.0}, p);
        CHECK(m.base_score() == 0.5);
        CHECK(m.predict_dense(std::vector<double>{0.0}) == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(m.predict_dense(std::vector<double>{1.0}) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(m.trees()[0].nodes[0].threshold == 0.5);
    }
    SUBCASE("errors") {
        FeatureMatrix one{{"x"}, 1, {0.0}};
        CHECK_THROWS_AS(fit_gbt(one, {1.0}), InputError);
        CHECK_THROWS_AS(fit_gbt(std::vector<FeatureRow>{}, {}), InputError);
        FeatureMatrix two{{"x"}, 2, {0.0, 1.0}};
        CHECK_THROWS_AS(fit_gbt(two, {1.0, kNaN}), InputError);
        GbtParams bad;
        bad.max_depth = -1;
        CHECK_THROWS_AS(fit_gbt(two, {1.0, 2.0}, bad), InputError);
    }
    SUBCASE("all-missing feature is never split on") {
        std::mt19937_64 rng(2);
        auto x = random_matrix(rng, 40, 2, 0.0);
        for (std::size_t r = 0; r < x.rows; ++r) x.values[r * 2 + 1] = kNaN;
        const auto m = fit_gbt(x, random_targets(rng, x));
        for (const auto& t : m.trees())
            for (const auto& n : t.nodes) CHECK(n.feature != 1);
    }
}

TEST_CASE("XOR-like data matches the exhaustive greedy tree") {
    FeatureMatrix x{{"a", "b"}, 8, {}};
    std::vector<double> y;
    for (int i = 0; i < 8; ++i) {
        const double a = (i & 1) ? 1.0 + 0.1 * i : 0.1 * i, b = (i & 2) ? 1.0 : 0.0;
        x.values.insert(x.values.end(), {a, b});
        y.push_back(((i & 1) != 0) != ((i & 2) != 0) ? 1.0 + 0.05 * i : 0.0 + 0.02 * i);
    }
    GbtParams p;
    p.max_depth = 2;
    p.lambda = 0.0;
    p.min_child_weight = 0.0;
    const Tree t = grow_tree(x, y, p);
    std::vector<oracle::OracleNode> o;
    std::vector<std::size_t> idx(8);
    std::iota(idx.begin(), idx.end(), 0);
    oracle::build_greedy(o, x, y, idx, 0, 2, 0.0, 0.0);
    for (std::size_t r = 0; r < 8; ++r) CHECK(t.predict(x.row(r)) == doctest::Approx(oracle::predict_oracle(o, std::vector<double>(x.row(r).begin(), x.row(r).end()))).epsilon(1e-12));
    CHECK(t.depth() == 2);
}

TEST_CASE("grow_tree matches the greedy oracle on random data") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t cols = 1 + trial % 4;
        const auto x = random_matrix(rng, 25 + trial, cols, trial % 3 == 0 ? 0.2 : 0.0, trial % 2 ? 5 : 0);
        const auto r = random_targets(rng, x);
        GbtParams p;
        p.max_depth = 1 + trial % 3;
        p.lambda = trial % 2 ? 1.0 : 0.5;
        p.min_child_weight = 1 + trial % 3;
        const Tree t = grow_tree(x, r, p);
        std::vector<oracle::OracleNode> o;
        std::vector<std::size_t> idx(x.rows);
        std::iota(idx.begin(), idx.end(), 0);
        oracle::build_greedy(o, x, r, idx, 0, p.max_depth, p.lambda, p.min_child_weight);
        CHECK(t.depth() <= p.max_depth);
        for (std::size_t i = 0; i < x.rows; ++i) {
            const std::vector<double> v(x.row(i).begin(), x.row(i).end());
            CHECK(t.predict(v) == doctest::Approx(oracle::predict_oracle(o, v)).epsilon(1e-10));
        }
        for (const auto& n : t.nodes) {
            if (n.is_leaf()) CHECK(n.cover > 0);
            else CHECK(std::isfinite(n.threshold));
        }
    }
}

TEST_CASE("fit is deterministic and monotone on monotone data") {
    std::mt19937_64 rng(4);
    const auto x = random_matrix(rng, 80, 3, 0.1);
    const auto y = random_targets(rng, x);
    CHECK(to_json(fit_gbt(x, y)).dump() == to_json(fit_gbt(x, y)).dump());

    FeatureMatrix line{{"x"}, 50, {}};
    std::vector<double> ly;
    for (int i = 0; i < 50; ++i) line.values.push_back(i), ly.push_back(std::sqrt(i) + 0.01 * i);
    const auto m = fit_gbt(line, ly);
    for (int i = 1; i < 50; ++i)
        CHECK(m.predict_dense(std::vector<double>{double(i)}) >= m.predict_dense(std::vector<double>{double(i - 1)}));
}

TEST_CASE("SHAP examples") {
    const auto m = stump_model();
    FeatureMatrix bg{{"x"}, 2, {0.2, 0.9}};
    const auto e = shap_values_dense(m, std::vector<double>{0.7}, bg);
    CHECK(e.base_value == doctest::Approx(2.0));
    CHECK(e.phis[0] == doctest::Approx(2.1 - 2.0).epsilon(1e-12));

    // Duplicated feature columns with a symmetric tree.
    GbtModel sym({"a", "b"}, 0.0, 1.0);
    Tree t;
    t.nodes = {{0, 0.5, true, 1, 2, 0, 4},           {1, 0.5, true, 3, 4, 0, 2}, {1, 0.5, true, 5, 6, 0, 2},
               {-1, 0, true, -1, -1, 0.0, 1},       {-1, 0, true, -1, -1, 1.0, 1}, {-1, 0, true, -1, -1, 1.0, 1},
               {-1, 0, true, -1, -1, 3.0, 1}};
    sym.add_tree(t);
    FeatureMatrix bg2{{"a", "b"}, 4, {0, 0, 0, 1, 1, 0, 1, 1}};
    for (auto mode : {ShapMode::interventional, ShapMode::tree_path_dependent}) {
        const auto s = shap_values_dense(sym, std::vector<double>{1.0, 1.0}, bg2, mode);
        CHECK(s.phis[0] == doctest::Approx(s.phis[1]).epsilon(1e-12));
        CHECK(phi_sum(s) == doctest::Approx(3.0).epsilon(1e-12));
    }
}

TEST_CASE("SHAP equals exhaustive Shapley enumeration on 100 random models") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t cols = 1 + trial % 8;
        const auto x = random_matrix(rng, 40, cols, 0.15, trial % 3 == 0 ? 4 : 0);
        GbtParams p;
        p.n_estimators = 3 + trial % 5;
        p.max_depth = 1 + trial % 4;
        p.learning_rate = 0.3;
        const auto model = fit_gbt(x, random_targets(rng, x), p);
        FeatureMatrix bg{x.names, 6, {x.values.begin(), x.values.begin() + static_cast<long>(6 * cols)}};
        for (std::size_t r = 30; r < 33; ++r) {
            const std::vector<double> row(x.row(r).begin(), x.row(r).end());
            const double f = model.predict_dense(row);

            const auto ei = shap_values_dense(model, row, bg, ShapMode::interventional);
            const auto oi = oracle::interventional_shapley(model, row, bg);
            for (std::size_t c = 0; c < cols; ++c) CHECK(std::abs(ei.phis[c] - oi[c]) <= 1e-6);
            CHECK(std::abs(phi_sum(ei) - f) <= 1e-9);
            CHECK(ei.prediction == f);

            const auto ep = shap_values_dense(model, row, bg, ShapMode::tree_path_dependent);
            const auto op = oracle::path_dependent_shapley(model, row);
            for (std::size_t c = 0; c < cols; ++c) CHECK(std::abs(ep.phis[c] - op[c]) <= 1e-6);
            CHECK(std::abs(phi_sum(ep) - f) <= 1e-9);
        }
    }
}

TEST_CASE("background changes base value and phis but not the prediction") {
    std::mt19937_64 rng(6);
    const auto x = random_matrix(rng, 50, 4, 0.1);
    const auto model = fit_gbt(x, random_targets(rng, x));
    const auto row = row_of(x, 7);
    std::vector<FeatureRow> bg1, bg2;
    for (std::size_t r = 0; r < 10; ++r) bg1.push_back(row_of(x, r));
    for (std::size_t r = 20; r < 45; ++r) bg2.push_back(row_of(x, r));
    const auto a = shap_values(model, row, bg1), b = shap_values(model, row, bg2);
    CHECK(a.prediction == b.prediction);
    CHECK(a.prediction == predict(model, row));
    CHECK(a.base_value != b.base_value);
    CHECK(std::abs(phi_sum(a) - a.prediction) <= 1e-9);
    CHECK(std::abs(phi_sum(b) - b.prediction) <= 1e-9);
}

TEST_CASE("group_shap") {
    Explanation e;
    e.base_value = 1.0;
    e.names = {"bnc", "subtlex", "lang8", "len"};
    e.phis = {0.1, -0.05, 0.2, 0.4};
    e.prediction = 1.65;
    const auto g = group_shap(e, {{"frequency", {"bnc", "subtlex", "lang8"}}});
    CHECK(g.at("frequency") == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(g.at("len") == 0.4);
    const auto all = group_shap(e, {{"all", e.names}});
    CHECK(all.at("all") == doctest::Approx(e.prediction - e.base_value).epsilon(1e-12));
    const auto id = group_shap(e, {});
    CHECK(id.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(id.at(e.names[i]) == e.phis[i]);
    CHECK_THROWS_AS(group_shap(e, {{"a", {"bnc"}}, {"b", {"bnc"}}}), InputError);
    CHECK_THROWS_AS(group_shap(e, {{"a", {"nope"}}}), InputError);
}

TEST_CASE("global_importance") {
    Explanation a, b;
    a.names = b.names = {"x", "y"};
    a.phis = {1.0, 0.5};
    b.phis = {-1.0, -0.25};
    a.groups = {{"g", 1.5}};
    b.groups = {{"g", -1.25}};
    const auto single = global_importance({b});
    CHECK(single.features.at("x") == 1.0);
    CHECK(single.features.at("y") == 0.25);
    const auto gi = global_importance({a, b});
    CHECK(gi.features.at("x") == 1.0);
    CHECK(gi.features.at("y") == doctest::Approx(0.375));
    CHECK(gi.groups.at("g") == doctest::Approx(1.375));
    CHECK_THROWS_AS(global_importance({}), InputError);
    Explanation c = a;
    c.names = {"x", "z"};
    CHECK_THROWS_AS(global_importance({a, c}), InputError);
}

TEST_CASE("model JSON round-trip") {
    std::mt19937_64 rng(8);
    const auto x = random_matrix(rng, 60, 3, 0.2);
    const auto m = fit_gbt(x, random_targets(rng, x));
    const auto j = to_json(m);
    CHECK(j.at("kind") == "gbtree");
    const auto back = gbt_from_json(nlohmann::json::parse(j.dump()));
    CHECK(to_json(back).dump() == j.dump());
    for (std::size_t r = 0; r < x.rows; ++r) CHECK(back.predict_dense(x.row(r)) == m.predict_dense(x.row(r)));
    auto broken = j;
    broken["trees"][0]["nodes"][0]["left"] = 999;
    CHECK_THROWS_AS(gbt_from_json(broken), InputError);

    Explanation e = shap_values_dense(m, x.row(0), x);
    const auto je = to_json(e, "item1");
    CHECK(je.at("item_id") == "item1");
    CHECK(je.at("phis").size() == 3);
}
