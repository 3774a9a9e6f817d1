#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "vocabdiff/error.hpp"
#include "vocabdiff/evaluation.hpp"

using namespace vocabdiff;

TEST_CASE("rmse") {
    const std::vector<double> g{1.0, -2.0, 0.5};
    CHECK(rmse(g, g) == 0.0);
    CHECK(rmse({1.5, -1.5, 1.0}, g) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rmse({1, 2}, {3, 2}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(rmse({1}, {1, 2}), InputError);
    CHECK_THROWS_AS(rmse({}, {}), InputError);
}

TEST_CASE("pearson") {
    const std::vector<double> g{1.0, -2.0, 0.5, 4.0};
    std::vector<double> aff, neg;
    for (double v : g) aff.push_back(3 * v + 7), neg.push_back(-v);
    CHECK(pearson(aff, g) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(pearson(neg, g) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(pearson({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), InputError);
    CHECK_THROWS_AS(pearson({1}, {1}), InputError);
}

TEST_CASE("metric properties") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n;
    for (int t = 0; t < 100; ++t) {
        std::vector<double> a(20), b(20), c(20);
        for (std::size_t i = 0; i < 20; ++i) a[i] = n(rng), b[i] = a[i] + n(rng);
        CHECK(rmse(a, b) == rmse(b, a));
        const double s = 0.1 + std::abs(n(rng)), o = n(rng);
        for (std::size_t i = 0; i < 20; ++i) c[i] = s * a[i] + o;
        CHECK(pearson(c, b) == doctest::Approx(pearson(a, b)).epsilon(1e-12));
        CHECK(pearson(a, b) == doctest::Approx(pearson(b, a)).epsilon(1e-15));
    }
}

TEST_CASE("ranked corpus") {
    const RankedCorpus c({"a", "b", "c", "d"}, {1.0, 3.0, 1.0, 2.0});
    CHECK(c.scores() == std::vector<double>{3.0, 2.0, 1.0, 1.0});
    CHECK(c.rank_of("b") == 1);
    CHECK(c.rank_of("a") == 3);
    CHECK(c.rank_of("c") == 4);
    CHECK_THROWS_AS(c.rank_of("z"), InputError);
    CHECK_THROWS_AS(RankedCorpus({"a", "a"}, {1, 2}), InputError);
}

TEST_CASE("statistical_optimum examples") {
    const RankedCorpus five({"r1", "r2", "r3", "r4", "r5"}, {5, 4, 3, 2, 1});
    CHECK(statistical_optimum(five, {"r3"}, 4) == std::vector<double>{1.0});
    CHECK(statistical_optimum(five, {"r1", "r5"}, 1) == std::vector<double>{4.0, 2.0});

    const std::vector<std::string> all{"r1", "r2", "r3", "r4", "r5"};
    const auto own = statistical_optimum(five, all, 0);
    CHECK(own == std::vector<double>{5, 4, 3, 2, 1});
    CHECK(rmse(own, {5, 4, 3, 2, 1}) == 0.0);
    CHECK(statistical_optimum(five, all, 100) == std::vector<double>{1, 1, 1, 5, 5});
    CHECK_THROWS_AS(statistical_optimum(five, {"zz"}, 1), InputError);
    CHECK_THROWS_AS(statistical_optimum(five, {"r1"}, -1), InputError);

    CHECK(CiWidths::kvl_defaults().width("es") == 69);
    CHECK(CiWidths::kvl_defaults().width("zh") == 95);
    CHECK(CiWidths::kvl_defaults().width("de") == 108);
    CHECK_THROWS_AS(CiWidths::kvl_defaults().width("fr"), InputError);
    CHECK(statistical_optimum(five, {"r3"}, CiWidths{{{"es", 1}}}, "es") == std::vector<double>{2.0});
}

TEST_CASE("statistical_optimum matches the window oracle and is monotone in width") {
    std::mt19937_64 rng(19);
    std::normal_distribution<double> n;
    std::uniform_int_distribution<int> coarse(-4, 4);
    for (int t = 0; t < 30; ++t) {
        const std::size_t size = 20 + t * 3;
        std::vector<std::string> ids;
        std::vector<double> scores;
        for (std::size_t i = 0; i < size; ++i) {
            ids.push_back("i" + std::to_string(i));
            scores.push_back(t % 2 ? n(rng) : coarse(rng) * 0.5);
        }
        const RankedCorpus c(ids, scores);
        std::vector<std::string> eval;
        std::vector<std::size_t> ranks0;
        std::vector<double> gold;
        for (std::size_t i = 0; i < size; i += 3) {
            eval.push_back(ids[i]);
            ranks0.push_back(c.rank_of(ids[i]) - 1);
            gold.push_back(scores[i]);
        }
        const double lo = *std::min_element(scores.begin(), scores.end());
        const double hi = *std::max_element(scores.begin(), scores.end());
        double prev = 0.0;
        for (int w : {0, 1, 2, 5, 10, 30, 1000}) {
            const auto sim = statistical_optimum(c, eval, w);
            CHECK(sim == oracle::optimum_window(c.scores(), ranks0, static_cast<std::size_t>(w)));
            for (double v : sim) {
                CHECK(v >= lo);
                CHECK(v <= hi);
            }
            const double r = rmse(sim, gold);
            CHECK(r >= prev);
            prev = r;
        }
    }
}

TEST_CASE("reports and aggregation") {
    const auto perfect = evaluate_report({1, 2, 3}, {1, 2, 3}, "es");
    CHECK(perfect.rmse == 0.0);
    CHECK(perfect.pcc == doctest::Approx(1.0));
    CHECK(perfect.n == 3);

    const auto two = aggregate({{"es", 10, 0.2, 0.5}, {"de", 10, 0.4, 0.7}});
    CHECK(two.mean_rmse == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(two.mean_pcc == doctest::Approx(0.6).epsilon(1e-15));

    const auto three = aggregate({{"zh", 5, 0.321, 0.1}, {"de", 50, 0.304, 0.2}, {"es", 500, 0.205, 0.3}});
    CHECK(three.mean_rmse == doctest::Approx((0.321 + 0.304 + 0.205) / 3).epsilon(1e-15));
    CHECK(three.mean_pcc == doctest::Approx(0.2).epsilon(1e-15));
    CHECK_THROWS_AS(aggregate({{"es", 1, 0, 0}, {"es", 1, 0, 0}}), InputError);

    const auto table = format_table({{"System A", two}});
    CHECK(table.find("System A") != std::string::npos);
    CHECK(table.find("0.300") != std::string::npos);
    CHECK(to_json(two).at("mean").at("rmse") == doctest::Approx(0.3));
}
