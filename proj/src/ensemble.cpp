#include "vocabdiff/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "vocabdiff/error.hpp"

namespace vocabdiff {

std::map<std::string, int> FoldPlan::assignment() const {
    std::map<std::string, int> out;
    for (std::size_t i = 0; i < item_ids.size(); ++i) out[item_ids[i]] = fold[i];
    return out;
}

std::vector<std::size_t> FoldPlan::members(int f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold.size(); ++i)
        if (fold[i] == f) out.push_back(i);
    return out;
}

FoldPlan make_folds(const std::vector<std::string>& item_ids, int k, std::uint64_t seed) {
    if (k < 2) throw InputError("k must be at least 2");
    if (static_cast<std::size_t>(k) > item_ids.size())
        throw InputError("k=" + std::to_string(k) + " exceeds the number of items (" +
                         std::to_string(item_ids.size()) + ")");
    {
        std::vector<std::string> sorted = item_ids;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw InputError("duplicate item ids in fold plan");
    }
    std::vector<std::size_t> order(item_ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.item_ids = item_ids;
    plan.fold.assign(item_ids.size(), 0);
    for (std::size_t pos = 0; pos < order.size(); ++pos) plan.fold[order[pos]] = static_cast<int>(pos % k);
    return plan;
}

std::vector<double> oof_predictions(const FitPredict& trainer, const FoldPlan& plan, unsigned threads) {
    if (plan.fold.size() != plan.item_ids.size()) throw InputError("malformed fold plan");
    std::vector<double> out(plan.item_ids.size(), 0.0);
    std::atomic<int> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    int failed_fold = -1;

    auto work = [&] {
        for (int f = next++; f < plan.k; f = next++) {
            try {
                const auto test = plan.members(f);
                std::vector<std::size_t> train;
                for (std::size_t i = 0; i < plan.fold.size(); ++i)
                    if (plan.fold[i] != f) train.push_back(i);
                const auto pred = trainer(train, test);
                if (pred.size() != test.size())
                    throw InputError("trainer returned " + std::to_string(pred.size()) + " predictions for " +
                                     std::to_string(test.size()) + " items");
                for (std::size_t t = 0; t < test.size(); ++t) out[test[t]] = pred[t];
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (failed_fold < 0 || f < failed_fold) {
                    failed_fold = f;
                    first_error = std::current_exception();
                }
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(plan.k)));
    if (n == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < n; ++t) pool.emplace_back(work);
    }
    if (first_error) {
        try {
            std::rethrow_exception(first_error);
        } catch (const std::exception& e) {
            throw InputError("fold " + std::to_string(failed_fold) + " failed: " + e.what());
        }
    }
    return out;
}

double StackModel::coefficient(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return coefficients[i];
    throw InputError("stack has no input '" + name + "'");
}

namespace {

void check_columns(const NamedColumns& in) {
    if (in.names.size() != in.columns.size()) throw InputError("column names and columns differ in count");
    const std::size_t n = in.rows();
    for (std::size_t c = 0; c < in.columns.size(); ++c) {
        if (in.columns[c].size() != n) throw InputError("column '" + in.names[c] + "' has the wrong length");
        for (double v : in.columns[c])
            if (!std::isfinite(v)) throw InputError("column '" + in.names[c] + "' has a non-finite value");
    }
}

// Solves A x = b for symmetric positive-definite A (row-major, n x n).
std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (!(d > 0.0)) throw InputError("stacking inputs are degenerate");
        d = std::sqrt(d);
        a[j * n + j] = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / d;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
        b[i] = s / a[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
        b[i] = s / a[i * n + i];
    }
    return b;
}

}  // namespace

StackModel fit_stack(const NamedColumns& inputs, const std::vector<double>& targets, const std::string& l1) {
    if (l1.empty()) throw InputError("a stack must be tagged with its L1");
    check_columns(inputs);
    const std::size_t p = inputs.columns.size(), n = targets.size();
    if (p == 0) throw InputError("stack needs at least one input column");
    if (inputs.rows() != n) throw InputError("inputs and targets differ in length");
    if (n < p + 1) throw InputError("stack needs at least " + std::to_string(p + 1) + " rows");
    for (double t : targets)
        if (!std::isfinite(t)) throw InputError("targets must be finite");

    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> mean(p, 0.0);
    for (std::size_t c = 0; c < p; ++c) mean[c] = std::accumulate(inputs.columns[c].begin(), inputs.columns[c].end(), 0.0) * inv_n;
    const double ymean = std::accumulate(targets.begin(), targets.end(), 0.0) * inv_n;

    bool any_variance = false;
    for (std::size_t c = 0; c < p; ++c)
        for (double v : inputs.columns[c])
            if (v != inputs.columns[c].front()) any_variance = true;
    if (!any_variance) throw InputError("stacking inputs are degenerate (all columns constant)");

    std::vector<double> xtx(p * p, 0.0), xty(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double yc = targets[i] - ymean;
        for (std::size_t a = 0; a < p; ++a) {
            const double xa = inputs.columns[a][i] - mean[a];
            xty[a] += xa * yc;
            for (std::size_t b = 0; b <= a; ++b) xtx[a * p + b] += xa * (inputs.columns[b][i] - mean[b]);
        }
    }
    for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = 0; b < a; ++b) xtx[b * p + a] = xtx[a * p + b];
        xtx[a * p + a] += kStackRidge;
    }
    StackModel m;
    m.l1 = l1;
    m.names = inputs.names;
    m.coefficients = cholesky_solve(std::move(xtx), std::move(xty), p);
    m.intercept = ymean;
    for (std::size_t c = 0; c < p; ++c) m.intercept -= m.coefficients[c] * mean[c];
    for (double v : m.coefficients)
        if (!std::isfinite(v)) throw NumericError("stack coefficients are not finite");
    if (!std::isfinite(m.intercept)) throw NumericError("stack intercept is not finite");
    return m;
}

std::vector<double> predict_stack(const StackModel& model, const NamedColumns& inputs) {
    check_columns(inputs);
    std::vector<double> out(inputs.rows(), model.intercept);
    for (std::size_t c = 0; c < model.names.size(); ++c) {
        const auto it = std::find(inputs.names.begin(), inputs.names.end(), model.names[c]);
        if (it == inputs.names.end()) throw InputError("missing stack input '" + model.names[c] + "'");
        const auto& col = inputs.columns[static_cast<std::size_t>(it - inputs.names.begin())];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += model.coefficients[c] * col[i];
    }
    return out;
}

std::vector<double> average_ensemble(const std::vector<std::vector<double>>& predictions) {
    if (predictions.empty()) throw InputError("nothing to average");
    const std::size_t n = predictions.front().size();
    std::vector<double> out(n, 0.0);
    for (const auto& p : predictions) {
        if (p.size() != n) throw InputError("prediction vectors differ in length");
        for (std::size_t i = 0; i < n; ++i) out[i] += p[i];
    }
    for (double& v : out) v /= static_cast<double>(predictions.size());
    return out;
}

nlohmann::json to_json(const StackModel& model) {
    nlohmann::json coefs = nlohmann::json::object();
    for (std::size_t i = 0; i < model.names.size(); ++i) coefs[model.names[i]] = model.coefficients[i];
    return {{"l1", model.l1}, {"intercept", model.intercept}, {"coefficients", coefs}, {"inputs", model.names}};
}

StackModel stack_from_json(const nlohmann::json& j) {
    StackModel m;
    m.l1 = j.at("l1").get<std::string>();
    m.intercept = j.at("intercept").get<double>();
    const auto& coefs = j.at("coefficients");
    if (j.contains("inputs")) {
        m.names = j["inputs"].get<std::vector<std::string>>();
    } else {
        for (const auto& [k, v] : coefs.items()) m.names.push_back(k);
    }
    for (const auto& name : m.names) m.coefficients.push_back(coefs.at(name).get<double>());
    if (!std::isfinite(m.intercept)) throw InputError("stack intercept is not finite");
    for (double v : m.coefficients)
        if (!std::isfinite(v)) throw InputError("stack coefficient is not finite");
    return m;
}

}  // namespace vocabdiff
