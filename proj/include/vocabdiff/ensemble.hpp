#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace vocabdiff {

struct FoldPlan {
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> item_ids;  // input order
    std::vector<int> fold;              // fold index per item, aligned with item_ids

    std::map<std::string, int> assignment() const;
    std::vector<std::size_t> members(int f) const;
};

// Shuffles ids with the seed and deals them round-robin, so fold sizes differ
// by at most one.
FoldPlan make_folds(const std::vector<std::string>& item_ids, int k, std::uint64_t seed);

// Fits on the training indices and predicts the held-out indices (returned
// in the order of `test`).
using FitPredict =
    std::function<std::vector<double>(const std::vector<std::size_t>& train, const std::vector<std::size_t>& test)>;

// Out-of-fold predictions aligned with plan.item_ids. Folds run concurrently
// up to `threads`; a failing fold raises InputError naming its index.
std::vector<double> oof_predictions(const FitPredict& trainer, const FoldPlan& plan, unsigned threads = 1);

struct NamedColumns {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;  // one vector per name

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
};

struct StackModel {
    std::string l1;
    double intercept = 0.0;
    std::vector<std::string> names;
    std::vector<double> coefficients;

    double coefficient(const std::string& name) const;
};

inline constexpr double kStackRidge = 1e-8;

// Least squares with intercept on centered normal equations plus a tiny ridge.
StackModel fit_stack(const NamedColumns& inputs, const std::vector<double>& targets, const std::string& l1);
std::vector<double> predict_stack(const StackModel& model, const NamedColumns& inputs);

std::vector<double> average_ensemble(const std::vector<std::vector<double>>& predictions);

nlohmann::json to_json(const StackModel& model);
StackModel stack_from_json(const nlohmann::json& j);

}  // namespace vocabdiff
