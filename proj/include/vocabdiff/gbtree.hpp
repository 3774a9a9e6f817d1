#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vocabdiff/features.hpp"

namespace vocabdiff {

// Defaults follow the regressor settings used for the explainable model
// (depth 3, rate 0.1, 200 trees) with the library defaults for the rest.
struct GbtParams {
    int max_depth = 3;
    double learning_rate = 0.1;
    int n_estimators = 200;
    double min_child_weight = 1.0;
    double lambda = 1.0;
};

// Row-major dense matrix; NaN marks MISSING.
struct FeatureMatrix {
    std::vector<std::string> names;
    std::size_t rows = 0;
    std::vector<double> values;

    std::span<const double> row(std::size_t r) const { return {values.data() + r * names.size(), names.size()}; }
    std::size_t cols() const { return names.size(); }
};

FeatureMatrix to_matrix(const std::vector<FeatureRow>& rows);
std::vector<double> to_dense(const FeatureRow& row);

struct TreeNode {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    bool default_left = true;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf output (before learning-rate scaling)
    double cover = 0.0;  // training rows reaching the node

    bool is_leaf() const { return feature < 0; }
};

// Rows with x < threshold go left; MISSING follows default_left.
struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double predict(std::span<const double> x) const;
    int depth() const;
};

class GbtModel {
public:
    GbtModel(std::vector<std::string> feature_names, double base_score, double learning_rate);

    const std::vector<std::string>& feature_names() const { return names_; }
    double base_score() const { return base_; }
    double learning_rate() const { return lr_; }
    const std::vector<Tree>& trees() const { return trees_; }
    void add_tree(Tree tree);

    // Range of the training targets, used to flag extrapolated predictions.
    double target_min = 0.0;
    double target_max = 0.0;
    GbtParams params;

    double predict_dense(std::span<const double> x) const;

private:
    std::vector<std::string> names_;
    double base_;
    double lr_;
    std::vector<Tree> trees_;
};

// Squared-error boosting with exact greedy split search. Split ties go to
// the lowest feature index, then the lowest threshold, then missing-left.
GbtModel fit_gbt(const std::vector<FeatureRow>& rows, const std::vector<double>& targets,
                 const GbtParams& params = {});
GbtModel fit_gbt(const FeatureMatrix& x, const std::vector<double>& targets, const GbtParams& params = {});

// Single tree grown greedily on residuals (exposed for oracle tests).
Tree grow_tree(const FeatureMatrix& x, const std::vector<double>& residuals, const GbtParams& params);

double predict(const GbtModel& model, const FeatureRow& row);

enum class ShapMode {
    interventional,       // expectation over a background set
    tree_path_dependent,  // expectation under the training covers
};

struct Explanation {
    double base_value = 0.0;
    double prediction = 0.0;
    std::vector<std::string> names;
    std::vector<double> phis;
    std::map<std::string, double> groups;
    ShapMode mode = ShapMode::interventional;

    double phi(const std::string& name) const;
};

// Exact Shapley attributions; base_value + sum(phis) == prediction.
Explanation shap_values(const GbtModel& model, const FeatureRow& row, const std::vector<FeatureRow>& background,
                        ShapMode mode = ShapMode::interventional);
Explanation shap_values_dense(const GbtModel& model, std::span<const double> x, const FeatureMatrix& background,
                              ShapMode mode = ShapMode::interventional);

// Sums phis per group; features outside the grouping become singleton
// groups. A feature listed in two groups raises InputError.
std::map<std::string, double> group_shap(const Explanation& expl,
                                         const std::map<std::string, std::vector<std::string>>& grouping);

struct GlobalImportance {
    std::map<std::string, double> features;  // mean |phi|
    std::map<std::string, double> groups;    // mean |group value|
};

GlobalImportance global_importance(const std::vector<Explanation>& expls);

nlohmann::json to_json(const GbtModel& model);
GbtModel gbt_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Explanation& expl, const std::string& item_id = {});

}  // namespace vocabdiff
