#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "vocabdiff/soft_target.hpp"

namespace vocabdiff {

enum class LossMode { soft, hard };
enum class InferenceMode { weighted, argmax };

struct TrainConfig {
    int epochs = 5000;
    double learning_rate = 4.0;
    std::uint64_t seed = 0;
    LossMode loss_mode = LossMode::soft;
    InferenceMode inference_mode = InferenceMode::weighted;
    int scale_points = 5;
    int distractor_count = 3;
};

struct RaterExample {
    std::vector<double> features;
    double y;  // on the rating scale
};

// Linear map from features to logits over the vocabulary, softmax output.
// The vocabulary holds the scale tokens followed by distractor tokens that
// never appear in targets.
class RaterModel {
public:
    RaterModel(int scale_points, int distractor_count, std::size_t feature_dim);

    std::size_t feature_dim() const { return dim_; }
    std::size_t vocab_size() const { return bias_.size(); }
    int distractor_count() const { return distractors_; }
    const ScaleTokens& scale() const { return scale_; }

    // Row-major (vocab_size x feature_dim).
    std::vector<double>& weights() { return weights_; }
    const std::vector<double>& weights() const { return weights_; }
    std::vector<double>& bias() { return bias_; }
    const std::vector<double>& bias() const { return bias_; }

    std::vector<double> logits(std::span<const double> features) const;

private:
    std::size_t dim_;
    int distractors_;
    ScaleTokens scale_;
    std::vector<double> weights_;
    std::vector<double> bias_;
};

// Mean training loss for the given mode.
double training_loss(const RaterModel& model, const std::vector<RaterExample>& data, LossMode mode);

// Gradient of training_loss; weights first (row-major) then bias.
std::vector<double> training_gradient(const RaterModel& model, const std::vector<RaterExample>& data,
                                      LossMode mode);

struct TrainResult {
    RaterModel model;
    double initial_loss;
    double final_loss;
};

// Full-batch gradient descent from a seeded small random initialisation.
TrainResult train_rater(const std::vector<RaterExample>& data, const TrainConfig& cfg);

double predict(const RaterModel& model, std::span<const double> features, InferenceMode mode);

// 1-d benchmark: x ~ U[0, 1], y = 1 + 4x + N(0, noise), clipped to [1, 5].
std::vector<RaterExample> synthetic_benchmark(std::size_t n, std::uint64_t seed, double noise = 0.0);

void to_json(nlohmann::json& j, const RaterModel& model);
RaterModel rater_from_json(const nlohmann::json& j);

}  // namespace vocabdiff
