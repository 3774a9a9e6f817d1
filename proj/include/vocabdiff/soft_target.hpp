#pragma once

#include <span>
#include <utility>
#include <vector>

namespace vocabdiff {

// Consecutive integer scale points and the token id that spells each one.
class ScaleTokens {
public:
    // points = {min_point, ..., min_point + token_of.size() - 1}.
    ScaleTokens(int min_point, std::vector<int> token_of, int vocab_size);

    // Scale {min_point..max_point} spelled by tokens first_token, first_token+1, ...
    static ScaleTokens consecutive(int min_point, int max_point, int first_token, int vocab_size);

    int min_point() const { return min_; }
    int max_point() const { return min_ + static_cast<int>(tokens_.size()) - 1; }
    std::size_t size() const { return tokens_.size(); }
    int point(std::size_t idx) const { return min_ + static_cast<int>(idx); }
    int token_of(int point) const;
    const std::vector<int>& tokens() const { return tokens_; }
    int vocab_size() const { return vocab_; }

private:
    int min_;
    std::vector<int> tokens_;
    int vocab_;
};

// Two-point target over adjacent scale tokens.
struct SoftTarget {
    std::vector<std::pair<int, double>> probs;  // (token id, probability)
};

// Validated dense distribution over the vocabulary.
class TokenDistribution {
public:
    explicit TokenDistribution(std::vector<double> probs);
    static TokenDistribution from_logits(std::span<const double> logits);

    std::span<const double> probs() const { return probs_; }
    double operator[](std::size_t i) const { return probs_[i]; }
    std::size_t size() const { return probs_.size(); }

private:
    std::vector<double> probs_;
};

std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

SoftTarget build_soft_target(double y, const ScaleTokens& scale);

// Dense expansion over the vocabulary.
TokenDistribution to_distribution(const SoftTarget& target, int vocab_size);

// Hard one-hot target on v(point).
SoftTarget hard_target(int point, const ScaleTokens& scale);

// Round half up to the nearest scale point, clamped into the scale.
int discretize(double y, const ScaleTokens& scale);

// -sum p(i) log p_hat(i); +infinity when a supported token has zero
// predicted probability.
double soft_cross_entropy(const SoftTarget& target, const TokenDistribution& pred);

// Same loss computed from logits with a numerically stable log-softmax.
double soft_cross_entropy_logits(const SoftTarget& target, std::span<const double> logits);

// d loss / d logits = softmax(logits) - p.
std::vector<double> soft_ce_grad_logits(const SoftTarget& target, std::span<const double> logits);

struct WeightedMean {
    double value;
    // Probability mass outside the scale tokens, discarded by renormalisation.
    double off_scale_mass;
};

WeightedMean prob_weighted_mean_diag(const TokenDistribution& pred, const ScaleTokens& scale);
double prob_weighted_mean(const TokenDistribution& pred, const ScaleTokens& scale);

// Temperature-scaled softmax over per-point log-probabilities followed by
// the weighted mean. -infinity entries mark points with no probability.
double gscale(std::span<const double> scale_logprobs, double temperature, const ScaleTokens& scale);

// {2^j : j = -4..8}
std::vector<double> default_temperature_grid();

// Grid temperature with the lowest mean out-of-fold squared error. Folds are
// contiguous blocks in input order; ties go to the smaller temperature.
double fit_gscale_temperature(const std::vector<std::vector<double>>& prompted_logprobs,
                              const std::vector<double>& targets, int folds, const ScaleTokens& scale,
                              const std::vector<double>& grid = default_temperature_grid());

}  // namespace vocabdiff
