#include "vocabdiff/soft_target.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

#include "vocabdiff/error.hpp"

namespace vocabdiff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> xs) {
    double m = -kInf;
    for (double x : xs) m = std::max(m, x);
    if (m == -kInf) return -kInf;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace

ScaleTokens::ScaleTokens(int min_point, std::vector<int> token_of, int vocab_size)
    : min_(min_point), tokens_(std::move(token_of)), vocab_(vocab_size) {
    if (tokens_.size() < 2) throw InputError("scale needs at least two points");
    std::set<int> seen;
    for (int t : tokens_) {
        if (t < 0 || t >= vocab_) throw InputError("scale token id " + std::to_string(t) + " outside vocabulary");
        if (!seen.insert(t).second) throw InputError("scale token ids must be distinct");
    }
}

ScaleTokens ScaleTokens::consecutive(int min_point, int max_point, int first_token, int vocab_size) {
    std::vector<int> ids(static_cast<std::size_t>(std::max(0, max_point - min_point + 1)));
    std::iota(ids.begin(), ids.end(), first_token);
    return ScaleTokens(min_point, std::move(ids), vocab_size);
}

int ScaleTokens::token_of(int point) const {
    if (point < min_point() || point > max_point())
        throw InputError("scale point " + std::to_string(point) + " outside scale");
    return tokens_[static_cast<std::size_t>(point - min_)];
}

TokenDistribution::TokenDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    double total = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw InputError("token probabilities must be finite and nonnegative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InputError("token probabilities must sum to 1");
}

TokenDistribution TokenDistribution::from_logits(std::span<const double> logits) {
    return TokenDistribution(softmax(logits));
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
    std::vector<double> out(logits.size());
    double m = -kInf;
    for (double z : logits) m = std::max(m, z / temperature);
    if (m == -kInf) throw InputError("softmax over all -infinity inputs");
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] / temperature - m);
        s += out[i];
    }
    for (double& v : out) v /= s;
    return out;
}

SoftTarget build_soft_target(double y, const ScaleTokens& scale) {
    const double lo = scale.min_point(), hi = scale.max_point();
    if (!(y >= lo && y <= hi))
        throw InputError("target " + std::to_string(y) + " outside scale [" + std::to_string(scale.min_point()) +
                         ", " + std::to_string(scale.max_point()) + "]");
    // a = floor(y), pinned so that a + 1 is still a scale point.
    const int a = std::min(static_cast<int>(std::floor(y)), scale.max_point() - 1);
    return SoftTarget{{{scale.token_of(a), (a + 1) - y}, {scale.token_of(a + 1), y - a}}};
}

TokenDistribution to_distribution(const SoftTarget& target, int vocab_size) {
    std::vector<double> dense(static_cast<std::size_t>(vocab_size), 0.0);
    for (const auto& [tok, p] : target.probs) dense.at(static_cast<std::size_t>(tok)) += p;
    return TokenDistribution(std::move(dense));
}

int discretize(double y, const ScaleTokens& scale) {
    const int r = static_cast<int>(std::floor(y + 0.5));
    return std::clamp(r, scale.min_point(), scale.max_point());
}

SoftTarget hard_target(int point, const ScaleTokens& scale) { return SoftTarget{{{scale.token_of(point), 1.0}}}; }

double soft_cross_entropy(const SoftTarget& target, const TokenDistribution& pred) {
    double loss = 0.0;
    for (const auto& [tok, p] : target.probs) {
        if (p == 0.0) continue;
        const double q = pred[static_cast<std::size_t>(tok)];
        if (q <= 0.0) return kInf;
        loss -= p * std::log(q);
    }
    return loss;
}

double soft_cross_entropy_logits(const SoftTarget& target, std::span<const double> logits) {
    const double lse = log_sum_exp(logits);
    double loss = 0.0;
    for (const auto& [tok, p] : target.probs) {
        if (p == 0.0) continue;
        loss -= p * (logits[static_cast<std::size_t>(tok)] - lse);
    }
    return loss;
}

std::vector<double> soft_ce_grad_logits(const SoftTarget& target, std::span<const double> logits) {
    for (double z : logits)
        if (!std::isfinite(z)) throw InputError("logits must be finite");
    auto grad = softmax(logits);
    for (const auto& [tok, p] : target.probs) grad.at(static_cast<std::size_t>(tok)) -= p;
    return grad;
}

WeightedMean prob_weighted_mean_diag(const TokenDistribution& pred, const ScaleTokens& scale) {
    if (pred.size() != static_cast<std::size_t>(scale.vocab_size()))
        throw InputError("distribution size does not match the scale vocabulary");
    double mass = 0.0, weighted = 0.0;
    for (std::size_t i = 0; i < scale.size(); ++i) {
        const double p = pred[static_cast<std::size_t>(scale.tokens()[i])];
        mass += p;
        weighted += p * scale.point(i);
    }
    if (!(mass > 0.0)) throw InputError("no probability mass on scale tokens");
    const double value = std::clamp(weighted / mass, double(scale.min_point()), double(scale.max_point()));
    return {value, std::max(0.0, 1.0 - mass)};
}

double prob_weighted_mean(const TokenDistribution& pred, const ScaleTokens& scale) {
    return prob_weighted_mean_diag(pred, scale).value;
}

double gscale(std::span<const double> scale_logprobs, double temperature, const ScaleTokens& scale) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw InputError("temperature must be positive");
    if (scale_logprobs.size() != scale.size()) throw InputError("one log-probability per scale point expected");
    const auto p = softmax(scale_logprobs, temperature);
    double v = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) v += p[i] * scale.point(i);
    return std::clamp(v, double(scale.min_point()), double(scale.max_point()));
}

std::vector<double> default_temperature_grid() {
    std::vector<double> grid;
    for (int j = -4; j <= 8; ++j) grid.push_back(std::ldexp(1.0, j));
    return grid;
}

double fit_gscale_temperature(const std::vector<std::vector<double>>& prompted_logprobs,
                              const std::vector<double>& targets, int folds, const ScaleTokens& scale,
                              const std::vector<double>& grid) {
    const std::size_t n = prompted_logprobs.size();
    if (targets.size() != n) throw InputError("one target per prompted example expected");
    if (folds < 2) throw InputError("at least two folds required");
    if (n < static_cast<std::size_t>(folds))
        throw InputError("fewer examples (" + std::to_string(n) + ") than folds (" + std::to_string(folds) + ")");
    if (grid.empty()) throw InputError("empty temperature grid");

    const std::size_t k = static_cast<std::size_t>(folds);
    double best_t = grid.front();
    double best_err = kInf;
    for (double t : grid) {
        // Fold f holds the contiguous block [f*n/k, (f+1)*n/k).
        double err_sum = 0.0;
        for (std::size_t f = 0; f < k; ++f) {
            const std::size_t b = f * n / k, e = (f + 1) * n / k;
            double se = 0.0;
            for (std::size_t i = b; i < e; ++i) {
                const double d = gscale(prompted_logprobs[i], t, scale) - targets[i];
                se += d * d;
            }
            err_sum += se / static_cast<double>(e - b);
        }
        const double err = err_sum / static_cast<double>(k);
        if (err < best_err) {
            best_err = err;
            best_t = t;
        }
    }
    return best_t;
}

}  // namespace vocabdiff
