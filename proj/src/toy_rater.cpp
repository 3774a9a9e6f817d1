#include "vocabdiff/toy_rater.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "vocabdiff/error.hpp"

namespace vocabdiff {

RaterModel::RaterModel(int scale_points, int distractor_count, std::size_t feature_dim)
    : dim_(feature_dim),
      distractors_(distractor_count),
      scale_(ScaleTokens::consecutive(1, scale_points, 0, scale_points + distractor_count)),
      weights_(static_cast<std::size_t>(scale_points + distractor_count) * feature_dim, 0.0),
      bias_(static_cast<std::size_t>(scale_points + distractor_count), 0.0) {
    if (distractor_count < 0) throw InputError("distractor_count must be nonnegative");
    if (feature_dim == 0) throw InputError("feature dimension must be positive");
}

std::vector<double> RaterModel::logits(std::span<const double> features) const {
    if (features.size() != dim_)
        throw InputError("feature dimension " + std::to_string(features.size()) + " does not match model dimension " +
                         std::to_string(dim_));
    std::vector<double> z(bias_);
    for (std::size_t r = 0; r < z.size(); ++r) {
        const double* w = weights_.data() + r * dim_;
        for (std::size_t c = 0; c < dim_; ++c) z[r] += w[c] * features[c];
    }
    return z;
}

namespace {

SoftTarget target_for(double y, const ScaleTokens& scale, LossMode mode) {
    return mode == LossMode::soft ? build_soft_target(y, scale) : hard_target(discretize(y, scale), scale);
}

}  // namespace

double training_loss(const RaterModel& model, const std::vector<RaterExample>& data, LossMode mode) {
    double total = 0.0;
    for (const auto& ex : data)
        total += soft_cross_entropy_logits(target_for(ex.y, model.scale(), mode), model.logits(ex.features));
    return total / static_cast<double>(data.size());
}

std::vector<double> training_gradient(const RaterModel& model, const std::vector<RaterExample>& data,
                                      LossMode mode) {
    const std::size_t v = model.vocab_size(), d = model.feature_dim();
    std::vector<double> grad(v * d + v, 0.0);
    const double inv_n = 1.0 / static_cast<double>(data.size());
    for (const auto& ex : data) {
        const auto g = soft_ce_grad_logits(target_for(ex.y, model.scale(), mode), model.logits(ex.features));
        for (std::size_t r = 0; r < v; ++r) {
            const double gr = g[r] * inv_n;
            for (std::size_t c = 0; c < d; ++c) grad[r * d + c] += gr * ex.features[c];
            grad[v * d + r] += gr;
        }
    }
    return grad;
}

TrainResult train_rater(const std::vector<RaterExample>& data, const TrainConfig& cfg) {
    if (data.empty()) throw InputError("training data is empty");
    if (cfg.epochs < 1) throw InputError("epochs must be at least 1");
    if (!(cfg.learning_rate > 0.0)) throw InputError("learning rate must be positive");

    RaterModel model(cfg.scale_points, cfg.distractor_count, data.front().features.size());
    for (const auto& ex : data) {
        if (ex.features.size() != model.feature_dim()) throw InputError("inconsistent feature dimensions");
        if (!(ex.y >= model.scale().min_point() && ex.y <= model.scale().max_point()))
            throw InputError("target " + std::to_string(ex.y) + " outside the rating scale");
    }

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> init(-0.01, 0.01);
    for (double& w : model.weights()) w = init(rng);

    const double initial = training_loss(model, data, cfg.loss_mode);
    const std::size_t nw = model.weights().size();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<double> g;
        try {
            g = training_gradient(model, data, cfg.loss_mode);
        } catch (const InputError&) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                               ": non-finite logits; lower the learning rate");
        }
        for (double gi : g)
            if (!std::isfinite(gi))
                throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                   ": non-finite gradient; lower the learning rate");
        for (std::size_t i = 0; i < nw; ++i) model.weights()[i] -= cfg.learning_rate * g[i];
        for (std::size_t r = 0; r < model.bias().size(); ++r) model.bias()[r] -= cfg.learning_rate * g[nw + r];
    }
    const double final_loss = training_loss(model, data, cfg.loss_mode);
    if (!std::isfinite(final_loss) || final_loss > 10.0 * initial)
        throw NumericError("training diverged: final loss is " + std::to_string(final_loss) +
                           " (initial " + std::to_string(initial) + "); lower the learning rate");
    return {std::move(model), initial, final_loss};
}

double predict(const RaterModel& model, std::span<const double> features, InferenceMode mode) {
    const auto probs = softmax(model.logits(features));
    const auto& scale = model.scale();
    if (mode == InferenceMode::weighted) return prob_weighted_mean(TokenDistribution(probs), scale);
    // Highest-probability scale token; strict comparison keeps the lower point on ties.
    std::size_t best = 0;
    for (std::size_t i = 1; i < scale.size(); ++i)
        if (probs[static_cast<std::size_t>(scale.tokens()[i])] > probs[static_cast<std::size_t>(scale.tokens()[best])])
            best = i;
    return scale.point(best);
}

std::vector<RaterExample> synthetic_benchmark(std::size_t n, std::uint64_t seed, double noise) {
    if (!(noise >= 0.0)) throw InputError("noise must be nonnegative");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0.0, 1.0);
    std::normal_distribution<double> eps(0.0, 1.0);
    std::vector<RaterExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ux(rng);
        double y = 1.0 + 4.0 * x;
        if (noise > 0.0) y += noise * eps(rng);
        out.push_back({{x}, std::clamp(y, 1.0, 5.0)});
    }
    return out;
}

void to_json(nlohmann::json& j, const RaterModel& model) {
    j = nlohmann::json{{"kind", "toy_rater"},
                       {"scale_points", model.scale().size()},
                       {"distractor_count", model.distractor_count()},
                       {"feature_dim", model.feature_dim()},
                       {"weights", model.weights()},
                       {"bias", model.bias()}};
}

RaterModel rater_from_json(const nlohmann::json& j) {
    RaterModel model(j.at("scale_points").get<int>(), j.at("distractor_count").get<int>(),
                     j.at("feature_dim").get<std::size_t>());
    auto w = j.at("weights").get<std::vector<double>>();
    auto b = j.at("bias").get<std::vector<double>>();
    if (w.size() != model.weights().size() || b.size() != model.bias().size())
        throw InputError("toy rater parameters do not match the declared shape");
    model.weights() = std::move(w);
    model.bias() = std::move(b);
    return model;
}

}  // namespace vocabdiff
