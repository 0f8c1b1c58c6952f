#pragma once

#include "riskrank/risk_model.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace riskrank {

/// Two (instance, class) keys with their risk labels. Instances index into a
/// RiskInputs.
struct RankPair {
    std::size_t left = 0;
    int left_class = 0;
    std::size_t right = 0;
    int right_class = 0;
    int left_risk = 0;   ///< 1 when the left instance is mislabeled
    int right_risk = 0;
};

/// Logistic of gamma_i - gamma_j.
double pairwise_posterior(double gamma_i, double gamma_j);
/// 0.5 * (1 + g_i - g_j).
double target_probability(int risk_i, int risk_j);

/// Cross-entropy of the posterior against the target, summed over the batch.
/// `gamma` is indexed (instance, class).
double ranking_loss(std::span<const RankPair> batch, const Matrix& gamma);

struct VoteResult {
    std::vector<std::size_t> order;  ///< instance indices, highest risk first
    std::vector<long long> wins;     ///< per instance
};

/// Instance i wins once for every other instance j and class c with
/// gamma(i, c) > gamma(j, c). Ordered by wins, then by the row sum of gamma,
/// then by id.
VoteResult vote_rank(const Matrix& gamma, const std::vector<std::string>& ids);

/// Differentiable stand-in for value_at_risk used during training:
/// logistic(kappa * (1 - mu - z * sqrt(var) - 0.5)) with z the (1 - level)
/// standard normal quantile.
inline constexpr double kSurrogateSlope = 4.0;
double surrogate_risk(double mu, double var, double level);

struct ParamGradient {
    Matrix attention;
    std::vector<double> attention_bias;
    std::vector<double> variances;

    explicit ParamGradient(const RiskModelParams& params);
};

/// ranking_loss over the batch with every gamma replaced by the surrogate at
/// the pair's class. Adds the gradient to `grad` when given. `dropout`
/// enables training-mode dropout.
double surrogate_ranking_loss(const RiskInputs& inputs, const RiskModelParams& params,
                              std::span<const RankPair> batch, Lcg64* dropout = nullptr,
                              ParamGradient* grad = nullptr);

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t max_iterations = 200;
    std::size_t batch_pairs = 256;
    std::size_t checkpoint_every = 10;
    std::uint64_t seed = 0;
};

struct CheckpointRecord {
    std::size_t iteration = 0;
    double loss = 0.0;  ///< mean eval-mode surrogate loss over all cross pairs
    double valid_auroc = 0.0;
};

struct TrainResult {
    RiskModelParams params;
    std::vector<CheckpointRecord> log;
    std::size_t best_iteration = 0;
    double best_auroc = 0.0;
};

/// Every (mislabeled, correct) pair of labeled instances at their predicted classes.
std::vector<RankPair> all_cross_pairs(const RiskInputs& inputs);

/// Plain gradient descent on sampled mislabeled x correct pairs. Returns the
/// checkpoint with the best AUROC of predicted-class risk on `inputs`.
TrainResult train_risk_model(const RiskInputs& inputs, RiskModelParams params, const TrainConfig& config);

void write_training_log(const std::vector<CheckpointRecord>& log, const std::string& path);

}  // namespace riskrank
