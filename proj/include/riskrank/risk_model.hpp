#pragma once

#include "riskrank/random.hpp"
#include "riskrank/risk_scores.hpp"
#include "riskrank/rules.hpp"
#include "riskrank/workload.hpp"

#include <span>
#include <string>
#include <vector>

namespace riskrank {

/// Per-class sigmoid calibration P = 1 / (1 + exp(a * score + b)).
struct PlattParams {
    double a = -1.0;
    double b = 0.0;
};

/// Attention-based risk model. Input positions are the induced rules plus one
/// trailing, always-active position fed by the classifier's calibrated
/// probability for the pair's class.
struct RiskModelParams {
    std::size_t num_rules = 0;
    Matrix attention;                   ///< positions x positions
    std::vector<double> attention_bias; ///< positions
    std::vector<double> rule_means;     ///< num_rules, frozen after estimation
    std::vector<double> variances;      ///< positions, learnable
    std::vector<double> class_weights;  ///< classes
    double alpha = 0.1;
    double var_level = 0.95;
    std::vector<PlattParams> platt;  ///< classes
    double dropout_rate = 0.5;

    std::size_t positions() const { return num_rules + 1; }
    std::size_t classifier_position() const { return num_rules; }
    int num_classes() const { return static_cast<int>(class_weights.size()); }
};

/// Lower bound enforced on learnable variances after every update.
inline constexpr double kLearnedVarianceFloor = 1e-6;
/// Lower bound for aggregated and neutralized pair variances.
inline constexpr double kPairVarianceFloor = 1e-8;

struct InstanceDistribution {
    double mu = 0.0;
    double var = kPairVarianceFloor;
};

/// The classifier whose mispredictions are analysed: class probabilities and
/// machine labels for every workload instance.
struct ClassifierView {
    Matrix probabilities;  ///< workload size x classes
    std::vector<int> predicted;
};

/// Softmax of the prediction file's logits (one-hot on the predicted label
/// when an instance has no logits) and its predicted labels.
ClassifierView workload_classifier(const Workload& workload);

/// Everything the model reads for a set of instances.
struct RiskInputs {
    std::vector<std::size_t> instances;  ///< workload indices
    std::vector<std::string> ids;
    std::vector<int> predicted;
    std::vector<int> true_labels;  ///< kAbsentLabel when unknown
    ActivationMatrix activations;  ///< (instance, class) pairs x rules
    Matrix classifier_scores;      ///< instances x classes

    std::size_t size() const { return instances.size(); }
    int num_classes() const { return static_cast<int>(classifier_scores.cols); }
    bool mislabeled(std::size_t k) const { return true_labels[k] != kAbsentLabel && true_labels[k] != predicted[k]; }
};

RiskInputs build_risk_inputs(const Workload& workload, const MetricTable& metrics, const std::vector<RiskRule>& rules,
                             const ClassifierView& classifier, const std::vector<std::size_t>& instances);

struct ModelConfig {
    double alpha = 0.1;
    double var_level = 0.95;
    double dropout_rate = 0.5;
    double classifier_variance = kRuleVarianceFloor;
};

/// Zero attention, rule distributions estimated on `mapping`, class weights
/// from train-split class frequencies.
RiskModelParams initialize_params(const std::vector<RiskRule>& rules, const MUPairTable& mapping,
                                  const Workload& workload, std::vector<PlattParams> platt,
                                  const ModelConfig& config = {});

/// Active positions that survive dropout at `rate`. If every active position
/// is dropped the input mask is returned unchanged.
std::vector<std::uint8_t> dropout_mask(std::span<const std::uint8_t> active, double rate, Lcg64& rng);

/// Softmax of `attention * x + bias` over active positions; inactive positions
/// get exactly 0. With `dropout` set, each active position is dropped with
/// probability dropout_rate first (all-dropped falls back to no dropout).
std::vector<double> attention_weights(std::span<const std::uint8_t> active, const RiskModelParams& params,
                                      Lcg64* dropout = nullptr);

/// mu = sum x w mean, var = sum x w^2 variance (floored).
InstanceDistribution aggregate_distribution(std::span<const std::uint8_t> active, std::span<const double> weights,
                                            std::span<const double> means, std::span<const double> variances);

struct ClassDistributions {
    std::vector<double> mu;
    std::vector<double> var;
};

/// mu' = softmax(mu - w), var' = max(var - alpha w, floor), across one
/// instance's classes.
ClassDistributions neutralize_class_bias(std::span<const double> raw_mu, std::span<const double> raw_var,
                                         const RiskModelParams& params);

/// One-vs-rest fit of (a, b) by damped Newton from (-1, 0).
PlattParams platt_fit(std::span<const double> scores, std::span<const std::uint8_t> positives);
/// Per-class fits on `scores` (instances x classes) against `labels`.
std::vector<PlattParams> platt_fit_classes(const Matrix& scores, std::span<const int> labels);
double platt_apply(double score, PlattParams params);

/// gamma = 1 - (1 - level)-quantile of Normal(mu, var) truncated to [0, 1].
double value_at_risk(double mu, double var, double level);

enum class ScoreMode { Train, Eval };

/// gamma for every (instance, class) pair. Train mode applies dropout drawn
/// from `rng`; eval mode is deterministic.
RiskScoreTable score_workload(const RiskInputs& inputs, const RiskModelParams& params, ScoreMode mode = ScoreMode::Eval,
                              Lcg64* rng = nullptr);

/// Position values for pair (k, c): rule activations plus the always-on
/// classifier slot.
std::vector<std::uint8_t> pair_activation(const RiskInputs& inputs, std::size_t k, int cls,
                                          const RiskModelParams& params);
/// Means for pair (k, c): rule means plus the calibrated classifier probability.
std::vector<double> pair_means(const RiskInputs& inputs, std::size_t k, int cls, const RiskModelParams& params);

void write_params(const RiskModelParams& params, const std::string& path);
RiskModelParams read_params(const std::string& path);

}  // namespace riskrank
