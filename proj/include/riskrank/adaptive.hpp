#pragma once

#include "riskrank/features.hpp"
#include "riskrank/risk_model.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace riskrank {

/// Linear softmax head over fused features: logits = x W + b.
struct HeadClassifier {
    Matrix weights;  ///< fused dim x classes
    std::vector<double> bias;
    bool trained = false;

    std::size_t dim() const { return weights.rows; }
    int num_classes() const { return static_cast<int>(bias.size()); }
    std::vector<double> logits(std::span<const double> x) const;
    int predict(std::span<const double> x) const;
};

inline constexpr double kInitialTemperature = 2.0;
inline constexpr double kMinTemperature = 0.05;

struct TemperatureState {
    double lambda = kInitialTemperature;
};

struct AdaptConfig {
    std::size_t pretrain_epochs = 200;
    std::size_t adapt_epochs = 20;
    double learning_rate = 5e-4;
    std::size_t batch_size = 32;  ///< adaptation mini-batch; 0 means full batch
    double init_scale = 0.01;     ///< std of the random initial weights
    std::uint64_t seed = 0;
};

/// Gaussian weights scaled by `scale`, zero bias.
HeadClassifier init_head(std::size_t dim, int num_classes, double scale, std::uint64_t seed);

struct PretrainResult {
    HeadClassifier head;
    std::size_t best_epoch = 0;  ///< 0 is the initial head
    double best_valid_accuracy = 0.0;
};

/// Full-batch gradient descent on mean cross-entropy over the train split;
/// keeps the epoch with the highest validation accuracy (earliest on ties).
PretrainResult pretrain_head(const Workload& workload, const FusedFeatureMatrix& fused, const AdaptConfig& config);

/// softmax(logits / lambda).
std::vector<double> temperature_softmax(std::span<const double> logits, double lambda);

/// Mean of -log p(label), log floored at 1e-12. Rows of `probs` are instances.
double adaptive_loss(const Matrix& probs, std::span<const int> labels);

struct HeadGradient {
    Matrix weights;
    std::vector<double> bias;
    double lambda = 0.0;
};

/// adaptive_loss of the tempered head over `rows` of `features` and its
/// gradient with respect to weights, bias and lambda (added into `grad`).
double adaptive_loss_and_gradient(const HeadClassifier& head, double lambda, const Matrix& features,
                                  std::span<const std::size_t> rows, std::span<const int> labels,
                                  HeadGradient* grad = nullptr);

/// Per instance, the class with the lowest risk (smaller class on ties).
std::vector<int> risk_pseudo_labels(const RiskScoreTable& scores);

/// Head probabilities (plain softmax) and argmax for every workload instance.
ClassifierView head_view(const HeadClassifier& head, const FusedFeatureMatrix& fused);

struct AdaptEpoch {
    std::size_t epoch = 0;
    double lambda = 0.0;
    double loss = 0.0;       ///< test loss against this epoch's pseudo-labels
    double agreement = 0.0;  ///< pseudo-labels equal to the head's own predictions
    std::optional<double> test_accuracy;
};

struct AdaptResult {
    HeadClassifier head;
    TemperatureState temperature;
    std::vector<AdaptEpoch> log;
};

/// Fine-tunes the head on the test split against risk-model pseudo-labels.
/// Rule activations stay fixed; the classifier slot is refreshed from the
/// head before each epoch. The last epoch's head is returned.
AdaptResult adapt(HeadClassifier head, const RiskModelParams& params, const Workload& workload,
                  const FusedFeatureMatrix& fused, const MetricTable& metrics, const std::vector<RiskRule>& rules,
                  const AdaptConfig& config);

void write_head(const HeadClassifier& head, const std::string& path);
HeadClassifier read_head(const std::string& path);
void write_adapt_log(const std::vector<AdaptEpoch>& log, const std::string& path);

}  // namespace riskrank
