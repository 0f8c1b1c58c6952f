#pragma once

#include "riskrank/adaptive.hpp"
#include "riskrank/features.hpp"
#include "riskrank/rank_training.hpp"
#include "riskrank/risk_metrics.hpp"
#include "riskrank/risk_model.hpp"
#include "riskrank/rules.hpp"
#include "riskrank/synthetic.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace riskrank {

/// Invalid configuration key or value. The CLI maps it to a usage error.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Every tunable of a run. Values come from defaults, then a key=value file,
/// then command-line overrides; each assignment is validated immediately.
struct RunConfig {
    std::string out = "run";
    std::string workload;  ///< manifest path; empty means <out>/workload/manifest.txt
    std::uint64_t seed = 42;
    SelectionConfig selection;
    MetricConfig metrics;
    RuleConfig rules;
    ModelConfig model;
    TrainConfig train;
    AdaptConfig adapt;
    SynthConfig synth;

    /// Names of all keys, in documentation order.
    static const std::vector<std::string>& keys();
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    /// Applies a key=value file.
    void load(const std::string& path);
    /// Cross-key checks that single assignments cannot see.
    void check() const;

    std::string manifest_path() const;
    /// FNV-1a over every key except the two paths, as hex.
    std::string hash() const;

    // Stage-specific seeds derived from `seed`.
    std::uint64_t risk_seed() const { return seed * 2 + 1; }
    std::uint64_t head_seed() const { return seed * 2 + 2; }
    SynthConfig synth_config() const;
    TrainConfig train_config() const;
    AdaptConfig adapt_config() const;
};

/// In-memory products of the classifier-independent analysis stages.
struct Analysis {
    FeatureSelection selection;
    FusedFeatureMatrix fused;
    MetricTable metrics;
    MUPairTable mapping;  ///< train split
    std::vector<RiskRule> rules;
};

Analysis analyze(const Workload& workload, const RunConfig& config);

/// Risk model for an arbitrary classifier: Platt fit and training on the
/// valid split.
struct RiskFit {
    RiskModelParams initial;
    TrainResult trained;
};

RiskFit fit_risk_model(const Workload& workload, const MetricTable& metrics, const std::vector<RiskRule>& rules,
                       const MUPairTable& mapping, const ClassifierView& classifier, const RunConfig& config);

/// Pre-train the head, fit a risk model to the head's predictions, then
/// adapt the head on the test split.
struct AdaptOutcome {
    PretrainResult pretrained;
    RiskFit risk;
    AdaptResult adapted;
};

AdaptOutcome run_adaptation(const Workload& workload, const Analysis& analysis, const RunConfig& config);

/// AUROC of predicted-class risk against misprediction flags on the labeled
/// rows of `scores`.
double risk_auroc(const RiskScoreTable& scores, const std::vector<int>& truth);
/// AUROC of 1 - max probability for the same rows.
double confidence_auroc(const ClassifierView& view, const std::vector<std::size_t>& instances,
                        const std::vector<int>& truth);

/// Subcommand names that run as part of `pipeline`, in order.
const std::vector<std::string>& pipeline_stages();

/// Runs one stage against config.out; returns a one-line summary. Throws
/// Error when an upstream artifact is missing, naming the producing stage.
std::string run_stage(const std::string& stage, const RunConfig& config);

/// All pipeline stages in order, preceded by 'synth' when no external
/// workload is configured; returns their summaries.
std::vector<std::string> run_pipeline(const RunConfig& config);

}  // namespace riskrank
