#pragma once

#include "riskrank/workload.hpp"

#include <span>
#include <string>
#include <vector>

namespace riskrank {

enum class Criterion { MI, FS };

std::string_view to_string(Criterion criterion);
Criterion parse_criterion(std::string_view text);

struct FeatureScore {
    std::string backbone_name;
    std::size_t feature_index = 0;
    Criterion criterion = Criterion::MI;
    double score = 0.0;
};

struct SelectionConfig {
    std::size_t top_k = 200;
    std::size_t mi_bins = 10;
};

/// Sentinel F-score for a feature with zero within-class variance that still
/// separates class means.
inline constexpr double kSeparatingFScore = 1e12;

struct FScore {
    double value = 0.0;
    bool zero_within_variance = false;
};

/// Mutual information in nats between an equal-frequency binned feature and
/// the labels. When there are no more distinct values than `bins`, every
/// distinct value is its own bin.
double mutual_information(std::span<const double> values, std::span<const int> labels, std::size_t bins);

/// Between-class spread of class means over the summed within-class
/// (population) variances.
FScore f_score(std::span<const double> values, std::span<const int> labels);

/// Highest scores first, ties by lower feature index; keeps at most k.
std::vector<FeatureScore> select_top_k(std::vector<FeatureScore> scores, std::size_t k);

struct BackboneSelection {
    std::string backbone_name;
    std::vector<std::size_t> mi;  ///< ascending feature indices
    std::vector<std::size_t> fs;
};

struct FeatureSelection {
    std::vector<FeatureScore> scores;    ///< every scored feature
    std::vector<FeatureScore> selected;  ///< top-k per backbone per criterion
    std::vector<BackboneSelection> per_backbone;
};

/// Scores every embedding dimension on the train split and keeps the top-k
/// per backbone and criterion.
FeatureSelection select_features(const Workload& workload, const SelectionConfig& config);

struct FusedColumn {
    std::string backbone_name;
    Criterion criterion = Criterion::MI;
    std::size_t feature_index = 0;
};

/// Rows follow the workload's instance order.
struct FusedFeatureMatrix {
    std::vector<FusedColumn> columns;
    std::vector<std::string> ids;
    Matrix values;
};

FusedFeatureMatrix fuse_features(const Workload& workload, const std::vector<BackboneSelection>& selections);

/// TSV `backbone criterion feature_index score`.
void write_feature_scores(const std::vector<FeatureScore>& scores, const std::string& path);
std::vector<FeatureScore> read_feature_scores(const std::string& path);

/// Rebuilds per-backbone index lists from a selected-score dump, ordered as
/// the workload's embeddings.
std::vector<BackboneSelection> selections_from_scores(const Workload& workload,
                                                      const std::vector<FeatureScore>& selected);

}  // namespace riskrank
