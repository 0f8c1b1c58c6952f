#pragma once

#include "riskrank/features.hpp"
#include "riskrank/workload.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace riskrank {

enum class MetricId : std::size_t { CCD = 0, KNN5 = 1, KNN7 = 2 };
inline constexpr std::size_t kNumMetrics = 3;

std::string_view to_string(MetricId metric);
MetricId parse_metric(std::string_view text);

struct ClassCentroids {
    Matrix centroids;  ///< classes x fused dim
    std::vector<std::size_t> counts;
};

/// Per-class means of the train rows.
ClassCentroids compute_centroids(const FusedFeatureMatrix& fused, const Workload& workload);

/// Category cosine distance, 1 - cos(v, c). Throws on a zero-norm argument.
double ccd(std::span<const double> v, std::span<const double> centroid);

/// Train rows prepared for cosine nearest-neighbour queries. Candidates with
/// zero norm are dropped; ties at equal similarity go to the smaller id.
class NeighborIndex {
public:
    NeighborIndex(const FusedFeatureMatrix& fused, const Workload& workload);

    /// Workload indices of the k most similar train rows, most similar first.
    /// `exclude` removes one workload instance (the query itself).
    std::vector<std::size_t> nearest(std::span<const double> query, std::size_t k,
                                     std::optional<std::size_t> exclude = std::nullopt) const;

    int label_of(std::size_t instance) const { return labels_[instance]; }
    std::size_t candidates() const { return rows_.size(); }

private:
    std::size_t dim_ = 0;
    std::vector<std::size_t> rows_;     ///< workload index per candidate
    std::vector<std::size_t> id_rank_;  ///< lexicographic id rank per candidate
    std::vector<double> unit_;          ///< candidates x dim, unit length
    std::vector<int> labels_;           ///< true label per workload instance
};

/// Number of the k nearest train rows whose label is `cls`.
int knn_count(std::span<const double> query, std::size_t k, int cls, const NeighborIndex& index,
              std::optional<std::size_t> exclude = std::nullopt);

struct MetricConfig {
    std::size_t knn_small = 5;
    std::size_t knn_large = 7;
};

/// Values for every (instance, class) pair and metric, instance order as the
/// workload.
struct MetricTable {
    std::vector<std::string> ids;
    int num_classes = 0;
    std::vector<std::array<double, kNumMetrics>> values;

    double at(std::size_t instance, int cls, MetricId metric) const {
        return values[instance * static_cast<std::size_t>(num_classes) + static_cast<std::size_t>(cls)]
                     [static_cast<std::size_t>(metric)];
    }
    std::size_t instances() const { return ids.size(); }
};

MetricTable build_metric_table(const FusedFeatureMatrix& fused, const Workload& workload,
                               const ClassCentroids& centroids, const MetricConfig& config = {});

/// TSV `id class CCD KNN5 KNN7`.
void write_metric_table(const MetricTable& table, const std::string& path);
MetricTable read_metric_table(const std::string& path, const Workload& workload);

}  // namespace riskrank
