#pragma once

#include "riskrank/common.hpp"
#include "riskrank/risk_scores.hpp"

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

namespace riskrank {

struct InstanceRecord {
    std::string id;
    Split split = Split::Train;
    int true_label = kAbsentLabel;
    int predicted_label = 0;
    std::vector<double> logits;  ///< empty when the prediction file carries none

    bool labeled() const { return true_label != kAbsentLabel; }
    bool mispredicted() const { return labeled() && true_label != predicted_label; }
};

/// One backbone's embeddings. After a join, row r belongs to instance r of
/// the owning Workload.
struct EmbeddingSet {
    std::string backbone_name;
    std::size_t dim = 0;
    std::vector<std::string> ids;
    Matrix values;
};

struct WorkloadManifest {
    int num_classes = 0;
    std::vector<std::string> embedding_files;
    std::string prediction_file;
    std::string label_file;
};

struct Workload {
    std::vector<InstanceRecord> instances;
    std::vector<EmbeddingSet> embeddings;
    int num_classes = 0;

    std::size_t size() const { return instances.size(); }
    /// Instance indices of one split, in workload order.
    std::vector<std::size_t> indices(Split split) const;
};

struct ValidationReport {
    std::array<std::size_t, 3> split_counts{};
    /// class_counts[split][class], labeled instances only.
    std::array<std::vector<std::size_t>, 3> class_counts;
    std::size_t mispredicted_valid = 0;
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
};

/// Parses the key=value manifest; paths resolve against the manifest's directory.
WorkloadManifest load_manifest(const std::string& path);
Workload load_workload(const WorkloadManifest& manifest);
ValidationReport validate_workload(const Workload& workload);
void write_validation_report(const ValidationReport& report, const std::string& path);

/// Writes manifest.txt, labels.tsv, predictions.tsv and one embedding file per
/// backbone into `dir`. Returns the manifest path.
std::string write_workload(const Workload& workload, const std::string& dir);

/// Ranking TSV: `id predicted_class risk_score rank`, rank 1 = highest risk,
/// ties by id.
void write_ranking(const RiskScoreTable& scores, const std::string& path);

}  // namespace riskrank
