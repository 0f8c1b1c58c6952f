#pragma once

#include "riskrank/common.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace riskrank {

/// Probability that a random positive outscores a random negative, ties
/// counted as one half. Throws "AUROC undefined" when only one class is present.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> positives);

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

/// Rows are true classes, columns predicted classes.
ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, int num_classes);

struct EvalReport {
    std::optional<double> auroc;
    double accuracy = 0.0;
    double precision = 0.0;  ///< support-weighted
    double recall = 0.0;
    double f1 = 0.0;
    std::vector<double> class_precision;
    std::vector<double> class_recall;
    std::vector<double> class_f1;
    std::vector<std::size_t> support;
    /// Classes whose precision (never predicted) or recall (absent) had a
    /// zero denominator and were reported as 0.
    std::vector<int> undefined_precision;
    std::vector<int> undefined_recall;
    ConfusionMatrix confusion;
};

EvalReport classification_report(std::span<const int> truth, std::span<const int> predicted, int num_classes);

using SectionRows = std::vector<std::vector<std::string>>;
using NamedSections = std::vector<std::pair<std::string, SectionRows>>;

/// Report rendered as `<prefix>_summary`, `<prefix>_per_class` and
/// `<prefix>_confusion` sections.
NamedSections report_sections(const std::string& prefix, const EvalReport& report);

}  // namespace riskrank
