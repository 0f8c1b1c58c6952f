#pragma once

#include "riskrank/risk_metrics.hpp"
#include "riskrank/workload.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace riskrank {

struct MUPairRow {
    std::size_t instance = 0;  ///< workload index
    int cls = 0;
    bool match = false;
    std::array<double, kNumMetrics> metrics{};
};

/// Match/Unmatch mapping: one M row (the true label) and C-1 U rows per
/// labeled instance.
struct MUPairTable {
    std::vector<MUPairRow> rows;
};

enum class Comparator { LessEqual, Greater };
enum class Consequent { Match, Unmatch };

struct RiskRule {
    MetricId metric = MetricId::CCD;
    Comparator comparator = Comparator::LessEqual;
    double threshold = 0.0;
    Consequent consequent = Consequent::Match;
    double coverage = 0.0;
    double purity = 0.0;

    bool satisfied(double value) const {
        return comparator == Comparator::LessEqual ? value <= threshold : value > threshold;
    }
    bool operator==(const RiskRule&) const = default;
};

std::string describe(const RiskRule& rule);

struct RuleConfig {
    double min_purity = 0.95;
    double min_coverage = 0.01;
    std::size_t max_rules_per_metric = 8;  ///< per consequent
};

MUPairTable build_mu_table(const Workload& workload, const MetricTable& metrics, Split split);

/// One-sided sequential covering per (metric, consequent). Each step picks the
/// threshold whose satisfied subset of the remaining rows is purest toward the
/// consequent (ties: larger subset, `<=` before `>`, lower threshold), emits
/// it when its purity and coverage on the whole table pass the floors, drops
/// the satisfied rows and repeats. Stored coverage and purity are measured on
/// the whole table.
std::vector<RiskRule> induce_rules(const MUPairTable& table, const RuleConfig& config = {});

/// Binary activations, rows = (instance, class) pairs in instance-major order.
struct ActivationMatrix {
    std::size_t pairs = 0;
    std::size_t rules = 0;
    std::vector<std::uint8_t> bits;

    std::uint8_t at(std::size_t pair, std::size_t rule) const { return bits[pair * rules + rule]; }
};

/// Evaluates every rule on the pairs (i, c) for i in `instances`, c in [0, C),
/// each rule reading the pair's own class metric value.
ActivationMatrix evaluate_rules(const std::vector<RiskRule>& rules, const MetricTable& metrics,
                                const std::vector<std::size_t>& instances);

struct RuleDistribution {
    double mean = 0.0;
    double variance = 0.0;
};

inline constexpr double kRuleVarianceFloor = 1e-4;

/// mean = share of satisfying rows flagged M; variance = max(mean(1-mean)/n, floor).
RuleDistribution estimate_rule_distribution(const RiskRule& rule, const MUPairTable& table);

/// TSV `metric_id comparator threshold consequent coverage purity`.
void write_rules(const std::vector<RiskRule>& rules, const std::string& path);
std::vector<RiskRule> read_rules(const std::string& path);

}  // namespace riskrank
