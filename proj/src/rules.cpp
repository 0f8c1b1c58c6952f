#include "riskrank/rules.hpp"

#include "riskrank/tsv.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>

namespace riskrank {

std::string describe(const RiskRule& rule) {
    return std::string(to_string(rule.metric)) + (rule.comparator == Comparator::LessEqual ? " <= " : " > ") +
           tsv::format_real(rule.threshold) + " -> " + (rule.consequent == Consequent::Match ? "M" : "U");
}

MUPairTable build_mu_table(const Workload& w, const MetricTable& metrics, Split split) {
    MUPairTable table;
    for (const auto i : w.indices(split)) {
        const auto& rec = w.instances[i];
        if (!rec.labeled()) throw Error("build_mu_table: instance " + rec.id + " has no true label");
        for (int c = 0; c < w.num_classes; ++c) {
            MUPairRow row;
            row.instance = i;
            row.cls = c;
            row.match = c == rec.true_label;
            for (std::size_t m = 0; m < kNumMetrics; ++m) row.metrics[m] = metrics.at(i, c, static_cast<MetricId>(m));
            table.rows.push_back(row);
        }
    }
    return table;
}

namespace {

// Rounds to the 9 significant digits used on disk, keeping lo <= t < hi so the
// rule partitions the sample identically after a round trip.
double storable_threshold(double lo, double hi) {
    const double mid = lo + (hi - lo) / 2.0;
    const double rounded = std::strtod(tsv::format_real(mid).c_str(), nullptr);
    if (lo <= rounded && rounded < hi) return rounded;
    return lo;
}

struct Candidate {
    std::size_t split = 0;  ///< threshold between distinct values split and split+1
    Comparator comparator = Comparator::LessEqual;
    long long satisfied = 0;
    long long hits = 0;
};

// a purer than b, then larger, then <= first, then lower threshold
bool preferred(const Candidate& a, const Candidate& b) {
    const long long lhs = a.hits * b.satisfied;
    const long long rhs = b.hits * a.satisfied;
    if (lhs != rhs) return lhs > rhs;
    if (a.satisfied != b.satisfied) return a.satisfied > b.satisfied;
    if (a.comparator != b.comparator) return a.comparator == Comparator::LessEqual;
    return a.split < b.split;
}

}  // namespace

std::vector<RiskRule> induce_rules(const MUPairTable& table, const RuleConfig& config) {
    std::vector<RiskRule> rules;
    const std::size_t n = table.rows.size();
    if (n == 0) return rules;
    const double total = static_cast<double>(n);

    for (std::size_t m = 0; m < kNumMetrics; ++m) {
        std::vector<double> distinct;
        distinct.reserve(n);
        for (const auto& row : table.rows) distinct.push_back(row.metrics[m]);
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        if (distinct.size() < 2) continue;
        const std::size_t K = distinct.size();
        std::vector<std::size_t> slot(n);
        for (std::size_t r = 0; r < n; ++r) {
            slot[r] = static_cast<std::size_t>(
                std::lower_bound(distinct.begin(), distinct.end(), table.rows[r].metrics[m]) - distinct.begin());
        }
        std::vector<double> thresholds(K - 1);
        for (std::size_t s = 0; s + 1 < K; ++s) thresholds[s] = storable_threshold(distinct[s], distinct[s + 1]);

        for (const auto consequent : {Consequent::Match, Consequent::Unmatch}) {
            const bool want_match = consequent == Consequent::Match;
            std::vector<bool> remaining(n, true);
            std::vector<long long> all_tot(K, 0), all_hit(K, 0);
            for (std::size_t r = 0; r < n; ++r) {
                ++all_tot[slot[r]];
                all_hit[slot[r]] += table.rows[r].match == want_match;
            }

            for (std::size_t step = 0; step < config.max_rules_per_metric; ++step) {
                std::vector<long long> tot(K, 0), hit(K, 0);
                for (std::size_t r = 0; r < n; ++r) {
                    if (!remaining[r]) continue;
                    ++tot[slot[r]];
                    hit[slot[r]] += table.rows[r].match == want_match;
                }
                const long long rem_tot = std::accumulate(tot.begin(), tot.end(), 0LL);
                const long long rem_hit = std::accumulate(hit.begin(), hit.end(), 0LL);
                if (rem_tot == 0) break;

                bool found = false;
                Candidate best;
                long long pre_tot = 0, pre_hit = 0;
                for (std::size_t s = 0; s + 1 < K; ++s) {
                    pre_tot += tot[s];
                    pre_hit += hit[s];
                    const Candidate le{s, Comparator::LessEqual, pre_tot, pre_hit};
                    const Candidate gt{s, Comparator::Greater, rem_tot - pre_tot, rem_hit - pre_hit};
                    for (const auto& cand : {le, gt}) {
                        if (cand.satisfied == 0) continue;
                        if (static_cast<double>(cand.satisfied) / total < config.min_coverage) continue;
                        if (!found || preferred(cand, best)) {
                            best = cand;
                            found = true;
                        }
                    }
                }
                if (!found) break;
                if (static_cast<double>(best.hits) / static_cast<double>(best.satisfied) < config.min_purity) break;

                long long full_sat = 0, full_hit = 0;
                for (std::size_t s = 0; s < K; ++s) {
                    const bool in = best.comparator == Comparator::LessEqual ? s <= best.split : s > best.split;
                    if (!in) continue;
                    full_sat += all_tot[s];
                    full_hit += all_hit[s];
                }
                RiskRule rule;
                rule.metric = static_cast<MetricId>(m);
                rule.comparator = best.comparator;
                rule.threshold = thresholds[best.split];
                rule.consequent = consequent;
                rule.coverage = static_cast<double>(full_sat) / total;
                rule.purity = static_cast<double>(full_hit) / static_cast<double>(full_sat);
                const bool duplicate = std::find(rules.begin(), rules.end(), rule) != rules.end();
                if (!duplicate && rule.purity >= config.min_purity && rule.coverage >= config.min_coverage) {
                    rules.push_back(rule);
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const bool in = best.comparator == Comparator::LessEqual ? slot[r] <= best.split
                                                                             : slot[r] > best.split;
                    if (in) remaining[r] = false;
                }
            }
        }
    }
    return rules;
}

ActivationMatrix evaluate_rules(const std::vector<RiskRule>& rules, const MetricTable& metrics,
                                const std::vector<std::size_t>& instances) {
    const int C = metrics.num_classes;
    ActivationMatrix act;
    act.pairs = instances.size() * static_cast<std::size_t>(C);
    act.rules = rules.size();
    act.bits.assign(act.pairs * act.rules, 0);
    for (std::size_t p = 0; p < instances.size(); ++p) {
        for (int c = 0; c < C; ++c) {
            const std::size_t pair = p * static_cast<std::size_t>(C) + static_cast<std::size_t>(c);
            for (std::size_t r = 0; r < rules.size(); ++r) {
                act.bits[pair * act.rules + r] = rules[r].satisfied(metrics.at(instances[p], c, rules[r].metric));
            }
        }
    }
    return act;
}

RuleDistribution estimate_rule_distribution(const RiskRule& rule, const MUPairTable& table) {
    std::size_t sat = 0, match = 0;
    for (const auto& row : table.rows) {
        if (!rule.satisfied(row.metrics[static_cast<std::size_t>(rule.metric)])) continue;
        ++sat;
        match += row.match;
    }
    if (sat == 0) throw Error("rule " + describe(rule) + " is not satisfied by any row");
    const double mean = static_cast<double>(match) / static_cast<double>(sat);
    const double variance = std::max(mean * (1.0 - mean) / static_cast<double>(sat), kRuleVarianceFloor);
    return {mean, variance};
}

void write_rules(const std::vector<RiskRule>& rules, const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : rules) {
        rows.push_back({std::string(to_string(r.metric)), r.comparator == Comparator::LessEqual ? "<=" : ">",
                        tsv::format_real(r.threshold), r.consequent == Consequent::Match ? "M" : "U",
                        tsv::format_real(r.coverage), tsv::format_real(r.purity)});
    }
    tsv::write_table(path, {"metric_id", "comparator", "threshold", "consequent", "coverage", "purity"}, rows);
}

std::vector<RiskRule> read_rules(const std::string& path) {
    const auto t = tsv::read_table(path);
    const auto mc = t.column("metric_id");
    const auto cc = t.column("comparator");
    const auto tc = t.column("threshold");
    const auto qc = t.column("consequent");
    const auto vc = t.column("coverage");
    const auto pc = t.column("purity");
    std::vector<RiskRule> rules;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        RiskRule rule;
        try {
            rule.metric = parse_metric(row[mc]);
        } catch (const ParseError& e) {
            throw ParseError(t.where(r) + ": " + e.what());
        }
        if (row[cc] == "<=") rule.comparator = Comparator::LessEqual;
        else if (row[cc] == ">") rule.comparator = Comparator::Greater;
        else throw ParseError(t.where(r) + ": bad comparator '" + row[cc] + "'");
        if (row[qc] == "M") rule.consequent = Consequent::Match;
        else if (row[qc] == "U") rule.consequent = Consequent::Unmatch;
        else throw ParseError(t.where(r) + ": bad consequent '" + row[qc] + "'");
        rule.threshold = tsv::parse_real(row[tc], t.where(r));
        rule.coverage = tsv::parse_real(row[vc], t.where(r));
        rule.purity = tsv::parse_real(row[pc], t.where(r));
        rules.push_back(rule);
    }
    return rules;
}

}  // namespace riskrank
