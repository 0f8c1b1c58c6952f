#pragma once

#include "riskrank/random.hpp"
#include "riskrank/risk_model.hpp"
#include "riskrank/rules.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace testing {

using riskrank::Lcg64;
using riskrank::Matrix;
using riskrank::RiskInputs;
using riskrank::RiskModelParams;

inline RiskModelParams make_params(std::size_t rules, int classes) {
    RiskModelParams p;
    p.num_rules = rules;
    p.attention = Matrix(rules + 1, rules + 1);
    p.attention_bias.assign(rules + 1, 0.0);
    p.rule_means.assign(rules, 0.5);
    p.variances.assign(rules + 1, 1e-3);
    p.class_weights.assign(static_cast<std::size_t>(classes), 1.0 / classes);
    p.platt.assign(static_cast<std::size_t>(classes), riskrank::PlattParams{});
    return p;
}

// n instances with random activations, labels and classifier probabilities.
inline RiskInputs random_inputs(std::size_t n, int classes, std::size_t rules, Lcg64& rng, double density = 0.4) {
    RiskInputs in;
    const auto cc = static_cast<std::size_t>(classes);
    in.classifier_scores = Matrix(n, cc);
    in.activations.pairs = n * cc;
    in.activations.rules = rules;
    for (std::size_t k = 0; k < n; ++k) {
        in.instances.push_back(k);
        in.ids.push_back("x" + std::to_string(1000 + k));
        in.predicted.push_back(static_cast<int>(rng.below(cc)));
        in.true_labels.push_back(static_cast<int>(rng.below(cc)));
        double sum = 0.0;
        for (std::size_t c = 0; c < cc; ++c) sum += in.classifier_scores(k, c) = rng.uniform() + 0.01;
        for (std::size_t c = 0; c < cc; ++c) in.classifier_scores(k, c) /= sum;
    }
    for (std::size_t q = 0; q < in.activations.pairs * rules; ++q) in.activations.bits.push_back(rng.uniform() < density);
    return in;
}

// Parameters away from every clamp so the surrogate loss is smooth.
inline RiskModelParams smooth_params(std::size_t rules, int classes, Lcg64& rng) {
    auto p = make_params(rules, classes);
    for (double& v : p.attention.data) v = 0.5 * rng.normal();
    for (double& v : p.attention_bias) v = 0.5 * rng.normal();
    for (double& v : p.rule_means) v = rng.uniform();
    for (double& v : p.variances) v = 0.01 + 0.04 * rng.uniform();
    double total = 0.0;
    for (double& v : p.class_weights) total += v = rng.uniform() + 0.1;
    for (double& v : p.class_weights) v /= total;
    for (auto& ab : p.platt) ab = {-2.0 - 2.0 * rng.uniform(), rng.normal() * 0.3};
    p.alpha = 1e-4;
    return p;
}

// Informative but noisy metrics on a coarse grid, so ties occur.
inline riskrank::MUPairTable random_mu_table(std::size_t instances, int classes, Lcg64& rng) {
    riskrank::MUPairTable t;
    for (std::size_t i = 0; i < instances; ++i) {
        const int truth = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
        for (int c = 0; c < classes; ++c) {
            riskrank::MUPairRow row;
            row.instance = i;
            row.cls = c;
            row.match = c == truth;
            const double ccd = std::round((row.match ? 0.3 : 0.7) * 20.0 + 4.0 * rng.normal()) / 20.0;
            row.metrics = {ccd, static_cast<double>(row.match ? 2 + rng.below(4) : rng.below(3)),
                           static_cast<double>(row.match ? 3 + rng.below(5) : rng.below(4))};
            t.rows.push_back(row);
        }
    }
    return t;
}

inline bool relative_close(double analytic, double numeric, double tol) {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale < 1e-9) return true;  // both vanish
    return std::abs(analytic - numeric) <= tol * scale;
}

}  // namespace testing
