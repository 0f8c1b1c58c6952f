#include "riskrank/risk_model.hpp"

#include "riskrank/normal.hpp"
#include "riskrank/tsv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace riskrank {

namespace {

void softmax_in_place(std::vector<double>& z) {
    const double top = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - top);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

// log(1 + exp(z)) without overflow
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

ClassifierView workload_classifier(const Workload& w) {
    const auto C = static_cast<std::size_t>(w.num_classes);
    ClassifierView view{Matrix(w.size(), C), {}};
    for (std::size_t i = 0; i < w.size(); ++i) {
        const auto& rec = w.instances[i];
        std::vector<double> p(C, 0.0);
        if (rec.logits.empty()) {
            p[static_cast<std::size_t>(rec.predicted_label)] = 1.0;  // hard predictions only
        } else {
            if (rec.logits.size() != C) throw Error("instance " + rec.id + ": logit count differs from num_classes");
            p = rec.logits;
            softmax_in_place(p);
        }
        std::copy(p.begin(), p.end(), view.probabilities.row(i));
        view.predicted.push_back(rec.predicted_label);
    }
    return view;
}

RiskInputs build_risk_inputs(const Workload& w, const MetricTable& metrics, const std::vector<RiskRule>& rules,
                             const ClassifierView& classifier, const std::vector<std::size_t>& instances) {
    const auto C = static_cast<std::size_t>(w.num_classes);
    RiskInputs in;
    in.instances = instances;
    in.activations = evaluate_rules(rules, metrics, instances);
    in.classifier_scores = Matrix(instances.size(), C);
    for (std::size_t k = 0; k < instances.size(); ++k) {
        const auto i = instances[k];
        in.ids.push_back(w.instances[i].id);
        in.predicted.push_back(classifier.predicted[i]);
        in.true_labels.push_back(w.instances[i].true_label);
        std::copy_n(classifier.probabilities.row(i), C, in.classifier_scores.row(k));
    }
    return in;
}

RiskModelParams initialize_params(const std::vector<RiskRule>& rules, const MUPairTable& mapping, const Workload& w,
                                  std::vector<PlattParams> platt, const ModelConfig& config) {
    if (!(config.var_level > 0.0 && config.var_level < 1.0)) throw Error("var_level must lie in (0, 1)");
    if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0)) throw Error("dropout_rate must lie in [0, 1)");
    RiskModelParams p;
    p.num_rules = rules.size();
    const std::size_t m = p.positions();
    p.attention = Matrix(m, m);
    p.attention_bias.assign(m, 0.0);
    for (const auto& rule : rules) {
        const auto dist = estimate_rule_distribution(rule, mapping);
        p.rule_means.push_back(dist.mean);
        p.variances.push_back(std::max(dist.variance, kLearnedVarianceFloor));
    }
    p.variances.push_back(std::max(config.classifier_variance, kLearnedVarianceFloor));

    const auto C = static_cast<std::size_t>(w.num_classes);
    std::vector<double> counts(C, 0.0);
    double total = 0.0;
    for (const auto i : w.indices(Split::Train)) {
        const int label = w.instances[i].true_label;
        if (label < 0) continue;
        counts[static_cast<std::size_t>(label)] += 1.0;
        total += 1.0;
    }
    if (total == 0.0) throw Error("class weights need labeled train instances");
    for (double n : counts) p.class_weights.push_back(n / total);
    p.alpha = config.alpha;
    p.var_level = config.var_level;
    p.dropout_rate = config.dropout_rate;
    if (platt.size() != C) throw Error("initialize_params: need one Platt pair per class");
    p.platt = std::move(platt);
    return p;
}

std::vector<std::uint8_t> dropout_mask(std::span<const std::uint8_t> active, double rate, Lcg64& rng) {
    std::vector<std::uint8_t> kept(active.begin(), active.end());
    bool any = false;
    for (auto& bit : kept) {
        if (!bit) continue;
        if (rng.uniform() < rate) bit = 0;
        else any = true;
    }
    if (!any) return {active.begin(), active.end()};
    return kept;
}

std::vector<double> attention_weights(std::span<const std::uint8_t> active, const RiskModelParams& params,
                                      Lcg64* dropout) {
    const std::size_t m = params.positions();
    if (active.size() != m) throw Error("attention_weights: activation length mismatch");
    const std::vector<std::uint8_t> x = dropout != nullptr && params.dropout_rate > 0.0
                                            ? dropout_mask(active, params.dropout_rate, *dropout)
                                            : std::vector<std::uint8_t>(active.begin(), active.end());

    std::vector<double> w(m, 0.0);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
        if (!x[k]) continue;
        double e = params.attention_bias[k];
        const double* row = params.attention.row(k);
        for (std::size_t j = 0; j < m; ++j) {
            if (x[j]) e += row[j];
        }
        w[k] = e;
        top = std::max(top, e);
    }
    if (top == -std::numeric_limits<double>::infinity()) throw Error("attention_weights: no active position");
    double sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        if (!x[k]) continue;
        w[k] = std::exp(w[k] - top);
        sum += w[k];
    }
    for (std::size_t k = 0; k < m; ++k) w[k] = x[k] ? w[k] / sum : 0.0;
    return w;
}

InstanceDistribution aggregate_distribution(std::span<const std::uint8_t> active, std::span<const double> weights,
                                            std::span<const double> means, std::span<const double> variances) {
    InstanceDistribution d{0.0, 0.0};
    for (std::size_t j = 0; j < active.size(); ++j) {
        if (!active[j]) continue;
        d.mu += weights[j] * means[j];
        d.var += weights[j] * weights[j] * variances[j];
    }
    d.var = std::max(d.var, kPairVarianceFloor);
    return d;
}

ClassDistributions neutralize_class_bias(std::span<const double> raw_mu, std::span<const double> raw_var,
                                         const RiskModelParams& params) {
    const std::size_t C = raw_mu.size();
    if (raw_var.size() != C || params.class_weights.size() != C) throw Error("neutralize_class_bias: size mismatch");
    ClassDistributions out{std::vector<double>(C), std::vector<double>(C)};
    for (std::size_t c = 0; c < C; ++c) {
        out.mu[c] = raw_mu[c] - params.class_weights[c];
        out.var[c] = std::max(raw_var[c] - params.alpha * params.class_weights[c], kPairVarianceFloor);
    }
    softmax_in_place(out.mu);
    return out;
}

double platt_apply(double score, PlattParams params) {
    const double z = params.a * score + params.b;
    // 1 / (1 + e^z) evaluated on the side that cannot overflow
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(z));
}

PlattParams platt_fit(std::span<const double> scores, std::span<const std::uint8_t> positives) {
    if (scores.size() != positives.size()) throw Error("platt_fit: size mismatch");
    const auto npos = std::count_if(positives.begin(), positives.end(), [](auto v) { return v != 0; });
    if (npos == 0 || static_cast<std::size_t>(npos) == positives.size()) {
        warn("platt_fit: class lacks positives or negatives; keeping (a, b) = (-1, 0)");
        return {};
    }
    auto nll = [&](double a, double b) {
        double sum = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const double z = a * scores[i] + b;
            sum += softplus(z) - (positives[i] ? 0.0 : z);
        }
        return sum;
    };
    PlattParams p;
    double value = nll(p.a, p.b);
    for (int iter = 0; iter < 200; ++iter) {
        double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const double prob = platt_apply(scores[i], p);
            const double y = positives[i] ? 1.0 : 0.0;
            const double f = scores[i];
            ga += f * (y - prob);
            gb += y - prob;
            const double h = prob * (1.0 - prob);
            haa += h * f * f;
            hab += h * f;
            hbb += h;
        }
        if (std::hypot(ga, gb) < 1e-8) break;
        haa += 1e-12;
        hbb += 1e-12;
        const double det = haa * hbb - hab * hab;
        const double da = -(hbb * ga - hab * gb) / det;
        const double db = -(-hab * ga + haa * gb) / det;
        const double slope = ga * da + gb * db;
        double step = 1.0;
        bool moved = false;
        while (step >= 1e-10) {
            const double na = p.a + step * da;
            const double nb = p.b + step * db;
            const double candidate = nll(na, nb);
            if (std::isfinite(candidate) && candidate <= value + 1e-4 * step * slope) {
                p = {na, nb};
                value = candidate;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if (!moved) break;
    }
    return p;
}

std::vector<PlattParams> platt_fit_classes(const Matrix& scores, std::span<const int> labels) {
    if (scores.rows != labels.size()) throw Error("platt_fit_classes: size mismatch");
    std::vector<PlattParams> out;
    std::vector<double> column(scores.rows);
    std::vector<std::uint8_t> positive(scores.rows);
    for (std::size_t c = 0; c < scores.cols; ++c) {
        for (std::size_t i = 0; i < scores.rows; ++i) {
            column[i] = scores(i, c);
            positive[i] = labels[i] == static_cast<int>(c);
        }
        out.push_back(platt_fit(column, positive));
    }
    return out;
}

double value_at_risk(double mu, double var, double level) {
    if (!(var > 0.0)) throw Error("value_at_risk: variance must be positive");
    if (!(level > 0.0 && level < 1.0)) throw Error("value_at_risk: level must lie in (0, 1)");
    const double sd = std::sqrt(var);
    const double lo = (0.0 - mu) / sd;
    const double hi = (1.0 - mu) / sd;
    const double p = 1.0 - level;
    constexpr double kTinyMass = 1e-300;
    double z;
    if (lo > 0.0) {
        // whole interval in the right tail: work with upper-tail areas
        const double upper_lo = normal_sf(lo);
        const double mass = upper_lo - normal_sf(hi);
        if (mass <= kTinyMass) return 1.0;  // mass piles up at 0
        z = -inverse_normal_cdf(std::clamp(upper_lo - p * mass, 0.0, 1.0));
    } else {
        const double lower_lo = normal_cdf(lo);
        const double mass = normal_cdf(hi) - lower_lo;
        if (mass <= kTinyMass) return 0.0;  // mass piles up at 1
        z = inverse_normal_cdf(std::clamp(lower_lo + p * mass, 0.0, 1.0));
    }
    const double q = std::clamp(mu + sd * z, 0.0, 1.0);
    return 1.0 - q;
}

std::vector<std::uint8_t> pair_activation(const RiskInputs& inputs, std::size_t k, int cls,
                                          const RiskModelParams& params) {
    const std::size_t pair = k * static_cast<std::size_t>(inputs.num_classes()) + static_cast<std::size_t>(cls);
    std::vector<std::uint8_t> x(params.positions(), 0);
    for (std::size_t r = 0; r < params.num_rules; ++r) x[r] = inputs.activations.at(pair, r);
    x[params.classifier_position()] = 1;
    return x;
}

std::vector<double> pair_means(const RiskInputs& inputs, std::size_t k, int cls, const RiskModelParams& params) {
    std::vector<double> means(params.rule_means);
    const auto c = static_cast<std::size_t>(cls);
    means.push_back(platt_apply(inputs.classifier_scores(k, c), params.platt[c]));
    return means;
}

RiskScoreTable score_workload(const RiskInputs& inputs, const RiskModelParams& params, ScoreMode mode, Lcg64* rng) {
    const int C = inputs.num_classes();
    if (params.num_classes() != C) throw Error("score_workload: class count mismatch");
    if (inputs.activations.rules != params.num_rules) throw Error("score_workload: rule count mismatch");
    Lcg64* dropout = mode == ScoreMode::Train ? rng : nullptr;

    RiskScoreTable table;
    table.ids = inputs.ids;
    table.predicted = inputs.predicted;
    table.gamma = Matrix(inputs.size(), static_cast<std::size_t>(C));
    std::vector<double> raw_mu(static_cast<std::size_t>(C)), raw_var(static_cast<std::size_t>(C));
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (int c = 0; c < C; ++c) {
            const auto x = pair_activation(inputs, k, c, params);
            const auto means = pair_means(inputs, k, c, params);
            const auto w = attention_weights(x, params, dropout);
            const auto d = aggregate_distribution(x, w, means, params.variances);
            raw_mu[static_cast<std::size_t>(c)] = d.mu;
            raw_var[static_cast<std::size_t>(c)] = d.var;
        }
        const auto adjusted = neutralize_class_bias(raw_mu, raw_var, params);
        for (std::size_t c = 0; c < static_cast<std::size_t>(C); ++c) {
            table.gamma(k, c) = value_at_risk(adjusted.mu[c], adjusted.var[c], params.var_level);
        }
    }
    return table;
}

namespace {

std::vector<std::string> format_row(std::span<const double> values) {
    std::vector<std::string> row;
    for (double v : values) row.push_back(tsv::format_real(v));
    return row;
}

std::vector<double> parse_row(const std::vector<std::string>& row, std::size_t expected, const std::string& where) {
    if (row.size() != expected) {
        throw ParseError(where + ": expected " + std::to_string(expected) + " values, found " +
                         std::to_string(row.size()));
    }
    std::vector<double> out;
    for (const auto& token : row) out.push_back(tsv::parse_real(token, where));
    return out;
}

}  // namespace

void write_params(const RiskModelParams& p, const std::string& path) {
    std::vector<std::vector<std::string>> attention;
    for (std::size_t k = 0; k < p.positions(); ++k) {
        attention.push_back(format_row({p.attention.row(k), p.attention.cols}));
    }
    std::vector<std::vector<std::string>> platt;
    for (const auto& ab : p.platt) platt.push_back({tsv::format_real(ab.a), tsv::format_real(ab.b)});
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    tsv::write_sections(out, {{"meta",
                               {{"num_rules", std::to_string(p.num_rules)},
                                {"num_classes", std::to_string(p.num_classes())},
                                {"alpha", tsv::format_real(p.alpha)},
                                {"var_level", tsv::format_real(p.var_level)},
                                {"dropout_rate", tsv::format_real(p.dropout_rate)}}},
                              {"attention", attention},
                              {"attention_bias", {format_row(p.attention_bias)}},
                              {"rule_means", {format_row(p.rule_means)}},
                              {"variances", {format_row(p.variances)}},
                              {"class_weights", {format_row(p.class_weights)}},
                              {"platt", platt}});
    if (!out) throw Error("write failed: " + path);
}

RiskModelParams read_params(const std::string& path) {
    const auto sections = tsv::read_sections(path);
    auto section = [&](const std::string& name) -> const std::vector<std::vector<std::string>>& {
        const auto it = sections.find(name);
        if (it == sections.end()) throw ParseError(path + ": missing section [" + name + "]");
        return it->second;
    };
    const std::string where = path;
    std::size_t num_rules = 0, num_classes = 0;
    RiskModelParams p;
    bool have_rules = false, have_classes = false;
    for (const auto& row : section("meta")) {
        if (row.size() != 2) throw ParseError(where + ": [meta] rows are key/value pairs");
        if (row[0] == "num_rules") {
            num_rules = static_cast<std::size_t>(tsv::parse_int(row[1], where));
            have_rules = true;
        } else if (row[0] == "num_classes") {
            num_classes = static_cast<std::size_t>(tsv::parse_int(row[1], where));
            have_classes = true;
        } else if (row[0] == "alpha") {
            p.alpha = tsv::parse_real(row[1], where);
        } else if (row[0] == "var_level") {
            p.var_level = tsv::parse_real(row[1], where);
        } else if (row[0] == "dropout_rate") {
            p.dropout_rate = tsv::parse_real(row[1], where);
        } else {
            throw ParseError(where + ": unknown [meta] key " + row[0]);
        }
    }
    if (!have_rules || !have_classes) throw ParseError(where + ": [meta] needs num_rules and num_classes");
    p.num_rules = num_rules;
    const std::size_t m = p.positions();
    const auto& attention = section("attention");
    if (attention.size() != m) throw ParseError(where + ": [attention] needs " + std::to_string(m) + " rows");
    p.attention = Matrix(m, m);
    for (std::size_t k = 0; k < m; ++k) {
        const auto row = parse_row(attention[k], m, where + " [attention]");
        std::copy(row.begin(), row.end(), p.attention.row(k));
    }
    auto single = [&](const std::string& name, std::size_t n) {
        const auto& rows = section(name);
        if (n == 0 && rows.empty()) return std::vector<double>{};
        if (rows.size() != 1) throw ParseError(where + ": [" + name + "] needs one row");
        if (n == 0 && rows[0].size() == 1 && rows[0][0].empty()) return std::vector<double>{};
        return parse_row(rows[0], n, where + " [" + name + "]");
    };
    p.attention_bias = single("attention_bias", m);
    p.rule_means = single("rule_means", num_rules);
    p.variances = single("variances", m);
    p.class_weights = single("class_weights", num_classes);
    const auto& platt = section("platt");
    if (platt.size() != num_classes) throw ParseError(where + ": [platt] needs one row per class");
    for (const auto& row : platt) {
        const auto ab = parse_row(row, 2, where + " [platt]");
        p.platt.push_back({ab[0], ab[1]});
    }
    if (!(p.var_level > 0.0 && p.var_level < 1.0)) throw ParseError(where + ": var_level outside (0, 1)");
    return p;
}

}  // namespace riskrank
