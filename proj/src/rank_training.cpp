#include "riskrank/rank_training.hpp"

#include "riskrank/evaluation.hpp"
#include "riskrank/normal.hpp"
#include "riskrank/tsv.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace riskrank {

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// -pbar log p - (1 - pbar) log(1 - p) with p = logistic(d)
double pair_loss(double d, double pbar) { return pbar * softplus(-d) + (1.0 - pbar) * softplus(d); }

bool all_finite(const RiskModelParams& p) {
    auto ok = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return ok(p.attention.data) && ok(p.attention_bias) && ok(p.variances);
}

}  // namespace

double pairwise_posterior(double gamma_i, double gamma_j) { return logistic(gamma_i - gamma_j); }

double target_probability(int risk_i, int risk_j) { return 0.5 * (1.0 + risk_i - risk_j); }

double ranking_loss(std::span<const RankPair> batch, const Matrix& gamma) {
    if (batch.empty()) throw Error("ranking_loss: empty batch");
    double sum = 0.0;
    for (const auto& pair : batch) {
        const double d = gamma(pair.left, static_cast<std::size_t>(pair.left_class)) -
                         gamma(pair.right, static_cast<std::size_t>(pair.right_class));
        sum += pair_loss(d, target_probability(pair.left_risk, pair.right_risk));
    }
    return sum;
}

VoteResult vote_rank(const Matrix& gamma, const std::vector<std::string>& ids) {
    const std::size_t n = gamma.rows;
    if (ids.size() != n) throw Error("vote_rank: id count mismatch");
    VoteResult out;
    out.wins.assign(n, 0);
    // Per class, an instance beats every instance with a strictly lower score.
    std::vector<double> column(n);
    for (std::size_t c = 0; c < gamma.cols; ++c) {
        for (std::size_t i = 0; i < n; ++i) column[i] = gamma(i, c);
        std::vector<double> sorted = column;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < n; ++i) {
            out.wins[i] += std::lower_bound(sorted.begin(), sorted.end(), column[i]) - sorted.begin();
        }
    }
    std::vector<double> total(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < gamma.cols; ++c) total[i] += gamma(i, c);
    }
    out.order.resize(n);
    std::iota(out.order.begin(), out.order.end(), std::size_t{0});
    std::sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
        if (out.wins[a] != out.wins[b]) return out.wins[a] > out.wins[b];
        if (total[a] != total[b]) return total[a] > total[b];
        return ids[a] < ids[b];
    });
    return out;
}

double surrogate_risk(double mu, double var, double level) {
    const double z = inverse_normal_cdf(1.0 - level);
    return logistic(kSurrogateSlope * (1.0 - mu - z * std::sqrt(var) - 0.5));
}

ParamGradient::ParamGradient(const RiskModelParams& params)
    : attention(params.positions(), params.positions()),
      attention_bias(params.positions(), 0.0),
      variances(params.positions(), 0.0) {}

namespace {

// Forward state for one instance, kept for the backward pass.
struct InstanceTape {
    std::vector<std::vector<std::uint8_t>> masks;  // per class, after dropout
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> means;
    std::vector<double> raw_var;
    std::vector<double> probs;  // neutralized expectation per class
    std::vector<double> adjusted_var;
};

InstanceTape forward(const RiskInputs& inputs, const RiskModelParams& params, std::size_t k, Lcg64* dropout) {
    const int C = inputs.num_classes();
    InstanceTape t;
    std::vector<double> raw_mu(static_cast<std::size_t>(C));
    t.raw_var.resize(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) {
        auto x = pair_activation(inputs, k, c, params);
        if (dropout != nullptr && params.dropout_rate > 0.0) x = dropout_mask(x, params.dropout_rate, *dropout);
        auto w = attention_weights(x, params, nullptr);
        auto means = pair_means(inputs, k, c, params);
        const auto d = aggregate_distribution(x, w, means, params.variances);
        raw_mu[static_cast<std::size_t>(c)] = d.mu;
        t.raw_var[static_cast<std::size_t>(c)] = d.var;
        t.masks.push_back(std::move(x));
        t.weights.push_back(std::move(w));
        t.means.push_back(std::move(means));
    }
    auto adjusted = neutralize_class_bias(raw_mu, t.raw_var, params);
    t.probs = std::move(adjusted.mu);
    t.adjusted_var = std::move(adjusted.var);
    return t;
}

// Backpropagates d(loss)/d(surrogate at class c) = g into `grad`.
void backward(const InstanceTape& t, const RiskModelParams& params, int cls, double g, double z,
              ParamGradient& grad) {
    const auto cs = static_cast<std::size_t>(cls);
    const std::size_t C = t.probs.size();
    const std::size_t m = params.positions();
    const double var = t.adjusted_var[cs];
    const double s = std::sqrt(var);
    const double gamma = logistic(kSurrogateSlope * (1.0 - t.probs[cs] - z * s - 0.5));
    const double du = g * kSurrogateSlope * gamma * (1.0 - gamma);
    const double dp = -du;
    const double ds = -z * du;

    // Variance path: only the pair's own class, and only when unclamped.
    double dvar_raw = 0.0;
    const double unclamped = t.raw_var[cs] - params.alpha * params.class_weights[cs];
    if (unclamped > kPairVarianceFloor) dvar_raw = ds / (2.0 * s);

    for (std::size_t c = 0; c < C; ++c) {
        // softmax over classes: da_c = p_c (dp_c - sum_l p_l dp_l), dp nonzero only at cs
        const double dmu = t.probs[c] * ((c == cs ? dp : 0.0) - t.probs[cs] * dp);
        double dvar = 0.0;
        if (c == cs) {
            // aggregate variance floor
            double raw = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                if (t.masks[c][j]) raw += t.weights[c][j] * t.weights[c][j] * params.variances[j];
            }
            if (raw > kPairVarianceFloor) dvar = dvar_raw;
        }
        const auto& w = t.weights[c];
        const auto& x = t.masks[c];
        std::vector<double> dw(m, 0.0);
        double weighted = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (!x[j]) continue;
            dw[j] = dmu * t.means[c][j] + dvar * 2.0 * w[j] * params.variances[j];
            grad.variances[j] += dvar * w[j] * w[j];
            weighted += w[j] * dw[j];
        }
        for (std::size_t j = 0; j < m; ++j) {
            if (!x[j]) continue;
            const double de = w[j] * (dw[j] - weighted);
            grad.attention_bias[j] += de;
            double* row = grad.attention.row(j);
            for (std::size_t l = 0; l < m; ++l) {
                if (x[l]) row[l] += de;
            }
        }
    }
}

}  // namespace

double surrogate_ranking_loss(const RiskInputs& inputs, const RiskModelParams& params,
                              std::span<const RankPair> batch, Lcg64* dropout, ParamGradient* grad) {
    if (batch.empty()) throw Error("ranking_loss: empty batch");
    const double z = inverse_normal_cdf(1.0 - params.var_level);
    // One forward pass per distinct (instance, class) key, in first-use order.
    std::map<std::pair<std::size_t, int>, std::size_t> slot;
    std::vector<std::pair<std::size_t, int>> keys;
    for (const auto& pair : batch) {
        for (const auto& key : {std::pair{pair.left, pair.left_class}, std::pair{pair.right, pair.right_class}}) {
            if (slot.emplace(key, keys.size()).second) keys.push_back(key);
        }
    }
    std::vector<InstanceTape> tapes;
    std::vector<double> gamma;
    tapes.reserve(keys.size());
    for (const auto& [k, cls] : keys) {
        tapes.push_back(forward(inputs, params, k, dropout));
        const auto cs = static_cast<std::size_t>(cls);
        gamma.push_back(
            logistic(kSurrogateSlope * (1.0 - tapes.back().probs[cs] - z * std::sqrt(tapes.back().adjusted_var[cs]) - 0.5)));
    }
    std::vector<double> dgamma(keys.size(), 0.0);
    double loss = 0.0;
    for (const auto& pair : batch) {
        const auto a = slot.at({pair.left, pair.left_class});
        const auto b = slot.at({pair.right, pair.right_class});
        const double d = gamma[a] - gamma[b];
        const double pbar = target_probability(pair.left_risk, pair.right_risk);
        loss += pair_loss(d, pbar);
        const double dd = logistic(d) - pbar;
        dgamma[a] += dd;
        dgamma[b] -= dd;
    }
    if (grad != nullptr) {
        for (std::size_t s = 0; s < keys.size(); ++s) {
            if (dgamma[s] != 0.0) backward(tapes[s], params, keys[s].second, dgamma[s], z, *grad);
        }
    }
    return loss;
}

std::vector<RankPair> all_cross_pairs(const RiskInputs& inputs) {
    std::vector<RankPair> pairs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!inputs.mislabeled(i)) continue;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
            if (inputs.true_labels[j] == kAbsentLabel || inputs.mislabeled(j)) continue;
            pairs.push_back({i, inputs.predicted[i], j, inputs.predicted[j], 1, 0});
        }
    }
    return pairs;
}

namespace {

CheckpointRecord checkpoint(const RiskInputs& inputs, const RiskModelParams& params,
                            const std::vector<RankPair>& cross, std::size_t iteration) {
    const auto scores = score_workload(inputs, params, ScoreMode::Eval);
    std::vector<double> risk;
    std::vector<std::uint8_t> flags;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (inputs.true_labels[k] == kAbsentLabel) continue;
        risk.push_back(scores.predicted_score(k));
        flags.push_back(inputs.mislabeled(k));
    }
    CheckpointRecord rec;
    rec.iteration = iteration;
    rec.valid_auroc = auroc(risk, flags);
    rec.loss = surrogate_ranking_loss(inputs, params, cross) / static_cast<double>(cross.size());
    return rec;
}

}  // namespace

TrainResult train_risk_model(const RiskInputs& inputs, RiskModelParams params, const TrainConfig& config) {
    if (!(config.learning_rate > 0.0)) throw Error("learning_rate must be positive");
    if (config.batch_pairs == 0) throw Error("batch_pairs must be positive");
    if (config.checkpoint_every == 0) throw Error("checkpoint_every must be positive");
    std::vector<std::size_t> wrong, right;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (inputs.true_labels[k] == kAbsentLabel) continue;
        (inputs.mislabeled(k) ? wrong : right).push_back(k);
    }
    if (wrong.empty()) throw Error("risk training requires mispredictions in validation split");
    if (right.empty()) throw Error("risk training requires correct predictions in validation split");

    const auto cross = all_cross_pairs(inputs);
    TrainResult result;
    result.log.push_back(checkpoint(inputs, params, cross, 0));
    result.params = params;
    result.best_auroc = result.log.back().valid_auroc;

    Lcg64 rng(config.seed);
    std::vector<RankPair> batch(config.batch_pairs);
    for (std::size_t it = 1; it <= config.max_iterations; ++it) {
        for (auto& pair : batch) {
            const auto i = wrong[rng.below(wrong.size())];
            const auto j = right[rng.below(right.size())];
            pair = {i, inputs.predicted[i], j, inputs.predicted[j], 1, 0};
        }
        ParamGradient grad(params);
        surrogate_ranking_loss(inputs, params, batch, &rng, &grad);
        const double lr = config.learning_rate;
        for (std::size_t q = 0; q < params.attention.data.size(); ++q) {
            params.attention.data[q] -= lr * grad.attention.data[q];
        }
        for (std::size_t j = 0; j < params.positions(); ++j) {
            params.attention_bias[j] -= lr * grad.attention_bias[j];
            params.variances[j] = std::max(params.variances[j] - lr * grad.variances[j], kLearnedVarianceFloor);
        }
        if (!all_finite(params)) {
            throw Error("risk training produced non-finite parameters at iteration " + std::to_string(it));
        }
        if (it % config.checkpoint_every == 0 || it == config.max_iterations) {
            result.log.push_back(checkpoint(inputs, params, cross, it));
            if (result.log.back().valid_auroc > result.best_auroc) {
                result.best_auroc = result.log.back().valid_auroc;
                result.best_iteration = it;
                result.params = params;
            }
        }
    }
    return result;
}

void write_training_log(const std::vector<CheckpointRecord>& log, const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& rec : log) {
        rows.push_back({std::to_string(rec.iteration), tsv::format_real(rec.loss), tsv::format_real(rec.valid_auroc)});
    }
    tsv::write_table(path, {"iteration", "loss", "valid_auroc"}, rows);
}

}  // namespace riskrank
