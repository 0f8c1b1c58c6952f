#include "riskrank/adaptive.hpp"

#include "riskrank/tsv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace riskrank {

namespace {

constexpr double kLogFloor = 1e-12;

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::span<const double> feature_row(const Matrix& features, std::size_t r) { return {features.row(r), features.cols}; }

std::vector<int> labels_of(const Workload& w, const std::vector<std::size_t>& rows) {
    std::vector<int> out;
    for (auto i : rows) out.push_back(w.instances[i].true_label);
    return out;
}

double accuracy(const HeadClassifier& head, const Matrix& features, const std::vector<std::size_t>& rows,
                const std::vector<int>& labels) {
    std::size_t hit = 0;
    for (std::size_t k = 0; k < rows.size(); ++k) hit += head.predict(feature_row(features, rows[k])) == labels[k];
    return rows.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(rows.size());
}

}  // namespace

std::vector<double> HeadClassifier::logits(std::span<const double> x) const {
    if (x.size() != dim()) throw Error("head: feature length mismatch");
    std::vector<double> z(bias);
    const std::size_t C = bias.size();
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double* w = weights.row(d);
        for (std::size_t c = 0; c < C; ++c) z[c] += x[d] * w[c];
    }
    return z;
}

int HeadClassifier::predict(std::span<const double> x) const { return static_cast<int>(argmax(logits(x))); }

HeadClassifier init_head(std::size_t dim, int num_classes, double scale, std::uint64_t seed) {
    HeadClassifier head;
    head.weights = Matrix(dim, static_cast<std::size_t>(num_classes));
    head.bias.assign(static_cast<std::size_t>(num_classes), 0.0);
    Lcg64 rng(seed);
    for (double& v : head.weights.data) v = scale * rng.normal();
    return head;
}

std::vector<double> temperature_softmax(std::span<const double> logits, double lambda) {
    if (!(lambda > 0.0)) throw Error("temperature must be positive");
    std::vector<double> p(logits.begin(), logits.end());
    const double top = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double& v : p) {
        v = std::exp((v - top) / lambda);
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

double adaptive_loss(const Matrix& probs, std::span<const int> labels) {
    if (probs.rows != labels.size()) throw Error("adaptive_loss: size mismatch");
    if (probs.rows == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
        sum -= std::log(std::max(probs(i, static_cast<std::size_t>(labels[i])), kLogFloor));
    }
    return sum / static_cast<double>(probs.rows);
}

double adaptive_loss_and_gradient(const HeadClassifier& head, double lambda, const Matrix& features,
                                  std::span<const std::size_t> rows, std::span<const int> labels,
                                  HeadGradient* grad) {
    if (rows.size() != labels.size()) throw Error("adaptive_loss: size mismatch");
    if (rows.empty()) return 0.0;
    const std::size_t C = head.bias.size();
    const double n = static_cast<double>(rows.size());
    double loss = 0.0;
    std::vector<double> dz(C);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto x = feature_row(features, rows[k]);
        const auto z = head.logits(x);
        const auto p = temperature_softmax(z, lambda);
        const auto y = static_cast<std::size_t>(labels[k]);
        if (p[y] < kLogFloor) {
            loss -= std::log(kLogFloor);
            continue;  // floored term is flat
        }
        loss -= std::log(p[y]);
        if (grad == nullptr) continue;
        double dlambda = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            const double dq = (p[c] - (c == y ? 1.0 : 0.0)) / n;
            dz[c] = dq / lambda;
            dlambda -= dq * z[c] / (lambda * lambda);
        }
        grad->lambda += dlambda;
        for (std::size_t c = 0; c < C; ++c) grad->bias[c] += dz[c];
        for (std::size_t d = 0; d < x.size(); ++d) {
            double* g = grad->weights.row(d);
            for (std::size_t c = 0; c < C; ++c) g[c] += x[d] * dz[c];
        }
    }
    return loss / n;
}

PretrainResult pretrain_head(const Workload& w, const FusedFeatureMatrix& fused, const AdaptConfig& config) {
    const auto train = w.indices(Split::Train);
    const auto valid = w.indices(Split::Valid);
    if (train.empty()) throw Error("pretrain_head: empty train split");
    const auto train_labels = labels_of(w, train);
    if (std::adjacent_find(train_labels.begin(), train_labels.end(), std::not_equal_to<>()) == train_labels.end()) {
        throw Error("pretrain_head: train split holds a single class");
    }
    const auto valid_labels = labels_of(w, valid);

    PretrainResult result;
    HeadClassifier head = init_head(fused.values.cols, w.num_classes, config.init_scale, config.seed);
    result.head = head;
    result.best_valid_accuracy = accuracy(head, fused.values, valid, valid_labels);
    for (std::size_t epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
        HeadGradient grad{Matrix(head.dim(), head.bias.size()), std::vector<double>(head.bias.size(), 0.0), 0.0};
        adaptive_loss_and_gradient(head, 1.0, fused.values, train, train_labels, &grad);
        for (std::size_t q = 0; q < head.weights.data.size(); ++q) {
            head.weights.data[q] -= config.learning_rate * grad.weights.data[q];
        }
        for (std::size_t c = 0; c < head.bias.size(); ++c) head.bias[c] -= config.learning_rate * grad.bias[c];
        const double acc = accuracy(head, fused.values, valid, valid_labels);
        if (acc > result.best_valid_accuracy) {
            result.best_valid_accuracy = acc;
            result.best_epoch = epoch;
            result.head = head;
        }
    }
    result.head.trained = true;
    return result;
}

std::vector<int> risk_pseudo_labels(const RiskScoreTable& scores) {
    std::vector<int> out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double* row = scores.gamma.row(i);
        out.push_back(static_cast<int>(std::min_element(row, row + scores.num_classes()) - row));
    }
    return out;
}

ClassifierView head_view(const HeadClassifier& head, const FusedFeatureMatrix& fused) {
    ClassifierView view{Matrix(fused.values.rows, head.bias.size()), {}};
    for (std::size_t i = 0; i < fused.values.rows; ++i) {
        const auto p = temperature_softmax(head.logits(feature_row(fused.values, i)), 1.0);
        std::copy(p.begin(), p.end(), view.probabilities.row(i));
        view.predicted.push_back(static_cast<int>(argmax(p)));
    }
    return view;
}

AdaptResult adapt(HeadClassifier head, const RiskModelParams& params, const Workload& w,
                  const FusedFeatureMatrix& fused, const MetricTable& metrics, const std::vector<RiskRule>& rules,
                  const AdaptConfig& config) {
    AdaptResult result;
    const auto test = w.indices(Split::Test);
    if (test.empty()) {
        warn("adapt: empty test split; head left unchanged");
        result.head = std::move(head);
        return result;
    }
    const auto truth = labels_of(w, test);
    const bool labeled = std::all_of(truth.begin(), truth.end(), [](int y) { return y != kAbsentLabel; });

    RiskInputs inputs = build_risk_inputs(w, metrics, rules, head_view(head, fused), test);
    Lcg64 rng(config.seed);
    TemperatureState temp;
    std::vector<std::size_t> order(test.size());
    const std::size_t batch = config.batch_size == 0 ? test.size() : config.batch_size;

    for (std::size_t epoch = 1; epoch <= config.adapt_epochs; ++epoch) {
        const auto view = head_view(head, fused);
        for (std::size_t k = 0; k < test.size(); ++k) {
            inputs.predicted[k] = view.predicted[test[k]];
            std::copy_n(view.probabilities.row(test[k]), view.probabilities.cols, inputs.classifier_scores.row(k));
        }
        const auto pseudo = risk_pseudo_labels(score_workload(inputs, params, ScoreMode::Eval));

        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t stop = std::min(order.size(), start + batch);
            std::vector<std::size_t> rows;
            std::vector<int> labels;
            for (std::size_t k = start; k < stop; ++k) {
                rows.push_back(test[order[k]]);
                labels.push_back(pseudo[order[k]]);
            }
            HeadGradient grad{Matrix(head.dim(), head.bias.size()), std::vector<double>(head.bias.size(), 0.0), 0.0};
            adaptive_loss_and_gradient(head, temp.lambda, fused.values, rows, labels, &grad);
            for (std::size_t q = 0; q < head.weights.data.size(); ++q) {
                head.weights.data[q] -= config.learning_rate * grad.weights.data[q];
            }
            for (std::size_t c = 0; c < head.bias.size(); ++c) head.bias[c] -= config.learning_rate * grad.bias[c];
            temp.lambda = std::max(temp.lambda - config.learning_rate * grad.lambda, kMinTemperature);
        }
        if (!std::isfinite(temp.lambda) ||
            !std::all_of(head.weights.data.begin(), head.weights.data.end(), [](double v) { return std::isfinite(v); })) {
            throw Error("adaptation produced non-finite parameters at epoch " + std::to_string(epoch));
        }

        AdaptEpoch rec;
        rec.epoch = epoch;
        rec.lambda = temp.lambda;
        rec.loss = adaptive_loss_and_gradient(head, temp.lambda, fused.values, test, pseudo);
        std::size_t agree = 0;
        for (std::size_t k = 0; k < test.size(); ++k) agree += pseudo[k] == inputs.predicted[k];
        rec.agreement = static_cast<double>(agree) / static_cast<double>(test.size());
        if (labeled) rec.test_accuracy = accuracy(head, fused.values, test, truth);
        result.log.push_back(rec);
    }
    result.head = std::move(head);
    result.temperature = temp;
    return result;
}

void write_head(const HeadClassifier& head, const std::string& path) {
    std::vector<std::vector<std::string>> weights;
    for (std::size_t d = 0; d < head.dim(); ++d) {
        std::vector<std::string> row;
        for (std::size_t c = 0; c < head.bias.size(); ++c) row.push_back(tsv::format_real(head.weights(d, c)));
        weights.push_back(std::move(row));
    }
    std::vector<std::string> bias;
    for (double b : head.bias) bias.push_back(tsv::format_real(b));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    tsv::write_sections(out, {{"meta",
                               {{"dim", std::to_string(head.dim())},
                                {"num_classes", std::to_string(head.bias.size())},
                                {"trained", head.trained ? "1" : "0"}}},
                              {"bias", {bias}},
                              {"weights", weights}});
    if (!out) throw Error("write failed: " + path);
}

HeadClassifier read_head(const std::string& path) {
    const auto sections = tsv::read_sections(path);
    auto section = [&](const std::string& name) -> const std::vector<std::vector<std::string>>& {
        const auto it = sections.find(name);
        if (it == sections.end()) throw ParseError(path + ": missing section [" + name + "]");
        return it->second;
    };
    long long dim = -1, classes = -1;
    HeadClassifier head;
    for (const auto& row : section("meta")) {
        if (row.size() != 2) throw ParseError(path + ": [meta] rows are key/value pairs");
        if (row[0] == "dim") dim = tsv::parse_int(row[1], path);
        else if (row[0] == "num_classes") classes = tsv::parse_int(row[1], path);
        else if (row[0] == "trained") head.trained = row[1] == "1";
        else throw ParseError(path + ": unknown [meta] key " + row[0]);
    }
    if (dim < 1 || classes < 2) throw ParseError(path + ": [meta] needs dim >= 1 and num_classes >= 2");
    const auto& bias = section("bias");
    const auto& weights = section("weights");
    if (bias.size() != 1 || bias[0].size() != static_cast<std::size_t>(classes)) {
        throw ParseError(path + ": [bias] needs one row of " + std::to_string(classes) + " values");
    }
    if (weights.size() != static_cast<std::size_t>(dim)) {
        throw ParseError(path + ": [weights] needs " + std::to_string(dim) + " rows");
    }
    for (const auto& token : bias[0]) head.bias.push_back(tsv::parse_real(token, path + " [bias]"));
    head.weights = Matrix(static_cast<std::size_t>(dim), static_cast<std::size_t>(classes));
    for (std::size_t d = 0; d < weights.size(); ++d) {
        if (weights[d].size() != static_cast<std::size_t>(classes)) {
            throw ParseError(path + " [weights] row " + std::to_string(d + 1) + ": wrong width");
        }
        for (std::size_t c = 0; c < weights[d].size(); ++c) {
            head.weights(d, c) = tsv::parse_real(weights[d][c], path + " [weights]");
        }
    }
    return head;
}

void write_adapt_log(const std::vector<AdaptEpoch>& log, const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& rec : log) {
        rows.push_back({std::to_string(rec.epoch), tsv::format_real(rec.lambda), tsv::format_real(rec.loss),
                        tsv::format_real(rec.agreement),
                        rec.test_accuracy ? tsv::format_real(*rec.test_accuracy) : std::string("NA")});
    }
    tsv::write_table(path, {"epoch", "lambda", "loss", "pseudo_label_agreement", "test_accuracy_if_labels_available"},
                     rows);
}

}  // namespace riskrank
