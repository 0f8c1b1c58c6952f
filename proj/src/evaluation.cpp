#include "riskrank/evaluation.hpp"

#include "riskrank/tsv.hpp"

#include <algorithm>
#include <numeric>

namespace riskrank {

double auroc(std::span<const double> scores, std::span<const std::uint8_t> positives) {
    if (scores.size() != positives.size()) throw Error("auroc: size mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of mid-ranks (1-based) over positives.
    double rank_sum = 0.0;
    double npos = 0.0;
    for (std::size_t lo = 0; lo < n;) {
        std::size_t hi = lo;
        while (hi < n && scores[order[hi]] == scores[order[lo]]) ++hi;
        const double mid = 0.5 * static_cast<double>(lo + 1 + hi);
        for (std::size_t k = lo; k < hi; ++k) {
            if (positives[order[k]]) {
                rank_sum += mid;
                npos += 1.0;
            }
        }
        lo = hi;
    }
    const double nneg = static_cast<double>(n) - npos;
    if (npos == 0.0 || nneg == 0.0) throw Error("AUROC undefined: need both positive and negative instances");
    return (rank_sum - npos * (npos + 1.0) / 2.0) / (npos * nneg);
}

namespace {

void check_labels(std::span<const int> truth, std::span<const int> predicted, int num_classes) {
    if (truth.size() != predicted.size()) throw Error("label vectors differ in length");
    if (num_classes < 1) throw Error("num_classes must be positive");
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes) {
            throw Error("label out of range at position " + std::to_string(i));
        }
    }
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, int num_classes) {
    check_labels(truth, predicted, num_classes);
    const auto C = static_cast<std::size_t>(num_classes);
    ConfusionMatrix m(C, std::vector<std::size_t>(C, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++m[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    return m;
}

EvalReport classification_report(std::span<const int> truth, std::span<const int> predicted, int num_classes) {
    EvalReport r;
    r.confusion = confusion_matrix(truth, predicted, num_classes);
    const auto C = static_cast<std::size_t>(num_classes);
    const double n = static_cast<double>(truth.size());
    std::size_t correct = 0;
    for (std::size_t c = 0; c < C; ++c) {
        std::size_t row = 0, column = 0;
        for (std::size_t k = 0; k < C; ++k) {
            row += r.confusion[c][k];
            column += r.confusion[k][c];
        }
        const auto tp = static_cast<double>(r.confusion[c][c]);
        correct += r.confusion[c][c];
        double precision = 0.0, recall = 0.0;
        if (column == 0) r.undefined_precision.push_back(static_cast<int>(c));
        else precision = tp / static_cast<double>(column);
        if (row == 0) r.undefined_recall.push_back(static_cast<int>(c));
        else recall = tp / static_cast<double>(row);
        const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        r.class_precision.push_back(precision);
        r.class_recall.push_back(recall);
        r.class_f1.push_back(f1);
        r.support.push_back(row);
        if (n > 0.0) {
            const double share = static_cast<double>(row) / n;
            r.precision += share * precision;
            r.recall += share * recall;
            r.f1 += share * f1;
        }
    }
    r.accuracy = n > 0.0 ? static_cast<double>(correct) / n : 0.0;
    return r;
}

NamedSections report_sections(const std::string& prefix, const EvalReport& r) {
    auto join_ints = [](const std::vector<int>& v) {
        std::string out;
        for (int x : v) out += (out.empty() ? "" : ",") + std::to_string(x);
        return out.empty() ? std::string("-") : out;
    };
    SectionRows summary;
    if (r.auroc) summary.push_back({"auroc", tsv::format_real(*r.auroc)});
    summary.push_back({"accuracy", tsv::format_real(r.accuracy)});
    summary.push_back({"weighted_precision", tsv::format_real(r.precision)});
    summary.push_back({"weighted_recall", tsv::format_real(r.recall)});
    summary.push_back({"weighted_f1", tsv::format_real(r.f1)});
    summary.push_back({"undefined_precision_classes", join_ints(r.undefined_precision)});
    summary.push_back({"undefined_recall_classes", join_ints(r.undefined_recall)});

    SectionRows per_class{{"class", "precision", "recall", "f1", "support"}};
    for (std::size_t c = 0; c < r.class_f1.size(); ++c) {
        per_class.push_back({std::to_string(c), tsv::format_real(r.class_precision[c]),
                             tsv::format_real(r.class_recall[c]), tsv::format_real(r.class_f1[c]),
                             std::to_string(r.support[c])});
    }
    SectionRows confusion;
    for (const auto& row : r.confusion) {
        std::vector<std::string> cells;
        for (auto v : row) cells.push_back(std::to_string(v));
        confusion.push_back(std::move(cells));
    }
    return {{prefix + "_summary", summary}, {prefix + "_per_class", per_class}, {prefix + "_confusion", confusion}};
}

}  // namespace riskrank
