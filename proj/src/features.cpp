#include "riskrank/features.hpp"

#include "riskrank/tsv.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace riskrank {

std::string_view to_string(Criterion criterion) { return criterion == Criterion::MI ? "MI" : "FS"; }

Criterion parse_criterion(std::string_view text) {
    if (text == "MI") return Criterion::MI;
    if (text == "FS") return Criterion::FS;
    throw ParseError("unknown criterion '" + std::string(text) + "'");
}

namespace {

std::vector<std::size_t> bin_values(std::span<const double> values, std::size_t bins) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });

    std::size_t distinct = 0;
    for (std::size_t r = 0; r < n; ++r) {
        if (r == 0 || values[order[r]] != values[order[r - 1]]) ++distinct;
    }
    std::vector<std::size_t> bin(n);
    std::size_t group = 0;
    std::size_t group_bin = 0;
    for (std::size_t r = 0; r < n; ++r) {
        if (r == 0 || values[order[r]] != values[order[r - 1]]) {
            // tied values share the bin of their first rank
            group_bin = distinct <= bins ? group : r * bins / n;
            ++group;
        }
        bin[order[r]] = group_bin;
    }
    return bin;
}

}  // namespace

double mutual_information(std::span<const double> values, std::span<const int> labels, std::size_t bins) {
    if (values.size() != labels.size()) throw Error("mutual_information: values and labels differ in length");
    if (values.size() < 2) throw Error("mutual_information: need at least 2 instances");
    if (bins < 2) throw Error("mutual_information: need at least 2 bins");
    const std::size_t n = values.size();
    const auto bin = bin_values(values, bins);
    const std::size_t nx = *std::max_element(bin.begin(), bin.end()) + 1;
    const int max_label = *std::max_element(labels.begin(), labels.end());
    if (*std::min_element(labels.begin(), labels.end()) < 0) throw Error("mutual_information: negative label");
    const std::size_t ny = static_cast<std::size_t>(max_label) + 1;

    std::vector<double> joint(nx * ny, 0.0), px(nx, 0.0), py(ny, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        joint[bin[i] * ny + y] += 1.0;
        px[bin[i]] += 1.0;
        py[y] += 1.0;
    }
    const double total = static_cast<double>(n);
    double mi = 0.0;
    for (std::size_t x = 0; x < nx; ++x) {
        for (std::size_t y = 0; y < ny; ++y) {
            const double nxy = joint[x * ny + y];
            if (nxy == 0.0) continue;
            mi += nxy / total * std::log(nxy * total / (px[x] * py[y]));
        }
    }
    return std::max(mi, 0.0);
}

FScore f_score(std::span<const double> values, std::span<const int> labels) {
    if (values.size() != labels.size()) throw Error("f_score: values and labels differ in length");
    std::map<int, std::vector<double>> by_class;
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        by_class[labels[i]].push_back(values[i]);
        total += values[i];
    }
    if (by_class.size() < 2) throw Error("f_score: need at least 2 classes");
    const double overall = total / static_cast<double>(values.size());
    double between = 0.0;
    double within = 0.0;
    for (const auto& [label, xs] : by_class) {
        const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
        double ss = 0.0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        between += (overall - mean) * (overall - mean);
        within += ss / static_cast<double>(xs.size());
    }
    if (within == 0.0) {
        if (between == 0.0) return {0.0, true};
        return {kSeparatingFScore, true};
    }
    return {between / within, false};
}

std::vector<FeatureScore> select_top_k(std::vector<FeatureScore> scores, std::size_t k) {
    std::stable_sort(scores.begin(), scores.end(), [](const FeatureScore& a, const FeatureScore& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.feature_index < b.feature_index;
    });
    if (scores.size() > k) scores.resize(k);
    return scores;
}

FeatureSelection select_features(const Workload& w, const SelectionConfig& config) {
    if (config.top_k < 1) throw Error("top_k must be >= 1");
    if (config.mi_bins < 2) throw Error("mi_bins must be >= 2");
    const auto train = w.indices(Split::Train);
    if (train.size() < 2) throw Error("feature selection needs at least 2 train instances");
    std::vector<int> labels;
    for (auto i : train) labels.push_back(w.instances[i].true_label);

    FeatureSelection out;
    std::vector<double> column(train.size());
    for (const auto& set : w.embeddings) {
        std::vector<FeatureScore> mi_scores;
        std::vector<FeatureScore> fs_scores;
        for (std::size_t j = 0; j < set.dim; ++j) {
            for (std::size_t r = 0; r < train.size(); ++r) column[r] = set.values(train[r], j);
            mi_scores.push_back({set.backbone_name, j, Criterion::MI, mutual_information(column, labels, config.mi_bins)});
            fs_scores.push_back({set.backbone_name, j, Criterion::FS, f_score(column, labels).value});
        }
        out.scores.insert(out.scores.end(), mi_scores.begin(), mi_scores.end());
        out.scores.insert(out.scores.end(), fs_scores.begin(), fs_scores.end());

        BackboneSelection sel{set.backbone_name, {}, {}};
        for (auto& s : select_top_k(mi_scores, config.top_k)) {
            sel.mi.push_back(s.feature_index);
            out.selected.push_back(std::move(s));
        }
        for (auto& s : select_top_k(fs_scores, config.top_k)) {
            sel.fs.push_back(s.feature_index);
            out.selected.push_back(std::move(s));
        }
        std::sort(sel.mi.begin(), sel.mi.end());
        std::sort(sel.fs.begin(), sel.fs.end());
        out.per_backbone.push_back(std::move(sel));
    }
    return out;
}

FusedFeatureMatrix fuse_features(const Workload& w, const std::vector<BackboneSelection>& selections) {
    FusedFeatureMatrix fused;
    std::vector<std::pair<const EmbeddingSet*, std::size_t>> sources;
    for (const auto& sel : selections) {
        const auto it = std::find_if(w.embeddings.begin(), w.embeddings.end(),
                                     [&](const EmbeddingSet& s) { return s.backbone_name == sel.backbone_name; });
        if (it == w.embeddings.end()) throw Error("fuse_features: unknown backbone " + sel.backbone_name);
        for (const auto criterion : {Criterion::MI, Criterion::FS}) {
            for (const auto j : criterion == Criterion::MI ? sel.mi : sel.fs) {
                if (j >= it->dim) {
                    throw Error("fuse_features: backbone " + sel.backbone_name + " has no feature index " +
                                std::to_string(j) + " (dim " + std::to_string(it->dim) + ")");
                }
                fused.columns.push_back({sel.backbone_name, criterion, j});
                sources.emplace_back(&*it, j);
            }
        }
    }
    fused.values = Matrix(w.size(), fused.columns.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        fused.ids.push_back(w.instances[i].id);
        double* out = fused.values.row(i);
        for (std::size_t c = 0; c < sources.size(); ++c) out[c] = sources[c].first->values(i, sources[c].second);
    }
    return fused;
}

void write_feature_scores(const std::vector<FeatureScore>& scores, const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& s : scores) {
        rows.push_back({s.backbone_name, std::string(to_string(s.criterion)), std::to_string(s.feature_index),
                        tsv::format_real(s.score)});
    }
    tsv::write_table(path, {"backbone", "criterion", "feature_index", "score"}, rows);
}

std::vector<FeatureScore> read_feature_scores(const std::string& path) {
    const auto table = tsv::read_table(path);
    const auto b = table.column("backbone");
    const auto c = table.column("criterion");
    const auto f = table.column("feature_index");
    const auto s = table.column("score");
    std::vector<FeatureScore> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto index = tsv::parse_int(row[f], table.where(r));
        if (index < 0) throw ParseError(table.where(r) + ": negative feature index");
        out.push_back({row[b], static_cast<std::size_t>(index), parse_criterion(row[c]),
                       tsv::parse_real(row[s], table.where(r))});
    }
    return out;
}

std::vector<BackboneSelection> selections_from_scores(const Workload& w, const std::vector<FeatureScore>& selected) {
    std::vector<BackboneSelection> out;
    for (const auto& set : w.embeddings) {
        BackboneSelection sel{set.backbone_name, {}, {}};
        for (const auto& s : selected) {
            if (s.backbone_name != set.backbone_name) continue;
            (s.criterion == Criterion::MI ? sel.mi : sel.fs).push_back(s.feature_index);
        }
        std::sort(sel.mi.begin(), sel.mi.end());
        std::sort(sel.fs.begin(), sel.fs.end());
        if (!sel.mi.empty() || !sel.fs.empty()) out.push_back(std::move(sel));
    }
    return out;
}

}  // namespace riskrank
