#include "riskrank/risk_metrics.hpp"

#include "riskrank/tsv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace riskrank {

std::string_view to_string(MetricId metric) {
    switch (metric) {
        case MetricId::CCD: return "CCD";
        case MetricId::KNN5: return "KNN5";
        case MetricId::KNN7: return "KNN7";
    }
    return "?";
}

MetricId parse_metric(std::string_view text) {
    if (text == "CCD") return MetricId::CCD;
    if (text == "KNN5") return MetricId::KNN5;
    if (text == "KNN7") return MetricId::KNN7;
    throw ParseError("unknown metric id '" + std::string(text) + "'");
}

ClassCentroids compute_centroids(const FusedFeatureMatrix& fused, const Workload& w) {
    const auto C = static_cast<std::size_t>(w.num_classes);
    const std::size_t D = fused.values.cols;
    ClassCentroids out{Matrix(C, D), std::vector<std::size_t>(C, 0)};
    for (const auto i : w.indices(Split::Train)) {
        const int label = w.instances[i].true_label;
        if (label < 0) continue;
        const auto c = static_cast<std::size_t>(label);
        ++out.counts[c];
        const double* row = fused.values.row(i);
        double* acc = out.centroids.row(c);
        for (std::size_t j = 0; j < D; ++j) acc[j] += row[j];
    }
    for (std::size_t c = 0; c < C; ++c) {
        if (out.counts[c] == 0) throw Error("class " + std::to_string(c) + " has no train instances");
        double* acc = out.centroids.row(c);
        for (std::size_t j = 0; j < D; ++j) acc[j] /= static_cast<double>(out.counts[c]);
    }
    return out;
}

double ccd(std::span<const double> v, std::span<const double> centroid) {
    if (v.size() != centroid.size()) throw Error("ccd: dimension mismatch");
    double dot = 0.0, nv = 0.0, nc = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
        dot += v[j] * centroid[j];
        nv += v[j] * v[j];
        nc += centroid[j] * centroid[j];
    }
    if (nv == 0.0 || nc == 0.0) throw Error("ccd: cosine undefined for a zero-norm vector");
    const double cosine = std::clamp(dot / (std::sqrt(nv) * std::sqrt(nc)), -1.0, 1.0);
    return 1.0 - cosine;
}

NeighborIndex::NeighborIndex(const FusedFeatureMatrix& fused, const Workload& w) : dim_(fused.values.cols) {
    labels_.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) labels_[i] = w.instances[i].true_label;
    std::vector<std::size_t> train = w.indices(Split::Train);
    std::vector<std::size_t> by_id = train;
    std::sort(by_id.begin(), by_id.end(),
              [&](auto a, auto b) { return w.instances[a].id < w.instances[b].id; });
    std::unordered_map<std::size_t, std::size_t> rank;
    for (std::size_t r = 0; r < by_id.size(); ++r) rank[by_id[r]] = r;

    for (const auto i : train) {
        if (labels_[i] < 0) continue;
        const double* row = fused.values.row(i);
        double norm = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) norm += row[j] * row[j];
        if (norm == 0.0) continue;
        norm = std::sqrt(norm);
        rows_.push_back(i);
        id_rank_.push_back(rank[i]);
        for (std::size_t j = 0; j < dim_; ++j) unit_.push_back(row[j] / norm);
    }
}

std::vector<std::size_t> NeighborIndex::nearest(std::span<const double> query, std::size_t k,
                                                std::optional<std::size_t> exclude) const {
    if (query.size() != dim_) throw Error("nearest: dimension mismatch");
    double norm = 0.0;
    for (double x : query) norm += x * x;
    if (norm == 0.0) throw Error("nearest: zero-norm query");
    norm = std::sqrt(norm);

    struct Hit {
        double sim;
        std::size_t rank;
        std::size_t candidate;
    };
    auto better = [](const Hit& a, const Hit& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        return a.rank < b.rank;
    };
    std::vector<Hit> top;
    top.reserve(k + 1);
    for (std::size_t c = 0; c < rows_.size(); ++c) {
        if (exclude && rows_[c] == *exclude) continue;
        const double* u = unit_.data() + c * dim_;
        double dot = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) dot += u[j] * query[j];
        const Hit hit{dot / norm, id_rank_[c], c};
        if (top.size() == k && !better(hit, top.back())) continue;
        auto pos = std::upper_bound(top.begin(), top.end(), hit, better);
        top.insert(pos, hit);
        if (top.size() > k) top.pop_back();
    }
    if (top.size() < k) {
        throw Error("nearest: only " + std::to_string(top.size()) + " candidates for k = " + std::to_string(k));
    }
    std::vector<std::size_t> out;
    for (const auto& h : top) out.push_back(rows_[h.candidate]);
    return out;
}

int knn_count(std::span<const double> query, std::size_t k, int cls, const NeighborIndex& index,
              std::optional<std::size_t> exclude) {
    int count = 0;
    for (const auto n : index.nearest(query, k, exclude)) count += index.label_of(n) == cls;
    return count;
}

MetricTable build_metric_table(const FusedFeatureMatrix& fused, const Workload& w, const ClassCentroids& centroids,
                               const MetricConfig& config) {
    const int C = w.num_classes;
    const std::size_t D = fused.values.cols;
    const std::size_t k_max = std::max(config.knn_small, config.knn_large);
    const NeighborIndex index(fused, w);

    MetricTable table;
    table.num_classes = C;
    table.ids = fused.ids;
    table.values.resize(w.size() * static_cast<std::size_t>(C));
    for (std::size_t i = 0; i < w.size(); ++i) {
        const std::span<const double> v(fused.values.row(i), D);
        std::optional<std::size_t> self;
        if (w.instances[i].split == Split::Train) self = i;
        std::vector<std::size_t> neighbors;
        try {
            neighbors = index.nearest(v, k_max, self);
        } catch (const Error& e) {
            throw Error("instance " + w.instances[i].id + ": " + e.what());
        }
        for (int c = 0; c < C; ++c) {
            auto& cell = table.values[i * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)];
            try {
                cell[0] = ccd(v, std::span<const double>(centroids.centroids.row(static_cast<std::size_t>(c)), D));
            } catch (const Error& e) {
                throw Error("instance " + w.instances[i].id + ": " + e.what());
            }
            int small = 0, large = 0;
            for (std::size_t r = 0; r < neighbors.size(); ++r) {
                const bool hit = index.label_of(neighbors[r]) == c;
                if (r < config.knn_small) small += hit;
                if (r < config.knn_large) large += hit;
            }
            cell[1] = small;
            cell[2] = large;
        }
    }
    return table;
}

void write_metric_table(const MetricTable& table, const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < table.instances(); ++i) {
        for (int c = 0; c < table.num_classes; ++c) {
            rows.push_back({table.ids[i], std::to_string(c), tsv::format_real(table.at(i, c, MetricId::CCD)),
                            tsv::format_real(table.at(i, c, MetricId::KNN5)),
                            tsv::format_real(table.at(i, c, MetricId::KNN7))});
        }
    }
    tsv::write_table(path, {"id", "class", "CCD", "KNN5", "KNN7"}, rows);
}

MetricTable read_metric_table(const std::string& path, const Workload& w) {
    const auto t = tsv::read_table(path);
    const auto id_col = t.column("id");
    const auto class_col = t.column("class");
    const std::array<std::size_t, kNumMetrics> cols{t.column("CCD"), t.column("KNN5"), t.column("KNN7")};
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < w.size(); ++i) index.emplace(w.instances[i].id, i);

    const auto C = static_cast<std::size_t>(w.num_classes);
    MetricTable table;
    table.num_classes = w.num_classes;
    for (const auto& rec : w.instances) table.ids.push_back(rec.id);
    table.values.resize(w.size() * C);
    std::vector<bool> seen(table.values.size(), false);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const auto it = index.find(row[id_col]);
        if (it == index.end()) throw ParseError(t.where(r) + ": unknown id " + row[id_col]);
        const auto c = tsv::parse_int(row[class_col], t.where(r));
        if (c < 0 || static_cast<std::size_t>(c) >= C) throw ParseError(t.where(r) + ": class out of range");
        const auto slot = it->second * C + static_cast<std::size_t>(c);
        for (std::size_t m = 0; m < kNumMetrics; ++m) table.values[slot][m] = tsv::parse_real(row[cols[m]], t.where(r));
        seen[slot] = true;
    }
    for (std::size_t s = 0; s < seen.size(); ++s) {
        if (!seen[s]) {
            throw ParseError(path + ": missing entry for id " + table.ids[s / C] + " class " + std::to_string(s % C));
        }
    }
    return table;
}

}  // namespace riskrank
