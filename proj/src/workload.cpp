#include "riskrank/workload.hpp"

#include "riskrank/tsv.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <unordered_set>

namespace fs = std::filesystem;

namespace riskrank {

std::vector<std::size_t> Workload::indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (instances[i].split == split) out.push_back(i);
    }
    return out;
}

WorkloadManifest load_manifest(const std::string& path) {
    const auto entries = tsv::read_key_values(path);
    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        const fs::path candidate(p);
        return (candidate.is_absolute() ? candidate : base / candidate).lexically_normal().string();
    };

    WorkloadManifest manifest;
    bool have_classes = false;
    for (const auto& kv : entries) {
        const std::string where = path + ":" + std::to_string(kv.line);
        if (kv.key == "num_classes") {
            const auto c = tsv::parse_int(kv.value, where);
            if (c < 2) throw ParseError(where + ": num_classes must be >= 2, got " + kv.value);
            manifest.num_classes = static_cast<int>(c);
            have_classes = true;
        } else if (kv.key == "embedding_file") {
            manifest.embedding_files.push_back(resolve(kv.value));
        } else if (kv.key == "prediction_file") {
            manifest.prediction_file = resolve(kv.value);
        } else if (kv.key == "label_file") {
            manifest.label_file = resolve(kv.value);
        } else {
            throw ParseError(where + ": unknown key '" + kv.key + "'");
        }
    }
    if (!have_classes) throw ParseError(path + ": missing key 'num_classes'");
    if (manifest.embedding_files.empty()) throw ParseError(path + ": missing key 'embedding_file'");
    if (manifest.prediction_file.empty()) throw ParseError(path + ": missing key 'prediction_file'");
    if (manifest.label_file.empty()) throw ParseError(path + ": missing key 'label_file'");
    return manifest;
}

namespace {

int parse_label(const std::string& token, const std::string& where, int num_classes, bool allow_absent) {
    const auto v = tsv::parse_int(token, where);
    if (allow_absent && v == kAbsentLabel) return kAbsentLabel;
    if (v < 0 || v >= num_classes) {
        throw ParseError(where + ": label " + token + " outside [0, " + std::to_string(num_classes) + ")");
    }
    return static_cast<int>(v);
}

EmbeddingSet load_embeddings(const std::string& path) {
    const auto table = tsv::read_table(path);
    if (table.header.empty() || table.header[0] != "id") {
        throw ParseError(path + ":1: first column must be 'id'");
    }
    EmbeddingSet set;
    set.backbone_name = fs::path(path).stem().string();
    set.dim = table.header.size() - 1;
    if (set.dim == 0) throw ParseError(path + ":1: no feature columns");
    for (std::size_t j = 0; j < set.dim; ++j) {
        if (table.header[j + 1] != "f_" + std::to_string(j)) {
            throw ParseError(path + ":1: expected column 'f_" + std::to_string(j) + "'");
        }
    }
    set.values = Matrix(table.rows.size(), set.dim);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        set.ids.push_back(row[0]);
        for (std::size_t j = 0; j < set.dim; ++j) {
            set.values(r, j) = tsv::parse_real(row[j + 1], table.where(r) + " (id " + row[0] + ")");
        }
    }
    return set;
}

}  // namespace

Workload load_workload(const WorkloadManifest& manifest) {
    const int C = manifest.num_classes;
    Workload w;
    w.num_classes = C;

    const auto labels = tsv::read_table(manifest.label_file);
    const auto id_col = labels.column("id");
    const auto split_col = labels.column("split");
    const auto label_col = labels.column("true_label");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t r = 0; r < labels.rows.size(); ++r) {
        const auto& row = labels.rows[r];
        InstanceRecord rec;
        rec.id = row[id_col];
        try {
            rec.split = parse_split(row[split_col]);
        } catch (const ParseError& e) {
            throw ParseError(labels.where(r) + ": " + e.what());
        }
        rec.true_label = parse_label(row[label_col], labels.where(r), C, true);
        if (!index.emplace(rec.id, w.instances.size()).second) {
            throw ParseError(labels.where(r) + ": duplicate id " + rec.id);
        }
        w.instances.push_back(std::move(rec));
    }

    const auto preds = tsv::read_table(manifest.prediction_file);
    const auto pid = preds.column("id");
    const auto ppred = preds.column("predicted_label");
    std::vector<std::size_t> logit_cols;
    if (preds.header.size() > 2) {
        for (int c = 0; c < C; ++c) logit_cols.push_back(preds.column("logit_" + std::to_string(c)));
    }
    std::vector<bool> seen(w.size(), false);
    for (std::size_t r = 0; r < preds.rows.size(); ++r) {
        const auto& row = preds.rows[r];
        const auto it = index.find(row[pid]);
        if (it == index.end()) throw ParseError(preds.where(r) + ": id " + row[pid] + " not in label file");
        if (seen[it->second]) throw ParseError(preds.where(r) + ": duplicate id " + row[pid]);
        seen[it->second] = true;
        auto& rec = w.instances[it->second];
        rec.predicted_label = parse_label(row[ppred], preds.where(r), C, false);
        for (const auto col : logit_cols) {
            rec.logits.push_back(tsv::parse_real(row[col], preds.where(r) + " (id " + row[pid] + ")"));
        }
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!seen[i]) throw ParseError(manifest.prediction_file + ": missing id " + w.instances[i].id);
    }

    for (const auto& file : manifest.embedding_files) {
        auto raw = load_embeddings(file);
        EmbeddingSet joined;
        joined.backbone_name = raw.backbone_name;
        joined.dim = raw.dim;
        joined.values = Matrix(w.size(), raw.dim);
        std::vector<bool> have(w.size(), false);
        for (std::size_t r = 0; r < raw.ids.size(); ++r) {
            const auto it = index.find(raw.ids[r]);
            if (it == index.end()) {
                throw ParseError(file + ":" + std::to_string(r + 2) + ": id " + raw.ids[r] + " not in label file");
            }
            if (have[it->second]) {
                throw ParseError(file + ":" + std::to_string(r + 2) + ": duplicate id " + raw.ids[r]);
            }
            have[it->second] = true;
            std::copy_n(raw.values.row(r), raw.dim, joined.values.row(it->second));
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!have[i]) throw ParseError(file + ": missing id " + w.instances[i].id);
            joined.ids.push_back(w.instances[i].id);
        }
        w.embeddings.push_back(std::move(joined));
    }
    return w;
}

ValidationReport validate_workload(const Workload& w) {
    ValidationReport report;
    const int C = w.num_classes;
    auto& v = report.violations;
    if (C < 2) v.push_back("num_classes must be >= 2");
    for (auto& counts : report.class_counts) counts.assign(static_cast<std::size_t>(std::max(C, 0)), 0);
    if (w.embeddings.empty()) v.push_back("no embedding sets");

    std::unordered_set<std::string> ids;
    std::size_t correct_valid = 0;
    for (const auto& rec : w.instances) {
        const auto s = static_cast<std::size_t>(rec.split);
        ++report.split_counts[s];
        if (!ids.insert(rec.id).second) v.push_back("duplicate id " + rec.id);
        if (rec.labeled()) {
            if (rec.true_label < 0 || rec.true_label >= C) {
                v.push_back("id " + rec.id + ": true_label " + std::to_string(rec.true_label) + " out of range");
            } else {
                ++report.class_counts[s][static_cast<std::size_t>(rec.true_label)];
            }
        } else if (rec.split != Split::Test) {
            v.push_back("id " + rec.id + ": " + std::string(to_string(rec.split)) + " instance without true_label");
        }
        if (rec.predicted_label < 0 || rec.predicted_label >= C) {
            v.push_back("id " + rec.id + ": predicted_label out of range");
        }
        if (!rec.logits.empty() && rec.logits.size() != static_cast<std::size_t>(C)) {
            v.push_back("id " + rec.id + ": expected " + std::to_string(C) + " logits");
        } else if (!std::all_of(rec.logits.begin(), rec.logits.end(), [](double x) { return std::isfinite(x); })) {
            v.push_back("id " + rec.id + ": non-finite logit");
        }
        if (rec.split == Split::Valid && rec.labeled()) {
            if (rec.mispredicted()) ++report.mispredicted_valid;
            else ++correct_valid;
        }
    }
    for (const auto& set : w.embeddings) {
        if (set.values.rows != w.size() || set.values.cols != set.dim || set.dim == 0) {
            v.push_back("embedding set " + set.backbone_name + ": shape does not match workload");
            continue;
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (set.ids.size() == w.size() && set.ids[i] != w.instances[i].id) {
                v.push_back("embedding set " + set.backbone_name + ": row " + std::to_string(i) + " is not id " +
                            w.instances[i].id);
                break;
            }
            const double* row = set.values.row(i);
            if (!std::all_of(row, row + set.dim, [](double x) { return std::isfinite(x); })) {
                v.push_back("embedding set " + set.backbone_name + ": non-finite value for id " + w.instances[i].id);
            }
        }
    }
    for (int c = 0; c < C; ++c) {
        if (report.class_counts[0][static_cast<std::size_t>(c)] == 0) {
            v.push_back("class " + std::to_string(c) + " has no train instances");
        }
    }
    if (report.split_counts[1] > 0 && (report.mispredicted_valid == 0 || correct_valid == 0)) {
        v.push_back("valid split needs both mispredicted and correctly predicted instances");
    }
    if (report.split_counts[1] == 0) v.push_back("valid split is empty");
    return report;
}

void write_validation_report(const ValidationReport& report, const std::string& path) {
    std::vector<std::vector<std::string>> counts;
    for (std::size_t s = 0; s < 3; ++s) {
        std::vector<std::string> row{std::string(to_string(static_cast<Split>(s))),
                                     std::to_string(report.split_counts[s])};
        for (auto n : report.class_counts[s]) row.push_back(std::to_string(n));
        counts.push_back(std::move(row));
    }
    std::vector<std::vector<std::string>> violations;
    for (const auto& msg : report.violations) violations.push_back({msg});
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    tsv::write_sections(out, {{"split_counts", counts},
                              {"mispredicted_valid", {{std::to_string(report.mispredicted_valid)}}},
                              {"violations", violations}});
}

std::string write_workload(const Workload& w, const std::string& dir) {
    fs::create_directories(dir);
    const int C = w.num_classes;
    std::vector<std::vector<std::string>> label_rows;
    std::vector<std::vector<std::string>> pred_rows;
    for (const auto& rec : w.instances) {
        label_rows.push_back({rec.id, std::string(to_string(rec.split)), std::to_string(rec.true_label)});
        std::vector<std::string> row{rec.id, std::to_string(rec.predicted_label)};
        for (double z : rec.logits) row.push_back(tsv::format_real(z));
        pred_rows.push_back(std::move(row));
    }
    tsv::write_table((fs::path(dir) / "labels.tsv").string(), {"id", "split", "true_label"}, label_rows);
    std::vector<std::string> pred_header{"id", "predicted_label"};
    for (int c = 0; c < C; ++c) pred_header.push_back("logit_" + std::to_string(c));
    tsv::write_table((fs::path(dir) / "predictions.tsv").string(), pred_header, pred_rows);

    std::ofstream manifest(fs::path(dir) / "manifest.txt", std::ios::binary);
    manifest << "# workload manifest\n";
    manifest << "num_classes=" << C << '\n';
    for (const auto& set : w.embeddings) {
        std::vector<std::string> header{"id"};
        for (std::size_t j = 0; j < set.dim; ++j) header.push_back("f_" + std::to_string(j));
        std::vector<std::vector<std::string>> rows;
        for (std::size_t i = 0; i < w.size(); ++i) {
            std::vector<std::string> row{w.instances[i].id};
            for (std::size_t j = 0; j < set.dim; ++j) row.push_back(tsv::format_real(set.values(i, j)));
            rows.push_back(std::move(row));
        }
        const auto file = set.backbone_name + ".tsv";
        tsv::write_table((fs::path(dir) / file).string(), header, rows);
        manifest << "embedding_file=" << file << '\n';
    }
    manifest << "prediction_file=predictions.tsv\n";
    manifest << "label_file=labels.tsv\n";
    if (!manifest) throw Error("cannot write manifest in " + dir);
    return (fs::path(dir) / "manifest.txt").string();
}

void write_ranking(const RiskScoreTable& scores, const std::string& path) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = scores.predicted_score(a);
        const double sb = scores.predicted_score(b);
        if (sa != sb) return sa > sb;
        return scores.ids[a] < scores.ids[b];
    });
    std::vector<std::vector<std::string>> rows;
    for (std::size_t r = 0; r < order.size(); ++r) {
        const auto i = order[r];
        rows.push_back({scores.ids[i], std::to_string(scores.predicted[i]),
                        tsv::format_real(scores.predicted_score(i)), std::to_string(r + 1)});
    }
    tsv::write_table(path, {"id", "predicted_class", "risk_score", "rank"}, rows);
}

}  // namespace riskrank
