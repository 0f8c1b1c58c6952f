#include "riskrank/pipeline.hpp"

#include "riskrank/evaluation.hpp"
#include "riskrank/tsv.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace riskrank {

namespace {

double real_value(const std::string& key, const std::string& value) {
    try {
        return tsv::parse_real(value, "key '" + key + "'");
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
}

std::uint64_t count_value(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (value.empty() || ec != std::errc() || ptr != end) {
        throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + value + "'");
    }
    return v;
}

void require(bool ok, const std::string& key, const std::string& rule) {
    if (!ok) throw ConfigError("key '" + key + "' must " + rule);
}

struct KeySpec {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::string real_text(double v) { return tsv::format_real(v); }

template <typename T>
KeySpec count_key(T RunConfig::*group, std::size_t T::*field, std::uint64_t min) {
    return {[=](RunConfig& c, const std::string& k, const std::string& v) {
                const auto n = count_value(k, v);
                require(n >= min, k, "be >= " + std::to_string(min));
                (c.*group).*field = static_cast<std::size_t>(n);
            },
            [=](const RunConfig& c) { return std::to_string((c.*group).*field); }};
}

template <typename T>
KeySpec real_key(T RunConfig::*group, double T::*field, std::function<bool(double)> ok, std::string rule) {
    return {[=](RunConfig& c, const std::string& k, const std::string& v) {
                const double x = real_value(k, v);
                require(ok(x), k, rule);
                (c.*group).*field = x;
            },
            [=](const RunConfig& c) { return real_text((c.*group).*field); }};
}

const std::map<std::string, KeySpec>& key_table() {
    static const std::map<std::string, KeySpec> table = [] {
        auto positive = [](double x) { return x > 0.0; };
        auto nonnegative = [](double x) { return x >= 0.0; };
        auto open_unit = [](double x) { return x > 0.0 && x < 1.0; };
        std::map<std::string, KeySpec> t;
        t["out"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                        require(!v.empty(), k, "not be empty");
                        c.out = v;
                    },
                    [](const RunConfig& c) { return c.out; }};
        t["workload"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.workload = v; },
                         [](const RunConfig& c) { return c.workload; }};
        t["seed"] = {[](RunConfig& c, const std::string& k, const std::string& v) { c.seed = count_value(k, v); },
                     [](const RunConfig& c) { return std::to_string(c.seed); }};
        t["top_k"] = count_key(&RunConfig::selection, &SelectionConfig::top_k, 1);
        t["mi_bins"] = count_key(&RunConfig::selection, &SelectionConfig::mi_bins, 2);
        t["min_purity"] = real_key(&RunConfig::rules, &RuleConfig::min_purity,
                                   [](double x) { return x > 0.0 && x <= 1.0; }, "lie in (0, 1]");
        t["min_coverage"] = real_key(&RunConfig::rules, &RuleConfig::min_coverage,
                                     [](double x) { return x >= 0.0 && x <= 1.0; }, "lie in [0, 1]");
        t["max_rules_per_metric"] = count_key(&RunConfig::rules, &RuleConfig::max_rules_per_metric, 1);
        t["var_level"] = real_key(&RunConfig::model, &ModelConfig::var_level, open_unit, "lie in (0, 1)");
        t["alpha"] = real_key(&RunConfig::model, &ModelConfig::alpha, nonnegative, "be >= 0");
        t["dropout_rate"] = real_key(&RunConfig::model, &ModelConfig::dropout_rate,
                                     [](double x) { return x >= 0.0 && x < 1.0; }, "lie in [0, 1)");
        t["classifier_variance"] = real_key(&RunConfig::model, &ModelConfig::classifier_variance, positive, "be > 0");
        t["risk_learning_rate"] = real_key(&RunConfig::train, &TrainConfig::learning_rate, positive, "be > 0");
        t["risk_iterations"] = count_key(&RunConfig::train, &TrainConfig::max_iterations, 0);
        t["batch_pairs"] = count_key(&RunConfig::train, &TrainConfig::batch_pairs, 1);
        t["checkpoint_every"] = count_key(&RunConfig::train, &TrainConfig::checkpoint_every, 1);
        t["pretrain_epochs"] = count_key(&RunConfig::adapt, &AdaptConfig::pretrain_epochs, 0);
        t["adapt_epochs"] = count_key(&RunConfig::adapt, &AdaptConfig::adapt_epochs, 0);
        t["adapt_learning_rate"] = real_key(&RunConfig::adapt, &AdaptConfig::learning_rate, positive, "be > 0");
        t["adapt_batch_size"] = count_key(&RunConfig::adapt, &AdaptConfig::batch_size, 0);
        t["head_init_scale"] = real_key(&RunConfig::adapt, &AdaptConfig::init_scale, nonnegative, "be >= 0");
        t["synth_classes"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                                  const auto n = count_value(k, v);
                                  require(n >= 2 && n <= 1000, k, "lie in [2, 1000]");
                                  c.synth.num_classes = static_cast<int>(n);
                              },
                              [](const RunConfig& c) { return std::to_string(c.synth.num_classes); }};
        t["synth_dim"] = count_key(&RunConfig::synth, &SynthConfig::dim, 1);
        t["synth_backbones"] = count_key(&RunConfig::synth, &SynthConfig::backbones, 1);
        t["synth_train"] = count_key(&RunConfig::synth, &SynthConfig::n_train, 1);
        t["synth_valid"] = count_key(&RunConfig::synth, &SynthConfig::n_valid, 1);
        t["synth_test"] = count_key(&RunConfig::synth, &SynthConfig::n_test, 1);
        t["synth_separation"] = real_key(&RunConfig::synth, &SynthConfig::class_separation, nonnegative, "be >= 0");
        t["synth_shift"] = real_key(&RunConfig::synth, &SynthConfig::shift_magnitude, nonnegative, "be >= 0");
        t["synth_label_noise"] = real_key(&RunConfig::synth, &SynthConfig::label_noise,
                                          [](double x) { return x >= 0.0 && x < 1.0; }, "lie in [0, 1)");
        t["synth_labeler_sharpness"] =
            real_key(&RunConfig::synth, &SynthConfig::labeler_sharpness, positive, "be > 0");
        t["synth_labeler_bias"] = real_key(&RunConfig::synth, &SynthConfig::labeler_bias, nonnegative, "be >= 0");
        return t;
    }();
    return table;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> names = {
        "out", "workload", "seed", "top_k", "mi_bins", "min_purity", "min_coverage", "max_rules_per_metric",
        "var_level", "alpha", "dropout_rate", "classifier_variance", "risk_learning_rate", "risk_iterations",
        "batch_pairs", "checkpoint_every", "pretrain_epochs", "adapt_epochs", "adapt_learning_rate",
        "adapt_batch_size", "head_init_scale", "synth_classes", "synth_dim", "synth_backbones", "synth_train",
        "synth_valid", "synth_test", "synth_separation", "synth_shift", "synth_label_noise",
        "synth_labeler_sharpness", "synth_labeler_bias"};
    return names;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto& table = key_table();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(*this, key, value);
}

std::string RunConfig::get(const std::string& key) const {
    const auto& table = key_table();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second.get(*this);
}

void RunConfig::load(const std::string& path) {
    std::vector<tsv::KeyValue> entries;
    try {
        entries = tsv::read_key_values(path);
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
    for (const auto& kv : entries) {
        try {
            set(kv.key, kv.value);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(kv.line) + ": " + e.what());
        }
    }
}

void RunConfig::check() const {
    if (synth.dim < static_cast<std::size_t>(synth.num_classes)) {
        throw ConfigError("synth_dim must be >= synth_classes");
    }
}

std::string RunConfig::manifest_path() const {
    return workload.empty() ? (fs::path(out) / "workload" / "manifest.txt").string() : workload;
}

std::string RunConfig::hash() const {
    std::uint64_t h = 14695981039346656037ULL;
    for (const auto& key : keys()) {
        if (key == "out" || key == "workload") continue;
        for (char ch : key + "=" + get(key) + "\n") {
            h ^= static_cast<unsigned char>(ch);
            h *= 1099511628211ULL;
        }
    }
    char text[17];
    std::snprintf(text, sizeof text, "%016llx", static_cast<unsigned long long>(h));
    return text;
}

SynthConfig RunConfig::synth_config() const {
    SynthConfig s = synth;
    s.seed = seed;
    return s;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t = train;
    t.seed = risk_seed();
    return t;
}

AdaptConfig RunConfig::adapt_config() const {
    AdaptConfig a = adapt;
    a.seed = head_seed();
    return a;
}

Analysis analyze(const Workload& w, const RunConfig& config) {
    Analysis a;
    a.selection = select_features(w, config.selection);
    a.fused = fuse_features(w, a.selection.per_backbone);
    const auto centroids = compute_centroids(a.fused, w);
    a.metrics = build_metric_table(a.fused, w, centroids);
    a.mapping = build_mu_table(w, a.metrics, Split::Train);
    a.rules = induce_rules(a.mapping, config.rules);
    return a;
}

RiskFit fit_risk_model(const Workload& w, const MetricTable& metrics, const std::vector<RiskRule>& rules,
                       const MUPairTable& mapping, const ClassifierView& classifier, const RunConfig& config) {
    const auto valid = w.indices(Split::Valid);
    Matrix scores(valid.size(), static_cast<std::size_t>(w.num_classes));
    std::vector<int> labels;
    for (std::size_t k = 0; k < valid.size(); ++k) {
        std::copy_n(classifier.probabilities.row(valid[k]), scores.cols, scores.row(k));
        labels.push_back(w.instances[valid[k]].true_label);
    }
    RiskFit fit;
    fit.initial = initialize_params(rules, mapping, w, platt_fit_classes(scores, labels), config.model);
    const auto inputs = build_risk_inputs(w, metrics, rules, classifier, valid);
    fit.trained = train_risk_model(inputs, fit.initial, config.train_config());
    return fit;
}

AdaptOutcome run_adaptation(const Workload& w, const Analysis& a, const RunConfig& config) {
    AdaptOutcome out;
    const auto adapt_config = config.adapt_config();
    out.pretrained = pretrain_head(w, a.fused, adapt_config);
    const auto view = head_view(out.pretrained.head, a.fused);
    out.risk = fit_risk_model(w, a.metrics, a.rules, a.mapping, view, config);
    out.adapted = adapt(out.pretrained.head, out.risk.trained.params, w, a.fused, a.metrics, a.rules, adapt_config);
    return out;
}

double risk_auroc(const RiskScoreTable& scores, const std::vector<int>& truth) {
    std::vector<double> risk;
    std::vector<std::uint8_t> flags;
    for (std::size_t k = 0; k < scores.size(); ++k) {
        if (truth[k] == kAbsentLabel) continue;
        risk.push_back(scores.predicted_score(k));
        flags.push_back(truth[k] != scores.predicted[k]);
    }
    return auroc(risk, flags);
}

double confidence_auroc(const ClassifierView& view, const std::vector<std::size_t>& instances,
                        const std::vector<int>& truth) {
    std::vector<double> risk;
    std::vector<std::uint8_t> flags;
    for (std::size_t k = 0; k < instances.size(); ++k) {
        if (truth[k] == kAbsentLabel) continue;
        const double* p = view.probabilities.row(instances[k]);
        risk.push_back(1.0 - *std::max_element(p, p + view.probabilities.cols));
        flags.push_back(truth[k] != view.predicted[instances[k]]);
    }
    return auroc(risk, flags);
}

namespace {

// Artifact file names and the stage producing each.
constexpr const char* kValidation = "validation.tsv";
constexpr const char* kFeatureScores = "feature_scores.tsv";
constexpr const char* kSelection = "selection.tsv";
constexpr const char* kMetrics = "metrics.tsv";
constexpr const char* kRules = "rules.tsv";
constexpr const char* kRiskParams = "risk_params.tsv";
constexpr const char* kRiskLog = "risk_training_log.tsv";
constexpr const char* kRiskScores = "risk_scores.tsv";
constexpr const char* kRanking = "ranking.tsv";
constexpr const char* kVoteRanking = "vote_ranking.tsv";
constexpr const char* kHeadPretrained = "head_pretrained.tsv";
constexpr const char* kHeadAdapted = "head_adapted.tsv";
constexpr const char* kAdaptRiskParams = "adapt_risk_params.tsv";
constexpr const char* kAdaptRiskLog = "adapt_risk_training_log.tsv";
constexpr const char* kAdaptLog = "adapt_log.tsv";
constexpr const char* kEvaluation = "evaluation.tsv";
constexpr const char* kRunManifest = "MANIFEST.tsv";

struct Run {
    const RunConfig& config;
    std::vector<std::string> inputs;

    std::string path(const char* name) const { return (fs::path(config.out) / name).string(); }

    std::string need(const char* name, const char* producer) {
        const auto p = path(name);
        if (!fs::exists(p)) {
            throw Error("missing " + p + "; run the '" + std::string(producer) + "' stage first");
        }
        inputs.push_back(name);
        return p;
    }

    Workload workload() {
        const auto manifest = config.manifest_path();
        if (!fs::exists(manifest)) {
            throw Error("missing workload manifest " + manifest + "; run the 'synth' stage or set 'workload'");
        }
        inputs.push_back("workload");
        return load_workload(load_manifest(manifest));
    }

    Analysis analysis(const Workload& w) {
        Analysis a;
        a.selection.selected = read_feature_scores(need(kSelection, "features"));
        a.selection.per_backbone = selections_from_scores(w, a.selection.selected);
        a.fused = fuse_features(w, a.selection.per_backbone);
        a.metrics = read_metric_table(need(kMetrics, "metrics"), w);
        a.mapping = build_mu_table(w, a.metrics, Split::Train);
        a.rules = read_rules(need(kRules, "rules"));
        return a;
    }
};

const std::vector<std::string> kStageOrder = {"synth", "validate", "features", "metrics", "rules",
                                              "train-risk", "rank", "adapt", "evaluate"};

void record_stage(const RunConfig& config, const std::string& stage, const std::vector<std::string>& inputs) {
    const auto path = (fs::path(config.out) / kRunManifest).string();
    std::map<std::string, std::vector<std::string>> rows;
    if (fs::exists(path)) {
        const auto table = tsv::read_table(path);
        for (const auto& row : table.rows) {
            if (row.size() == 3) rows[row[0]] = row;
        }
    }
    std::string joined;
    for (const auto& in : inputs) joined += (joined.empty() ? "" : ",") + in;
    rows[stage] = {stage, joined.empty() ? "-" : joined, config.hash()};
    std::vector<std::vector<std::string>> ordered;
    for (const auto& name : kStageOrder) {
        if (const auto it = rows.find(name); it != rows.end()) ordered.push_back(it->second);
    }
    tsv::write_table(path, {"stage", "inputs", "config_hash"}, ordered);
}

std::vector<int> labels_of(const Workload& w, const std::vector<std::size_t>& rows) {
    std::vector<int> out;
    for (auto i : rows) out.push_back(w.instances[i].true_label);
    return out;
}

void write_risk_scores(const RiskScoreTable& scores, const std::string& path) {
    std::vector<std::string> header = {"id", "predicted_class"};
    for (std::size_t c = 0; c < scores.num_classes(); ++c) header.push_back("gamma_" + std::to_string(c));
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        std::vector<std::string> row = {scores.ids[i], std::to_string(scores.predicted[i])};
        for (std::size_t c = 0; c < scores.num_classes(); ++c) row.push_back(tsv::format_real(scores.gamma(i, c)));
        rows.push_back(std::move(row));
    }
    tsv::write_table(path, header, rows);
}

RiskScoreTable read_risk_scores(const std::string& path, int num_classes) {
    const auto table = tsv::read_table(path);
    if (table.header.size() != 2 + static_cast<std::size_t>(num_classes)) {
        throw ParseError(path + ":1: expected " + std::to_string(num_classes) + " gamma columns");
    }
    RiskScoreTable s;
    s.gamma = Matrix(table.rows.size(), static_cast<std::size_t>(num_classes));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        s.ids.push_back(row[0]);
        s.predicted.push_back(static_cast<int>(tsv::parse_int(row[1], table.where(r))));
        for (std::size_t c = 0; c < static_cast<std::size_t>(num_classes); ++c) {
            s.gamma(r, c) = tsv::parse_real(row[2 + c], table.where(r));
        }
    }
    return s;
}

void write_vote_ranking(const RiskScoreTable& scores, const std::string& path) {
    const auto votes = vote_rank(scores.gamma, scores.ids);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t r = 0; r < votes.order.size(); ++r) {
        const auto i = votes.order[r];
        double total = 0.0;
        for (std::size_t c = 0; c < scores.num_classes(); ++c) total += scores.gamma(i, c);
        rows.push_back({scores.ids[i], std::to_string(votes.wins[i]), tsv::format_real(total), std::to_string(r + 1)});
    }
    tsv::write_table(path, {"id", "wins", "risk_sum", "rank"}, rows);
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

std::string stage_synth(Run& run) {
    const auto cfg = run.config.synth_config();
    const auto dir = fs::path(run.config.manifest_path()).parent_path().string();
    fs::create_directories(dir);
    const auto w = generate_workload(cfg);
    write_workload(w, dir);
    std::size_t wrong = 0;
    for (const auto& rec : w.instances) wrong += rec.mispredicted();
    return "synth: " + std::to_string(w.size()) + " instances, " + std::to_string(wrong) + " mispredicted, written to " +
           dir;
}

std::string stage_validate(Run& run) {
    const auto w = run.workload();
    const auto report = validate_workload(w);
    write_validation_report(report, run.path(kValidation));
    if (!report.ok()) {
        throw Error("workload failed validation with " + std::to_string(report.violations.size()) +
                    " violation(s); first: " + report.violations.front());
    }
    return "validate: " + std::to_string(w.size()) + " instances, " + std::to_string(report.mispredicted_valid) +
           " mispredicted in valid";
}

std::string stage_features(Run& run) {
    const auto w = run.workload();
    const auto selection = select_features(w, run.config.selection);
    write_feature_scores(selection.scores, run.path(kFeatureScores));
    write_feature_scores(selection.selected, run.path(kSelection));
    return "features: " + std::to_string(selection.selected.size()) + " fused columns from " +
           std::to_string(w.embeddings.size()) + " backbones";
}

std::string stage_metrics(Run& run) {
    const auto w = run.workload();
    const auto selected = read_feature_scores(run.need(kSelection, "features"));
    const auto fused = fuse_features(w, selections_from_scores(w, selected));
    const auto table = build_metric_table(fused, w, compute_centroids(fused, w));
    write_metric_table(table, run.path(kMetrics));
    return "metrics: " + std::to_string(table.values.size()) + " (instance, class) pairs";
}

std::string stage_rules(Run& run) {
    const auto w = run.workload();
    const auto metrics = read_metric_table(run.need(kMetrics, "metrics"), w);
    const auto rules = induce_rules(build_mu_table(w, metrics, Split::Train), run.config.rules);
    write_rules(rules, run.path(kRules));
    return "rules: " + std::to_string(rules.size()) + " rules induced";
}

std::string stage_train_risk(Run& run) {
    const auto w = run.workload();
    const auto metrics = read_metric_table(run.need(kMetrics, "metrics"), w);
    const auto rules = read_rules(run.need(kRules, "rules"));
    const auto mapping = build_mu_table(w, metrics, Split::Train);
    const auto fit = fit_risk_model(w, metrics, rules, mapping, workload_classifier(w), run.config);
    write_params(fit.trained.params, run.path(kRiskParams));
    write_training_log(fit.trained.log, run.path(kRiskLog));
    return "train-risk: best valid AUROC " + fmt("%.4f", fit.trained.best_auroc) + " at iteration " +
           std::to_string(fit.trained.best_iteration);
}

std::string stage_rank(Run& run) {
    const auto w = run.workload();
    const auto metrics = read_metric_table(run.need(kMetrics, "metrics"), w);
    const auto rules = read_rules(run.need(kRules, "rules"));
    const auto params = read_params(run.need(kRiskParams, "train-risk"));
    const auto test = w.indices(Split::Test);
    const auto inputs = build_risk_inputs(w, metrics, rules, workload_classifier(w), test);
    const auto scores = score_workload(inputs, params);
    write_risk_scores(scores, run.path(kRiskScores));
    write_ranking(scores, run.path(kRanking));
    write_vote_ranking(scores, run.path(kVoteRanking));
    return "rank: " + std::to_string(scores.size()) + " test instances ranked";
}

std::string stage_adapt(Run& run) {
    const auto w = run.workload();
    const auto analysis = run.analysis(w);
    const auto outcome = run_adaptation(w, analysis, run.config);
    write_head(outcome.pretrained.head, run.path(kHeadPretrained));
    write_head(outcome.adapted.head, run.path(kHeadAdapted));
    write_params(outcome.risk.trained.params, run.path(kAdaptRiskParams));
    write_training_log(outcome.risk.trained.log, run.path(kAdaptRiskLog));
    write_adapt_log(outcome.adapted.log, run.path(kAdaptLog));
    std::string summary = "adapt: pretrained valid accuracy " + fmt("%.4f", outcome.pretrained.best_valid_accuracy);
    if (!outcome.adapted.log.empty()) summary += ", final lambda " + fmt("%.4f", outcome.adapted.temperature.lambda);
    return summary;
}

std::vector<int> head_predictions(const HeadClassifier& head, const FusedFeatureMatrix& fused,
                                  const std::vector<std::size_t>& rows) {
    std::vector<int> out;
    for (auto i : rows) out.push_back(head.predict({fused.values.row(i), fused.values.cols}));
    return out;
}

std::string stage_evaluate(Run& run) {
    const auto w = run.workload();
    const auto scores = read_risk_scores(run.need(kRiskScores, "rank"), w.num_classes);
    const auto test = w.indices(Split::Test);
    if (scores.size() != test.size()) throw Error(run.path(kRiskScores) + " does not match the test split");
    const auto truth = labels_of(w, test);
    NamedSections sections;
    const bool labeled = std::all_of(truth.begin(), truth.end(), [](int y) { return y != kAbsentLabel; });
    if (!labeled) {
        sections.push_back({"note", {{"test split has unlabeled instances; metrics skipped"}}});
        std::ofstream out(run.path(kEvaluation), std::ios::binary);
        tsv::write_sections(out, sections);
        return "evaluate: test labels unavailable, metrics skipped";
    }

    const auto classifier = workload_classifier(w);
    std::vector<int> predicted;
    for (auto i : test) predicted.push_back(classifier.predicted[i]);
    const double risk = risk_auroc(scores, truth);
    const double baseline = confidence_auroc(classifier, test, truth);
    std::vector<std::vector<std::string>> ranking = {{"risk_auroc", tsv::format_real(risk)},
                                                     {"baseline_auroc", tsv::format_real(baseline)}};
    auto report = classification_report(truth, predicted, w.num_classes);
    report.auroc = risk;
    sections.push_back({"classifier_ranking", ranking});
    for (auto& s : report_sections("classifier", report)) sections.push_back(std::move(s));

    std::string summary = "evaluate: risk AUROC " + fmt("%.4f", risk) + " vs baseline " + fmt("%.4f", baseline);
    if (fs::exists(run.path(kHeadPretrained)) && fs::exists(run.path(kHeadAdapted)) &&
        fs::exists(run.path(kAdaptRiskParams))) {
        run.inputs.insert(run.inputs.end(), {kHeadPretrained, kHeadAdapted, kAdaptRiskParams});
        const auto analysis = run.analysis(w);
        const auto pretrained = read_head(run.path(kHeadPretrained));
        const auto adapted = read_head(run.path(kHeadAdapted));
        const auto params = read_params(run.path(kAdaptRiskParams));
        const auto view = head_view(pretrained, analysis.fused);
        const auto head_scores =
            score_workload(build_risk_inputs(w, analysis.metrics, analysis.rules, view, test), params);
        const double head_risk = risk_auroc(head_scores, truth);
        const double head_baseline = confidence_auroc(view, test, truth);
        auto before = classification_report(truth, head_predictions(pretrained, analysis.fused, test), w.num_classes);
        before.auroc = head_risk;
        const auto after = classification_report(truth, head_predictions(adapted, analysis.fused, test), w.num_classes);
        sections.push_back({"head_ranking",
                            {{"risk_auroc", tsv::format_real(head_risk)},
                             {"baseline_auroc", tsv::format_real(head_baseline)}}});
        for (auto& s : report_sections("head_pretrained", before)) sections.push_back(std::move(s));
        for (auto& s : report_sections("head_adapted", after)) sections.push_back(std::move(s));
        summary += "; head accuracy " + fmt("%.4f", before.accuracy) + " -> " + fmt("%.4f", after.accuracy);
    }
    std::ofstream out(run.path(kEvaluation), std::ios::binary);
    if (!out) throw Error("cannot write " + run.path(kEvaluation));
    tsv::write_sections(out, sections);
    return summary;
}

}  // namespace

const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> stages = {"validate", "features",   "metrics", "rules",
                                                    "train-risk", "rank", "adapt",   "evaluate"};
    return stages;
}

std::string run_stage(const std::string& stage, const RunConfig& config) {
    static const std::map<std::string, std::function<std::string(Run&)>> stages = {
        {"synth", stage_synth},           {"validate", stage_validate}, {"features", stage_features},
        {"metrics", stage_metrics},       {"rules", stage_rules},       {"train-risk", stage_train_risk},
        {"rank", stage_rank},             {"adapt", stage_adapt},       {"evaluate", stage_evaluate}};
    const auto it = stages.find(stage);
    if (it == stages.end()) throw ConfigError("unknown stage '" + stage + "'");
    config.check();
    fs::create_directories(config.out);
    Run run{config, {}};
    auto summary = it->second(run);
    std::sort(run.inputs.begin(), run.inputs.end());
    run.inputs.erase(std::unique(run.inputs.begin(), run.inputs.end()), run.inputs.end());
    record_stage(config, stage, run.inputs);
    return summary;
}

std::vector<std::string> run_pipeline(const RunConfig& config) {
    std::vector<std::string> summaries;
    // Without an external workload the run is self-contained.
    if (config.workload.empty()) summaries.push_back(run_stage("synth", config));
    for (const auto& stage : pipeline_stages()) summaries.push_back(run_stage(stage, config));
    return summaries;
}

}  // namespace riskrank
