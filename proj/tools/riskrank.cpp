// Command-line front end: one subcommand per pipeline stage.

#include "riskrank/pipeline.hpp"
#include "riskrank/rank_training.hpp"
#include "riskrank/risk_model.hpp"
#include "riskrank/synthetic.hpp"
#include "riskrank/tsv.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>

namespace {

using namespace riskrank;

int run_oracle(double mu, double var, double level, std::size_t samples, const std::string& scores_path,
               std::uint64_t seed) {
    if (!scores_path.empty()) {
        const auto table = tsv::read_table(scores_path);
        if (table.header.size() < 3) throw Error(scores_path + ": expected id, predicted_class and gamma columns");
        const std::size_t classes = table.header.size() - 2;
        if (table.rows.size() > 200) throw Error("rank oracle accepts at most 200 instances");
        Matrix gamma(table.rows.size(), classes);
        std::vector<std::string> ids;
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            ids.push_back(table.rows[r][0]);
            for (std::size_t c = 0; c < classes; ++c) {
                gamma(r, c) = tsv::parse_real(table.rows[r][2 + c], table.where(r));
            }
        }
        const auto fast = vote_rank(gamma, ids);
        const auto slow = pairwise_rank_oracle(gamma, ids);
        const bool same = fast.order == slow.order && fast.wins == slow.wins;
        std::printf("oracle: vote ranking of %zu instances %s the exhaustive oracle\n", ids.size(),
                    same ? "matches" : "DIFFERS FROM");
        return same ? 0 : 1;
    }
    const double exact = value_at_risk(mu, var, level);
    const double sampled = mc_var_oracle(mu, var, level, samples, seed);
    std::printf("oracle: value_at_risk %.6f, Monte-Carlo %.6f, difference %.2e\n", exact, sampled,
                std::abs(exact - sampled));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Misprediction risk analysis: rule induction, risk ranking and risk-guided adaptation"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
    std::map<std::string, std::optional<std::string>> overrides;
    for (const auto& key : RunConfig::keys()) {
        overrides[key];
        app.add_option("--" + key, overrides[key], "override config key '" + key + "'");
    }

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"validate", "check the workload and write validation.tsv"},
        {"features", "score embedding dimensions and select fused features"},
        {"metrics", "compute CCD and KNN risk metrics"},
        {"rules", "induce risk rules on the train split"},
        {"train-risk", "fit the risk model on the valid split"},
        {"rank", "score and rank test instances by risk"},
        {"adapt", "pre-train a head and adapt it with risk pseudo-labels"},
        {"evaluate", "write evaluation.tsv"},
        {"synth", "generate a synthetic workload"},
        {"pipeline", "run synth (unless --workload is set) then validate through evaluate"}};
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, help] : commands) subs[name] = app.add_subcommand(name, help);

    auto* oracle = app.add_subcommand("oracle", "compare value_at_risk or vote ranking with brute-force oracles");
    double mu = 0.5, var = 0.01, level = 0.95;
    std::size_t samples = 1000000;
    std::string scores_path;
    oracle->add_option("--mu", mu, "mean")->capture_default_str();
    oracle->add_option("--var", var, "variance")->capture_default_str();
    oracle->add_option("--level", level, "VaR level")->capture_default_str();
    oracle->add_option("--samples", samples, "Monte-Carlo samples")->capture_default_str();
    oracle->add_option("--scores", scores_path, "risk score TSV to check the vote ranking on");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    RunConfig config;
    try {
        if (!config_path.empty()) config.load(config_path);
        for (const auto& [key, value] : overrides) {
            if (value) config.set(key, *value);
        }
        config.check();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (oracle->parsed()) {
            if (!(var > 0.0) || !(level > 0.0 && level < 1.0)) {
                std::cerr << "error: --var must be > 0 and --level in (0, 1)\n";
                return 2;
            }
            return run_oracle(mu, var, level, samples, scores_path, config.seed);
        }
        if (subs["pipeline"]->parsed()) {
            for (const auto& line : run_pipeline(config)) std::cout << line << "\n";
            return 0;
        }
        for (const auto& [name, sub] : subs) {
            if (sub->parsed()) {
                std::cout << run_stage(name, config) << "\n";
                return 0;
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
