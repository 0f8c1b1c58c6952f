#pragma once

#include "riskrank/workload.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace riskrank {

struct SynthConfig {
    int num_classes = 7;
    std::size_t dim = 64;  ///< per pseudo-backbone
    std::size_t backbones = 4;
    std::size_t n_train = 2000;
    std::size_t n_valid = 300;
    std::size_t n_test = 500;
    double class_separation = 2.0;
    double shift_magnitude = 1.0;
    double label_noise = 0.05;
    /// Logit scale of the nearest-centroid labeler; values above 1 make it
    /// overconfident.
    double labeler_sharpness = 3.0;
    /// Std of the labeler's per-class logit offsets.
    double labeler_bias = 0.5;
    std::uint64_t seed = 42;
};

void validate(const SynthConfig& config);

/// Gaussian-mixture workload. Every backbone places class c at
/// separation * (e_{k_c} - mean of the e_{k}) on seeded distinct axes k_c and
/// adds unit spherical noise; test instances are displaced by
/// shift_magnitude along a seeded unit direction. Predictions come from a
/// nearest-centroid labeler on backbone 0 with seeded class offsets.
Workload generate_workload(const SynthConfig& config);

/// `generate_workload` written to `dir`; returns the manifest path.
std::string write_synthetic(const SynthConfig& config, const std::string& dir);

/// Monte-Carlo gamma: rejection-sampled Normal(mu, var) restricted to [0, 1]
/// (inverse-CDF sampling when acceptance is below 1e-4), empirical
/// (1 - level)-quantile q, gamma = 1 - q.
double mc_var_oracle(double mu, double var, double level, std::size_t samples, std::uint64_t seed = 1);

struct RankOracle {
    std::vector<long long> wins;
    std::vector<std::size_t> order;
};

/// Exhaustive double loop over instance pairs and classes with the voting
/// tie rules (wins, then row sum, then id).
RankOracle pairwise_rank_oracle(const Matrix& gamma, const std::vector<std::string>& ids);

}  // namespace riskrank
