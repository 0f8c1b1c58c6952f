#include "riskrank/synthetic.hpp"

#include "riskrank/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace riskrank {

void validate(const SynthConfig& c) {
    if (c.num_classes < 2) throw Error("synth: num_classes must be >= 2");
    if (c.dim < static_cast<std::size_t>(c.num_classes)) throw Error("synth: dim must be >= num_classes");
    if (c.backbones == 0) throw Error("synth: backbones must be positive");
    if (c.n_train == 0 || c.n_valid == 0 || c.n_test == 0) throw Error("synth: split sizes must be positive");
    if (!(c.class_separation >= 0.0)) throw Error("synth: class_separation must be >= 0");
    if (!(c.shift_magnitude >= 0.0)) throw Error("synth: shift_magnitude must be >= 0");
    if (!(c.label_noise >= 0.0 && c.label_noise < 1.0)) throw Error("synth: label_noise must lie in [0, 1)");
    if (!(c.labeler_sharpness > 0.0)) throw Error("synth: labeler_sharpness must be positive");
    if (!(c.labeler_bias >= 0.0)) throw Error("synth: labeler_bias must be >= 0");
}

Workload generate_workload(const SynthConfig& cfg) {
    validate(cfg);
    Lcg64 rng(cfg.seed);
    const auto C = static_cast<std::size_t>(cfg.num_classes);
    const std::size_t d = cfg.dim;

    // Class means and shift direction per backbone.
    std::vector<Matrix> means;
    std::vector<std::vector<double>> shift;
    for (std::size_t b = 0; b < cfg.backbones; ++b) {
        std::vector<std::size_t> axes(d);
        for (std::size_t k = 0; k < d; ++k) axes[k] = k;
        for (std::size_t k = 0; k < C; ++k) std::swap(axes[k], axes[k + rng.below(d - k)]);
        Matrix m(C, d);
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t k = 0; k < C; ++k) {
                m(c, axes[k]) = cfg.class_separation * ((k == c ? 1.0 : 0.0) - 1.0 / static_cast<double>(C));
            }
        }
        means.push_back(std::move(m));
        std::vector<double> u(d);
        double norm = 0.0;
        for (double& v : u) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : u) v /= norm;
        shift.push_back(std::move(u));
    }
    std::vector<double> offsets(C);
    for (double& o : offsets) o = cfg.labeler_bias * rng.normal();

    Workload w;
    w.num_classes = cfg.num_classes;
    for (std::size_t b = 0; b < cfg.backbones; ++b) {
        EmbeddingSet set;
        set.backbone_name = "backbone" + std::to_string(b);
        set.dim = d;
        w.embeddings.push_back(std::move(set));
    }
    const std::size_t total = cfg.n_train + cfg.n_valid + cfg.n_test;
    for (auto& set : w.embeddings) set.values = Matrix(total, d);

    std::size_t row = 0;
    auto emit = [&](Split split, std::size_t count) {
        const double displacement = split == Split::Test ? cfg.shift_magnitude : 0.0;
        for (std::size_t n = 0; n < count; ++n, ++row) {
            InstanceRecord rec;
            char id[32];
            std::snprintf(id, sizeof id, "%s%05zu", split == Split::Train ? "tr" : split == Split::Valid ? "va" : "te",
                          n);
            rec.id = id;
            rec.split = split;
            const auto latent = static_cast<std::size_t>(rng.below(C));
            for (std::size_t b = 0; b < cfg.backbones; ++b) {
                double* x = w.embeddings[b].values.row(row);
                for (std::size_t k = 0; k < d; ++k) {
                    x[k] = means[b](latent, k) + rng.normal() + displacement * shift[b][k];
                }
            }
            int label = static_cast<int>(latent);
            if (rng.uniform() < cfg.label_noise) {
                label = static_cast<int>((latent + 1 + rng.below(C - 1)) % C);
            }
            rec.true_label = label;

            const double* x = w.embeddings[0].values.row(row);
            rec.logits.resize(C);
            for (std::size_t c = 0; c < C; ++c) {
                double dist = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    const double diff = x[k] - means[0](c, k);
                    dist += diff * diff;
                }
                rec.logits[c] = -0.5 * cfg.labeler_sharpness * dist + offsets[c];
            }
            rec.predicted_label = static_cast<int>(std::max_element(rec.logits.begin(), rec.logits.end()) -
                                                   rec.logits.begin());
            w.instances.push_back(std::move(rec));
        }
    };
    emit(Split::Train, cfg.n_train);
    emit(Split::Valid, cfg.n_valid);
    emit(Split::Test, cfg.n_test);
    for (auto& set : w.embeddings) {
        for (const auto& rec : w.instances) set.ids.push_back(rec.id);
    }
    return w;
}

std::string write_synthetic(const SynthConfig& config, const std::string& dir) {
    return write_workload(generate_workload(config), dir);
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double std_normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Inverse-CDF draw from Normal(mu, sd) restricted to [0, 1] by bisection.
double truncated_draw(double mu, double sd, double u) {
    const double a = -mu / sd, b = (1.0 - mu) / sd;
    const bool upper = a > 0.0;  // both bounds in the right tail: use survival areas
    const double fa = upper ? std_normal_sf(a) : std_normal_cdf(a);
    const double fb = upper ? std_normal_sf(b) : std_normal_cdf(b);
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 80; ++it) {
        const double x = 0.5 * (lo + hi);
        const double t = (x - mu) / sd;
        const double share = upper ? (fa - std_normal_sf(t)) / (fa - fb) : (std_normal_cdf(t) - fa) / (fb - fa);
        if (share < u) lo = x;
        else hi = x;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double mc_var_oracle(double mu, double var, double level, std::size_t samples, std::uint64_t seed) {
    if (samples == 0) throw Error("mc_var_oracle: need samples");
    if (!(var > 0.0)) throw Error("mc_var_oracle: variance must be positive");
    const double sd = std::sqrt(var);
    Lcg64 rng(seed);
    auto gaussian = [&]() {
        // Box-Muller, one variate per pair of uniforms
        const double u1 = 1.0 - rng.uniform();
        const double u2 = rng.uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    };

    // Pilot run to estimate the acceptance rate.
    constexpr std::size_t kPilot = 100000;
    std::size_t accepted = 0;
    for (std::size_t k = 0; k < kPilot; ++k) {
        const double x = mu + sd * gaussian();
        accepted += x >= 0.0 && x <= 1.0;
    }
    std::vector<double> draws;
    draws.reserve(samples);
    if (static_cast<double>(accepted) / static_cast<double>(kPilot) >= 1e-4) {
        while (draws.size() < samples) {
            const double x = mu + sd * gaussian();
            if (x >= 0.0 && x <= 1.0) draws.push_back(x);
        }
    } else {
        for (std::size_t k = 0; k < samples; ++k) draws.push_back(truncated_draw(mu, sd, rng.uniform()));
    }
    const auto index = static_cast<std::size_t>((1.0 - level) * static_cast<double>(samples - 1));
    std::nth_element(draws.begin(), draws.begin() + static_cast<std::ptrdiff_t>(index), draws.end());
    return 1.0 - draws[index];
}

RankOracle pairwise_rank_oracle(const Matrix& gamma, const std::vector<std::string>& ids) {
    const std::size_t n = gamma.rows;
    RankOracle out;
    out.wins.assign(n, 0);
    std::vector<double> total(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < gamma.cols; ++c) {
            total[i] += gamma(i, c);
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i && gamma(i, c) > gamma(j, c)) ++out.wins[i];
            }
        }
    }
    auto before = [&](std::size_t a, std::size_t b) {
        if (out.wins[a] != out.wins[b]) return out.wins[a] > out.wins[b];
        if (total[a] != total[b]) return total[a] > total[b];
        return ids[a] < ids[b];
    };
    // insertion sort keeps the oracle free of library ordering
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t pos = out.order.size();
        while (pos > 0 && before(i, out.order[pos - 1])) --pos;
        out.order.insert(out.order.begin() + static_cast<std::ptrdiff_t>(pos), i);
    }
    return out;
}

}  // namespace riskrank
