#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "riskrank/normal.hpp"
#include "riskrank/random.hpp"
#include "riskrank/risk_model.hpp"
#include "riskrank/synthetic.hpp"
#include "model_fixtures.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace riskrank;

using testing::make_params;
using testing::random_inputs;

TEST_CASE("standard normal helpers") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_cdf(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
    CHECK(normal_sf(1.0) == doctest::Approx(1.0 - 0.8413447460685429).epsilon(1e-13));
    CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
    CHECK(inverse_normal_cdf(0.05) == doctest::Approx(-1.6448536269514722).epsilon(1e-14));
    CHECK(std::isinf(inverse_normal_cdf(0.0)));
    CHECK(std::isinf(inverse_normal_cdf(1.0)));
    CHECK_THROWS_AS(inverse_normal_cdf(1.5), Error);
    for (double x = -8.0; x <= 4.0; x += 0.25) {  // cdf near 1 loses digits beyond that
        CHECK(std::abs(inverse_normal_cdf(normal_cdf(x)) - x) < 1e-8 * std::max(1.0, std::abs(x)));
    }
}

TEST_CASE("attention over active positions") {
    auto p = make_params(3, 2);
    std::vector<std::uint8_t> one = {0, 0, 0, 1};
    auto w = attention_weights(one, p);
    CHECK(w == std::vector<double>{0, 0, 0, 1});

    std::vector<std::uint8_t> all = {1, 1, 1, 1};
    w = attention_weights(all, p);
    for (double v : w) CHECK(v == 0.25);

    Lcg64 rng(4);
    for (double& v : p.attention.data) v = rng.normal();
    for (double& v : p.attention_bias) v = rng.normal();
    std::vector<std::uint8_t> some = {1, 0, 1, 1};
    w = attention_weights(some, p);
    CHECK(w[1] == 0.0);
    CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : w) CHECK(v >= 0.0);

    auto shifted = p;
    for (double& v : shifted.attention_bias) v += 3.7;
    const auto ws = attention_weights(some, shifted);
    for (std::size_t j = 0; j < w.size(); ++j) CHECK(ws[j] == doctest::Approx(w[j]).epsilon(1e-12));

    std::vector<std::uint8_t> none = {0, 0, 0, 0};
    CHECK_THROWS_AS(attention_weights(none, p), Error);
}

TEST_CASE("dropout keeps at least one active position") {
    Lcg64 rng(8);
    const std::vector<std::uint8_t> active = {1, 0, 1, 1, 0, 1};
    int changed = 0;
    for (int t = 0; t < 2000; ++t) {
        const auto kept = dropout_mask(active, 0.5, rng);
        int survivors = 0;
        for (std::size_t j = 0; j < kept.size(); ++j) {
            CHECK(kept[j] <= active[j]);
            survivors += kept[j];
        }
        CHECK(survivors >= 1);
        changed += kept != active;
    }
    CHECK(changed > 1500);
    Lcg64 a(3), b(3);
    CHECK(dropout_mask(active, 0.5, a) == dropout_mask(active, 0.5, b));
}

TEST_CASE("aggregation") {
    const std::vector<std::uint8_t> one = {1};
    auto d = aggregate_distribution(one, std::vector<double>{1.0}, std::vector<double>{0.9}, std::vector<double>{0.01});
    CHECK(d.mu == 0.9);
    CHECK(d.var == 0.01);
    const std::vector<std::uint8_t> two = {1, 1};
    d = aggregate_distribution(two, std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0},
                               std::vector<double>{0.0, 0.0});
    CHECK(d.mu == 0.5);
    CHECK(d.var == kPairVarianceFloor);

    Lcg64 rng(12);
    for (int t = 0; t < 20; ++t) {
        std::vector<std::uint8_t> x(10);
        std::vector<double> w(10), m(10), v(10);
        for (int j = 0; j < 10; ++j) {
            x[j] = rng.uniform() < 0.6;
            w[j] = rng.uniform();
            m[j] = rng.uniform();
            v[j] = 0.01 * rng.uniform();
        }
        double mu = 0, var = 0;
        for (int j = 0; j < 10; ++j) {
            mu += x[j] * w[j] * m[j];
            var += x[j] * w[j] * w[j] * v[j];
        }
        d = aggregate_distribution(x, w, m, v);
        CHECK(d.mu == doctest::Approx(mu).epsilon(1e-12));
        CHECK(d.var == doctest::Approx(std::max(var, kPairVarianceFloor)).epsilon(1e-12));
    }
}

TEST_CASE("class-bias neutralization") {
    auto p = make_params(0, 4);
    p.class_weights = {1, 0, 0, 0};
    auto out = neutralize_class_bias(std::vector<double>{2, 1, 1, 1}, std::vector<double>{1, 1, 1, 1}, p);
    for (double v : out.mu) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(out.var[0] == doctest::Approx(0.9));
    CHECK(out.var[1] == 1.0);

    p.class_weights = {0.3, 0.3, 0.3, 0.3};
    p.alpha = 0.0;
    const std::vector<double> raw = {0.9, 0.2, 0.4, 0.1}, var = {0.01, 0.02, 1e-9, 0.5};
    out = neutralize_class_bias(raw, var, p);
    double z = 0.0;
    for (double r : raw) z += std::exp(r);
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(out.mu[c] == doctest::Approx(std::exp(raw[c]) / z).epsilon(1e-12));
        CHECK(out.var[c] == std::max(var[c], kPairVarianceFloor));
    }
    CHECK(std::accumulate(out.mu.begin(), out.mu.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Platt calibration") {
    CHECK(platt_apply(3.0, {0.0, 0.0}) == 0.5);
    CHECK(platt_apply(0.0, {-1.0, 0.0}) == 0.5);
    CHECK(platt_apply(800.0, {-1.0, 0.0}) == 1.0);
    CHECK(platt_apply(-700.0, {-1.0, 0.0}) > 0.0);
    CHECK(std::isfinite(platt_apply(700.0, {1.0, 0.0})));
    // decreasing in a * f, so increasing in f when a < 0
    CHECK(platt_apply(0.2, {-3.0, 1.0}) < platt_apply(0.3, {-3.0, 1.0}));

    std::vector<double> scores;
    std::vector<std::uint8_t> positive;
    for (int i = 0; i < 50; ++i) {
        scores.push_back(0.6 + 0.008 * i);
        positive.push_back(1);
        scores.push_back(0.4 - 0.008 * i);
        positive.push_back(0);
    }
    const auto fit = platt_fit(scores, positive);
    auto nll = [&](PlattParams ab) {
        double s = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const double p = platt_apply(scores[i], ab);
            s -= positive[i] ? std::log(p) : std::log(1.0 - p);
        }
        return s;
    };
    CHECK(nll(fit) < nll({}));
    CHECK(fit.a < 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (positive[i]) CHECK(platt_apply(scores[i], fit) >= 0.99);
    }

    const std::vector<std::uint8_t> none(scores.size(), 0);
    const auto fallback = platt_fit(scores, none);
    CHECK(fallback.a == -1.0);
    CHECK(fallback.b == 0.0);
}

TEST_CASE("Platt fit reaches a stationary point on overlapping data") {
    Lcg64 rng(6);
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < 300; ++i) {
        const bool pos = rng.uniform() < 0.3;
        s.push_back(std::clamp(0.2 + (pos ? 0.3 : 0.0) + 0.2 * rng.normal(), 0.0, 1.0));
        y.push_back(pos);
    }
    const auto ab = platt_fit(s, y);
    double ga = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double p = platt_apply(s[i], ab);
        ga += s[i] * (y[i] - p);
        gb += y[i] - p;
    }
    CHECK(std::abs(ga) < 1e-6);
    CHECK(std::abs(gb) < 1e-6);
}

TEST_CASE("value at risk") {
    CHECK(value_at_risk(0.5, 1e-12, 0.95) == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(value_at_risk(0.5, 0.04, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(value_at_risk(0.9, 0.0025, 0.95) - mc_var_oracle(0.9, 0.0025, 0.95, 1000000)) <= 2e-3);
    CHECK(value_at_risk(-5.0, 1e-8, 0.95) == 1.0);
    CHECK(value_at_risk(6.0, 1e-8, 0.95) == 0.0);
    CHECK_THROWS_AS(value_at_risk(0.5, 0.0, 0.95), Error);
    CHECK_THROWS_AS(value_at_risk(0.5, 0.1, 1.0), Error);

    for (double sd : {0.01, 0.1, 0.3, 1.0}) {
        for (double level : {0.5, 0.9, 0.99}) {
            double prev = 2.0;
            for (double mu = -0.5; mu <= 1.5; mu += 0.05) {
                const double g = value_at_risk(mu, sd * sd, level);
                CHECK(g >= 0.0);
                CHECK(g <= 1.0);
                CHECK(g <= prev + 1e-12);
                prev = g;
            }
        }
    }
}

TEST_CASE("scoring is deterministic and respects identical inputs") {
    Lcg64 rng(14);
    auto in = random_inputs(30, 4, 5, rng);
    // make instance 1 a copy of instance 0
    for (int c = 0; c < 4; ++c) {
        in.classifier_scores(1, static_cast<std::size_t>(c)) = in.classifier_scores(0, static_cast<std::size_t>(c));
        for (std::size_t r = 0; r < 5; ++r) in.activations.bits[(4 + c) * 5 + r] = in.activations.bits[c * 5 + r];
    }
    in.predicted[1] = in.predicted[0];
    auto p = make_params(5, 4);
    for (double& v : p.attention.data) v = rng.normal();
    p.rule_means = {0.9, 0.1, 0.5, 0.7, 0.2};
    const auto a = score_workload(in, p);
    const auto b = score_workload(in, p);
    CHECK(a.gamma == b.gamma);
    CHECK(a.size() == 30);
    CHECK(a.gamma.data.size() == 120);
    for (int c = 0; c < 4; ++c) CHECK(a.gamma(0, static_cast<std::size_t>(c)) == a.gamma(1, static_cast<std::size_t>(c)));
    for (double g : a.gamma.data) {
        CHECK(g >= 0.0);
        CHECK(g <= 1.0);
    }
    Lcg64 r1(2), r2(2);
    CHECK(score_workload(in, p, ScoreMode::Train, &r1).gamma == score_workload(in, p, ScoreMode::Train, &r2).gamma);
}

TEST_CASE("confident match evidence gives low risk") {
    Lcg64 rng(15);
    auto in = random_inputs(40, 3, 2, rng);
    auto p = make_params(2, 3);
    p.rule_means = {0.99, 0.01};  // rule 0 says match, rule 1 says unmatch
    // instance 0: rule 0 fires on its predicted class only, rule 1 on the others
    in.predicted[0] = 2;
    for (int c = 0; c < 3; ++c) {
        in.activations.bits[c * 2 + 0] = c == 2;
        in.activations.bits[c * 2 + 1] = c != 2;
        in.classifier_scores(0, static_cast<std::size_t>(c)) = c == 2 ? 0.9 : 0.05;
    }
    const auto s = score_workload(in, p);
    std::vector<double> predicted;
    for (std::size_t k = 0; k < s.size(); ++k) predicted.push_back(s.predicted_score(k));
    auto sorted = predicted;
    std::sort(sorted.begin(), sorted.end());
    CHECK(predicted[0] < sorted[sorted.size() / 2]);
    CHECK(predicted[0] == sorted.front());
}

TEST_CASE("parameters round-trip") {
    Lcg64 rng(19);
    auto p = make_params(4, 3);
    for (double& v : p.attention.data) v = rng.normal();
    for (double& v : p.attention_bias) v = rng.normal();
    p.rule_means = {0.1, 0.2, 0.3, 0.4};
    p.variances = {1e-4, 2e-4, 3e-3, 0.5, 1e-4};
    p.class_weights = {0.2, 0.3, 0.5};
    p.platt = {{-4.2, 1.1}, {-3.0, 0.5}, {-1.0, 0.0}};
    p.var_level = 0.9;
    const auto dir = testing::scratch_dir("params_io");
    const auto path = (dir / "p.tsv").string();
    write_params(p, path);
    const auto q = read_params(path);
    CHECK(q.num_rules == 4);
    CHECK(q.var_level == 0.9);
    CHECK(q.class_weights == p.class_weights);
    CHECK(q.platt[0].a == -4.2);
    for (std::size_t i = 0; i < p.attention.data.size(); ++i) {
        CHECK(q.attention.data[i] == doctest::Approx(p.attention.data[i]).epsilon(1e-8));
    }
    write_params(q, (dir / "q.tsv").string());
    CHECK(testing::read_text(dir / "q.tsv") == testing::read_text(path));

    auto empty = make_params(0, 2);
    write_params(empty, (dir / "e.tsv").string());
    CHECK(read_params((dir / "e.tsv").string()).num_rules == 0);
}
