#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "riskrank/adaptive.hpp"
#include "riskrank/pipeline.hpp"
#include "riskrank/random.hpp"
#include "model_fixtures.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace riskrank;

namespace {

// Two well separated blobs in 2-D, every split labeled.
struct Blobs {
    Workload workload;
    FusedFeatureMatrix fused;
};

Blobs separable_blobs(std::uint64_t seed) {
    Blobs b;
    b.workload.num_classes = 2;
    Lcg64 rng(seed);
    const std::size_t counts[] = {80, 40, 40};
    const Split splits[] = {Split::Train, Split::Valid, Split::Test};
    std::size_t total = 0;
    for (auto c : counts) total += c;
    b.fused.values = Matrix(total, 2);
    std::size_t row = 0;
    for (int s = 0; s < 3; ++s) {
        for (std::size_t k = 0; k < counts[s]; ++k, ++row) {
            InstanceRecord rec;
            rec.id = "b" + std::to_string(row);
            rec.split = splits[s];
            rec.true_label = static_cast<int>(k % 2);
            rec.predicted_label = rec.true_label;
            b.workload.instances.push_back(rec);
            b.fused.ids.push_back(rec.id);
            const double centre = rec.true_label == 0 ? -3.0 : 3.0;
            b.fused.values(row, 0) = centre + 0.5 * rng.normal();
            b.fused.values(row, 1) = 0.5 * rng.normal();
        }
    }
    return b;
}

RunConfig small_run() {
    RunConfig cfg;
    cfg.synth.num_classes = 4;
    cfg.synth.dim = 12;
    cfg.synth.backbones = 2;
    cfg.synth.n_train = 300;
    cfg.synth.n_valid = 120;
    cfg.synth.n_test = 100;
    cfg.selection.top_k = 6;
    cfg.adapt.pretrain_epochs = 40;
    cfg.adapt.adapt_epochs = 3;
    cfg.adapt.learning_rate = 5e-3;
    cfg.train.max_iterations = 10;
    return cfg;
}

double accuracy_on(const HeadClassifier& head, const Blobs& b, Split split) {
    std::size_t hit = 0, n = 0;
    for (std::size_t r : b.workload.indices(split)) {
        const double* x = b.fused.values.row(r);
        hit += head.predict(std::span<const double>(x, 2)) == b.workload.instances[r].true_label;
        ++n;
    }
    return static_cast<double>(hit) / static_cast<double>(n);
}

}  // namespace

TEST_CASE("temperature softmax") {
    const std::vector<double> z = {2.0, 0.0};
    auto p = temperature_softmax(z, 2.0);
    CHECK(p[0] == doctest::Approx(0.731059).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(0.268941).epsilon(1e-6));
    CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-14));

    const std::vector<double> three = {1.0, -2.0, 0.5};
    p = temperature_softmax(three, 1.0);
    const double zsum = std::exp(1.0) + std::exp(-2.0) + std::exp(0.5);
    CHECK(p[0] == doctest::Approx(std::exp(1.0) / zsum).epsilon(1e-14));

    p = temperature_softmax(three, 1e6);
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-5));

    const std::vector<double> huge = {1000.0, 999.0, -1000.0};
    p = temperature_softmax(huge, 0.05);
    for (double v : p) CHECK(std::isfinite(v));

    Lcg64 rng(70);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> logits(2 + rng.below(8));
        for (double& v : logits) v = 10.0 * rng.normal();
        const double lambda = 0.05 + 10.0 * rng.uniform();
        const auto q = temperature_softmax(logits, lambda);
        CHECK(std::accumulate(q.begin(), q.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(std::max_element(q.begin(), q.end()) - q.begin() ==
              std::max_element(logits.begin(), logits.end()) - logits.begin());
        auto shifted = logits;
        const double s = 50.0 * rng.normal();
        for (double& v : shifted) v += s;
        const auto r = temperature_softmax(shifted, lambda);
        for (std::size_t c = 0; c < q.size(); ++c) CHECK(r[c] == doctest::Approx(q[c]).epsilon(1e-9));
    }
}

TEST_CASE("adaptive loss") {
    Matrix onehot(3, 4);
    onehot(0, 1) = onehot(1, 0) = onehot(2, 3) = 1.0;
    const std::vector<int> labels = {1, 0, 3};
    CHECK(adaptive_loss(onehot, labels) == doctest::Approx(0.0).epsilon(1e-12));
    const std::vector<int> miss = {0, 0, 3};
    CHECK(adaptive_loss(onehot, miss) == doctest::Approx(-std::log(1e-12) / 3.0).epsilon(1e-12));

    Matrix uniform(5, 7, 1.0 / 7.0);
    const std::vector<int> any = {0, 6, 3, 2, 1};
    CHECK(adaptive_loss(uniform, any) == doctest::Approx(std::log(7.0)).epsilon(1e-14));
    CHECK(adaptive_loss(uniform, any) == doctest::Approx(1.945910).epsilon(1e-6));

    Lcg64 rng(71);
    for (int t = 0; t < 20; ++t) {
        Matrix p(15, 5);
        std::vector<int> y;
        for (std::size_t i = 0; i < 15; ++i) {
            double s = 0.0;
            for (std::size_t c = 0; c < 5; ++c) s += p(i, c) = rng.uniform() + 1e-3;
            for (std::size_t c = 0; c < 5; ++c) p(i, c) /= s;
            y.push_back(static_cast<int>(rng.below(5)));
        }
        double direct = 0.0;
        for (std::size_t i = 0; i < 15; ++i) direct -= std::log(p(i, static_cast<std::size_t>(y[i])));
        CHECK(adaptive_loss(p, y) == doctest::Approx(direct / 15.0).epsilon(1e-10));
    }
}

TEST_CASE("adaptive loss gradient matches finite differences") {
    Lcg64 rng(72);
    const double h = 1e-5;
    for (int t = 0; t < 10; ++t) {
        const std::size_t dim = 2 + rng.below(5);
        const int classes = 2 + static_cast<int>(rng.below(5));
        auto head = init_head(dim, classes, 0.7, 100 + t);
        for (double& b : head.bias) b = rng.normal();
        Matrix x(12, dim);
        for (double& v : x.data) v = rng.normal();
        std::vector<std::size_t> rows = {0, 2, 3, 5, 7, 8, 11};
        std::vector<int> y;
        for (std::size_t i = 0; i < rows.size(); ++i) y.push_back(static_cast<int>(rng.below(classes)));
        double lambda = 0.5 + 2.0 * rng.uniform();

        HeadGradient g{Matrix(dim, static_cast<std::size_t>(classes)), std::vector<double>(classes, 0.0), 0.0};
        adaptive_loss_and_gradient(head, lambda, x, rows, y, &g);
        auto loss = [&] { return adaptive_loss_and_gradient(head, lambda, x, rows, y); };
        auto probe = [&](double& slot) {
            const double keep = slot;
            slot = keep + h;
            const double up = loss();
            slot = keep - h;
            const double down = loss();
            slot = keep;
            return (up - down) / (2.0 * h);
        };
        for (std::size_t q = 0; q < head.weights.data.size(); ++q) {
            CHECK(testing::relative_close(g.weights.data[q], probe(head.weights.data[q]), 1e-4));
        }
        for (std::size_t c = 0; c < head.bias.size(); ++c) {
            CHECK(testing::relative_close(g.bias[c], probe(head.bias[c]), 1e-4));
        }
        CHECK(testing::relative_close(g.lambda, probe(lambda), 1e-4));

        // matches the loss on explicitly tempered probabilities
        Matrix probs(rows.size(), static_cast<std::size_t>(classes));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto z = head.logits(std::span<const double>(x.row(rows[i]), dim));
            const auto p = temperature_softmax(z, lambda);
            std::copy(p.begin(), p.end(), probs.row(i));
        }
        CHECK(loss() == doctest::Approx(adaptive_loss(probs, y)).epsilon(1e-12));
    }
}

TEST_CASE("a small step with true labels does not increase the loss") {
    const auto b = separable_blobs(73);
    auto head = init_head(2, 2, 0.5, 9);
    const auto test = b.workload.indices(Split::Test);
    std::vector<int> y;
    for (auto r : test) y.push_back(b.workload.instances[r].true_label);
    double lambda = kInitialTemperature;
    double prev = adaptive_loss_and_gradient(head, lambda, b.fused.values, test, y);
    for (int step = 0; step < 20; ++step) {
        HeadGradient g{Matrix(2, 2), std::vector<double>(2, 0.0), 0.0};
        adaptive_loss_and_gradient(head, lambda, b.fused.values, test, y, &g);
        for (std::size_t q = 0; q < 4; ++q) head.weights.data[q] -= 1e-5 * g.weights.data[q];
        for (std::size_t c = 0; c < 2; ++c) head.bias[c] -= 1e-5 * g.bias[c];
        lambda = std::max(lambda - 1e-5 * g.lambda, kMinTemperature);
        const double now = adaptive_loss_and_gradient(head, lambda, b.fused.values, test, y);
        CHECK(now <= prev);
        prev = now;
    }
}

TEST_CASE("pseudo-labels") {
    RiskScoreTable s;
    s.ids = {"a", "b", "c"};
    s.predicted = {0, 0, 0};
    s.gamma = Matrix(3, 3, 0.4);
    s.gamma(0, 0) = 0.9;
    s.gamma(0, 1) = 0.1;
    s.gamma(0, 2) = 0.5;
    s.gamma(2, 2) = 0.0;
    CHECK(risk_pseudo_labels(s) == std::vector<int>{1, 0, 2});

    // risk that is low exactly at the true class recovers the labels
    Lcg64 rng(74);
    RiskScoreTable oracle;
    std::vector<int> truth;
    oracle.gamma = Matrix(50, 7);
    for (std::size_t k = 0; k < 50; ++k) {
        truth.push_back(static_cast<int>(rng.below(7)));
        oracle.ids.push_back(std::to_string(k));
        oracle.predicted.push_back(0);
        for (std::size_t c = 0; c < 7; ++c) {
            oracle.gamma(k, c) = static_cast<int>(c) == truth.back() ? 0.2 * rng.uniform() : 0.3 + 0.7 * rng.uniform();
        }
    }
    CHECK(risk_pseudo_labels(oracle) == truth);
}

TEST_CASE("pretraining") {
    const auto b = separable_blobs(75);
    AdaptConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.pretrain_epochs = 100;
    cfg.seed = 3;
    const auto r = pretrain_head(b.workload, b.fused, cfg);
    CHECK(r.head.trained);
    CHECK(r.best_valid_accuracy == 1.0);
    CHECK(accuracy_on(r.head, b, Split::Valid) == 1.0);
    const auto again = pretrain_head(b.workload, b.fused, cfg);
    CHECK(again.head.weights == r.head.weights);
    CHECK(again.head.bias == r.head.bias);

    cfg.pretrain_epochs = 0;
    const auto init = pretrain_head(b.workload, b.fused, cfg);
    const auto fresh = init_head(2, 2, cfg.init_scale, cfg.seed);
    CHECK(init.head.weights == fresh.weights);
    CHECK(init.best_epoch == 0);

    auto single = b;
    for (auto& rec : single.workload.instances) rec.true_label = 1;
    CHECK_THROWS_AS(pretrain_head(single.workload, single.fused, cfg), Error);
}

TEST_CASE("adaptation on a small synthetic workload") {
    auto cfg = small_run();
    const auto w = generate_workload(cfg.synth_config());
    const auto analysis = analyze(w, cfg);

    auto idle = cfg;
    idle.adapt.adapt_epochs = 0;
    const auto none = run_adaptation(w, analysis, idle);
    CHECK(none.adapted.head.weights == none.pretrained.head.weights);
    CHECK(none.adapted.log.empty());

    const auto a = run_adaptation(w, analysis, cfg);
    const auto b = run_adaptation(w, analysis, cfg);
    CHECK(a.adapted.head.weights == b.adapted.head.weights);
    CHECK(a.adapted.temperature.lambda == b.adapted.temperature.lambda);
    REQUIRE(a.adapted.log.size() == 3);
    for (const auto& e : a.adapted.log) {
        CHECK(e.lambda >= kMinTemperature);
        CHECK(e.agreement >= 0.0);
        CHECK(e.agreement <= 1.0);
        CHECK(e.test_accuracy.has_value());
    }

    auto no_test = w;
    for (auto& rec : no_test.instances) {
        if (rec.split == Split::Test) rec.split = Split::Valid;
    }
    const auto kept = adapt(a.pretrained.head, a.risk.trained.params, no_test, analysis.fused, analysis.metrics,
                            analysis.rules, cfg.adapt_config());
    CHECK(kept.head.weights == a.pretrained.head.weights);
    CHECK(kept.log.empty());
}

TEST_CASE("head and log files") {
    const auto dir = testing::scratch_dir("adaptive_io");
    auto head = init_head(3, 4, 1.0, 11);
    head.bias = {0.1, -0.2, 0.3, 0.0};
    head.trained = true;
    write_head(head, (dir / "h.tsv").string());
    const auto back = read_head((dir / "h.tsv").string());
    CHECK(back.trained);
    CHECK(back.bias == head.bias);
    for (std::size_t q = 0; q < head.weights.data.size(); ++q) {
        CHECK(back.weights.data[q] == doctest::Approx(head.weights.data[q]).epsilon(1e-8));
    }
    write_adapt_log({{1, 1.5, 0.25, 0.75, std::nullopt}, {2, 1.25, 0.125, 0.5, 0.625}}, (dir / "log.tsv").string());
    CHECK(testing::read_text(dir / "log.tsv") ==
          "epoch\tlambda\tloss\tpseudo_label_agreement\ttest_accuracy_if_labels_available\n"
          "1\t1.5\t0.25\t0.75\tNA\n2\t1.25\t0.125\t0.5\t0.625\n");
}
