#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "riskrank/synthetic.hpp"
#include "riskrank/workload.hpp"
#include "support.hpp"

#include <cmath>

using namespace riskrank;

namespace {

double mispredicted_share(const Workload& w) {
    std::size_t bad = 0, n = 0;
    for (const auto& rec : w.instances) {
        if (!rec.labeled()) continue;
        bad += rec.mispredicted();
        ++n;
    }
    return static_cast<double>(bad) / static_cast<double>(n);
}

SynthConfig small() {
    SynthConfig c;
    c.dim = 16;
    c.backbones = 2;
    c.n_train = 400;
    c.n_valid = 100;
    c.n_test = 200;
    return c;
}

}  // namespace

TEST_CASE("default workload is valid and reproducible") {
    const SynthConfig cfg;
    const auto w = generate_workload(cfg);
    const auto report = validate_workload(w);
    CHECK(report.ok());
    CHECK(w.size() == 2800);
    CHECK(w.embeddings.size() == 4);
    CHECK(w.embeddings[0].dim == 64);
    CHECK(w.num_classes == 7);
    const double rate = mispredicted_share(w);
    CHECK(rate > 0.02);
    CHECK(rate < 6.0 / 7.0 - 0.05);
    CHECK(report.mispredicted_valid > 0);

    const auto again = generate_workload(cfg);
    CHECK(again.embeddings[2].values == w.embeddings[2].values);
    for (std::size_t i = 0; i < w.size(); ++i) {
        CHECK(again.instances[i].predicted_label == w.instances[i].predicted_label);
        CHECK(again.instances[i].true_label == w.instances[i].true_label);
    }
    auto other = cfg;
    other.seed = 43;
    CHECK(generate_workload(other).embeddings[0].values != w.embeddings[0].values);
}

TEST_CASE("separation limits") {
    auto easy = small();
    easy.shift_magnitude = 0.0;
    easy.class_separation = 40.0;
    easy.label_noise = 0.0;
    easy.labeler_bias = 0.0;
    CHECK(mispredicted_share(generate_workload(easy)) < 0.01);

    auto chance = small();
    chance.class_separation = 0.0;
    const double rate = mispredicted_share(generate_workload(chance));
    CHECK(rate == doctest::Approx(6.0 / 7.0).epsilon(0.08));
}

TEST_CASE("written workload loads back") {
    const auto dir = testing::scratch_dir("synth_io");
    const auto cfg = small();
    const auto manifest = write_synthetic(cfg, (dir / "w").string());
    const auto loaded = load_workload(load_manifest(manifest));
    const auto direct = generate_workload(cfg);
    CHECK(validate_workload(loaded).ok());
    REQUIRE(loaded.size() == direct.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded.instances[i].id == direct.instances[i].id);
        CHECK(loaded.instances[i].split == direct.instances[i].split);
        CHECK(loaded.instances[i].predicted_label == direct.instances[i].predicted_label);
    }
    for (std::size_t q = 0; q < direct.embeddings[1].values.data.size(); ++q) {
        CHECK(loaded.embeddings[1].values.data[q] ==
              doctest::Approx(direct.embeddings[1].values.data[q]).epsilon(1e-8));
    }
}

TEST_CASE("config validation") {
    auto bad = small();
    bad.num_classes = 1;
    CHECK_THROWS_AS(validate(bad), Error);
    bad = small();
    bad.dim = 3;  // fewer axes than classes
    CHECK_THROWS_AS(validate(bad), Error);
    bad = small();
    bad.label_noise = 1.5;
    CHECK_THROWS_AS(validate(bad), Error);
    bad = small();
    bad.n_train = 0;
    CHECK_THROWS_AS(validate(bad), Error);
}

TEST_CASE("Monte-Carlo VaR oracle") {
    CHECK(mc_var_oracle(0.5, 1e-10, 0.95, 100000) == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(mc_var_oracle(0.4, 0.01, 0.5, 200000) == doctest::Approx(0.6).epsilon(2e-3));
    // far outside [0, 1]: the inverse-CDF path still stays inside the interval
    const double g = mc_var_oracle(-1.0, 0.01, 0.95, 20000);
    CHECK(g >= 0.0);
    CHECK(g <= 1.0);
    CHECK(mc_var_oracle(0.3, 0.02, 0.9, 50000, 3) == mc_var_oracle(0.3, 0.02, 0.9, 50000, 3));
    CHECK_THROWS_AS(mc_var_oracle(0.3, 0.0, 0.9, 100), Error);
}

TEST_CASE("rank oracle") {
    Matrix worked(2, 4);
    const double di[] = {0.2, 0.6, 0.1, 0.1}, dj[] = {0.3, 0.4, 0.2, 0.1};
    for (std::size_t c = 0; c < 4; ++c) {
        worked(0, c) = di[c];
        worked(1, c) = dj[c];
    }
    auto r = pairwise_rank_oracle(worked, {"d_i", "d_j"});
    CHECK(r.wins == std::vector<long long>{1, 2});
    CHECK(r.order == std::vector<std::size_t>{1, 0});

    Matrix same(3, 7, 0.3);
    r = pairwise_rank_oracle(same, {"b", "c", "a"});
    CHECK(r.wins == std::vector<long long>{0, 0, 0});
    CHECK(r.order == std::vector<std::size_t>{2, 0, 1});
}
