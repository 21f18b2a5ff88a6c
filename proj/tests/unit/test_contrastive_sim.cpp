#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oscope/contrastive_sim.hpp"
#include "oscope/errors.hpp"
#include "oscope/parallel.hpp"

using namespace oscope;

namespace {

double sample_variance(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

std::vector<double> series(const std::vector<ToyCheckpoint>& cps) {
    std::vector<double> out;
    for (const auto& c : cps) out.push_back(c.first_position_rate);
    return out;
}

std::vector<double> steps(const std::vector<ToyCheckpoint>& cps) {
    std::vector<double> out;
    for (const auto& c : cps) out.push_back(static_cast<double>(c.step));
    return out;
}

}  // namespace

TEST_CASE("closed-form limits") {
    CHECK(analytic_limit(1) == doctest::Approx(0.731059).epsilon(1e-6));
    CHECK(analytic_limit(127) == doctest::Approx(0.020955).epsilon(1e-5));
    CHECK(analytic_limit(15) == doctest::Approx(std::numbers::e / (std::numbers::e + 15.0)).epsilon(1e-15));
    for (std::size_t b = 1; b < 300; ++b) CHECK(analytic_limit(b + 1) < analytic_limit(b));
}

TEST_CASE("config validation") {
    SimConfig c;
    c.d = 8;
    c.k = 8;
    CHECK_THROWS_AS(c.validate(), ValueError);
    c.k = 7;
    CHECK_NOTHROW(c.validate());
    c.b = 0;
    CHECK_THROWS_AS(c.validate(), ValueError);
    c.b = 1;
    c.trials = 0;
    CHECK_THROWS_AS(estimate_objective(c, EncoderKind::Ideal), ValueError);
}

TEST_CASE("k = 0 makes the truncated encoder identical to the ideal one") {
    SimConfig c{256, 0, 15, 300, 4};
    auto s = objective_samples(c);
    CHECK(s.ideal == s.truncated);
    c.k = 3;
    CHECK(objective_samples(c).truncated != s.ideal);
}

TEST_CASE("estimates are probabilities near the limit") {
    for (auto dist : {LatentDistribution::Gaussian, LatentDistribution::Rademacher}) {
        SimConfig c{4096, 8, 15, 400, 2, dist};
        for (auto enc : {EncoderKind::Ideal, EncoderKind::Truncated}) {
            auto e = estimate_objective(c, enc);
            CHECK(e.mean > 0.0);
            CHECK(e.mean < 1.0);
            CHECK(e.std_error > 0.0);
            CHECK(e.analytic_limit == analytic_limit(15));
            CHECK(std::abs(e.mean - e.analytic_limit) < 0.002);
        }
    }
}

TEST_CASE("negative-similarity spread shrinks with dimension") {
    auto lo = objective_samples(SimConfig{64, 0, 1, 2000, 6}).ideal;
    auto hi = objective_samples(SimConfig{4096, 0, 1, 2000, 6}).ideal;
    CHECK(sample_variance(hi) < sample_variance(lo));
}

TEST_CASE("samples do not depend on the thread count") {
    SimConfig c{512, 4, 7, 333, 9};
    set_thread_count(1);
    auto one = objective_samples(c);
    set_thread_count(4);
    auto four = objective_samples(c);
    set_thread_count(0);
    CHECK(one.ideal == four.ideal);
    CHECK(one.truncated == four.truncated);
}

TEST_CASE("sufficient-statistic sampling matches direct draws") {
    for (std::size_t k : {0, 1, 8}) {
        SimConfig fast{512, k, 7, 4000, 31};
        SimConfig slow = fast;
        slow.direct_sampling = true;
        slow.seed = 32;
        auto a = objective_samples(fast), b = objective_samples(slow);
        for (auto pick : {&ObjectiveSamples::ideal, &ObjectiveSamples::truncated}) {
            auto ea = summarize(a.*pick, 7), eb = summarize(b.*pick, 7);
            CAPTURE(k);
            CHECK(std::abs(ea.mean - eb.mean) < 3 * std::hypot(ea.std_error, eb.std_error));
            // Spread of the per-trial values, not just their mean.
            CHECK(std::abs(ea.std_error / eb.std_error - 1.0) < 0.1);
        }
        if (k == 0) CHECK(a.ideal == a.truncated);
    }
}

TEST_CASE("convergence sweep") {
    const std::size_t dims[] = {64, 256, 1024};
    auto a = convergence_sweep(15, 4, dims, 400, 3);
    auto b = convergence_sweep(15, 4, dims, 400, 3);
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a[i].d == dims[i]);
        CHECK(a[i].ideal.mean == b[i].ideal.mean);
        CHECK(a[i].truncated.std_error == b[i].truncated.std_error);
    }
    CHECK(std::abs(a[0].ideal.mean - analytic_limit(15)) > std::abs(a[2].ideal.mean - analytic_limit(15)));
    const std::size_t single[] = {128};
    CHECK(convergence_sweep(3, 1, single, 50, 1).size() == 1);
    const std::size_t unordered[] = {256, 64};
    CHECK_THROWS_AS(convergence_sweep(3, 1, unordered, 50, 1), ValueError);
    const std::size_t too_small[] = {4, 64};
    CHECK_THROWS_AS(convergence_sweep(3, 4, too_small, 50, 1), ValueError);
    CHECK(to_json(a[0]).at("d") == 64);
}

TEST_CASE("spearman") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    CHECK(spearman(x, std::vector<double>{2, 4, 6, 8, 10}) == doctest::Approx(1.0));
    CHECK(spearman(x, std::vector<double>{5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(spearman(x, std::vector<double>{1, 1, 1, 1, 1}) == 0.0);
    // Average ranks on ties: closed form for this small case.
    CHECK(spearman(x, std::vector<double>{1, 2, 2, 3, 4}) == doctest::Approx(0.9746794344808963));
    CHECK_THROWS_AS(spearman(x, std::vector<double>{1, 2}), ValueError);
}

TEST_CASE("toy trainer") {
    SUBCASE("no size-order correlation stays at chance") {
        ToyTrainerConfig c;
        c.size_order_correlation = 0.5;
        auto cps = toy_bias_trainer(c);
        REQUIRE(cps.size() == 11);
        CHECK(std::abs(cps.back().first_position_rate - 25.0) <= 5.0);
    }
    SUBCASE("strong correlation makes the first position dominant") {
        ToyTrainerConfig c;
        c.size_order_correlation = 0.9;
        auto cps = toy_bias_trainer(c);
        CHECK(cps.back().first_position_rate > 40.0);
        CHECK(spearman(steps(cps), series(cps)) > 0.8);
        CHECK(cps.back().pooling_weights[0] > cps.back().pooling_weights[1]);
        CHECK(cps.front().step == 0);
        CHECK(cps.back().step == c.steps);
        CHECK(toy_bias_trainer(c).back().pooling_weights == cps.back().pooling_weights);
    }
    SUBCASE("trend holds from 0.7 upward") {
        for (double g : {0.7, 0.8, 1.0}) {
            ToyTrainerConfig c;
            c.size_order_correlation = g;
            c.seed = 5;
            auto cps = toy_bias_trainer(c);
            CAPTURE(g);
            CHECK(spearman(steps(cps), series(cps)) > 0.8);
        }
    }
    SUBCASE("zero steps give a flat series") {
        ToyTrainerConfig c;
        c.steps = 0;
        auto cps = toy_bias_trainer(c);
        REQUIRE(cps.size() == 11);
        for (const auto& cp : cps) {
            CHECK(cp.step == 0);
            CHECK(cp.first_position_rate == cps.front().first_position_rate);
            CHECK(cp.pooling_weights == std::vector<double>(4, 1.0));
        }
    }
    SUBCASE("mapping from correlation to first-mention probability") {
        CHECK(large_first_probability(0.5, 4) == doctest::Approx(0.25));
        CHECK(large_first_probability(1.0, 4) == doctest::Approx(1.0));
        CHECK(large_first_probability(0.9, 4) == doctest::Approx(0.85));
    }
    SUBCASE("invalid settings") {
        ToyTrainerConfig c;
        c.size_order_correlation = 0.3;
        CHECK_THROWS_AS(toy_bias_trainer(c), ValueError);
        c = {};
        c.vocab_size = 3;
        CHECK_THROWS_AS(toy_bias_trainer(c), ValueError);
    }
}
