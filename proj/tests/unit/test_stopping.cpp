#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "../oracles/oracles.hpp"
#include "mfe/stopping.hpp"

using namespace mfe;

namespace {

double sup_distance(std::span<const double> a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

ValueFunction flat_values(std::size_t nmax, double vhat) {
    std::vector<double> h(2 * nmax, vhat);
    return ValueFunction(nmax, h, h, 0, 0.0);
}

}  // namespace

TEST_CASE("event probabilities") {
    ModelParams p;
    const EventProbs alone = event_probs(p, 2.0, 0, 1);
    CHECK(alone.p_dec == doctest::Approx(0.25));
    CHECK(alone.p_exit == 0.0);
    CHECK(alone.p_sur == 0.0);
    CHECK(alone.p_res == doctest::Approx(0.25));
    CHECK(alone.p_arr == doctest::Approx(0.5));

    const EventProbs crowd = event_probs(p, 2.0, 1, 3);
    CHECK(crowd.p_exit == doctest::Approx(2.0 * 0.05 / 6.0));
    CHECK(crowd.p_sur == doctest::Approx(2.0 * 0.95 / 6.0));
    CHECK(crowd.p_dec == doctest::Approx(1.0 / 6.0));

    CHECK_THROWS_AS(event_probs(p, 2.0, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(event_probs(p, 0.0, 0, 1), std::invalid_argument);
}

TEST_CASE("event probabilities sum to one") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> rate(0.01, 100.0);
    std::uniform_real_distribution<double> survive(0.01, 0.99);
    for (int trial = 0; trial < 2000; ++trial) {
        ModelParams p;
        p.lambda = rate(rng);
        p.gamma = survive(rng);
        p.mu01 = rate(rng);
        p.mu10 = rate(rng);
        const auto n = static_cast<std::size_t>(1 + trial % 300);
        const EventProbs e = event_probs(p, rate(rng), trial % 2, n);
        CHECK(std::abs(e.total() - 1.0) <= 1e-15);
        for (double x : {e.p_dec, e.p_exit, e.p_sur, e.p_res, e.p_arr}) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
        }
    }
}

TEST_CASE("zero reward: switching right away is optimal") {
    ModelParams p;
    p.reward = RewardFn::table({0.0, 0.0});
    const double c = 1.0;
    const ValueFunction vf = value_iterate(p, {3.0, 5.0}, 4.0, c, Truncation{50}, 1e-12);
    for (std::size_t n = 1; n <= 50; ++n) {
        for (int z = 0; z < 2; ++z) {
            CHECK(vf.vhat(z, n) == doctest::Approx(p.gamma * c).epsilon(1e-10));
            CHECK(vf.v(z, n) == doctest::Approx(p.gamma * c).epsilon(1e-10));
        }
    }
    // Thresholds 0 and 1 act alike (every n >= 1 exceeds 0 and at n = 1 the
    // stay probability for threshold 1 is 0), so the box reaches 1.
    const ThresholdBox box = optimal_thresholds(vf, c, 1e-12);
    for (int z = 0; z < 2; ++z) {
        CHECK(box[z].lo == 0.0);
        CHECK(box[z].hi == 1.0);
    }
}

TEST_CASE("values respect the geometric bound and Bellman residual") {
    ModelParams p;
    p.mu01 = p.mu10 = 0.1;
    const double c_bar = p.reward(1) / (1.0 - p.gamma);
    const StoppingProblem problem(p, {1.0, 4.0}, 10.0, Truncation{200});
    for (double c : {0.1, 1.98, 10.0, 19.9}) {
        const ValueFunction vf = problem.value_iterate(c, 1e-11);
        for (double x : vf.vhat_values()) {
            CHECK(x >= 0.0);
            CHECK(x <= c_bar + 1e-9);
        }
        CHECK(problem.bellman_residual(vf, c) <= 1e-10);
    }
}

TEST_CASE("value iteration iterates increase and contract") {
    ModelParams p;
    p.mu01 = p.mu10 = 0.5;
    const StoppingProblem problem(p, {2.0, 6.0}, 8.0, Truncation{60});
    std::vector<double> previous;
    std::vector<double> changes;
    bool monotone = true;
    problem.value_iterate(1.5, 1e-12, 1'000'000, [&](std::size_t, std::span<const double> vhat) {
        if (!previous.empty()) {
            double change = 0.0;
            for (std::size_t i = 0; i < vhat.size(); ++i) {
                if (vhat[i] < previous[i] - 1e-15) monotone = false;
                change = std::max(change, std::abs(vhat[i] - previous[i]));
            }
            changes.push_back(change);
        }
        previous.assign(vhat.begin(), vhat.end());
    });
    CHECK(monotone);
    REQUIRE(changes.size() > 100);
    // After burn-in the sup-norm change shrinks at least geometrically on average.
    const std::size_t a = changes.size() / 4;
    const std::size_t b = changes.size() / 2;
    const double ratio = std::pow(changes[b] / changes[a], 1.0 / static_cast<double>(b - a));
    CHECK(ratio < 1.0);
    for (std::size_t i = a + 1; i < changes.size(); ++i) CHECK(changes[i] <= changes[i - 1] * (1.0 + 1e-9));
}

TEST_CASE("value iteration reports non-convergence and bad payoffs") {
    ModelParams p;
    const StoppingProblem problem(p, {2.0, 6.0}, 8.0, Truncation{60});
    CHECK_THROWS_AS(problem.value_iterate(1.0, 1e-12, 3), NumericalError);
    CHECK_THROWS_AS(value_iterate(p, {2.0, 6.0}, 8.0, 0.0, Truncation{60}, 1e-8), std::invalid_argument);
    CHECK_THROWS_AS(value_iterate(p, {2.0, 6.0}, 8.0, 1.0, Truncation{60}, 0.0), std::invalid_argument);
}

TEST_CASE("micro instance agrees with exhaustive rule enumeration") {
    // nmax = 6 with rational rates.
    ModelParams p;
    p.lambda = 1.0;
    p.gamma = 0.9;
    p.mu01 = 0.5;
    p.mu10 = 0.25;
    const Truncation t{6};
    for (const ThresholdPolicy& others : {ThresholdPolicy{2.5, 4.0}, ThresholdPolicy{0.0, 1.0}, ThresholdPolicy{3.0, 3.0}}) {
        for (double c : {0.5, 1.25, 3.0}) {
            const double kappa = 2.0;
            const auto exhaustive = oracle::best_any_rule(p, others, kappa, c, t.nmax);
            const auto thresholds = oracle::best_threshold_rule(p, others, kappa, c, t.nmax);
            CHECK(sup_distance(thresholds, exhaustive) <= 1e-12);
            const ValueFunction vi = value_iterate(p, others, kappa, c, t, 1e-13);
            CHECK(sup_distance(vi.vhat_values(), exhaustive) <= 1e-8);
            const ValueFunction pi = StoppingProblem(p, others, kappa, t).policy_iterate(c);
            CHECK(sup_distance(pi.vhat_values(), exhaustive) <= 1e-10);
        }
    }
}

TEST_CASE("policy iteration matches value iteration on the full truncation") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> threshold(0.0, 50.0);
    std::uniform_real_distribution<double> payoff(0.05, 5.0);
    for (int trial = 0; trial < 10; ++trial) {
        ModelParams p;
        p.mu01 = p.mu10 = trial % 2 == 0 ? 0.1 : 10.0;
        const StoppingProblem problem(p, {threshold(rng), threshold(rng)}, 12.0, Truncation{200});
        const double c = payoff(rng);
        const ValueFunction vi = problem.value_iterate(c, 1e-12);
        const ValueFunction pi = problem.policy_iterate(c);
        CHECK(sup_distance(pi.vhat_values(), std::vector<double>(vi.vhat_values().begin(), vi.vhat_values().end())) <= 1e-9);
        CHECK(problem.bellman_residual(pi, c) <= 1e-10);
    }
}

TEST_CASE("V-hat is non-increasing in n over random instances") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const RewardFn shapes[] = {RewardFn::inverse_n(), RewardFn::inverse_n_squared(), RewardFn::inverse_sqrt_n()};
    for (int trial = 0; trial < 200; ++trial) {
        ModelParams p;
        p.lambda = 0.2 + 3.0 * unit(rng);
        p.gamma = 0.5 + 0.49 * unit(rng);
        p.beta = 2.0 + 25.0 * unit(rng);
        p.mu01 = std::pow(10.0, -1.0 + 3.0 * unit(rng));
        p.mu10 = std::pow(10.0, -1.0 + 3.0 * unit(rng));
        p.reward = shapes[trial % 3];
        const ThresholdPolicy policy{40.0 * unit(rng), 40.0 * unit(rng)};
        const double kappa = p.beta * p.lambda * (1.0 - p.gamma + p.gamma * unit(rng));
        const double c = (0.02 + 0.9 * unit(rng)) * p.reward(1) / (1.0 - p.gamma);
        const ValueFunction vf = value_iterate(p, policy, kappa, c, Truncation{120}, 1e-10);
        for (int z = 0; z < 2; ++z) {
            for (std::size_t n = 1; n < vf.nmax(); ++n) CHECK(vf.vhat(z, n + 1) <= vf.vhat(z, n) + 1e-9);
        }
        const ThresholdBox box = optimal_thresholds(vf, c, default_indifference_tolerance(p));
        for (int z = 0; z < 2; ++z) CHECK(box[z].lo <= box[z].hi);
    }
}

TEST_CASE("optimal threshold box conventions") {
    const ValueFunction indifferent = flat_values(30, 2.0);
    const ThresholdBox full = optimal_thresholds(indifferent, 2.0, 1e-9);
    for (int z = 0; z < 2; ++z) {
        CHECK(full[z].lo == 0.0);
        CHECK(full[z].hi == 30.0);
    }

    // V-hat(z, n) = 10 - n crosses C = 6.5 between 3 and 4; hitting 6 exactly
    // at n = 4 with C = 6 gives the box [3, 5].
    std::vector<double> h(20);
    for (std::size_t n = 1; n <= 10; ++n) {
        for (int z = 0; z < 2; ++z) h[ValueFunction::index(z, n)] = 10.0 - static_cast<double>(n);
    }
    const ValueFunction line(10, h, h, 0, 0.0);
    CHECK(optimal_thresholds(line, 6.5, 1e-9)[0].lo == 3.0);
    CHECK(optimal_thresholds(line, 6.5, 1e-9)[0].hi == 4.0);
    CHECK(optimal_thresholds(line, 6.0, 1e-9)[1].lo == 3.0);
    CHECK(optimal_thresholds(line, 6.0, 1e-9)[1].hi == 5.0);
    CHECK(optimal_thresholds(line, 100.0, 1e-9)[1].hi == 1.0);
    CHECK(optimal_thresholds(line, 100.0, 1e-9)[1].lo == 0.0);

    h[ValueFunction::index(0, 5)] = 9.0;
    CHECK_THROWS_AS(optimal_thresholds(ValueFunction(10, h, h, 0, 0.0), 6.0, 1e-9), NumericalError);
}

TEST_CASE("threshold distance") {
    const ThresholdBox box{{Interval{1, 4}, Interval{2, 5}}};
    CHECK(threshold_distance({2, 3}, box) == 0.0);
    CHECK(threshold_distance({5, 2}, box) == doctest::Approx(1.0));
    CHECK(threshold_distance({0, 0}, ThresholdBox{{Interval{3, 3}, Interval{4, 4}}}) == doctest::Approx(5.0));
    CHECK(box.contains({4, 5}));
    CHECK_FALSE(box.contains({4.1, 5}));
}

TEST_CASE("box is convex: every point between two members is a member") {
    ModelParams p;
    p.mu01 = p.mu10 = 1.0;
    const ValueFunction vf = value_iterate(p, {3.0, 9.0}, 15.0, 0.7, Truncation{200}, 1e-11);
    const ThresholdBox box = optimal_thresholds(vf, 0.7, 1e-9);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> s(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const ThresholdPolicy a{box[0].lo + s(rng) * (box[0].hi - box[0].lo), box[1].lo + s(rng) * (box[1].hi - box[1].lo)};
        const ThresholdPolicy b{box[0].lo + s(rng) * (box[0].hi - box[0].lo), box[1].lo + s(rng) * (box[1].hi - box[1].lo)};
        const double w = s(rng);
        CHECK(box.contains({w * a.n0 + (1 - w) * b.n0, w * a.n1 + (1 - w) * b.n1}));
    }
}
