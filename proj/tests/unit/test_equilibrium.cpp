#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "../oracles/oracles.hpp"
#include "mfe/equilibrium.hpp"

using namespace mfe;

namespace {

SearchConfig small_search() {
    SearchConfig cfg;
    cfg.n_hi = 10.0;
    cfg.resolution = 2.0;
    cfg.levels = 2;
    cfg.top_q = 2;
    cfg.refinement_factor = 4.0;
    cfg.c_resolution = 0.5;
    cfg.keep = 5;
    return cfg;
}

bool same_scores(const std::vector<CellScore>& a, const std::vector<CellScore>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i].policy == b[i].policy) || a[i].c != b[i].c || a[i].d != b[i].d || a[i].kappa != b[i].kappa)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("c_tilde weights V-hat one level up") {
    std::vector<double> mass(2 * 4, 0.0);
    mass[1] = 1.0;  // (z=1, n=0)
    std::vector<double> h(2 * 4, 0.0);
    h[ValueFunction::index(1, 1)] = 7.0;
    CHECK(c_tilde(Distribution(4, mass), ValueFunction(4, h, h, 0, 0.0)) == 7.0);

    // Mass at the last level reuses V-hat(z, nmax).
    std::vector<double> top(2 * 4, 0.0);
    top[2 * 3] = 1.0;  // (z=0, n=3)
    h[ValueFunction::index(0, 4)] = 2.5;
    CHECK(c_tilde(Distribution(4, top), ValueFunction(4, h, h, 0, 0.0)) == 2.5);
}

TEST_CASE("zero reward: c_tilde is gamma C") {
    ModelParams p;
    p.reward = RewardFn::from_name("zero");
    SearchConfig cfg;
    const EquilibriumCandidate cand = evaluate_candidate(p, {2.0, 2.0}, 1.0, cfg);
    CHECK(cand.c_tilde == doctest::Approx(p.gamma).epsilon(1e-9));
    CHECK(cand.d == doctest::Approx(std::abs(cand.c - cand.c_tilde) + cand.dist));
}

TEST_CASE("payoff bounds") {
    ModelParams p;
    const PayoffBounds b = bounds(p);
    CHECK(b.c_bar == doctest::Approx(20.0));
    CHECK(b.c_under == doctest::Approx((1.0 / 22.0) * (1.0 / 22.0) * std::exp(-400.0)).epsilon(1e-12));
    CHECK(b.c_under > 0.0);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        ModelParams q;
        q.gamma = 0.05 + 0.9 * unit(rng);
        q.beta = 0.5 + 5.0 * unit(rng);
        q.mu01 = 0.1 + 10.0 * unit(rng);
        q.mu10 = 0.1 + 10.0 * unit(rng);
        q.reward = RewardFn::inverse_sqrt_n().scaled(0.1 + unit(rng));
        const PayoffBounds qb = bounds(q);
        CHECK(0.0 < qb.c_under);
        CHECK(qb.c_under < q.reward(1));
        CHECK(q.reward(1) < qb.c_bar);
    }
}

TEST_CASE("tail bound g") {
    ModelParams p;
    double previous = g_bound(p, 3.0);
    for (double n : {10.0, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9}) {
        const double g = g_bound(p, n);
        CHECK(g <= previous);
        previous = g;
    }
    CHECK(g_bound(p, 1e9) < g_bound(p, 1e3));
    CHECK(std::abs(g_bound(p, 1e4) - oracle::g_expanded(p.gamma, p.reward, 1e4)) <= 1e-12);
    for (double n : {3.0, 17.0, 1234.0, 5e7})
        CHECK(g_bound(p, n) == doctest::Approx(oracle::g_expanded(p.gamma, p.reward, n)).epsilon(1e-14));
    CHECK_THROWS_AS(g_bound(p, 2.0), std::invalid_argument);
}

TEST_CASE("compactness radius is out of reach for the default model") {
    CHECK_FALSE(compactness_radius(ModelParams{}).has_value());
}

TEST_CASE("c_tilde stays within the payoff bounds") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const RewardFn shapes[] = {RewardFn::inverse_n(), RewardFn::inverse_n_squared(), RewardFn::inverse_sqrt_n()};
    SearchConfig cfg;
    for (int i = 0; i < 60; ++i) {
        ModelParams p;
        p.mu01 = p.mu10 = std::pow(10.0, -1.0 + 3.0 * unit(rng));
        p.reward = shapes[i % 3];
        const PayoffBounds b = bounds(p);
        const ThresholdPolicy policy{50.0 * unit(rng), 50.0 * unit(rng)};
        const double c = b.c_under + unit(rng) * (b.c_bar - b.c_under);
        const EquilibriumCandidate cand = evaluate_candidate(p, policy, std::max(c, 1e-6), cfg);
        CHECK(cand.c_tilde >= b.c_under);
        CHECK(cand.c_tilde <= b.c_bar + 1e-9);
        CHECK(cand.d == doctest::Approx(std::abs(cand.c - cand.c_tilde) + cand.dist));
        CHECK(cand.dist == doctest::Approx(threshold_distance(policy, cand.box)));
    }
}

TEST_CASE("published point for slow resources is self-consistent in its thresholds") {
    ModelParams p;
    p.mu01 = p.mu10 = 0.1;
    SearchConfig cfg;
    const EquilibriumCandidate cand = evaluate_candidate(p, {1.0, 4.0}, 1.98, cfg);
    CHECK(cand.box[1].contains(4.0));
    CHECK(cand.box[0].contains(1.0));
}

TEST_CASE("search output: ranked, refined, deterministic") {
    ModelParams p;
    p.mu01 = p.mu10 = 10.0;
    const SearchConfig cfg = small_search();
    const SearchResult a = search(p, cfg);
    REQUIRE_FALSE(a.ranked.empty());
    CHECK(a.skipped.empty());
    CHECK(a.ranked.size() == cfg.keep);
    for (std::size_t i = 1; i < a.scores.size(); ++i) CHECK_FALSE(ranks_before(a.scores[i], a.scores[i - 1]));
    for (std::size_t i = 0; i < a.ranked.size(); ++i) {
        CHECK(a.ranked[i].d == doctest::Approx(a.scores[i].d));
        CHECK(a.ranked[i].d >= 0.0);
        CHECK(a.ranked[i].c > 0.0);
    }
    REQUIRE(a.best_d_per_level.size() == 2);
    CHECK(a.best_d_per_level[1] <= a.best_d_per_level[0] + cfg.epsilon);
    CHECK(a.payoff_bounds.c_bar == doctest::Approx(20.0));

    SearchConfig threaded = cfg;
    threaded.threads = 4;
    const SearchResult b = search(p, threaded);
    CHECK(same_scores(a.scores, b.scores));
    const SearchResult c = search(p, cfg);
    CHECK(same_scores(a.scores, c.scores));
}

TEST_CASE("payoff grid starts above zero") {
    ModelParams p;
    const SearchConfig cfg = small_search();
    const SearchResult r = search(p, cfg);
    for (const CellScore& s : r.scores) CHECK(s.c > 0.0);
    const PayoffRange range = resolve_payoff_range(p, cfg);
    CHECK(range.hi == doctest::Approx(20.0));
    CHECK(range.step == doctest::Approx(0.5));
}

TEST_CASE("zero reward: search finds no interior fixed point") {
    ModelParams p;
    p.reward = RewardFn::from_name("zero");
    SearchConfig cfg = small_search();
    cfg.c_resolution.reset();
    const SearchResult r = search(p, cfg);
    REQUIRE_FALSE(r.ranked.empty());
    const EquilibriumCandidate& head = r.ranked.front();
    for (int z = 0; z < 2; ++z) {
        CHECK(head.box[z].lo == 0.0);
        CHECK(head.box[z].hi == 1.0);
    }
    CHECK(head.c_tilde == doctest::Approx(p.gamma * head.c));
    CHECK(head.c <= 0.02);
    CHECK(head.d > cfg.epsilon);
}

TEST_CASE("search configuration validation") {
    SearchConfig cfg;
    cfg.resolution = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SearchConfig{};
    cfg.levels = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SearchConfig{};
    cfg.refinement_factor = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK_THROWS_AS(evaluate_candidate(ModelParams{}, {1, 1}, 0.0, SearchConfig{}), std::invalid_argument);
}
