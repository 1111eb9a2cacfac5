#include "mfe/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "mfe/parallel.hpp"

namespace mfe {

namespace {

// Draws are built from raw engine bits so that runs are identical across
// standard libraries, whose distribution classes are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    std::size_t below(std::size_t n) {
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return static_cast<std::size_t>(x % bound);
    }

private:
    std::mt19937_64 engine_;
};

// Locations grouped by resource level with O(1) moves between groups.
class LevelSets {
public:
    explicit LevelSets(std::size_t k) : slot_(k) {}

    void insert(int z, std::size_t loc) {
        slot_[loc] = members_[z].size();
        members_[z].push_back(loc);
    }

    void move(std::size_t loc, int from, int to) {
        auto& src = members_[from];
        const std::size_t pos = slot_[loc];
        src[pos] = src.back();
        slot_[src[pos]] = pos;
        src.pop_back();
        insert(to, loc);
    }

    std::size_t size(int z) const { return members_[z].size(); }
    std::size_t at(int z, std::size_t i) const { return members_[z][i]; }

private:
    std::vector<std::size_t> members_[2];
    std::vector<std::size_t> slot_;
};

class Simulation {
public:
    explicit Simulation(const SimConfig& cfg)
        : cfg_(cfg), k_(cfg.k), agents_(cfg.agents()), rng_(cfg.seed), levels_(cfg.k), z_(cfg.k, 0),
          count_(cfg.k, 0), since_(cfg.k, 0.0), where_(agents_) {
        reward_.assign(agents_ + 1, 0.0);
        for (std::size_t n = 1; n <= agents_; ++n) reward_[n] = cfg.params.reward(n);
        const double rich = cfg.params.rich_fraction();
        for (std::size_t loc = 0; loc < k_; ++loc) {
            z_[loc] = rng_.uniform() < rich ? 1 : 0;
            levels_.insert(z_[loc], loc);
        }
        for (std::size_t i = 0; i < agents_; ++i) {
            where_[i] = rng_.below(k_);
            ++count_[where_[i]];
        }
        for (int z = 0; z < 2; ++z) hist_[z].assign(agents_ + 1, 0.0);
    }

    SimResult run() {
        const ModelParams& p = cfg_.params;
        const double decision_rate = static_cast<double>(agents_) * p.lambda;
        double next_snapshot = cfg_.snapshot_interval;
        double t = 0.0;
        double reward_total = 0.0;
        std::uint64_t epochs_after = 0;

        while (true) {
            const double flip0 = static_cast<double>(levels_.size(0)) * p.mu01;
            const double flip1 = static_cast<double>(levels_.size(1)) * p.mu10;
            const double total = decision_rate + flip0 + flip1;
            const double next = t + rng_.exponential(total);
            while (next_snapshot <= std::min(next, cfg_.horizon)) {
                record_snapshot(next_snapshot);
                next_snapshot += cfg_.snapshot_interval;
            }
            if (next >= cfg_.horizon) break;
            t = next;

            double u = rng_.uniform() * total;
            if (u < decision_rate) {
                const std::size_t agent = rng_.below(agents_);
                const std::size_t loc = where_[agent];
                const int z = z_[loc];
                const std::size_t n = count_[loc];
                ++counts_.epochs;
                if (t >= cfg_.burn_in) {
                    reward_total += z == 1 ? reward_[n] : 0.0;
                    ++epochs_after;
                }
                std::size_t target = loc;
                if (rng_.uniform() < 1.0 - p.gamma) {
                    ++counts_.departures;
                    target = rng_.below(k_);
                } else {
                    const double q = switch_probability(cfg_.policy, z, n);
                    if (q > 0.0 && (q >= 1.0 || rng_.uniform() < q)) {
                        ++counts_.switches;
                        target = pick_destination(loc);
                    }
                }
                if (target != loc) {
                    touch(loc, t);
                    touch(target, t);
                    --count_[loc];
                    ++count_[target];
                    where_[agent] = target;
                }
            } else {
                u -= decision_rate;
                const int from = u < flip0 ? 0 : 1;
                const std::size_t loc = levels_.at(from, rng_.below(levels_.size(from)));
                touch(loc, t);
                z_[loc] = 1 - from;
                levels_.move(loc, from, 1 - from);
                ++counts_.flips;
            }
        }
        for (std::size_t loc = 0; loc < k_; ++loc) touch(loc, cfg_.horizon);

        SimResult result;
        result.event_counts = counts_;
        result.snapshots = std::move(snapshots_);
        const double span = cfg_.horizon - cfg_.burn_in;
        result.total_welfare_rate = reward_total / (span * static_cast<double>(k_));
        result.mean_reward_per_epoch = epochs_after > 0 ? reward_total / static_cast<double>(epochs_after) : 0.0;

        std::size_t top = 0;
        for (int z = 0; z < 2; ++z) {
            for (std::size_t n = 0; n < hist_[z].size(); ++n) {
                if (hist_[z][n] > 0.0) top = std::max(top, n);
            }
        }
        const std::size_t nmax = top + 1;
        std::vector<double> probs(2 * nmax, 0.0);
        double mass = 0.0;
        for (std::size_t n = 0; n < nmax; ++n) {
            for (int z = 0; z < 2; ++z) mass += hist_[z][n];
        }
        for (std::size_t n = 0; n < nmax; ++n) {
            for (int z = 0; z < 2; ++z) probs[2 * n + static_cast<std::size_t>(z)] = hist_[z][n] / mass;
        }
        result.empirical_dist = Distribution(nmax, std::move(probs));
        return result;
    }

private:
    std::size_t pick_destination(std::size_t loc) {
        if (!cfg_.exclude_self || k_ == 1) return rng_.below(k_);
        const std::size_t other = rng_.below(k_ - 1);
        return other >= loc ? other + 1 : other;
    }

    // Credits the time location `loc` spent in its current state up to t.
    void touch(std::size_t loc, double t) {
        const double start = std::max(since_[loc], cfg_.burn_in);
        if (t > start) hist_[z_[loc]][count_[loc]] += t - start;
        since_[loc] = t;
    }

    void record_snapshot(double time) {
        Snapshot s;
        s.time = time;
        std::size_t empty = 0;
        for (std::size_t loc = 0; loc < k_; ++loc) {
            if (count_[loc] == 0) ++empty;
            s.max_occupancy = std::max(s.max_occupancy, count_[loc]);
        }
        s.rich_fraction = static_cast<double>(levels_.size(1)) / static_cast<double>(k_);
        s.empty_fraction = static_cast<double>(empty) / static_cast<double>(k_);
        snapshots_.push_back(s);
    }

    const SimConfig& cfg_;
    std::size_t k_;
    std::size_t agents_;
    Rng rng_;
    LevelSets levels_;
    std::vector<int> z_;
    std::vector<std::size_t> count_;
    std::vector<double> since_;
    std::vector<std::size_t> where_;
    std::vector<double> reward_;
    std::vector<double> hist_[2];
    EventCounts counts_;
    std::vector<Snapshot> snapshots_;
};

}  // namespace

std::size_t SimConfig::agents() const {
    return static_cast<std::size_t>(std::llround(params.beta * static_cast<double>(k)));
}

void SimConfig::validate() const {
    params.validate();
    policy.validate();
    if (k == 0) throw std::invalid_argument("simulation needs at least one location");
    if (agents() == 0) throw std::invalid_argument("simulation needs at least one agent (round(beta * k) >= 1)");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("horizon must be positive");
    if (!(burn_in >= 0.0) || !(burn_in < horizon)) throw std::invalid_argument("burn-in must lie in [0, horizon)");
    if (!(snapshot_interval > 0.0)) throw std::invalid_argument("snapshot interval must be positive");
}

double total_variation(const Distribution& a, const Distribution& b) {
    const std::size_t top = std::max(a.nmax(), b.nmax());
    double sum = 0.0;
    for (std::size_t n = 0; n < top; ++n) {
        for (int z = 0; z < 2; ++z) sum += std::abs(a(z, n) - b(z, n));
    }
    return 0.5 * sum;
}

double SimResult::tv_to(const Distribution& pi) const { return total_variation(empirical_dist, pi); }

SimResult simulate(const SimConfig& cfg) {
    cfg.validate();
    return Simulation(cfg).run();
}

std::vector<SimResult> simulate_all(const std::vector<SimConfig>& cfgs, unsigned threads) {
    std::vector<SimResult> out(cfgs.size());
    parallel_for(cfgs.size(), threads, [&](std::size_t i) { out[i] = simulate(cfgs[i]); });
    return out;
}

double welfare(const SimResult& result) { return result.total_welfare_rate; }

}  // namespace mfe
