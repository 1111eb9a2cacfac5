#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mfe/chain.hpp"
#include "mfe/model.hpp"

namespace mfe {

struct SimConfig {
    ModelParams params;
    ThresholdPolicy policy;
    std::size_t k = 100;            ///< number of locations
    double horizon = 1000.0;        ///< simulated time
    double burn_in = 200.0;         ///< statistics start here
    std::uint64_t seed = 1;
    double snapshot_interval = 100.0;
    bool exclude_self = true;       ///< switching never lands on the current location

    /// round(beta * k).
    std::size_t agents() const;
    /// Throws std::invalid_argument on an empty system or inconsistent times.
    void validate() const;
};

struct EventCounts {
    std::uint64_t epochs = 0;      ///< decision epochs over the whole run
    std::uint64_t departures = 0;
    std::uint64_t switches = 0;
    std::uint64_t flips = 0;
};

/// State of the whole system at a snapshot time.
struct Snapshot {
    double time = 0.0;
    double rich_fraction = 0.0;   ///< share of locations with z = 1
    double empty_fraction = 0.0;  ///< share of locations with no agent
    std::size_t max_occupancy = 0;
};

struct SimResult {
    /// Time-weighted share of locations in each (z, n) after burn-in.
    Distribution empirical_dist;
    double mean_reward_per_epoch = 0.0;  ///< over epochs after burn-in
    double total_welfare_rate = 0.0;     ///< reward per unit time per location after burn-in
    EventCounts event_counts;
    std::vector<Snapshot> snapshots;

    double tv_to(const Distribution& pi) const;
};

/// Total-variation distance between two distributions over (z, n), with
/// missing levels read as zero mass.
double total_variation(const Distribution& a, const Distribution& b);

/// Exact event simulation of k locations and round(beta * k) agents following
/// a threshold policy. Deterministic given the config, seed included.
SimResult simulate(const SimConfig& cfg);

/// Independent runs spread over `threads` workers; results keep input order.
std::vector<SimResult> simulate_all(const std::vector<SimConfig>& cfgs, unsigned threads);

/// Reward collected per unit time per location.
double welfare(const SimResult& result);

}  // namespace mfe
