#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfe/chain.hpp"
#include "mfe/model.hpp"
#include "mfe/stopping.hpp"

namespace mfe {

/// Compactness bounds on the switching payoff: every consistent payoff lies
/// in [c_under, c_bar].
struct PayoffBounds {
    double c_bar = 0.0;    ///< f(1) / (1 - gamma)
    double c_under = 0.0;  ///< lambda/(lambda+mu10+beta*lambda) * mu01/(lambda+mu01+beta*lambda) * exp(-beta/(1-gamma)) * f(1)
};

PayoffBounds bounds(const ModelParams& params);

/// Upper bound on the discounted reward of staying at a location that holds
/// n agents:
///   g(n) = [f(sqrt(n)/2) + exp(-sqrt(n)/8) + 2/sqrt(log n)] / (1-gamma)
///          + gamma^floor(sqrt(log n)) f(1) / (1-gamma),
/// with f(sqrt(n)/2) read as f(max(1, floor(sqrt(n)/2))). Requires n >= 3.
double g_bound(const ModelParams& params, double n);

/// M = min{n : g(n) < (1-gamma) c_under}, searched over n up to the largest
/// finite double. Returns nullopt when g stays above the target over that
/// whole range, which is the usual case since c_under carries exp(-beta/(1-gamma)).
std::optional<double> compactness_radius(const ModelParams& params);

/// Payoff of relocating to a location drawn from pi: sum pi(z,n) V-hat(z,n+1).
double c_tilde(const Distribution& pi, const ValueFunction& vf);

struct EquilibriumCandidate {
    ThresholdPolicy policy;
    double c = 0.0;
    double kappa = 0.0;
    Distribution pi;
    ValueFunction vf;
    ThresholdBox box;
    double c_tilde = 0.0;
    double dist = 0.0;  ///< distance of the policy to its optimal-threshold box
    double d = 0.0;     ///< |c - c_tilde| + dist
};

/// Light record of one evaluated (policy, C) cell, used for ranking.
struct CellScore {
    ThresholdPolicy policy;
    double c = 0.0;
    double kappa = 0.0;
    ThresholdBox box;
    double c_tilde = 0.0;
    double dist = 0.0;
    double d = 0.0;
};

/// Ascending by d, ties broken by (n0, n1, c).
bool ranks_before(const CellScore& a, const CellScore& b);

enum class StoppingSolver { PolicyIteration, ValueIteration };

struct SearchConfig {
    double n_hi = 50.0;        ///< thresholds range over [0, n_hi]^2
    double resolution = 1.0;   ///< coarse threshold grid step
    std::optional<double> c_min;         ///< default 0
    std::optional<double> c_max;         ///< default c_bar
    std::optional<double> c_resolution;  ///< default c_bar / 100
    int levels = 3;
    double refinement_factor = 5.0;
    std::size_t top_q = 5;
    double epsilon = 1e-6;     ///< kappa calibration and value-iteration tolerance
    Truncation trunc{200};
    std::optional<double> tol_eq;        ///< default default_indifference_tolerance()
    StoppingSolver solver = StoppingSolver::PolicyIteration;
    std::size_t keep = 10;     ///< number of fully materialised candidates returned
    unsigned threads = 1;

    void validate() const;
};

/// The payoff grid actually used: c_min, c_max, step.
struct PayoffRange {
    double lo = 0.0;
    double hi = 0.0;
    double step = 0.0;
};

/// Resolves the payoff range of cfg against the bounds. A zero reward has
/// c_bar = 0, in which case the range falls back to [0, 1] with step 0.01.
PayoffRange resolve_payoff_range(const ModelParams& params, const SearchConfig& cfg);

struct SkippedCell {
    ThresholdPolicy policy;
    std::string reason;
};

struct SearchResult {
    std::vector<EquilibriumCandidate> ranked;  ///< best `keep` candidates, ascending d
    std::vector<CellScore> scores;             ///< every evaluated cell, ascending d
    std::vector<double> best_d_per_level;
    std::vector<SkippedCell> skipped;
    PayoffBounds payoff_bounds;
    std::optional<double> m_radius;
    PayoffRange payoff_range;
};

/// Evaluates the fixed-point residual at one (policy, C).
EquilibriumCandidate evaluate_candidate(const ModelParams& params, const ThresholdPolicy& policy, double c,
                                        const SearchConfig& cfg);

/// Adaptive grid search for approximate fixed points of
/// (n0, n1, C) -> optimal thresholds x {C-tilde}.
/// Level 1 scans the policy grid [0, n_hi]^2 at `resolution` and the payoff
/// grid; each later level re-grids around the top_q best distinct policies
/// with both steps divided by refinement_factor. kappa is calibrated once per
/// policy and reused across C. Cells whose calibration or stopping solve fails
/// are reported in `skipped`.
SearchResult search(const ModelParams& params, const SearchConfig& cfg);

}  // namespace mfe
