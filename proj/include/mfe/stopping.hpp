#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mfe/chain.hpp"
#include "mfe/model.hpp"

namespace mfe {

/// Probabilities of the next event seen by a focal agent at (z, n): her own
/// decision epoch, another agent leaving the system, another agent surviving
/// its epoch, a resource flip, an arrival. They share the denominator
/// n*lambda + mu_{z,1-z} + kappa.
struct EventProbs {
    double p_dec = 0.0;
    double p_exit = 0.0;
    double p_sur = 0.0;
    double p_res = 0.0;
    double p_arr = 0.0;

    double total() const { return p_dec + p_exit + p_sur + p_res + p_arr; }
};

EventProbs event_probs(const ModelParams& params, double kappa, int z, std::size_t n);

/// V and V-hat of the stopping problem on {0,1} x {1 .. nmax}.
class ValueFunction {
public:
    ValueFunction() = default;
    ValueFunction(std::size_t nmax, std::vector<double> v, std::vector<double> vhat, std::size_t iterations,
                  double residual);

    std::size_t nmax() const { return nmax_; }
    double v(int z, std::size_t n) const { return v_[index(z, n)]; }
    double vhat(int z, std::size_t n) const { return vhat_[index(z, n)]; }
    std::span<const double> v_values() const { return v_; }
    std::span<const double> vhat_values() const { return vhat_; }

    /// Sweeps (value iteration) or improvement steps (policy iteration) used.
    std::size_t iterations() const { return iterations_; }
    /// Last sup-norm change or Bellman residual reported by the solver.
    double residual() const { return residual_; }

    static std::size_t index(int z, std::size_t n) { return 2 * (n - 1) + static_cast<std::size_t>(z); }

private:
    std::size_t nmax_ = 0;
    std::vector<double> v_;
    std::vector<double> vhat_;
    std::size_t iterations_ = 0;
    double residual_ = 0.0;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double x) const { return lo <= x && x <= hi; }
    /// Distance from x to the interval, 0 inside.
    double distance(double x) const { return x < lo ? lo - x : (x > hi ? x - hi : 0.0); }
};

/// Product of per-resource intervals of optimal thresholds; convex by construction.
struct ThresholdBox {
    std::array<Interval, 2> axes;

    const Interval& operator[](int z) const { return axes[static_cast<std::size_t>(z)]; }
    bool contains(const ThresholdPolicy& p) const { return axes[0].contains(p.n0) && axes[1].contains(p.n1); }
};

/// Per-iteration hook for value iteration: (sweep index m, V-hat^(m)).
using SweepObserver = std::function<void(std::size_t, std::span<const double>)>;

/// The optimal stopping problem for one focal agent when the other agents
/// follow `policy` and arrivals occur at rate kappa. Coefficients are
/// computed once and shared across switching payoffs C.
class StoppingProblem {
public:
    StoppingProblem(const ModelParams& params, const ThresholdPolicy& policy, double kappa, const Truncation& trunc);

    std::size_t nmax() const { return nmax_; }

    /// Jacobi value iteration from V-hat = 0: V^(m) from V-hat^(m), then
    /// V-hat^(m+1) from V^(m) and V-hat^(m). Stops when the sup-norm change
    /// falls to tol; throws NumericalError after max_sweeps.
    ValueFunction value_iterate(double c, double tol, std::size_t max_sweeps = 1'000'000,
                                const SweepObserver& observer = {}) const;

    /// Howard policy iteration over stay/switch rules, each rule evaluated by a
    /// banded linear solve. `warm` seeds the initial rule.
    ValueFunction policy_iterate(double c, const ValueFunction* warm = nullptr) const;

    /// Sup-norm violation of the Bellman equation by (V, V-hat).
    double bellman_residual(const ValueFunction& vf, double c) const;

private:
    struct Coefficients {
        double reward;  // z f(n)
        double dec;     // own decision epoch
        double down;    // another agent leaves the location
        double self;    // another agent stays
        double flip;    // resource flip
        double up;      // arrival (reflected at nmax)
    };

    std::size_t nmax_;
    double gamma_;
    std::vector<Coefficients> coeffs_;
};

ValueFunction value_iterate(const ModelParams& params, const ThresholdPolicy& policy, double kappa, double c,
                            const Truncation& trunc, double tol, std::size_t max_sweeps = 1'000'000);

/// Default band for treating V-hat as equal to C: 1e-7 * f(1) / (1 - gamma),
/// floored at 1e-12 for the zero reward.
double default_indifference_tolerance(const ModelParams& params);

/// lo_z = max{n : V-hat(z,n) > C + tol_eq} (0 if none), hi_z = min{n :
/// V-hat(z,n) < C - tol_eq} (nmax if none). Throws NumericalError when V-hat
/// increases in n by more than 1e-9.
ThresholdBox optimal_thresholds(const ValueFunction& vf, double c, double tol_eq);

/// Euclidean distance from the policy to the box.
double threshold_distance(const ThresholdPolicy& p, const ThresholdBox& box);

}  // namespace mfe
