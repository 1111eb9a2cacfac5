#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/SparseCore>

#include "mfe/model.hpp"

namespace mfe {

/// Raised when a numerical routine cannot deliver its contract: a singular
/// solve, a bisection bracket that does not straddle the target, or an
/// iteration that fails to converge.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A location state: resource level z and number of agents n.
struct State {
    int z = 0;
    std::size_t n = 0;
    friend bool operator==(const State&, const State&) = default;
};

struct Truncation {
    std::size_t nmax = 200;

    /// nmax >= 2 and, when a policy is given, nmax > max(ceil(n0), ceil(n1)) + 1.
    bool admits(const ThresholdPolicy& policy) const;
    void validate() const;
    void validate(const ThresholdPolicy& policy) const;
};

/// Sparse CTMC rate matrix over {0,1} x {first_n .. first_n + levels - 1}.
/// States are interleaved: index = 2 * (n - first_n) + z.
class Generator {
public:
    Generator(std::size_t first_n, std::size_t levels, Eigen::SparseMatrix<double, Eigen::RowMajor> rates)
        : first_n_(first_n), levels_(levels), rates_(std::move(rates)) {}

    std::size_t first_n() const { return first_n_; }
    std::size_t last_n() const { return first_n_ + levels_ - 1; }
    std::size_t levels() const { return levels_; }
    std::size_t size() const { return 2 * levels_; }

    std::size_t index(State s) const { return 2 * (s.n - first_n_) + static_cast<std::size_t>(s.z); }
    State state(std::size_t index) const { return {static_cast<int>(index % 2), first_n_ + index / 2}; }

    /// Rate of the transition from -> to (diagonal gives minus the exit rate).
    double rate(State from, State to) const;
    /// Exit rate of a state (minus the diagonal entry).
    double exit_rate(State s) const { return -rate(s, s); }

    const Eigen::SparseMatrix<double, Eigen::RowMajor>& matrix() const { return rates_; }

private:
    std::size_t first_n_;
    std::size_t levels_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> rates_;
};

/// Probability mass over {0,1} x {0 .. nmax-1}.
class Distribution {
public:
    Distribution() = default;
    /// probs uses the interleaved layout of Generator with first_n = 0.
    Distribution(std::size_t nmax, std::vector<double> probs);

    std::size_t nmax() const { return nmax_; }
    double operator()(int z, std::size_t n) const;
    const std::vector<double>& probs() const { return probs_; }

    /// Marginal probability of resource level z.
    double resource_marginal(int z) const;
    /// Mass on the last truncated level n = nmax - 1, a truncation diagnostic.
    double boundary_mass() const;

private:
    std::size_t nmax_ = 0;
    std::vector<double> probs_;
};

/// Location chain seen by one focal agent while the n - 1 others follow the
/// policy. States {0,1} x {1 .. nmax}.
Generator build_generator_focal(const ModelParams& params, const ThresholdPolicy& policy, double kappa,
                                const Truncation& trunc);

/// Location chain with every agent following the policy. States
/// {0,1} x {0 .. nmax-1}.
Generator build_generator_all(const ModelParams& params, const ThresholdPolicy& policy, double kappa,
                              const Truncation& trunc);

/// Invariant distribution of an irreducible generator, by a direct sparse
/// solve with one balance equation replaced by the normalisation. The result
/// is indexed from n = 0, so generators must start at first_n() == 0.
Distribution stationary(const Generator& gen);

/// Invariant distribution of a generator with nearest-level transitions only
/// (the structure produced by build_generator_all), by linear level reduction:
/// pi_n = pi_{n-1} R_n with R_n computed downward from the top level. Same
/// contract as stationary() at O(nmax) cost.
Distribution stationary_levels(const Generator& gen);

/// max_j |(pi^T Q)_j|.
double balance_residual(const Distribution& pi, const Generator& gen);

/// Sum over states of n * pi(z, n).
double mean_occupancy(const Distribution& pi);

struct KappaCalibration {
    double kappa = 0.0;
    Distribution pi;
    Truncation trunc;  ///< may be larger than requested, see calibrate_kappa
    int bisections = 0;
};

/// Bisection on kappa in [beta*lambda*(1-gamma), beta*lambda] until the mean
/// occupancy of the all-agents chain is within tol of beta, or 200 steps.
/// If the bracket does not straddle beta, nmax is doubled once before a
/// NumericalError is thrown.
KappaCalibration calibrate_kappa(const ModelParams& params, const ThresholdPolicy& policy, const Truncation& trunc,
                                 double tol = 1e-6);

}  // namespace mfe
