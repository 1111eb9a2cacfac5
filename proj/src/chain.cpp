#include "mfe/chain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SparseLU>

namespace mfe {

namespace {

using Triplet = Eigen::Triplet<double>;

// Death rate of the location when `movers` agents each act at rate lambda and
// every agent present counts toward the switching rule.
double departure_rate(const ModelParams& params, const ThresholdPolicy& policy, int z, std::size_t n,
                      std::size_t movers) {
    if (movers == 0) return 0.0;
    const double leave = 1.0 - params.gamma + params.gamma * switch_probability(policy, z, n);
    return params.lambda * static_cast<double>(movers) * leave;
}

void check_inputs(const ModelParams& params, const ThresholdPolicy& policy, double kappa, const Truncation& trunc) {
    params.validate();
    policy.validate();
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw std::invalid_argument("kappa must be positive");
    trunc.validate(policy);
}

// Shared builder: levels n = first_n .. first_n + nmax - 1, birth suppressed
// at the top level, death rate given by `death(z, n)`.
template <class Death>
Generator build(const ModelParams& params, double kappa, std::size_t first_n, std::size_t levels, Death death) {
    std::vector<Triplet> entries;
    entries.reserve(levels * 2 * 4);
    const std::size_t last_n = first_n + levels - 1;
    auto idx = [first_n](int z, std::size_t n) { return static_cast<int>(2 * (n - first_n) + static_cast<std::size_t>(z)); };
    for (std::size_t n = first_n; n <= last_n; ++n) {
        for (int z = 0; z <= 1; ++z) {
            double out = 0.0;
            const double flip = params.flip_rate(z);
            entries.emplace_back(idx(z, n), idx(1 - z, n), flip);
            out += flip;
            if (n < last_n) {
                entries.emplace_back(idx(z, n), idx(z, n + 1), kappa);
                out += kappa;
            }
            if (n > first_n) {
                const double d = death(z, n);
                if (d > 0.0) {
                    entries.emplace_back(idx(z, n), idx(z, n - 1), d);
                    out += d;
                }
            }
            entries.emplace_back(idx(z, n), idx(z, n), -out);
        }
    }
    const auto size = static_cast<Eigen::Index>(2 * levels);
    Eigen::SparseMatrix<double, Eigen::RowMajor> q(size, size);
    q.setFromTriplets(entries.begin(), entries.end());
    q.makeCompressed();
    return Generator(first_n, levels, std::move(q));
}

}  // namespace

bool Truncation::admits(const ThresholdPolicy& policy) const {
    if (nmax < 2) return false;
    const double top = std::max(std::ceil(policy.n0), std::ceil(policy.n1));
    return static_cast<double>(nmax) > top + 1.0;
}

void Truncation::validate() const {
    if (nmax < 2) throw std::invalid_argument("truncation nmax must be at least 2");
}

void Truncation::validate(const ThresholdPolicy& policy) const {
    if (!admits(policy))
        throw std::invalid_argument("truncation nmax=" + std::to_string(nmax) +
                                    " is too small for the policy thresholds");
}

double Generator::rate(State from, State to) const {
    return rates_.coeff(static_cast<Eigen::Index>(index(from)), static_cast<Eigen::Index>(index(to)));
}

Distribution::Distribution(std::size_t nmax, std::vector<double> probs) : nmax_(nmax), probs_(std::move(probs)) {
    if (probs_.size() != 2 * nmax_) throw std::invalid_argument("distribution size does not match nmax");
}

double Distribution::operator()(int z, std::size_t n) const {
    if (n >= nmax_) return 0.0;
    return probs_[2 * n + static_cast<std::size_t>(z)];
}

double Distribution::resource_marginal(int z) const {
    double total = 0.0;
    for (std::size_t n = 0; n < nmax_; ++n) total += (*this)(z, n);
    return total;
}

double Distribution::boundary_mass() const {
    return nmax_ == 0 ? 0.0 : (*this)(0, nmax_ - 1) + (*this)(1, nmax_ - 1);
}

Generator build_generator_focal(const ModelParams& params, const ThresholdPolicy& policy, double kappa,
                                const Truncation& trunc) {
    check_inputs(params, policy, kappa, trunc);
    // n counts the focal agent, so only n - 1 others can leave.
    return build(params, kappa, 1, trunc.nmax, [&](int z, std::size_t n) {
        return departure_rate(params, policy, z, n, n - 1);
    });
}

Generator build_generator_all(const ModelParams& params, const ThresholdPolicy& policy, double kappa,
                              const Truncation& trunc) {
    check_inputs(params, policy, kappa, trunc);
    return build(params, kappa, 0, trunc.nmax, [&](int z, std::size_t n) {
        return departure_rate(params, policy, z, n, n);
    });
}

Distribution stationary(const Generator& gen) {
    if (gen.first_n() != 0) throw std::invalid_argument("stationary() expects a generator indexed from n = 0");
    const auto size = static_cast<Eigen::Index>(gen.size());
    const auto& q = gen.matrix();

    // Solve Q^T pi = 0 with the first balance equation replaced by sum(pi) = 1.
    std::vector<Triplet> entries;
    entries.reserve(static_cast<std::size_t>(q.nonZeros() + size));
    for (Eigen::Index row = 0; row < q.outerSize(); ++row) {
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(q, row); it; ++it) {
            if (it.col() != 0) entries.emplace_back(static_cast<int>(it.col()), static_cast<int>(row), it.value());
        }
    }
    for (Eigen::Index col = 0; col < size; ++col) entries.emplace_back(0, static_cast<int>(col), 1.0);

    Eigen::SparseMatrix<double> a(size, size);
    a.setFromTriplets(entries.begin(), entries.end());
    a.makeCompressed();

    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw NumericalError("stationary solve: factorisation failed (" + lu.lastErrorMessage() + ")");
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(size);
    rhs(0) = 1.0;
    const Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !x.allFinite()) throw NumericalError("stationary solve: singular system");

    std::vector<double> probs(static_cast<std::size_t>(size));
    for (Eigen::Index i = 0; i < size; ++i) {
        // Rounding leaves entries of order 1e-17 on either side of zero in the far tail.
        if (x(i) < -1e-12) throw NumericalError("stationary solve produced a negative probability");
        probs[static_cast<std::size_t>(i)] = std::max(0.0, x(i));
    }
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    for (double& p : probs) p /= total;
    return Distribution(gen.levels(), std::move(probs));
}

Distribution stationary_levels(const Generator& gen) {
    if (gen.first_n() != 0) throw std::invalid_argument("stationary_levels() expects a generator indexed from n = 0");
    const std::size_t levels = gen.levels();
    const auto& q = gen.matrix();
    auto block = [&q](std::size_t from_level, std::size_t to_level) {
        Eigen::Matrix2d b;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                b(i, j) = q.coeff(static_cast<Eigen::Index>(2 * from_level) + i, static_cast<Eigen::Index>(2 * to_level) + j);
        return b;
    };

    // Minus the generator of the chain censored on levels >= n and watched on
    // level n, with mass leaking out only through deaths from level n. Its
    // diagonal is rebuilt from off-diagonals plus the leak so that no
    // subtraction occurs (Grassmann-Taksar-Heyman).
    auto censored = [](const Eigen::Matrix2d& offdiag, const Eigen::Vector2d& leak) {
        Eigen::Matrix2d m;
        m << offdiag(0, 1) + leak(0), -offdiag(0, 1), -offdiag(1, 0), offdiag(1, 0) + leak(1);
        return m;
    };
    auto inverse_of = [](const Eigen::Matrix2d& m, const Eigen::Vector2d& leak) {
        // m = [[b + l0, -b], [-c, c + l1]]
        const double b = -m(0, 1);
        const double c = -m(1, 0);
        const double det = b * leak(1) + c * leak(0) + leak(0) * leak(1);
        if (!(det > 0.0)) throw NumericalError("level reduction: singular censored block");
        Eigen::Matrix2d inv;
        inv << m(1, 1), b, c, m(0, 0);
        return Eigen::Matrix2d(inv / det);
    };
    auto leak_of = [&](std::size_t n) {
        const Eigen::Matrix2d down = block(n, n - 1);
        return Eigen::Vector2d(down.row(0).sum(), down.row(1).sum());
    };

    // rate[n] maps pi_{n-1} to pi_n.
    std::vector<Eigen::Matrix2d> rate(levels);
    Eigen::Matrix2d offdiag = block(levels - 1, levels - 1);
    for (std::size_t n = levels - 1; n >= 1; --n) {
        const Eigen::Vector2d leak = leak_of(n);
        const Eigen::Matrix2d m = censored(offdiag, leak);
        rate[n] = block(n - 1, n) * inverse_of(m, leak);
        offdiag = block(n - 1, n - 1) + rate[n] * block(n, n - 1);
    }
    // Level 0 has no leak, so the censored generator is conservative.
    Eigen::RowVector2d x(offdiag(1, 0), offdiag(0, 1));
    if (!(x(0) >= 0.0 && x(1) >= 0.0) || x.sum() <= 0.0) throw NumericalError("level reduction: degenerate base level");

    std::vector<double> probs(2 * levels);
    probs[0] = x(0);
    probs[1] = x(1);
    for (std::size_t n = 1; n < levels; ++n) {
        x = x * rate[n];
        probs[2 * n] = x(0);
        probs[2 * n + 1] = x(1);
    }
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    if (!(total > 0.0) || !std::isfinite(total)) throw NumericalError("level reduction: mass is not finite");
    for (double& p : probs) p /= total;
    return Distribution(levels, std::move(probs));
}

double balance_residual(const Distribution& pi, const Generator& gen) {
    if (gen.first_n() != 0 || gen.levels() != pi.nmax())
        throw std::invalid_argument("distribution and generator sizes differ");
    const auto& q = gen.matrix();
    std::vector<double> flow(gen.size(), 0.0);
    for (Eigen::Index row = 0; row < q.outerSize(); ++row) {
        const double p = pi.probs()[static_cast<std::size_t>(row)];
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(q, row); it; ++it)
            flow[static_cast<std::size_t>(it.col())] += p * it.value();
    }
    double worst = 0.0;
    for (double f : flow) worst = std::max(worst, std::abs(f));
    return worst;
}

double mean_occupancy(const Distribution& pi) {
    double total = 0.0;
    for (std::size_t n = 1; n < pi.nmax(); ++n) total += static_cast<double>(n) * (pi(0, n) + pi(1, n));
    return total;
}

namespace {

struct Bisection {
    double kappa;
    Distribution pi;
    int steps;
};

std::optional<Bisection> bisect_kappa(const ModelParams& params, const ThresholdPolicy& policy,
                                      const Truncation& trunc, double tol) {
    auto solve = [&](double kappa) { return stationary_levels(build_generator_all(params, policy, kappa, trunc)); };
    double lo = params.beta * params.lambda * (1.0 - params.gamma);
    double hi = params.beta * params.lambda;

    Distribution pi_lo = solve(lo);
    const double mean_lo = mean_occupancy(pi_lo);
    if (std::abs(mean_lo - params.beta) <= tol) return Bisection{lo, std::move(pi_lo), 0};
    Distribution pi_hi = solve(hi);
    const double mean_hi = mean_occupancy(pi_hi);
    if (std::abs(mean_hi - params.beta) <= tol) return Bisection{hi, std::move(pi_hi), 0};
    if (!(mean_lo < params.beta && params.beta < mean_hi)) return std::nullopt;

    Bisection best{hi, std::move(pi_hi), 0};
    for (int step = 1; step <= 200; ++step) {
        const double mid = 0.5 * (lo + hi);
        Distribution pi = solve(mid);
        const double mean = mean_occupancy(pi);
        best = Bisection{mid, std::move(pi), step};
        if (std::abs(mean - params.beta) <= tol) break;
        (mean < params.beta ? lo : hi) = mid;
    }
    return best;
}

}  // namespace

KappaCalibration calibrate_kappa(const ModelParams& params, const ThresholdPolicy& policy, const Truncation& trunc,
                                 double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("calibration tolerance must be positive");
    params.validate();
    trunc.validate(policy);
    Truncation current = trunc;
    for (int attempt = 0; attempt < 2; ++attempt) {
        if (auto found = bisect_kappa(params, policy, current, tol))
            return KappaCalibration{found->kappa, std::move(found->pi), current, found->steps};
        current.nmax *= 2;
    }
    throw NumericalError("kappa bracket does not straddle beta even after doubling nmax");
}

}  // namespace mfe
