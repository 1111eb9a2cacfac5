#include "mfe/stopping.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "banded_solver.hpp"

namespace mfe {

EventProbs event_probs(const ModelParams& params, double kappa, int z, std::size_t n) {
    if (n == 0) throw std::invalid_argument("event probabilities need n >= 1");
    if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
    const double lambda = params.lambda;
    const double flip = params.flip_rate(z);
    const double others = static_cast<double>(n - 1) * lambda;
    const double denom = static_cast<double>(n) * lambda + flip + kappa;
    EventProbs p;
    p.p_dec = lambda / denom;
    p.p_exit = others * (1.0 - params.gamma) / denom;
    p.p_sur = others * params.gamma / denom;
    p.p_res = flip / denom;
    p.p_arr = kappa / denom;
    return p;
}

ValueFunction::ValueFunction(std::size_t nmax, std::vector<double> v, std::vector<double> vhat,
                             std::size_t iterations, double residual)
    : nmax_(nmax), v_(std::move(v)), vhat_(std::move(vhat)), iterations_(iterations), residual_(residual) {
    if (v_.size() != 2 * nmax_ || vhat_.size() != 2 * nmax_)
        throw std::invalid_argument("value function arrays do not match nmax");
}

StoppingProblem::StoppingProblem(const ModelParams& params, const ThresholdPolicy& policy, double kappa,
                                 const Truncation& trunc)
    : nmax_(trunc.nmax), gamma_(params.gamma), coeffs_(2 * trunc.nmax) {
    params.validate();
    policy.validate();
    trunc.validate(policy);
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw std::invalid_argument("kappa must be positive");
    for (std::size_t n = 1; n <= nmax_; ++n) {
        for (int z = 0; z <= 1; ++z) {
            const EventProbs p = event_probs(params, kappa, z, n);
            const double leave = switch_probability(policy, z, n);
            coeffs_[ValueFunction::index(z, n)] = Coefficients{
                reward_eval(params.reward, z, n), p.p_dec, p.p_exit + p.p_sur * leave,
                p.p_sur * (1.0 - leave), p.p_res, p.p_arr};
        }
    }
}

ValueFunction StoppingProblem::value_iterate(double c, double tol, std::size_t max_sweeps,
                                             const SweepObserver& observer) const {
    if (!(tol > 0.0)) throw std::invalid_argument("value iteration tolerance must be positive");
    const std::size_t size = coeffs_.size();
    std::vector<double> vhat(size, 0.0);
    std::vector<double> next(size, 0.0);
    std::vector<double> v(size, 0.0);
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        if (observer) observer(sweep, vhat);
        for (std::size_t i = 0; i < size; ++i) v[i] = coeffs_[i].reward + gamma_ * std::max(vhat[i], c);
        double change = 0.0;
        for (std::size_t i = 0; i < size; ++i) {
            const Coefficients& k = coeffs_[i];
            const double below = i >= 2 ? vhat[i - 2] : 0.0;  // down is 0 at n = 1
            const double above = i + 2 < size ? vhat[i + 2] : vhat[i];
            const double other = vhat[i ^ 1U];
            next[i] = k.dec * v[i] + k.down * below + k.self * vhat[i] + k.flip * other + k.up * above;
            change = std::max(change, std::abs(next[i] - vhat[i]));
        }
        vhat.swap(next);
        if (change <= tol) {
            for (std::size_t i = 0; i < size; ++i) v[i] = coeffs_[i].reward + gamma_ * std::max(vhat[i], c);
            return ValueFunction(nmax_, std::move(v), std::move(vhat), sweep + 1, change);
        }
    }
    throw NumericalError("value iteration did not reach tolerance within " + std::to_string(max_sweeps) + " sweeps");
}

ValueFunction StoppingProblem::policy_iterate(double c, const ValueFunction* warm) const {
    const std::size_t size = coeffs_.size();
    std::vector<char> stay(size, 0);
    if (warm != nullptr && warm->nmax() == nmax_) {
        const auto prior = warm->vhat_values();
        for (std::size_t i = 0; i < size; ++i) stay[i] = prior[i] > c ? 1 : 0;
    }
    const double tie = 1e-12 * std::max(1.0, std::abs(c));
    std::vector<double> vhat(size);
    for (std::size_t round = 1; round <= 4 * size + 8; ++round) {
        detail::PentaBandedMatrix a(size);
        for (std::size_t i = 0; i < size; ++i) {
            const Coefficients& k = coeffs_[i];
            double diag = 1.0 - k.self - (stay[i] ? k.dec * gamma_ : 0.0);
            if (i >= 2) a.add(i, -2, -k.down);
            a.add(i, (i % 2 == 0) ? 1 : -1, -k.flip);
            if (i + 2 < size) a.add(i, 2, -k.up);
            else diag -= k.up;
            a.add(i, 0, diag);
            vhat[i] = k.dec * (k.reward + (stay[i] ? 0.0 : gamma_ * c));
        }
        a.solve_in_place(vhat);

        bool changed = false;
        for (std::size_t i = 0; i < size; ++i) {
            const char better = vhat[i] > c + tie ? 1 : (vhat[i] < c - tie ? 0 : stay[i]);
            if (better != stay[i]) {
                stay[i] = better;
                changed = true;
            }
        }
        if (!changed) {
            std::vector<double> v(size);
            for (std::size_t i = 0; i < size; ++i) v[i] = coeffs_[i].reward + gamma_ * std::max(vhat[i], c);
            ValueFunction provisional(nmax_, std::move(v), vhat, round, 0.0);
            const double residual = bellman_residual(provisional, c);
            return ValueFunction(nmax_, {provisional.v_values().begin(), provisional.v_values().end()}, std::move(vhat),
                                 round, residual);
        }
    }
    throw NumericalError("policy iteration cycled");
}

double StoppingProblem::bellman_residual(const ValueFunction& vf, double c) const {
    if (vf.nmax() != nmax_) throw std::invalid_argument("value function truncation differs from the problem");
    const auto v = vf.v_values();
    const auto vhat = vf.vhat_values();
    const std::size_t size = coeffs_.size();
    double worst = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const Coefficients& k = coeffs_[i];
        const double below = i >= 2 ? vhat[i - 2] : 0.0;
        const double above = i + 2 < size ? vhat[i + 2] : vhat[i];
        const double rhs_v = k.reward + gamma_ * std::max(vhat[i], c);
        const double rhs_vhat = k.dec * v[i] + k.down * below + k.self * vhat[i] + k.flip * vhat[i ^ 1U] + k.up * above;
        worst = std::max({worst, std::abs(v[i] - rhs_v), std::abs(vhat[i] - rhs_vhat)});
    }
    return worst;
}

ValueFunction value_iterate(const ModelParams& params, const ThresholdPolicy& policy, double kappa, double c,
                            const Truncation& trunc, double tol, std::size_t max_sweeps) {
    if (!(c > 0.0)) throw std::invalid_argument("switching payoff C must be positive");
    return StoppingProblem(params, policy, kappa, trunc).value_iterate(c, tol, max_sweeps);
}

double default_indifference_tolerance(const ModelParams& params) {
    const double c_bar = params.reward(1) / (1.0 - params.gamma);
    return std::max(1e-7 * c_bar, 1e-12);
}

ThresholdBox optimal_thresholds(const ValueFunction& vf, double c, double tol_eq) {
    const std::size_t nmax = vf.nmax();
    ThresholdBox box;
    for (int z = 0; z <= 1; ++z) {
        for (std::size_t n = 1; n < nmax; ++n) {
            if (vf.vhat(z, n + 1) > vf.vhat(z, n) + 1e-9)
                throw NumericalError("V-hat increases in n at z=" + std::to_string(z) + ", n=" + std::to_string(n));
        }
        double lo = 0.0;
        double hi = static_cast<double>(nmax);
        for (std::size_t n = 1; n <= nmax; ++n) {
            if (vf.vhat(z, n) > c + tol_eq) lo = static_cast<double>(n);
        }
        for (std::size_t n = nmax; n >= 1; --n) {
            if (vf.vhat(z, n) < c - tol_eq) hi = static_cast<double>(n);
        }
        box.axes[static_cast<std::size_t>(z)] = Interval{lo, hi};
    }
    return box;
}

double threshold_distance(const ThresholdPolicy& p, const ThresholdBox& box) {
    const double d0 = box[0].distance(p.n0);
    const double d1 = box[1].distance(p.n1);
    return std::hypot(d0, d1);
}

}  // namespace mfe
