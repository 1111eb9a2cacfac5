#include "mfe/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "mfe/parallel.hpp"

namespace mfe {

PayoffBounds bounds(const ModelParams& params) {
    params.validate();
    const double f1 = params.reward(1);
    const double lambda = params.lambda;
    const double crowd = params.beta * lambda;
    PayoffBounds b;
    b.c_bar = f1 / (1.0 - params.gamma);
    b.c_under = (lambda / (lambda + params.mu10 + crowd)) * (params.mu01 / (lambda + params.mu01 + crowd)) *
                std::exp(-params.beta / (1.0 - params.gamma)) * f1;
    return b;
}

double g_bound(const ModelParams& params, double n) {
    if (!(n >= 3.0)) throw std::invalid_argument("g_bound needs n >= 3");
    const double gamma = params.gamma;
    const double root = std::sqrt(n);
    const double log_n = std::log(n);
    const double f_far = params.reward.at(std::max(1.0, std::floor(root / 2.0)));
    const double head = (f_far + std::exp(-root / 8.0) + 2.0 / std::sqrt(log_n)) / (1.0 - gamma);
    const double tail = std::pow(gamma, std::floor(std::sqrt(log_n))) / (1.0 - gamma) * params.reward(1);
    return head + tail;
}

std::optional<double> compactness_radius(const ModelParams& params) {
    const double target = (1.0 - params.gamma) * bounds(params).c_under;
    if (!(target > 0.0)) return std::nullopt;
    if (g_bound(params, 3.0) < target) return 3.0;

    // g is non-increasing: exact integer bisection while n fits comfortably in
    // a double mantissa, then a bisection on log n.
    constexpr double kIntegerLimit = 1e15;
    if (g_bound(params, kIntegerLimit) < target) {
        double lo = 3.0;  // g(lo) >= target
        double hi = kIntegerLimit;
        while (hi - lo > 1.0) {
            const double mid = std::floor(0.5 * (lo + hi));
            (g_bound(params, mid) < target ? hi : lo) = mid;
        }
        return hi;
    }
    const double log_max = std::log(std::numeric_limits<double>::max()) - 1.0;
    if (!(g_bound(params, std::exp(log_max)) < target)) return std::nullopt;
    double lo = std::log(kIntegerLimit);
    double hi = log_max;
    for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (g_bound(params, std::exp(mid)) < target ? hi : lo) = mid;
    }
    return std::ceil(std::exp(hi));
}

double c_tilde(const Distribution& pi, const ValueFunction& vf) {
    if (pi.nmax() != vf.nmax()) throw std::invalid_argument("distribution and value function truncations differ");
    double total = 0.0;
    for (std::size_t n = 0; n < pi.nmax(); ++n) {
        for (int z = 0; z <= 1; ++z) total += pi(z, n) * vf.vhat(z, n + 1);
    }
    return total;
}

bool ranks_before(const CellScore& a, const CellScore& b) {
    return std::tie(a.d, a.policy.n0, a.policy.n1, a.c) < std::tie(b.d, b.policy.n0, b.policy.n1, b.c);
}

void SearchConfig::validate() const {
    if (!(n_hi >= 0.0) || !std::isfinite(n_hi)) throw std::invalid_argument("n_hi must be nonnegative");
    if (!(resolution > 0.0)) throw std::invalid_argument("grid resolution must be positive");
    if (levels < 1) throw std::invalid_argument("at least one search level is required");
    if (!(refinement_factor > 1.0)) throw std::invalid_argument("refinement factor must exceed 1");
    if (top_q < 1) throw std::invalid_argument("top_q must be at least 1");
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
    if (c_resolution && !(*c_resolution > 0.0)) throw std::invalid_argument("payoff resolution must be positive");
    if (c_min && c_max && !(*c_min < *c_max)) throw std::invalid_argument("payoff range is empty");
    if (tol_eq && !(*tol_eq >= 0.0)) throw std::invalid_argument("indifference tolerance must be nonnegative");
    trunc.validate(ThresholdPolicy{n_hi, n_hi});
}

PayoffRange resolve_payoff_range(const ModelParams& params, const SearchConfig& cfg) {
    const double c_bar = bounds(params).c_bar;
    const double span = c_bar > 0.0 ? c_bar : 1.0;
    PayoffRange range;
    range.lo = cfg.c_min.value_or(0.0);
    range.hi = cfg.c_max.value_or(span);
    range.step = cfg.c_resolution.value_or(span / 100.0);
    if (!(range.hi > range.lo) || range.lo < 0.0) throw std::invalid_argument("payoff range is empty");
    return range;
}

namespace {

struct PolicyKey {
    long long n0;
    long long n1;
    auto operator<=>(const PolicyKey&) const = default;
};

long long grid_key(double x) { return std::llround(x * 1e9); }
PolicyKey key_of(const ThresholdPolicy& p) { return {grid_key(p.n0), grid_key(p.n1)}; }

struct CellPlan {
    ThresholdPolicy policy;
    std::vector<double> payoffs;  // ascending
};

struct CellOutcome {
    std::vector<CellScore> scores;
    std::optional<std::string> failure;
};

double tolerance_for(const ModelParams& params, const SearchConfig& cfg) {
    return cfg.tol_eq.value_or(default_indifference_tolerance(params));
}

ValueFunction solve_stopping(const StoppingProblem& problem, double c, const SearchConfig& cfg,
                             const ValueFunction* warm) {
    if (cfg.solver == StoppingSolver::ValueIteration) return problem.value_iterate(c, cfg.epsilon);
    return problem.policy_iterate(c, warm);
}

CellOutcome evaluate_cell(const ModelParams& params, const CellPlan& plan, const SearchConfig& cfg) {
    CellOutcome out;
    try {
        const KappaCalibration cal = calibrate_kappa(params, plan.policy, cfg.trunc, cfg.epsilon);
        const StoppingProblem problem(params, plan.policy, cal.kappa, cal.trunc);
        const double tol_eq = tolerance_for(params, cfg);
        std::optional<ValueFunction> previous;
        out.scores.reserve(plan.payoffs.size());
        for (double c : plan.payoffs) {
            ValueFunction vf = solve_stopping(problem, c, cfg, previous ? &*previous : nullptr);
            CellScore s;
            s.policy = plan.policy;
            s.c = c;
            s.kappa = cal.kappa;
            s.box = optimal_thresholds(vf, c, tol_eq);
            s.c_tilde = c_tilde(cal.pi, vf);
            s.dist = threshold_distance(plan.policy, s.box);
            s.d = std::abs(c - s.c_tilde) + s.dist;
            out.scores.push_back(s);
            previous = std::move(vf);
        }
    } catch (const std::exception& e) {
        out.scores.clear();
        out.failure = e.what();
    }
    return out;
}

std::vector<double> axis(double lo, double hi, double step) {
    std::vector<double> values;
    const auto count = static_cast<long long>(std::floor((hi - lo) / step + 1e-9));
    for (long long i = 0; i <= count; ++i) values.push_back(lo + static_cast<double>(i) * step);
    return values;
}

}  // namespace

EquilibriumCandidate evaluate_candidate(const ModelParams& params, const ThresholdPolicy& policy, double c,
                                        const SearchConfig& cfg) {
    if (!(c > 0.0)) throw std::invalid_argument("switching payoff C must be positive");
    KappaCalibration cal = calibrate_kappa(params, policy, cfg.trunc, cfg.epsilon);
    const StoppingProblem problem(params, policy, cal.kappa, cal.trunc);
    EquilibriumCandidate cand;
    cand.policy = policy;
    cand.c = c;
    cand.kappa = cal.kappa;
    cand.vf = solve_stopping(problem, c, cfg, nullptr);
    cand.box = optimal_thresholds(cand.vf, c, tolerance_for(params, cfg));
    cand.c_tilde = c_tilde(cal.pi, cand.vf);
    cand.dist = threshold_distance(policy, cand.box);
    cand.d = std::abs(c - cand.c_tilde) + cand.dist;
    cand.pi = std::move(cal.pi);
    return cand;
}

SearchResult search(const ModelParams& params, const SearchConfig& cfg) {
    params.validate();
    cfg.validate();
    SearchResult result;
    result.payoff_bounds = bounds(params);
    result.m_radius = compactness_radius(params);
    result.payoff_range = resolve_payoff_range(params, cfg);
    const PayoffRange range = result.payoff_range;

    std::set<std::pair<PolicyKey, long long>> evaluated;
    std::vector<CellScore> all;

    auto run_level = [&](std::map<PolicyKey, CellPlan>& plans) {
        std::vector<CellPlan> work;
        for (auto& [key, plan] : plans) {
            std::sort(plan.payoffs.begin(), plan.payoffs.end());
            std::vector<double> fresh;
            for (double c : plan.payoffs) {
                if (evaluated.insert({key, grid_key(c)}).second) fresh.push_back(c);
            }
            if (!fresh.empty()) work.push_back(CellPlan{plan.policy, std::move(fresh)});
        }
        std::vector<CellOutcome> outcomes(work.size());
        parallel_for(work.size(), cfg.threads,
                     [&](std::size_t i) { outcomes[i] = evaluate_cell(params, work[i], cfg); });
        for (std::size_t i = 0; i < work.size(); ++i) {
            if (outcomes[i].failure) result.skipped.push_back(SkippedCell{work[i].policy, *outcomes[i].failure});
            all.insert(all.end(), outcomes[i].scores.begin(), outcomes[i].scores.end());
        }
        std::sort(all.begin(), all.end(), ranks_before);
        result.best_d_per_level.push_back(all.empty() ? std::numeric_limits<double>::infinity() : all.front().d);
    };

    // Level 1: full coarse grid.
    std::vector<double> payoffs;
    for (double c : axis(range.lo, range.hi, range.step)) {
        if (c > 0.0) payoffs.push_back(c);
    }
    const std::vector<double> thresholds = axis(0.0, cfg.n_hi, cfg.resolution);
    {
        std::map<PolicyKey, CellPlan> plans;
        for (double n0 : thresholds) {
            for (double n1 : thresholds) {
                const ThresholdPolicy p{n0, n1};
                plans.emplace(key_of(p), CellPlan{p, payoffs});
            }
        }
        run_level(plans);
    }

    double step = cfg.resolution;
    double c_step = range.step;
    for (int level = 2; level <= cfg.levels && !all.empty(); ++level) {
        const double fine = step / cfg.refinement_factor;
        const double c_fine = c_step / cfg.refinement_factor;
        const auto reach = static_cast<long long>(std::llround(cfg.refinement_factor));

        std::map<PolicyKey, CellPlan> plans;
        std::set<PolicyKey> centres;
        std::vector<const CellScore*> chosen;
        for (const CellScore& s : all) {
            if (chosen.size() >= cfg.top_q) break;
            // Policies that induce the same dynamics (e.g. any n0 in [0, 1])
            // score identically; refine around one of them only.
            const bool equivalent = std::any_of(chosen.begin(), chosen.end(), [&](const CellScore* o) {
                return grid_key(o->c) == grid_key(s.c) && std::abs(o->d - s.d) <= 1e-12 * std::max(1.0, s.d) &&
                       o->box[0].lo == s.box[0].lo && o->box[0].hi == s.box[0].hi &&
                       o->box[1].lo == s.box[1].lo && o->box[1].hi == s.box[1].hi;
            });
            if (equivalent || !centres.insert(key_of(s.policy)).second) continue;
            chosen.push_back(&s);
            for (long long i = -reach; i <= reach; ++i) {
                for (long long j = -reach; j <= reach; ++j) {
                    const ThresholdPolicy p{s.policy.n0 + static_cast<double>(i) * fine,
                                            s.policy.n1 + static_cast<double>(j) * fine};
                    if (p.n0 < -1e-12 || p.n1 < -1e-12 || p.n0 > cfg.n_hi + 1e-12 || p.n1 > cfg.n_hi + 1e-12) continue;
                    const ThresholdPolicy clamped{std::clamp(p.n0, 0.0, cfg.n_hi), std::clamp(p.n1, 0.0, cfg.n_hi)};
                    auto& plan = plans.try_emplace(key_of(clamped), CellPlan{clamped, {}}).first->second;
                    for (long long k = -reach; k <= reach; ++k) {
                        const double c = s.c + static_cast<double>(k) * c_fine;
                        if (c > 0.0 && c >= range.lo - 1e-12 && c <= range.hi + 1e-12) plan.payoffs.push_back(c);
                    }
                }
            }
        }
        run_level(plans);
        step = fine;
        c_step = c_fine;
    }

    // Materialise the head of the ranking with full distributions and values.
    const std::size_t keep = std::min(cfg.keep, all.size());
    result.ranked.resize(keep);
    parallel_for(keep, cfg.threads, [&](std::size_t i) {
        result.ranked[i] = evaluate_candidate(params, all[i].policy, all[i].c, cfg);
    });
    result.scores = std::move(all);
    return result;
}

}  // namespace mfe
