#include "mfe/model.hpp"

#include <cmath>
#include <stdexcept>

namespace mfe {

RewardFn RewardFn::inverse_n() { return RewardFn(Kind::InverseN, {}, 1.0); }
RewardFn RewardFn::inverse_n_squared() { return RewardFn(Kind::InverseNSquared, {}, 1.0); }
RewardFn RewardFn::inverse_sqrt_n() { return RewardFn(Kind::InverseSqrtN, {}, 1.0); }

RewardFn RewardFn::table(std::vector<double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]) || values[i] < 0.0)
            throw std::invalid_argument("reward table entries must be finite and nonnegative");
        if (i > 0 && values[i] > values[i - 1])
            throw std::invalid_argument("reward table must be non-increasing");
    }
    return RewardFn(Kind::Table, std::move(values), 1.0);
}

RewardFn RewardFn::from_name(const std::string& name) {
    if (name == "inverse_n" || name == "1/n") return inverse_n();
    if (name == "inverse_n_squared" || name == "inverse_n2" || name == "1/n^2") return inverse_n_squared();
    if (name == "inverse_sqrt_n" || name == "1/sqrt(n)") return inverse_sqrt_n();
    if (name == "zero") return table({});
    throw std::invalid_argument("unknown reward function '" + name + "'");
}

double RewardFn::operator()(std::size_t n) const {
    if (n == 0) throw std::invalid_argument("reward is undefined for an empty location (n = 0)");
    return at(static_cast<double>(n));
}

double RewardFn::at(double n) const {
    if (!(n >= 1.0)) throw std::invalid_argument("reward needs n >= 1");
    double base = 0.0;
    switch (kind_) {
    case Kind::InverseN: base = 1.0 / n; break;
    case Kind::InverseNSquared: base = 1.0 / (n * n); break;
    case Kind::InverseSqrtN: base = 1.0 / std::sqrt(n); break;
    case Kind::Table: {
        const double k = std::floor(n);
        base = k <= static_cast<double>(table_.size()) ? table_[static_cast<std::size_t>(k) - 1] : 0.0;
        break;
    }
    }
    return scale_ * base;
}

RewardFn RewardFn::scaled(double factor) const {
    if (!std::isfinite(factor) || factor < 0.0)
        throw std::invalid_argument("reward scale must be finite and nonnegative");
    return RewardFn(kind_, table_, scale_ * factor);
}

std::string RewardFn::name() const {
    std::string base;
    switch (kind_) {
    case Kind::InverseN: base = "1/n"; break;
    case Kind::InverseNSquared: base = "1/n^2"; break;
    case Kind::InverseSqrtN: base = "1/sqrt(n)"; break;
    case Kind::Table: base = "table"; break;
    }
    return scale_ == 1.0 ? base : std::to_string(scale_) + "*" + base;
}

void ModelParams::validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be positive");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be positive");
    if (!(mu01 > 0.0) || !std::isfinite(mu01)) throw std::invalid_argument("mu01 must be positive");
    if (!(mu10 > 0.0) || !std::isfinite(mu10)) throw std::invalid_argument("mu10 must be positive");
}

void ThresholdPolicy::validate() const {
    if (!std::isfinite(n0) || !std::isfinite(n1) || n0 < 0.0 || n1 < 0.0)
        throw std::invalid_argument("thresholds must be finite and nonnegative");
}

double reward_eval(const RewardFn& f, int z, std::size_t n) {
    if (z != 0 && z != 1) throw std::invalid_argument("resource level must be 0 or 1");
    const double fn = f(n);
    return z == 1 ? fn : 0.0;
}

double switch_probability(const ThresholdPolicy& policy, int z, std::size_t n) {
    if (n == 0) throw std::invalid_argument("switch probability needs n >= 1");
    const double nz = policy.threshold(z);
    const double count = static_cast<double>(n);
    if (count > nz) return 1.0;
    const double floor_nz = std::floor(nz);
    if (count == floor_nz) return floor_nz + 1.0 - nz;
    return 0.0;
}

}  // namespace mfe
