#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mfe {

/// Reward per agent at a rich location, f(n), as a function of the number of
/// agents present. Always non-increasing, nonnegative and vanishing at infinity.
class RewardFn {
public:
    enum class Kind { InverseN, InverseNSquared, InverseSqrtN, Table };

    static RewardFn inverse_n();
    static RewardFn inverse_n_squared();
    static RewardFn inverse_sqrt_n();
    /// values[i] is f(i + 1); f(n) = 0 beyond the end of the table.
    /// Throws std::invalid_argument unless the values are finite, nonnegative
    /// and non-increasing.
    static RewardFn table(std::vector<double> values);

    /// Accepts "inverse_n" / "1/n", "inverse_n_squared" / "1/n^2",
    /// "inverse_sqrt_n" / "1/sqrt(n)".
    static RewardFn from_name(const std::string& name);

    /// f(n) for n >= 1. Throws std::invalid_argument for n == 0.
    double operator()(std::size_t n) const;

    /// f at a real argument n >= 1, used where n exceeds the size_t range.
    /// Table rewards read the entry at floor(n).
    double at(double n) const;

    /// Same shape with every value multiplied by factor (factor >= 0).
    RewardFn scaled(double factor) const;

    Kind kind() const { return kind_; }
    double scale() const { return scale_; }
    const std::vector<double>& table_values() const { return table_; }
    std::string name() const;

    /// True when f(1) == 0, i.e. the reward is identically zero.
    bool identically_zero() const { return (*this)(1) == 0.0; }

private:
    RewardFn(Kind kind, std::vector<double> table, double scale)
        : kind_(kind), table_(std::move(table)), scale_(scale) {}

    Kind kind_ = Kind::InverseN;
    std::vector<double> table_;
    double scale_ = 1.0;
};

struct ModelParams {
    double lambda = 1.0;  ///< decision-epoch rate per agent
    double gamma = 0.95;  ///< survival probability per decision epoch
    double beta = 20.0;   ///< agents per location
    double mu01 = 1.0;    ///< resource flip rate 0 -> 1
    double mu10 = 1.0;    ///< resource flip rate 1 -> 0
    RewardFn reward = RewardFn::inverse_n();

    /// Flip rate out of resource level z.
    double flip_rate(int z) const { return z == 0 ? mu01 : mu10; }
    /// Long-run fraction of time a location spends at z = 1.
    double rich_fraction() const { return mu01 / (mu01 + mu10); }

    /// Throws std::invalid_argument when any rate is out of range.
    void validate() const;
};

/// Threshold strategy (n0, n1): at resource level z with n agents present,
/// stay when n < floor(n_z), switch when n > n_z, and at n == floor(n_z)
/// stay with probability n_z - floor(n_z).
struct ThresholdPolicy {
    double n0 = 0.0;
    double n1 = 0.0;

    double threshold(int z) const { return z == 0 ? n0 : n1; }
    void validate() const;

    friend bool operator==(const ThresholdPolicy&, const ThresholdPolicy&) = default;
};

/// z * f(n). Throws std::invalid_argument for n == 0 or z outside {0, 1}.
double reward_eval(const RewardFn& f, int z, std::size_t n);

/// Probability that an agent at a location with resource z and n agents
/// (herself included) switches at a decision epoch, given she survives.
double switch_probability(const ThresholdPolicy& policy, int z, std::size_t n);

}  // namespace mfe
