#pragma once

#include "pgdpo/market.hpp"

#include <vector>

namespace pgdpo {

/// Unconstrained Merton risky weights (1/gamma) Sigma^{-1} (mu - r 1).
Vector optimal_weights(const MarketParams& m, double gamma);

/// Risk-free weight implied by the risky weights.
inline double riskfree_weight(const Vector& risky) { return 1.0 - risky.sum(); }

double decay_rate_kappa(const MarketParams& m, double gamma, double rho);

/// Zero-bequest consumption-to-wealth ratio nu / (1 - exp(-nu (T - t))) with
/// nu = kappa_decay / gamma. Tends to 1/(T - t) as kappa_decay -> 0.
/// Throws HorizonExhausted for t >= T.
double consumption_fraction(double t, double T, double kappa_decay, double gamma);

/// Tabulated solution of g' = kappa g - gamma g^{(gamma-1)/gamma}, g(T) = kappa_b,
/// integrated backward with an adaptive classical Runge-Kutta scheme. The value
/// function is e^{-rho t} g(t) x^{1-gamma}/(1-gamma), so lambda = e^{-rho t} g x^{-gamma}
/// and optimal consumption is C = g^{-1/gamma} x.
class ValueOracle {
public:
    ValueOracle(double kappa_decay, double gamma, double rho, double kappa_bequest, double T, int grid_size);

    double g(double t) const;
    double consumption_ratio(double t) const;
    double costate(double t, double x) const;
    double costate_slope(double t, double x) const;

    double gamma() const noexcept { return gamma_; }
    double rho() const noexcept { return rho_; }
    double horizon() const noexcept { return T_; }
    double kappa_bequest() const noexcept { return kappa_b_; }
    const std::vector<double>& grid() const noexcept { return times_; }
    const std::vector<double>& values() const noexcept { return values_; }

private:
    double rhs(double g) const;

    double kappa_;
    double gamma_;
    double rho_;
    double kappa_b_;
    double T_;
    std::vector<double> times_;
    std::vector<double> values_;
    std::vector<double> slopes_;
};

ValueOracle value_ode_oracle(const MarketParams& m, double gamma, double rho, double kappa_bequest, double T,
                             int grid_size = 1000);

}  // namespace pgdpo
