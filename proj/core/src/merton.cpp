#include "pgdpo/merton.hpp"

#include "pgdpo/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pgdpo {

Vector optimal_weights(const MarketParams& m, double gamma) {
    if (!(gamma > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be positive");
    return solve_spd(m.sigma_cov, m.excess_return()) / gamma;
}

double decay_rate_kappa(const MarketParams& m, double gamma, double rho) {
    const Vector excess = m.excess_return();
    const double sharpe_sq = excess.dot(solve_spd(m.sigma_cov, excess));
    return rho - (1.0 - gamma) * (m.r + sharpe_sq / (2.0 * gamma));
}

double consumption_fraction(double t, double T, double kappa_decay, double gamma) {
    const double tau = T - t;
    if (!(tau > 0.0)) throw Error(ErrorCode::HorizonExhausted, "consumption fraction undefined at t >= T");
    const double nu = kappa_decay / gamma;
    // -expm1(-x) keeps full precision for small nu * tau.
    const double denom = -std::expm1(-nu * tau);
    if (std::abs(nu * tau) < 1e-12) return 1.0 / tau;
    return nu / denom;
}

ValueOracle::ValueOracle(double kappa_decay, double gamma, double rho, double kappa_bequest, double T,
                         int grid_size)
    : kappa_(kappa_decay), gamma_(gamma), rho_(rho), kappa_b_(kappa_bequest), T_(T) {
    if (grid_size < 100) throw Error(ErrorCode::InvalidArgument, "grid_size must be >= 100");
    if (!(kappa_bequest > 0.0) || !(T > 0.0) || !(gamma > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "value oracle needs positive bequest, horizon and gamma");
    }
    const auto n = static_cast<std::size_t>(grid_size);
    times_.resize(n + 1);
    values_.resize(n + 1);
    slopes_.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) times_[i] = T * static_cast<double>(i) / static_cast<double>(n);
    times_[n] = T;

    // Integrate in tau = T - t, where dg/dtau = -rhs(g). Near tau = 0 with a tiny
    // bequest the solution behaves like tau^gamma, so steps are chosen adaptively
    // by step doubling rather than fixed per grid cell.
    auto deriv = [this](double g) { return -rhs(g); };
    auto rk4 = [&](double g, double h) {
        const double k1 = deriv(g);
        const double k2 = deriv(g + 0.5 * h * k1);
        const double k3 = deriv(g + 0.5 * h * k2);
        const double k4 = deriv(g + h * k3);
        return g + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    };

    double g = kappa_bequest;
    values_[n] = g;
    const double cell = T / static_cast<double>(n);
    double h = cell * 1e-6;
    for (std::size_t i = n; i-- > 0;) {
        double tau = T - times_[i + 1];
        const double tau_end = T - times_[i];
        while (tau < tau_end) {
            h = std::min(h, tau_end - tau);
            const double full = rk4(g, h);
            const double half = rk4(rk4(g, 0.5 * h), 0.5 * h);
            const double err = std::abs(full - half);
            const double tol = 1e-13 * std::max(std::abs(half), 1e-300);
            if (!std::isfinite(half) || !(half > 0.0)) {
                if (h < 1e-16 * T) throw Error(ErrorCode::OracleDiverged, "g became non-positive");
                h *= 0.25;
                continue;
            }
            if (err > tol && h > 1e-16 * T) {
                h *= std::max(0.1, 0.9 * std::pow(tol / err, 0.2));
                continue;
            }
            g = half + (half - full) / 15.0;
            tau += h;
            const double grow = err > 0.0 ? 0.9 * std::pow(tol / err, 0.2) : 4.0;
            h *= std::clamp(grow, 0.2, 4.0);
        }
        if (!(g > 0.0) || !std::isfinite(g)) throw Error(ErrorCode::OracleDiverged, "g became non-positive");
        values_[i] = g;
    }
    for (std::size_t i = 0; i <= n; ++i) slopes_[i] = rhs(values_[i]);
}

double ValueOracle::rhs(double g) const {
    // g' = kappa g - gamma g^{(gamma-1)/gamma}
    return kappa_ * g - gamma_ * std::pow(g, (gamma_ - 1.0) / gamma_);
}

double ValueOracle::g(double t) const {
    if (t <= 0.0) t = 0.0;
    if (t >= T_) return kappa_b_;
    const std::size_t n = times_.size() - 1;
    const double cell = T_ / static_cast<double>(n);
    auto i = static_cast<std::size_t>(t / cell);
    if (i >= n) i = n - 1;
    const double t0 = times_[i];
    const double h = times_[i + 1] - t0;
    const double s = (t - t0) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    return h00 * values_[i] + h10 * h * slopes_[i] + h01 * values_[i + 1] + h11 * h * slopes_[i + 1];
}

double ValueOracle::consumption_ratio(double t) const { return std::pow(g(t), -1.0 / gamma_); }

double ValueOracle::costate(double t, double x) const {
    if (!(x > 0.0)) throw Error(ErrorCode::DomainError, "wealth must be positive");
    return std::exp(-rho_ * t) * g(t) * std::pow(x, -gamma_);
}

double ValueOracle::costate_slope(double t, double x) const { return -gamma_ * costate(t, x) / x; }

ValueOracle value_ode_oracle(const MarketParams& m, double gamma, double rho, double kappa_bequest, double T,
                             int grid_size) {
    return ValueOracle(decay_rate_kappa(m, gamma, rho), gamma, rho, kappa_bequest, T, grid_size);
}

}  // namespace pgdpo
