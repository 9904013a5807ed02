#pragma once

#include "pgdpo/linalg.hpp"
#include "pgdpo/random.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace pgdpo {

/// Immutable market description. Construct through generate_market or make_market
/// so that the factor and invariants are always consistent.
struct MarketParams {
    Index n = 0;
    double r = 0.03;
    double gamma = 2.0;
    std::uint64_t seed = 0;
    Vector mu;
    SpdMatrix sigma_cov;
    Matrix chol;  // V with V V^T = sigma_cov
    Vector pi_base;

    Vector excess_return() const { return mu.array() - r; }
};

struct MarketConfig {
    Index n = 10;
    double r = 0.03;
    double gamma = 2.0;
    double vol_lo = 0.05;
    double vol_hi = 0.5;
    double pi_lo = -1.0;
    double pi_hi = 2.0;
    double sum_lo = 0.2;
    double sum_hi = 0.75;
    std::uint64_t seed = 42;
};

/// Unit-diagonal positive-definite correlation matrix from a normalized Gram
/// matrix, shrunk toward the identity when the factorization fails.
Matrix random_correlation(Index n, Stream& rng);

MarketParams generate_market(const MarketConfig& cfg);

/// Drift that makes pi the unconstrained Merton portfolio: mu = r 1 + gamma Sigma pi.
Vector back_solved_drift(double r, double gamma, const Matrix& sigma_cov, const Vector& pi);

/// Builds a market from explicit parameters; pi_base may be empty (then zero).
MarketParams make_market(double r, double gamma, const Vector& mu, const Matrix& sigma_cov,
                         const Vector& pi_base = Vector(), std::uint64_t seed = 0);

/// Rescales pi so that its sum lies in [lo, hi]; a sum outside the band is mapped
/// onto the violated bound.
Vector rescale_into_band(const Vector& pi, double lo, double hi);

std::string market_to_json(const MarketParams& m);
MarketParams market_from_json(const std::string& text);
void save_market(const MarketParams& m, const std::filesystem::path& path);
MarketParams load_market(const std::filesystem::path& path);

/// FNV-1a 64-bit hash, hex-encoded. Used to tie run directories to market files.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace pgdpo
