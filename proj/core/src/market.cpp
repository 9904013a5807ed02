#include "pgdpo/market.hpp"

#include "pgdpo/errors.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pgdpo {

using nlohmann::json;

Matrix random_correlation(Index n, Stream& rng) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "random_correlation: n must be >= 1");
    const Index k = n + 2;
    Matrix g(n, k);
    // Fill row by row so the draw order does not depend on Eigen's storage order.
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < k; ++j) g(i, j) = rng.normal();
    }
    Matrix c = g * g.transpose();
    const Vector inv_sd = c.diagonal().array().rsqrt();
    c = inv_sd.asDiagonal() * c * inv_sd.asDiagonal();
    for (Index i = 0; i < n; ++i) {
        c(i, i) = 1.0;
        for (Index j = i + 1; j < n; ++j) c(j, i) = c(i, j);
    }

    constexpr int kAttempts = 10;
    for (int attempt = 1; attempt <= kAttempts; ++attempt) {
        try {
            (void)cholesky_factor(c);
            return c;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NotPositiveDefinite) throw;
            spdlog::warn("correlation factorization failed (attempt {}), shrinking toward identity", attempt);
            c = 0.7 * c;
            c.diagonal().setOnes();
        }
    }
    throw Error(ErrorCode::DegenerateMarket, "correlation matrix not positive definite after shrinkage");
}

Vector rescale_into_band(const Vector& pi, double lo, double hi) {
    const double s = pi.sum();
    if (s >= lo && s <= hi) return pi;
    if (s == 0.0 || !std::isfinite(s)) {
        throw Error(ErrorCode::DegenerateMarket, "baseline portfolio sums to zero; cannot rescale");
    }
    const double target = s < lo ? lo : hi;
    return pi * (target / s);
}

MarketParams make_market(double r, double gamma, const Vector& mu, const Matrix& sigma_cov, const Vector& pi_base,
                         std::uint64_t seed) {
    const Index n = mu.size();
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "market needs at least one asset");
    if (sigma_cov.rows() != n || sigma_cov.cols() != n) throw Error(ErrorCode::ShapeMismatch, "sigma_cov shape");
    if (pi_base.size() != 0 && pi_base.size() != n) throw Error(ErrorCode::ShapeMismatch, "pi_base size");
    if (!(gamma > 0.0) || !std::isfinite(r)) throw Error(ErrorCode::InvalidArgument, "bad r or gamma");
    MarketParams m;
    m.n = n;
    m.r = r;
    m.gamma = gamma;
    m.seed = seed;
    m.mu = mu;
    m.sigma_cov = SpdMatrix(sigma_cov);
    m.chol = m.sigma_cov.factor();
    m.pi_base = pi_base.size() == n ? pi_base : Vector::Zero(n);
    return m;
}

Vector back_solved_drift(double r, double gamma, const Matrix& sigma_cov, const Vector& pi) {
    if (sigma_cov.rows() != pi.size() || sigma_cov.cols() != pi.size()) {
        throw Error(ErrorCode::ShapeMismatch, "back_solved_drift shapes");
    }
    return (gamma * (sigma_cov * pi)).array() + r;
}

MarketParams generate_market(const MarketConfig& cfg) {
    if (cfg.n < 1) throw Error(ErrorCode::InvalidArgument, "n must be >= 1");
    if (!(cfg.vol_lo > 0.0 && cfg.vol_hi >= cfg.vol_lo)) throw Error(ErrorCode::InvalidArgument, "vol range");
    if (!(cfg.pi_hi > cfg.pi_lo)) throw Error(ErrorCode::InvalidArgument, "pi range");
    if (!(cfg.sum_lo > 0.0 && cfg.sum_hi >= cfg.sum_lo)) throw Error(ErrorCode::InvalidArgument, "sum band");

    const Index n = cfg.n;
    Stream corr_rng(cfg.seed, StreamTag::Market, 0);
    const Matrix corr = random_correlation(n, corr_rng);

    Stream vol_rng(cfg.seed, StreamTag::Market, 1);
    Vector vol(n);
    for (Index i = 0; i < n; ++i) vol(i) = vol_rng.uniform(cfg.vol_lo, cfg.vol_hi);

    Stream pi_rng(cfg.seed, StreamTag::Market, 2);
    Vector pi(n);
    for (Index i = 0; i < n; ++i) pi(i) = pi_rng.uniform(cfg.pi_lo, cfg.pi_hi);
    pi = rescale_into_band(pi, cfg.sum_lo, cfg.sum_hi);

    Matrix sigma = vol.asDiagonal() * corr * vol.asDiagonal();
    for (Index i = 0; i < n; ++i) {
        sigma(i, i) = vol(i) * vol(i);
        for (Index j = i + 1; j < n; ++j) sigma(j, i) = sigma(i, j);
    }
    const Vector mu = back_solved_drift(cfg.r, cfg.gamma, sigma, pi);

    try {
        return make_market(cfg.r, cfg.gamma, mu, sigma, pi, cfg.seed);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::NotPositiveDefinite) throw Error(ErrorCode::DegenerateMarket, e.what());
        throw;
    }
}

std::string market_to_json(const MarketParams& m) {
    json j;
    j["n"] = m.n;
    j["r"] = m.r;
    j["gamma"] = m.gamma;
    j["seed"] = m.seed;
    j["mu"] = std::vector<double>(m.mu.data(), m.mu.data() + m.n);
    json rows = json::array();
    for (Index i = 0; i < m.n; ++i) {
        std::vector<double> row(static_cast<std::size_t>(m.n));
        for (Index k = 0; k < m.n; ++k) row[static_cast<std::size_t>(k)] = m.sigma_cov(i, k);
        rows.push_back(std::move(row));
    }
    j["sigma_cov"] = std::move(rows);
    j["pi_base"] = std::vector<double>(m.pi_base.data(), m.pi_base.data() + m.n);
    return j.dump(1) + "\n";
}

MarketParams market_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
        const Index n = j.at("n").get<Index>();
        if (n < 1) throw Error(ErrorCode::InvalidArgument, "market n must be >= 1");
        const auto mu = j.at("mu").get<std::vector<double>>();
        const auto rows = j.at("sigma_cov").get<std::vector<std::vector<double>>>();
        std::vector<double> pi;
        if (j.contains("pi_base")) pi = j.at("pi_base").get<std::vector<double>>();
        if (static_cast<Index>(mu.size()) != n || static_cast<Index>(rows.size()) != n) {
            throw Error(ErrorCode::ShapeMismatch, "market arrays do not match n");
        }
        Matrix sigma(n, n);
        for (Index i = 0; i < n; ++i) {
            if (static_cast<Index>(rows[i].size()) != n) throw Error(ErrorCode::ShapeMismatch, "sigma_cov row length");
            for (Index k = 0; k < n; ++k) sigma(i, k) = rows[i][k];
        }
        Vector pv = pi.empty() ? Vector() : Vector(Eigen::Map<const Vector>(pi.data(), static_cast<Index>(pi.size())));
        return make_market(j.at("r").get<double>(), j.at("gamma").get<double>(),
                           Eigen::Map<const Vector>(mu.data(), n), sigma, pv, j.value("seed", std::uint64_t{0}));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("malformed market json: ") + e.what());
    }
}

void save_market(const MarketParams& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << market_to_json(m);
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

MarketParams load_market(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return market_from_json(ss.str());
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace pgdpo
