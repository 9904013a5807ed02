#pragma once

#include "pgdpo/linalg.hpp"

#include <cstdint>

namespace pgdpo {

struct AdamConfig {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Vector m;
    Vector v;
    std::int64_t step = 0;

    void reset(Index size) {
        m = Vector::Zero(size);
        v = Vector::Zero(size);
        step = 0;
    }
};

enum class Direction { Ascent, Descent };

/// Bias-corrected Adam update. Ascent adds the step (objective maximization).
void adam_step(Vector& params, const Vector& grad, AdamState& state, const AdamConfig& cfg,
               Direction dir = Direction::Ascent);

}  // namespace pgdpo
