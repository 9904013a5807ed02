#include "pgdpo/adam.hpp"

#include "pgdpo/errors.hpp"

#include <cmath>

namespace pgdpo {

void adam_step(Vector& params, const Vector& grad, AdamState& state, const AdamConfig& cfg, Direction dir) {
    if (grad.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "adam: gradient size");
    if (state.m.size() != params.size()) state.reset(params.size());
    ++state.step;
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    const double sign = dir == Direction::Ascent ? 1.0 : -1.0;
    params.array() += sign * cfg.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

}  // namespace pgdpo
