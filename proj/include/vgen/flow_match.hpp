#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "vgen/rng.hpp"
#include "vgen/tensor.hpp"

// Flow-matching objective on the linear path x_t = (1-t)*x0 + t*x1 with
// velocity target x0 - x1, the logit-normal timestep distribution with a
// resolution-dependent shift, and a plain Euler sampler over the shifted grid.

namespace vgen {

struct ShiftConfig {
    double alpha_base = 1.0;
    int64_t reference_token_count = 256;
    double alpha_floor = 1.0;
    double logit_mean = 0.0;
    double logit_sd = 1.0;

    // alpha grows with the token count; never below the floor.
    double alpha(int64_t tokens) const {
        if (tokens <= 0) throw ConfigError("shift config: tokens must be positive");
        return std::max(alpha_floor, alpha_base * double(tokens) / double(reference_token_count));
    }
};

// t <- alpha*t / (1 + (alpha-1)*t). Monotone bijection of [0,1] fixing the
// endpoints; alpha = 1 is the identity and 1/alpha gives the inverse map.
// Training/inference use alpha >= 1 (the ShiftConfig floor enforces it).
inline double shift_timestep(double t, double alpha) {
    if (t < 0.0 || t > 1.0) throw ConfigError("shift_timestep: t outside [0,1]");
    if (alpha <= 0.0) throw ConfigError("shift_timestep: alpha must be positive");
    return alpha * t / (1.0 + (alpha - 1.0) * t);
}

// Inverse shift, used by tests: shift(shift(t, a), by 1/a semantics) == t.
inline double unshift_timestep(double t, double alpha) {
    if (t < 0.0 || t > 1.0) throw ConfigError("unshift_timestep: t outside [0,1]");
    return t / (alpha - (alpha - 1.0) * t);
}

// Draw u ~ Normal(mean, sd), squash through sigmoid, then shift by
// alpha(tokens). Result lies in (0,1).
inline double sample_timestep(Rng& rng, const ShiftConfig& cfg, int64_t tokens) {
    double u = rng.normal(cfg.logit_mean, cfg.logit_sd);
    double t0 = 1.0 / (1.0 + std::exp(-u));
    return shift_timestep(t0, cfg.alpha(tokens));
}

template <class T>
struct FlowSample {
    Tensor<T> x0;      // data latent
    Tensor<T> x1;      // standard normal noise
    double t = 0.0;
    Tensor<T> xt;      // (1-t)*x0 + t*x1
    Tensor<T> target;  // x0 - x1
};

template <class T>
FlowSample<T> make_training_pair(const Tensor<T>& x0, Rng& rng, double t) {
    if (t < 0.0 || t > 1.0) throw ConfigError("make_training_pair: t outside [0,1]");
    FlowSample<T> s;
    s.x0 = x0;
    s.x1 = Tensor<T>::randn(x0.shape(), rng);
    s.t = t;
    s.xt = add(scale(x0, static_cast<T>(1.0 - t)), scale(s.x1, static_cast<T>(t)));
    s.target = sub(x0, s.x1);
    return s;
}

// Mean squared error over all elements.
template <class T>
Tensor<T> fm_loss(const Tensor<T>& prediction, const Tensor<T>& target) {
    if (prediction.shape() != target.shape()) throw ShapeError("fm_loss: shape mismatch");
    auto d = sub(prediction, target);
    return mean(mul(d, d));
}

// Velocity field queried by the sampler: (x, t, step index from 1) -> v.
// Guidance composition wraps the raw model behind this hook.
template <class T>
using VelocityFn = std::function<Tensor<T>(const Tensor<T>& x, double t, int step)>;

// Shifted time grid t_k = shift(k/steps, alpha) for k = steps..0.
inline std::vector<double> euler_grid(int steps, double alpha) {
    if (steps < 1) throw ConfigError("euler_grid: steps must be >= 1");
    std::vector<double> ts(static_cast<size_t>(steps) + 1);
    for (int k = steps; k >= 0; --k)
        ts[static_cast<size_t>(steps - k)] = shift_timestep(double(k) / double(steps), alpha);
    return ts;
}

// One Euler update from t_cur down to t_next.
template <class T>
Tensor<T> euler_step(const Tensor<T>& x, double t_cur, double t_next, const Tensor<T>& v) {
    if (v.shape() != x.shape()) throw ShapeError("euler_step: velocity shape mismatch");
    return add(x, scale(v, static_cast<T>(t_cur - t_next)));
}

// Integrate from noise (t=1) to data (t=0) over the shifted grid.
template <class T>
Tensor<T> euler_sample(const VelocityFn<T>& velocity, const Tensor<T>& x1, int steps, double alpha) {
    auto ts = euler_grid(steps, alpha);
    Tensor<T> x = x1;
    for (int k = 0; k < steps; ++k) {
        double t_cur = ts[static_cast<size_t>(k)], t_next = ts[static_cast<size_t>(k) + 1];
        x = euler_step(x, t_cur, t_next, velocity(x, t_cur, k + 1));
    }
    return x;
}

}  // namespace vgen
