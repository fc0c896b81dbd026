#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vgen/errors.hpp"
#include "vgen/tensor.hpp"

namespace vgen {

// AdamW with global L2 gradient-norm clipping and no weight decay.
// Defaults: betas (0.9, 0.999), eps 1e-15, clip threshold 1.
template <class T>
struct OptimizerState {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
    double clip_threshold = 1.0;
    int64_t step = 0;
    std::vector<std::vector<T>> m;  // first moments, one array per parameter
    std::vector<std::vector<T>> v;  // second moments

    static OptimizerState make(double lr_, double beta1_ = 0.9, double beta2_ = 0.999,
                               double eps_ = 1e-15, double clip_ = 1.0) {
        if (!(beta1_ > 0.0 && beta1_ < 1.0 && beta2_ > 0.0 && beta2_ < 1.0))
            throw ConfigError("adamw: betas must lie in (0,1)");
        OptimizerState s;
        s.lr = lr_;
        s.beta1 = beta1_;
        s.beta2 = beta2_;
        s.eps = eps_;
        s.clip_threshold = clip_;
        return s;
    }
};

template <class T>
double global_grad_norm(const std::vector<Tensor<T>>& params) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.requires_grad()) continue;
        for (const T& g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    return std::sqrt(sq);
}

// One optimizer step over a parameter list. Gradients are read from each
// tensor's grad slot, clipped jointly by global L2 norm, then applied with
// bias correction. Parameters are updated in place.
template <class T>
void adamw_step(std::vector<Tensor<T>>& params, OptimizerState<T>& st) {
    if (st.m.empty()) {
        st.m.resize(params.size());
        st.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            st.m[i].assign(params[i].values().size(), T(0));
            st.v[i].assign(params[i].values().size(), T(0));
        }
    }
    if (st.m.size() != params.size()) throw ShapeError("adamw: parameter list changed size");
    for (size_t i = 0; i < params.size(); ++i) {
        if (!params[i].requires_grad()) throw ShapeError("adamw: parameter without grad slot");
        if (params[i].grad().size() != st.m[i].size())
            throw ShapeError("adamw: moment/parameter shape mismatch at index " + std::to_string(i));
        for (const T& g : params[i].grad())
            if (!std::isfinite(static_cast<double>(g))) throw NumericError("adamw: non-finite gradient");
    }

    double norm = global_grad_norm(params);
    double clip_scale = 1.0;
    if (st.clip_threshold > 0.0 && norm > st.clip_threshold) clip_scale = st.clip_threshold / norm;

    st.step += 1;
    double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (size_t i = 0; i < params.size(); ++i) {
        auto node = params[i].node();
        auto& mv = st.m[i];
        auto& vv = st.v[i];
        const auto& grad = node->grad;
        for (size_t j = 0; j < grad.size(); ++j) {
            double g = static_cast<double>(grad[j]) * clip_scale;
            double m = st.beta1 * static_cast<double>(mv[j]) + (1.0 - st.beta1) * g;
            double v = st.beta2 * static_cast<double>(vv[j]) + (1.0 - st.beta2) * g * g;
            mv[j] = static_cast<T>(m);
            vv[j] = static_cast<T>(v);
            double mhat = m / bc1;
            double vhat = v / bc2;
            node->data[j] -= static_cast<T>(st.lr * mhat / (std::sqrt(vhat) + st.eps));
        }
    }
}

template <class T>
void zero_grads(std::vector<Tensor<T>>& params) {
    for (auto& p : params) p.zero_grad();
}

}  // namespace vgen
