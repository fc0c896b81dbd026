#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vgen/rng.hpp"
#include "vgen/tensor.hpp"

// Central finite-difference gradient checking for the registered primitives.
// Always runs in 64-bit; relative error is |analytic - numeric| divided by
// max(1, |analytic|, |numeric|).

namespace vgen {

struct GradCheckReport {
    std::string op;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

namespace gradcheck_detail {

// An op under test: maps a list of input tensors to one output tensor.
using OpFn = std::function<TensorD(const std::vector<TensorD>&)>;

struct Registered {
    std::vector<Shape> default_shapes;
    OpFn fn;
};

inline std::map<std::string, Registered>& registry() {
    static std::map<std::string, Registered> r = [] {
        std::map<std::string, Registered> m;
        m["matmul"] = {{{3, 3}, {3, 3}}, [](const std::vector<TensorD>& in) { return matmul(in[0], in[1]); }};
        m["matmul_batched"] = {{{2, 3, 4}, {2, 4, 2}},
                               [](const std::vector<TensorD>& in) { return matmul(in[0], in[1]); }};
        m["add"] = {{{2, 5}, {2, 5}}, [](const std::vector<TensorD>& in) { return add(in[0], in[1]); }};
        m["add_broadcast"] = {{{3, 4}, {1, 4}}, [](const std::vector<TensorD>& in) { return add(in[0], in[1]); }};
        m["mul"] = {{{2, 5}, {2, 5}}, [](const std::vector<TensorD>& in) { return mul(in[0], in[1]); }};
        m["mul_broadcast"] = {{{3, 4}, {1, 4}}, [](const std::vector<TensorD>& in) { return mul(in[0], in[1]); }};
        m["scale"] = {{{6}}, [](const std::vector<TensorD>& in) { return scale(in[0], 1.7); }};
        m["silu"] = {{{7}}, [](const std::vector<TensorD>& in) { return silu(in[0]); }};
        m["gelu"] = {{{7}}, [](const std::vector<TensorD>& in) { return gelu(in[0]); }};
        m["softmax"] = {{{4}}, [](const std::vector<TensorD>& in) { return softmax(in[0]); }};
        m["softmax_rows"] = {{{3, 5}}, [](const std::vector<TensorD>& in) { return softmax(in[0]); }};
        m["rms_norm"] = {{{2, 8}}, [](const std::vector<TensorD>& in) { return rms_norm(in[0]); }};
        m["reshape"] = {{{2, 6}}, [](const std::vector<TensorD>& in) { return reshape(in[0], {3, 4}); }};
        m["permute"] = {{{2, 3, 4}},
                        [](const std::vector<TensorD>& in) { return permute(in[0], {2, 0, 1}); }};
        m["concat"] = {{{2, 3}, {2, 2}},
                       [](const std::vector<TensorD>& in) { return concat<double>({in[0], in[1]}, 1); }};
        m["split"] = {{{2, 6}}, [](const std::vector<TensorD>& in) {
                          auto parts = split(in[0], 1, {2, 4});
                          return add(sum(parts[0]), scale(sum(mul(parts[1], parts[1])), 0.5));
                      }};
        m["sum"] = {{{3, 3}}, [](const std::vector<TensorD>& in) { return sum(in[0]); }};
        m["mean"] = {{{3, 3}}, [](const std::vector<TensorD>& in) { return mean(in[0]); }};
        return m;
    }();
    return r;
}

// Scalar probe of the op output: sum(output * R) with a fixed random R, so
// every output coordinate contributes to the checked Jacobian.
inline double probe(const gradcheck_detail::OpFn& fn, const std::vector<TensorD>& inputs,
                    const std::vector<double>& rvec) {
    TensorD out = fn(inputs);
    double s = 0.0;
    const auto& ov = out.values();
    for (size_t i = 0; i < ov.size(); ++i) s += ov[i] * rvec[i];
    return s;
}

}  // namespace gradcheck_detail

inline std::vector<std::string> registered_grad_ops() {
    std::vector<std::string> names;
    for (const auto& [k, v] : gradcheck_detail::registry()) names.push_back(k);
    return names;
}

// Checks analytic gradients of a registered op against central differences on
// random inputs in [-1, 1]. Throws ConfigError for unknown ops.
inline GradCheckReport grad_check(const std::string& op_name, const std::vector<Shape>& shapes,
                                  double tolerance, uint64_t seed = 7) {
    auto& reg = gradcheck_detail::registry();
    auto it = reg.find(op_name);
    if (it == reg.end()) throw ConfigError("grad_check: unknown op '" + op_name + "'");
    const auto& shp = shapes.empty() ? it->second.default_shapes : shapes;

    Rng rng(seed);
    std::vector<TensorD> inputs;
    for (const auto& s : shp) {
        std::vector<double> d(static_cast<size_t>(shape_numel(s)));
        for (auto& x : d) x = rng.uniform(-1.0, 1.0);
        inputs.push_back(TensorD::from(s, std::move(d), true));
    }
    TensorD out0 = it->second.fn(inputs);
    std::vector<double> rvec(out0.values().size());
    for (auto& x : rvec) x = rng.uniform(-1.0, 1.0);

    // analytic
    {
        TensorD rt = TensorD::from(out0.shape(), rvec, false);
        TensorD loss = sum(mul(it->second.fn(inputs), rt));
        backward(loss);
    }

    const double h = 1e-6;
    double max_rel = 0.0;
    for (size_t t = 0; t < inputs.size(); ++t) {
        auto node = inputs[t].node();
        for (size_t j = 0; j < node->data.size(); ++j) {
            double orig = node->data[j];
            node->data[j] = orig + h;
            double fp = gradcheck_detail::probe(it->second.fn, inputs, rvec);
            node->data[j] = orig - h;
            double fm = gradcheck_detail::probe(it->second.fn, inputs, rvec);
            node->data[j] = orig;
            double num = (fp - fm) / (2.0 * h);
            double ana = node->grad[j];
            double rel = std::abs(ana - num) / std::max({1.0, std::abs(ana), std::abs(num)});
            max_rel = std::max(max_rel, rel);
        }
    }
    GradCheckReport rep;
    rep.op = op_name;
    rep.max_rel_err = max_rel;
    rep.tolerance = tolerance;
    rep.passed = max_rel < tolerance;
    return rep;
}

}  // namespace vgen
