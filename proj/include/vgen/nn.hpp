#pragma once

#include <map>
#include <string>
#include <vector>

#include "vgen/rng.hpp"
#include "vgen/tensor.hpp"

namespace vgen {

// Name/shape description of a parameter, used both to allocate weights and to
// count them without allocating.
struct ParamSpec {
    std::string name;
    Shape shape;
};

inline int64_t param_count(const std::vector<ParamSpec>& specs) {
    int64_t n = 0;
    for (const auto& s : specs) n += shape_numel(s.shape);
    return n;
}

// Ordered name -> tensor registry shared by the learned modules. Iteration
// order is the sorted name order, which keeps optimizer state and manifests
// deterministic.
template <class T>
struct ParamStore {
    std::map<std::string, Tensor<T>> params;

    Tensor<T>& add(const std::string& name, Tensor<T> t) {
        auto [it, fresh] = params.emplace(name, std::move(t));
        if (!fresh) throw ConfigError("param store: duplicate parameter '" + name + "'");
        return it->second;
    }

    const Tensor<T>& get(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw ConfigError("param store: unknown parameter '" + name + "'");
        return it->second;
    }

    std::vector<Tensor<T>> all() const {
        std::vector<Tensor<T>> v;
        v.reserve(params.size());
        for (const auto& [k, t] : params) v.push_back(t);
        return v;
    }

    void zero_grad() {
        for (auto& [k, t] : params) t.zero_grad();
    }

    // Inference mode: stop recording tapes through these parameters.
    void freeze() {
        for (auto& [k, t] : params) {
            t.node()->requires_grad = false;
            t.node()->grad.clear();
        }
    }

    int64_t count() const {
        int64_t n = 0;
        for (const auto& [k, t] : params) n += t.numel();
        return n;
    }
};

enum class Init { normal, zero, identity };

// Allocates W [in,out] and b [out] under `prefix`. identity requires square W.
template <class T>
void add_linear(ParamStore<T>& store, const std::string& prefix, int64_t in, int64_t out, Rng& rng,
                Init init = Init::normal, T stddev = T(0.02)) {
    Tensor<T> w;
    switch (init) {
        case Init::normal:
            w = Tensor<T>::randn({in, out}, rng, stddev, true);
            break;
        case Init::zero:
            w = Tensor<T>::zeros({in, out}, true);
            break;
        case Init::identity: {
            if (in != out) throw ConfigError("identity init needs square weight: " + prefix);
            std::vector<T> d(static_cast<size_t>(in * out), T(0));
            for (int64_t i = 0; i < in; ++i) d[i * out + i] = T(1);
            w = Tensor<T>::from({in, out}, std::move(d), true);
            break;
        }
    }
    store.add(prefix + ".w", std::move(w));
    store.add(prefix + ".b", Tensor<T>::zeros({out}, true));
}

inline void spec_linear(std::vector<ParamSpec>& specs, const std::string& prefix, int64_t in, int64_t out) {
    specs.push_back({prefix + ".w", {in, out}});
    specs.push_back({prefix + ".b", {out}});
}

// y = x @ W + b for x [.., in].
template <class T>
Tensor<T> linear(const ParamStore<T>& store, const std::string& prefix, const Tensor<T>& x) {
    return add(matmul(x, store.get(prefix + ".w")), store.get(prefix + ".b"));
}

// Exact softmax attention over one sequence: q,k,v are [n, dim] with `heads`
// heads. Returns [n, dim].
template <class T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int64_t heads) {
    int64_t n = q.dim(0), dim = q.dim(1);
    if (dim % heads != 0) throw ShapeError("attention: dim not divisible by heads");
    int64_t hd = dim / heads;
    auto split_heads = [&](const Tensor<T>& x) {
        return permute(reshape(x, {x.dim(0), heads, hd}), {1, 0, 2});  // [heads, n, hd]
    };
    auto qh = split_heads(q), kh = split_heads(k), vh = split_heads(v);
    auto scores = scale(matmul(qh, permute(kh, {0, 2, 1})), static_cast<T>(1.0 / std::sqrt(double(hd))));
    auto attn = softmax(scores);
    auto out = matmul(attn, vh);                                    // [heads, n, hd]
    return reshape(permute(out, {1, 0, 2}), {n, dim});
}

// Pre-norm attention + MLP residual block used by the autoencoder mid stages.
// Output projections are zero-initialized so a fresh block is the identity.
template <class T>
struct AttnBlock {
    static void build(ParamStore<T>& store, const std::string& p, int64_t dim, int64_t ffn, Rng& rng) {
        add_linear(store, p + ".qkv", dim, 3 * dim, rng);
        add_linear(store, p + ".proj", dim, dim, rng, Init::zero);
        add_linear(store, p + ".mlp1", dim, ffn, rng);
        add_linear(store, p + ".mlp2", ffn, dim, rng, Init::zero);
    }

    static void specs(std::vector<ParamSpec>& out, const std::string& p, int64_t dim, int64_t ffn) {
        spec_linear(out, p + ".qkv", dim, 3 * dim);
        spec_linear(out, p + ".proj", dim, dim);
        spec_linear(out, p + ".mlp1", dim, ffn);
        spec_linear(out, p + ".mlp2", ffn, dim);
    }

    // x: [n, dim]
    static Tensor<T> forward(const ParamStore<T>& store, const std::string& p, const Tensor<T>& x,
                             int64_t heads) {
        auto h = rms_norm(x);
        auto qkv = split(linear(store, p + ".qkv", h), 1, {x.dim(1), x.dim(1), x.dim(1)});
        auto attn_out = attention(qkv[0], qkv[1], qkv[2], heads);
        auto y = add(x, linear(store, p + ".proj", attn_out));
        auto m = linear(store, p + ".mlp2", silu(linear(store, p + ".mlp1", rms_norm(y))));
        return add(y, m);
    }
};

}  // namespace vgen
