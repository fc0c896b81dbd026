#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "vgen/rng.hpp"
#include "vgen/tensor.hpp"

// Image/video conditioning by channel concatenation. The noisy latent keeps
// its k channels untouched; k condition channels (values on conditioned
// frames, zeros elsewhere) and one binary mask channel are appended, growing
// the input from k to 2k+1 channels.

namespace vgen {

template <class T>
struct ConditionSpec {
    std::vector<int64_t> frame_indices;        // conditioned latent-frame indices
    std::optional<Tensor<T>> latent;           // (k, |frame_indices|, h, w)
    double dropout = 0.125;

    bool empty() const { return frame_indices.empty(); }

    static ConditionSpec none(double dropout_ = 0.125) {
        ConditionSpec s;
        s.dropout = dropout_;
        return s;
    }

    // First-frame image conditioning.
    static ConditionSpec first_frame(Tensor<T> encoded, double dropout_ = 0.125) {
        ConditionSpec s;
        s.frame_indices = {0};
        s.latent = std::move(encoded);
        s.dropout = dropout_;
        return s;
    }
};

// (k,t,h,w) noisy latent -> (2k+1,t,h,w) model input:
// [noisy (k) | condition (k) | mask (1)].
template <class T>
Tensor<T> build_condition_input(const Tensor<T>& noisy, const ConditionSpec<T>& spec) {
    if (noisy.rank() != 4) throw ShapeError("condition: noisy latent must be (k,t,h,w)");
    int64_t k = noisy.dim(0), t = noisy.dim(1), h = noisy.dim(2), w = noisy.dim(3);
    if (spec.dropout < 0.0 || spec.dropout > 1.0) throw ConfigError("condition: dropout outside [0,1]");
    for (int64_t idx : spec.frame_indices)
        if (idx < 0 || idx >= t) throw ShapeError("condition: frame index out of range");

    std::vector<T> cond(static_cast<size_t>(k * t * h * w), T(0));
    std::vector<T> mask(static_cast<size_t>(t * h * w), T(0));
    if (!spec.frame_indices.empty()) {
        if (!spec.latent.has_value()) throw ShapeError("condition: conditioned frames without a latent");
        const auto& lat = *spec.latent;
        int64_t n = static_cast<int64_t>(spec.frame_indices.size());
        if (lat.rank() != 4 || lat.dim(0) != k || lat.dim(1) != n || lat.dim(2) != h || lat.dim(3) != w)
            throw ShapeError("condition: latent must be (k, n_frames, h, w) over the conditioned frames");
        for (int64_t ci = 0; ci < k; ++ci)
            for (int64_t fi = 0; fi < n; ++fi) {
                int64_t dst_f = spec.frame_indices[static_cast<size_t>(fi)];
                const T* src = lat.values().data() + (ci * n + fi) * h * w;
                std::copy_n(src, h * w, cond.data() + (ci * t + dst_f) * h * w);
            }
        for (int64_t idx : spec.frame_indices)
            std::fill_n(mask.data() + idx * h * w, h * w, T(1));
    }
    auto cond_t = Tensor<T>::from({k, t, h, w}, std::move(cond));
    auto mask_t = Tensor<T>::from({1, t, h, w}, std::move(mask));
    return concat<T>({noisy, cond_t, mask_t}, 0);
}

// With probability spec.dropout the condition is dropped, reducing the task
// to T2V (all-zero condition block). Deterministic under a seeded rng.
template <class T>
ConditionSpec<T> apply_condition_dropout(const ConditionSpec<T>& spec, Rng& rng) {
    if (spec.dropout < 0.0 || spec.dropout > 1.0) throw ConfigError("condition: dropout outside [0,1]");
    if (rng.uniform() < spec.dropout) return ConditionSpec<T>::none(spec.dropout);
    return spec;
}

// Appends " motion score: <nearest-int>." to the caption.
inline std::string append_motion_score(const std::string& caption, double score) {
    if (!std::isfinite(score) || score < 0.0)
        throw ConfigError("append_motion_score: score must be finite and >= 0");
    return caption + " motion score: " + std::to_string(static_cast<long long>(std::llround(score))) + ".";
}

}  // namespace vgen
