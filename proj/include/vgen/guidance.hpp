#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "vgen/tensor.hpp"

// Classifier-free guidance composition: single-scale, decoupled image/text
// scales, late-step oscillation of the image scale, and dynamic scaling of
// the image scale over latent frames and denoising steps.

namespace vgen {

enum class GuidanceMode { single, decoupled };
enum class DynamicScaling { off, linear };

struct GuidanceConfig {
    double g_img = 3.0;
    double g_txt = 7.5;
    GuidanceMode mode = GuidanceMode::decoupled;
    bool oscillation = false;
    int warmup_steps = 10;       // oscillation stays silent through these steps
    DynamicScaling dynamic = DynamicScaling::off;
    int total_steps = 50;
    int64_t latent_frames = 1;

    void validate() const {
        if (!(g_img >= 0.0) || !(g_txt >= 0.0) || !std::isfinite(g_img) || !std::isfinite(g_txt))
            throw ConfigError("guidance: scales must be finite and >= 0");
        if (total_steps < 1) throw ConfigError("guidance: total_steps must be >= 1");
        if (warmup_steps < 0 || warmup_steps > total_steps)
            throw ConfigError("guidance: warmup_steps outside [0, total_steps]");
        if (latent_frames < 1) throw ConfigError("guidance: latent_frames must be >= 1");
    }

    int evaluations_per_step() const { return mode == GuidanceMode::decoupled ? 3 : 2; }
};

// v = v_uncond + g_img*(v_img - v_uncond) + g_txt*(v_full - v_img).
// The image scale may be a per-frame tensor broadcast as (1,t,1,1).
template <class T>
Tensor<T> cfg_decoupled(const Tensor<T>& v_uncond, const Tensor<T>& v_img, const Tensor<T>& v_full,
                        const Tensor<T>& g_img_eff, T g_txt) {
    if (v_uncond.shape() != v_img.shape() || v_img.shape() != v_full.shape())
        throw ShapeError("cfg_decoupled: velocity shape mismatch");
    auto img_term = mul(g_img_eff, sub(v_img, v_uncond));
    auto txt_term = scale(sub(v_full, v_img), g_txt);
    return add(add(v_uncond, img_term), txt_term);
}

template <class T>
Tensor<T> cfg_decoupled(const Tensor<T>& v_uncond, const Tensor<T>& v_img, const Tensor<T>& v_full,
                        T g_img, T g_txt) {
    return cfg_decoupled(v_uncond, v_img, v_full, Tensor<T>::scalar(g_img), g_txt);
}

// v = v_uncond + g*(v_full - v_uncond).
template <class T>
Tensor<T> cfg_single(const Tensor<T>& v_uncond, const Tensor<T>& v_full, T g) {
    if (v_uncond.shape() != v_full.shape()) throw ShapeError("cfg_single: velocity shape mismatch");
    return add(v_uncond, scale(sub(v_full, v_uncond), g));
}

// Effective image guidance for a (1-based) step and a latent frame index.
// dynamic=linear: base = 1 + (g_img-1) * frame_frac * (1 - step_frac), so the
// scale grows toward later frames and decays toward later steps.
// oscillation: past the warmup window even steps drop to 1, odd steps keep
// the base value.
inline double image_guidance_schedule(const GuidanceConfig& cfg, int step, int64_t frame_index,
                                      int64_t frame_count, int step_count) {
    cfg.validate();
    if (step < 1 || step > step_count) throw ConfigError("guidance schedule: step out of range");
    if (frame_index < 0 || frame_index >= frame_count)
        throw ConfigError("guidance schedule: frame index out of range");
    double base = cfg.g_img;
    if (cfg.dynamic == DynamicScaling::linear) {
        double ff = frame_count > 1 ? double(frame_index) / double(frame_count - 1) : 0.0;
        double sf = step_count > 1 ? 1.0 - double(step - 1) / double(step_count - 1) : 1.0;
        base = 1.0 + (cfg.g_img - 1.0) * ff * sf;
    }
    if (cfg.oscillation && step > cfg.warmup_steps && step % 2 == 0) return 1.0;
    return base;
}

// Per-frame image scales for one step, shaped (1, frames, 1, 1) for broadcast
// along the latent temporal axis.
template <class T>
Tensor<T> image_guidance_frame_scales(const GuidanceConfig& cfg, int step) {
    std::vector<T> v(static_cast<size_t>(cfg.latent_frames));
    for (int64_t f = 0; f < cfg.latent_frames; ++f)
        v[static_cast<size_t>(f)] =
            static_cast<T>(image_guidance_schedule(cfg, step, f, cfg.latent_frames, cfg.total_steps));
    return Tensor<T>::from({1, cfg.latent_frames, 1, 1}, std::move(v));
}

// One conditional branch evaluation: flags select whether the text prompt and
// the image condition are active.
template <class T>
using BranchEval = std::function<Tensor<T>(bool use_text, bool use_image)>;

// Composes the guided velocity for one denoising step. Decoupled mode
// evaluates v(no text, no image), v(no text, image), v(text, image) and
// applies the per-frame image schedule; single mode evaluates two branches.
template <class T>
Tensor<T> guided_velocity(const BranchEval<T>& eval, const GuidanceConfig& cfg, int step) {
    cfg.validate();
    if (cfg.mode == GuidanceMode::single) {
        auto v_uncond = eval(false, false);
        auto v_full = eval(true, true);
        double g = image_guidance_schedule(cfg, step, cfg.latent_frames - 1, cfg.latent_frames,
                                           cfg.total_steps);
        return cfg_single(v_uncond, v_full, static_cast<T>(g));
    }
    auto v_uncond = eval(false, false);
    auto v_img = eval(false, true);
    auto v_full = eval(true, true);
    auto g_frames = image_guidance_frame_scales<T>(cfg, step);
    return cfg_decoupled(v_uncond, v_img, v_full, g_frames, static_cast<T>(cfg.g_txt));
}

}  // namespace vgen
