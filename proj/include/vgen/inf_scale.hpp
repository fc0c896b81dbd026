#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vgen/datapipe.hpp"
#include "vgen/flow_match.hpp"
#include "vgen/rng.hpp"

// Inference-time scaling: at selected denoising steps, branch the state into
// candidates by controlled noise injection, partially denoise each, score the
// decoded candidates with verifier proxies, and continue from the winner.

namespace vgen {

// Decoded pixel-space video, values in [0,1], layout [t][c][h][w].
struct PixelVideo {
    int64_t frames = 0, height = 0, width = 0, channels = 0;
    std::vector<double> v;

    double at(int64_t t, int64_t c, int64_t y, int64_t x) const {
        return v[size_t(((t * channels + c) * height + y) * width + x)];
    }
};

// (c,t,h,w) tensor in [-1,1] -> PixelVideo in [0,1].
template <class T>
PixelVideo tensor_to_pixels(const Tensor<T>& t) {
    if (t.rank() != 4) throw ShapeError("tensor_to_pixels: expected (c,t,h,w)");
    PixelVideo p;
    p.channels = t.dim(0);
    p.frames = t.dim(1);
    p.height = t.dim(2);
    p.width = t.dim(3);
    p.v.resize(t.values().size());
    for (int64_t c = 0; c < p.channels; ++c)
        for (int64_t f = 0; f < p.frames; ++f)
            for (int64_t y = 0; y < p.height; ++y)
                for (int64_t x = 0; x < p.width; ++x) {
                    double val = t.values()[size_t(((c * p.frames + f) * p.height + y) * p.width + x)];
                    p.v[size_t(((f * p.channels + c) * p.height + y) * p.width + x)] =
                        std::clamp((val + 1.0) / 2.0, 0.0, 1.0);
                }
    return p;
}

// Toy decode hook: squashes a raw latent through a sigmoid and reads it as
// pixels directly. Real pipelines decode through the autoencoder instead.
template <class T>
PixelVideo latent_as_pixels(const Tensor<T>& state) {
    if (state.rank() != 4) throw ShapeError("latent_as_pixels: expected (c,t,h,w)");
    PixelVideo p;
    p.channels = state.dim(0);
    p.frames = state.dim(1);
    p.height = state.dim(2);
    p.width = state.dim(3);
    p.v.resize(state.values().size());
    for (int64_t c = 0; c < p.channels; ++c)
        for (int64_t f = 0; f < p.frames; ++f)
            for (int64_t y = 0; y < p.height; ++y)
                for (int64_t x = 0; x < p.width; ++x) {
                    double val = state.values()[size_t(((c * p.frames + f) * p.height + y) * p.width + x)];
                    p.v[size_t(((f * p.channels + c) * p.height + y) * p.width + x)] =
                        1.0 / (1.0 + std::exp(-val));
                }
    return p;
}

// ---------------------------------------------------------------------------
// verifiers
// ---------------------------------------------------------------------------

struct VerifierWeights {
    double subject_consistency = 1.0;
    double background_consistency = 1.0;
    double motion_smoothness = 1.0;
    double dynamic_degree = 1.0;
    double aesthetic_quality = 1.0;
    double imaging_quality = 1.0;

    double sum() const {
        return subject_consistency + background_consistency + motion_smoothness + dynamic_degree +
               aesthetic_quality + imaging_quality;
    }

    static VerifierWeights one_hot_motion_smoothness() {
        return {0.0, 0.0, 1.0, 0.0, 0.0, 0.0};
    }
};

struct VerifierScore {
    double subject_consistency = 0.0;
    double background_consistency = 0.0;
    double motion_smoothness = 0.0;
    double dynamic_degree = 0.0;
    double aesthetic_quality = 0.0;
    double imaging_quality = 0.0;
    double total = 0.0;
};

nlohmann::json verifier_score_to_json(const VerifierScore& s);

// Built-in proxy metrics, all in [0,1].
VerifierScore score_candidate(const PixelVideo& video, const VerifierWeights& weights);

struct VerifyResult {
    std::vector<VerifierScore> scores;
    int argmax = 0;  // ties resolved toward the lowest index
};

VerifyResult verify_candidates(const std::vector<PixelVideo>& candidates, const VerifierWeights& weights);

// ---------------------------------------------------------------------------
// branching search
// ---------------------------------------------------------------------------

struct ScalingConfig {
    std::vector<int> injection_steps;  // 1-based denoising step indices
    int seeds = 1;
    int variations = 1;                // V candidates per injection
    int lookahead_depth = 2;           // partial denoising steps before scoring
    double noise_scale = 0.0;          // <= 0 -> 0.1 * stddev(state)
    VerifierWeights weights;
    bool continue_from_lookahead = false;

    void validate(int total_steps) const {
        if (seeds < 1 || variations < 1 || lookahead_depth < 1)
            throw ConfigError("scaling config: seeds, variations and lookahead must be >= 1");
        if (weights.sum() <= 0.0) throw ConfigError("scaling config: verifier weights must sum > 0");
        for (int s : injection_steps)
            if (s < 1 || s > total_steps)
                throw ConfigError("scaling config: injection step outside [1, total_steps]");
    }
};

// Candidate 0 is the unmodified state; candidates 1..V-1 add zero-mean
// Gaussian noise at the given scale. Deterministic under the rng.
template <class T>
std::vector<Tensor<T>> branch_candidates(const Tensor<T>& state, Rng& rng, int variations,
                                         double noise_scale) {
    if (variations < 1) throw ConfigError("branch_candidates: need at least one candidate");
    std::vector<Tensor<T>> out{state};
    for (int i = 1; i < variations; ++i)
        out.push_back(add(state, Tensor<T>::randn(state.shape(), rng, static_cast<T>(noise_scale))));
    return out;
}

template <class T>
double state_stddev(const Tensor<T>& state) {
    double mean = 0.0;
    for (T v : state.values()) mean += double(v);
    mean /= double(state.numel());
    double var = 0.0;
    for (T v : state.values()) var += (double(v) - mean) * (double(v) - mean);
    return std::sqrt(var / double(state.numel()));
}

struct TraceEntry {
    int seed = 0;
    int step = 0;  // 1-based injection step; -1 for the cross-seed final selection
    std::vector<VerifierScore> scores;
    int chosen = 0;
};

nlohmann::json trace_entry_to_json(const TraceEntry& e);

template <class T>
struct ScaledSampleResult {
    Tensor<T> final_state;
    std::vector<TraceEntry> trace;
    int chosen_seed = 0;
};

// Branch-verify-select sampling. Per seed: integrate the Euler grid; at each
// injection step branch into V noise variants, look `lookahead_depth` steps
// ahead on each, decode and verify, then continue from the winner's branched
// state (or its lookahead endpoint when configured). With several seeds the
// final states are verified once more and the best seed wins.
template <class T>
ScaledSampleResult<T> scaled_sample(const VelocityFn<T>& velocity, const Tensor<T>& x1, int steps,
                                    double alpha, const ScalingConfig& cfg,
                                    const std::function<PixelVideo(const Tensor<T>&)>& decode,
                                    Rng& rng) {
    cfg.validate(steps);
    if (!decode) throw ConfigError("scaled_sample: decode hook required");
    auto ts = euler_grid(steps, alpha);

    auto lookahead = [&](Tensor<T> y, int from_step_index, int depth) {
        int k = from_step_index;
        for (int j = 0; j < depth && k < steps; ++j, ++k)
            y = euler_step(y, ts[size_t(k)], ts[size_t(k) + 1], velocity(y, ts[size_t(k)], k + 1));
        return std::pair<Tensor<T>, int>(y, k);
    };

    ScaledSampleResult<T> result;
    std::vector<Tensor<T>> finals;
    for (int seed = 0; seed < cfg.seeds; ++seed) {
        Rng seed_rng = rng.substream("scale-seed-" + std::to_string(seed));
        Tensor<T> x = seed == 0 ? x1 : Tensor<T>::randn(x1.shape(), seed_rng);
        int k = 0;
        while (k < steps) {
            int step_1based = k + 1;
            bool inject = std::find(cfg.injection_steps.begin(), cfg.injection_steps.end(),
                                    step_1based) != cfg.injection_steps.end();
            if (inject) {
                double ns = cfg.noise_scale > 0.0 ? cfg.noise_scale : 0.1 * state_stddev(x);
                Rng branch_rng = seed_rng.substream("inject-" + std::to_string(step_1based));
                auto candidates = branch_candidates(x, branch_rng, cfg.variations, ns);
                std::vector<PixelVideo> decoded;
                std::vector<std::pair<Tensor<T>, int>> ends;
                for (const auto& cand : candidates) {
                    auto end = lookahead(cand, k, cfg.lookahead_depth);
                    decoded.push_back(decode(end.first));
                    ends.push_back(std::move(end));
                }
                auto verdict = verify_candidates(decoded, cfg.weights);
                result.trace.push_back({seed, step_1based, verdict.scores, verdict.argmax});
                if (cfg.continue_from_lookahead) {
                    x = ends[size_t(verdict.argmax)].first;
                    k = ends[size_t(verdict.argmax)].second;
                    continue;
                }
                x = candidates[size_t(verdict.argmax)];
            }
            x = euler_step(x, ts[size_t(k)], ts[size_t(k) + 1], velocity(x, ts[size_t(k)], k + 1));
            ++k;
        }
        finals.push_back(std::move(x));
    }

    if (cfg.seeds > 1) {
        std::vector<PixelVideo> decoded;
        for (const auto& f : finals) decoded.push_back(decode(f));
        auto verdict = verify_candidates(decoded, cfg.weights);
        result.trace.push_back({-1, -1, verdict.scores, verdict.argmax});
        result.chosen_seed = verdict.argmax;
    }
    result.final_state = finals[size_t(result.chosen_seed)];
    return result;
}

// Closed-form model-evaluation count:
// seeds * (total_steps + |injections| * (V-1) * depth) * evals_per_guided_step.
int64_t scaling_cost(const ScalingConfig& cfg, int total_steps, int evals_per_guided_step = 3);

}  // namespace vgen
