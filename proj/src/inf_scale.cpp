#include "vgen/inf_scale.hpp"

namespace vgen {

namespace {

// flattened region pixels of one frame; center = middle half, border = rest
std::vector<double> region_pixels(const PixelVideo& p, int64_t frame, bool center) {
    int64_t y0 = p.height / 4, y1 = p.height - p.height / 4;
    int64_t x0 = p.width / 4, x1 = p.width - p.width / 4;
    std::vector<double> out;
    for (int64_t c = 0; c < p.channels; ++c)
        for (int64_t y = 0; y < p.height; ++y)
            for (int64_t x = 0; x < p.width; ++x) {
                bool inside = y >= y0 && y < y1 && x >= x0 && x < x1;
                if (inside == center) out.push_back(p.at(frame, c, y, x));
            }
    return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return na == nb ? 1.0 : 0.0;
    return dot / std::sqrt(na * nb);
}

// mean adjacent-frame cosine similarity of a region, clamped to [0,1]
double region_consistency(const PixelVideo& p, bool center) {
    if (p.frames < 2) return 1.0;
    double acc = 0.0;
    auto prev = region_pixels(p, 0, center);
    for (int64_t t = 1; t < p.frames; ++t) {
        auto cur = region_pixels(p, t, center);
        acc += cosine(prev, cur);
        prev = std::move(cur);
    }
    return std::clamp(acc / double(p.frames - 1), 0.0, 1.0);
}

std::vector<double> pixel_luma(const PixelVideo& p, int64_t frame) {
    std::vector<double> g(size_t(p.height) * p.width);
    for (int64_t y = 0; y < p.height; ++y)
        for (int64_t x = 0; x < p.width; ++x) {
            double lum;
            if (p.channels >= 3)
                lum = 0.299 * p.at(frame, 0, y, x) + 0.587 * p.at(frame, 1, y, x) +
                      0.114 * p.at(frame, 2, y, x);
            else
                lum = p.at(frame, 0, y, x);
            g[size_t(y * p.width + x)] = lum * 255.0;
        }
    return g;
}

}  // namespace

VerifierScore score_candidate(const PixelVideo& p, const VerifierWeights& w) {
    if (p.frames < 1 || p.v.empty()) throw ConfigError("score_candidate: empty video");
    VerifierScore s;

    // motion_smoothness: 1 - normalized mean squared temporal second difference
    if (p.frames >= 3) {
        size_t per_frame = size_t(p.channels) * p.height * p.width;
        double acc = 0.0;
        for (int64_t t = 1; t + 1 < p.frames; ++t)
            for (size_t i = 0; i < per_frame; ++i) {
                double d2 = p.v[size_t(t + 1) * per_frame + i] - 2.0 * p.v[size_t(t) * per_frame + i] +
                            p.v[size_t(t - 1) * per_frame + i];
                acc += d2 * d2;
            }
        acc /= double(p.frames - 2) * double(per_frame);
        s.motion_smoothness = 1.0 - std::clamp(acc / 4.0, 0.0, 1.0);
    } else {
        s.motion_smoothness = 1.0;
    }

    // dynamic_degree: normalized mean absolute first difference
    if (p.frames >= 2) {
        size_t per_frame = size_t(p.channels) * p.height * p.width;
        double acc = 0.0;
        for (int64_t t = 0; t + 1 < p.frames; ++t)
            for (size_t i = 0; i < per_frame; ++i)
                acc += std::abs(p.v[size_t(t + 1) * per_frame + i] - p.v[size_t(t) * per_frame + i]);
        s.dynamic_degree = std::clamp(acc / (double(p.frames - 1) * double(per_frame)), 0.0, 1.0);
    }

    s.subject_consistency = region_consistency(p, true);
    s.background_consistency = region_consistency(p, false);

    double aes = 0.0, img = 0.0;
    for (int64_t t = 0; t < p.frames; ++t) {
        auto g = pixel_luma(p, t);
        aes += entropy_aesthetic(g) / 10.0;
        double var = laplacian_variance(g, p.height, p.width);
        img += var / (var + 100.0);  // saturating normalization
    }
    s.aesthetic_quality = aes / double(p.frames);
    s.imaging_quality = img / double(p.frames);

    double wsum = w.sum();
    if (wsum <= 0.0) throw ConfigError("score_candidate: verifier weights must sum > 0");
    s.total = (w.subject_consistency * s.subject_consistency +
               w.background_consistency * s.background_consistency +
               w.motion_smoothness * s.motion_smoothness + w.dynamic_degree * s.dynamic_degree +
               w.aesthetic_quality * s.aesthetic_quality + w.imaging_quality * s.imaging_quality) /
              wsum;
    return s;
}

VerifyResult verify_candidates(const std::vector<PixelVideo>& candidates, const VerifierWeights& w) {
    if (candidates.empty()) throw ConfigError("verify_candidates: empty candidate list");
    VerifyResult r;
    for (const auto& c : candidates) r.scores.push_back(score_candidate(c, w));
    r.argmax = 0;
    for (size_t i = 1; i < r.scores.size(); ++i)
        if (r.scores[i].total > r.scores[size_t(r.argmax)].total) r.argmax = int(i);
    return r;
}

nlohmann::json verifier_score_to_json(const VerifierScore& s) {
    return nlohmann::json{{"subject_consistency", s.subject_consistency},
                          {"background_consistency", s.background_consistency},
                          {"motion_smoothness", s.motion_smoothness},
                          {"dynamic_degree", s.dynamic_degree},
                          {"aesthetic_quality", s.aesthetic_quality},
                          {"imaging_quality", s.imaging_quality},
                          {"total", s.total}};
}

nlohmann::json trace_entry_to_json(const TraceEntry& e) {
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& s : e.scores) scores.push_back(verifier_score_to_json(s));
    return nlohmann::json{{"seed", e.seed}, {"step", e.step}, {"scores", scores}, {"chosen", e.chosen}};
}

int64_t scaling_cost(const ScalingConfig& cfg, int total_steps, int evals_per_guided_step) {
    if (total_steps < 1) throw ConfigError("scaling_cost: total_steps must be >= 1");
    if (evals_per_guided_step < 1) throw ConfigError("scaling_cost: evals per step must be >= 1");
    cfg.validate(total_steps);
    int64_t injections = int64_t(cfg.injection_steps.size());
    return int64_t(cfg.seeds) *
           (int64_t(total_steps) + injections * int64_t(cfg.variations - 1) * int64_t(cfg.lookahead_depth)) *
           int64_t(evals_per_guided_step);
}

}  // namespace vgen
