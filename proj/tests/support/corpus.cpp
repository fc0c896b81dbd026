#include "support/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace vgen::testsupport {

namespace {

constexpr double kPi = 3.14159265358979323846;

// drifting 2-D sinusoid texture with per-frame sensor noise
void paint_sinusoid(RawVideo& v, Rng& rng, double drift_per_frame, double noise_sd,
                    bool fresh_noise_each_frame) {
    std::vector<double> frozen;
    if (!fresh_noise_each_frame) {
        frozen.resize(size_t(v.height) * v.width);
        for (auto& n : frozen) n = rng.normal(0.0, noise_sd);
    }
    for (uint32_t t = 0; t < v.frames; ++t)
        for (uint32_t y = 0; y < v.height; ++y)
            for (uint32_t x = 0; x < v.width; ++x) {
                double phase = (double(x) + drift_per_frame * t) * 2.0 * kPi / 16.0;
                double base = 127.0 + 60.0 * std::sin(phase) * std::sin(double(y) * 2.0 * kPi / 16.0);
                double n = fresh_noise_each_frame ? rng.normal(0.0, noise_sd)
                                                  : frozen[size_t(y) * v.width + x];
                double val = std::clamp(base + n, 0.0, 230.0);  // keep clear of the OCR band
                for (uint32_t c = 0; c < v.channels; ++c)
                    v.at(t, c, y, x) = uint8_t(std::lround(std::clamp(val - 10.0 * c, 0.0, 230.0)));
            }
}

}  // namespace

RawVideo gen_clean_clip(Rng& rng, uint32_t frames, uint32_t size, uint32_t fps) {
    RawVideo v = make_raw_video(frames, size, size, 3, fps);
    paint_sinusoid(v, rng, 1.0, 8.0, true);
    return v;
}

RawVideo gen_blurry_clip(Rng& rng, uint32_t frames, uint32_t size, uint32_t fps) {
    // slow wide gradient, no texture: near-zero Laplacian response
    RawVideo v = make_raw_video(frames, size, size, 3, fps);
    double base = rng.uniform(80.0, 160.0);
    for (uint32_t t = 0; t < frames; ++t)
        for (uint32_t y = 0; y < size; ++y)
            for (uint32_t x = 0; x < size; ++x) {
                double val = base + double(x) / size * 20.0 + 0.2 * t;
                for (uint32_t c = 0; c < 3; ++c)
                    v.at(t, c, y, x) = uint8_t(std::lround(std::clamp(val, 0.0, 230.0)));
            }
    return v;
}

RawVideo gen_texty_clip(Rng& rng, uint32_t frames, uint32_t size, uint32_t fps) {
    RawVideo v = gen_clean_clip(rng, frames, size, fps);
    // static near-white overlay covering ~39% of the frame
    uint32_t box = size * 20 / 32;
    for (uint32_t t = 0; t < frames; ++t)
        for (uint32_t y = 4; y < 4 + box && y < size; ++y)
            for (uint32_t x = 4; x < 4 + box && x < size; ++x)
                for (uint32_t c = 0; c < 3; ++c) v.at(t, c, y, x) = 250;
    return v;
}

RawVideo gen_jitter_clip(Rng& rng, uint32_t frames, uint32_t size, uint32_t fps) {
    // the whole frame shakes left/right by 4 px every frame
    RawVideo v = make_raw_video(frames, size, size, 3, fps);
    Rng noise = rng.substream("jitter-noise");
    for (uint32_t t = 0; t < frames; ++t) {
        int64_t dx = (t % 2 == 0) ? 0 : 4;
        for (uint32_t y = 0; y < size; ++y)
            for (uint32_t x = 0; x < size; ++x) {
                double phase = double(int64_t(x) + dx) * 2.0 * kPi / 16.0;
                double base = 127.0 + 60.0 * std::sin(phase) * std::sin(double(y) * 2.0 * kPi / 16.0);
                double val = std::clamp(base + noise.normal(0.0, 4.0), 0.0, 230.0);
                for (uint32_t c = 0; c < 3; ++c)
                    v.at(t, c, y, x) = uint8_t(std::lround(std::clamp(val - 5.0 * c, 0.0, 230.0)));
            }
    }
    return v;
}

RawVideo gen_static_clip(Rng& rng, uint32_t frames, uint32_t size, uint32_t fps) {
    // frozen textured frame repeated: motion and jitter exactly zero
    RawVideo v = make_raw_video(frames, size, size, 3, fps);
    paint_sinusoid(v, rng, 0.0, 8.0, false);
    return v;
}

RawVideo gen_noise_clip(Rng& rng, uint32_t frames, uint32_t size, uint32_t fps) {
    // independent heavy noise per frame: extreme motion
    RawVideo v = make_raw_video(frames, size, size, 3, fps);
    for (uint32_t t = 0; t < frames; ++t)
        for (uint32_t y = 0; y < size; ++y)
            for (uint32_t x = 0; x < size; ++x) {
                double val = std::clamp(127.0 + rng.normal(0.0, 90.0), 0.0, 230.0);
                for (uint32_t c = 0; c < 3; ++c) v.at(t, c, y, x) = uint8_t(std::lround(val));
            }
    return v;
}

RawVideo gen_twotone_clip(Rng& rng, uint32_t frames, uint32_t size, uint32_t fps) {
    // two flat tones with a moving boundary: very low luminance entropy
    RawVideo v = make_raw_video(frames, size, size, 3, fps);
    (void)rng;
    for (uint32_t t = 0; t < frames; ++t) {
        uint32_t edge = (size / 4 + t) % size;
        for (uint32_t y = 0; y < size; ++y)
            for (uint32_t x = 0; x < size; ++x) {
                uint8_t val = x < edge ? 40 : 200;
                for (uint32_t c = 0; c < 3; ++c) v.at(t, c, y, x) = val;
            }
    }
    return v;
}

SyntheticCorpus make_synthetic_corpus(const std::string& dir, uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    Rng rng(seed);

    SyntheticCorpus corpus;
    corpus.dir = dir;
    corpus.metadata_path = (fs::path(dir) / "metadata.jsonl").string();

    // thresholds sit with wide margins around the generator classes; the
    // scene threshold is raised so the heavy-noise plants survive
    // segmentation and reach the motion filter
    corpus.config.scene_threshold = 0.5;
    corpus.config.preprocess.max_long_side = 64;  // desk-scale stand-in for 1080
    corpus.config.tiers = {
        {2.0, 0.02, 3.0, 50.0, 0.30, 1.10},
        {2.2, 0.03, 2.8, 60.0, 0.25, 1.00},
        {2.5, 0.05, 2.6, 70.0, 0.20, 0.90},
    };

    std::ofstream meta(corpus.metadata_path);
    auto emit = [&](const std::string& id, const RawVideo& v, double bpp,
                    const std::string& profile, const std::string& caption) {
        std::string file = id + ".rvc";
        write_raw_video((fs::path(dir) / file).string(), v);
        nlohmann::json j{{"id", id},          {"path", file}, {"caption", caption},
                         {"codec_profile", profile}, {"bpp", bpp}};
        meta << j.dump() << "\n";
        corpus.all_ids.push_back(id);
    };

    const char* captions[] = {
        "a person walking through a sunlit park with trees in the background",
        "waves rolling onto a sandy beach under a cloudy sky at dusk",
        "a red car driving down a quiet street lined with old buildings",
        "two birds perched on a wire against a pale morning sky",
        "a close up of hands kneading dough on a wooden kitchen table",
    };

    // clean clips: pass admission and every tier
    for (int i = 0; i < 20; ++i) {
        std::string id = "clean" + std::to_string(i);
        uint32_t frames = uint32_t(20 * (3 + i % 5));  // 3..7 s at 20 fps
        auto v = gen_clean_clip(rng, frames, 32, 20);
        emit(id, v, 0.10, "High", captions[i % 5]);
        corpus.clean_ids.push_back(id);
    }

    auto plant = [&](const std::string& base, int count, auto&& gen, const std::string& caption) {
        for (int i = 0; i < count; ++i) {
            std::string id = base + std::to_string(i);
            auto v = gen(rng, uint32_t(20 * (3 + i % 4)), 32u, 20u);
            emit(id, v, 0.10, "High", caption);
            corpus.score_defect_ids.push_back(id);
        }
    };
    plant("blur", 6, [](Rng& r, uint32_t f, uint32_t s, uint32_t fp) { return gen_blurry_clip(r, f, s, fp); },
          "an out of focus shot of a wall");
    plant("text", 6, [](Rng& r, uint32_t f, uint32_t s, uint32_t fp) { return gen_texty_clip(r, f, s, fp); },
          "a scene covered by a large subtitle overlay");
    plant("jit", 6, [](Rng& r, uint32_t f, uint32_t s, uint32_t fp) { return gen_jitter_clip(r, f, s, fp); },
          "handheld footage shaking rapidly");
    plant("static", 5, [](Rng& r, uint32_t f, uint32_t s, uint32_t fp) { return gen_static_clip(r, f, s, fp); },
          "a completely frozen frame of a pattern");
    plant("noise", 5, [](Rng& r, uint32_t f, uint32_t s, uint32_t fp) { return gen_noise_clip(r, f, s, fp); },
          "analog static filling the whole screen");
    plant("aes", 4, [](Rng& r, uint32_t f, uint32_t s, uint32_t fp) { return gen_twotone_clip(r, f, s, fp); },
          "a flat banner of two colors");

    // preprocessing rejects
    {
        Rng g = rng.substream("rejects");
        auto mk = [&](const std::string& id, uint32_t frames, uint32_t h, uint32_t w, uint32_t fps,
                      double bpp, const std::string& profile) {
            RawVideo v = make_raw_video(frames, h, w, 3, fps);
            Rng local = g.substream(id);
            for (auto& b : v.data) b = uint8_t(local.uniform_int(0, 230));
            emit(id, v, bpp, profile, "rejected material");
            corpus.preprocess_reject_ids.push_back(id);
        };
        mk("rej-dur0", 30, 32, 32, 20, 0.10, "High");        // 1.5 s
        mk("rej-bpp0", 60, 32, 32, 20, 0.01, "High");
        mk("rej-bpp1", 60, 32, 32, 20, 0.005, "High");
        mk("rej-fps0", 36, 32, 32, 12, 0.10, "High");        // 3 s at 12 fps
        mk("rej-aspect0", 60, 10, 40, 20, 0.10, "High");     // aspect 0.25
        mk("rej-profile0", 60, 32, 32, 20, 0.10, "Constrained Baseline");
        mk("rej-fpscap0", 120, 32, 32, 40, 0.10, "High");    // 40 fps
        mk("rej-res0", 60, 40, 80, 20, 0.10, "High");        // long side over the cap
    }

    std::sort(corpus.score_defect_ids.begin(), corpus.score_defect_ids.end());
    std::sort(corpus.clean_ids.begin(), corpus.clean_ids.end());
    std::sort(corpus.preprocess_reject_ids.begin(), corpus.preprocess_reject_ids.end());
    return corpus;
}

}  // namespace vgen::testsupport
