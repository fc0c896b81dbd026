#include "vgen/datapipe.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vgen/errors.hpp"

namespace vgen {

// ---------------------------------------------------------------------------
// image helpers
// ---------------------------------------------------------------------------

std::vector<double> luma_frame(const RawVideo& v, int64_t frame) {
    std::vector<double> g(size_t(v.height) * v.width);
    for (int64_t y = 0; y < v.height; ++y)
        for (int64_t x = 0; x < v.width; ++x) {
            double lum;
            if (v.channels >= 3)
                lum = 0.299 * v.at(frame, 0, y, x) + 0.587 * v.at(frame, 1, y, x) +
                      0.114 * v.at(frame, 2, y, x);
            else
                lum = v.at(frame, 0, y, x);
            g[size_t(y * v.width + x)] = lum;
        }
    return g;
}

double laplacian_variance(const std::vector<double>& gray, int64_t height, int64_t width) {
    if (height < 3 || width < 3) return 0.0;
    std::vector<double> resp;
    resp.reserve(size_t((height - 2) * (width - 2)));
    for (int64_t y = 1; y + 1 < height; ++y)
        for (int64_t x = 1; x + 1 < width; ++x) {
            double c = gray[size_t(y * width + x)];
            double r = gray[size_t(y * width + x - 1)] + gray[size_t(y * width + x + 1)] +
                       gray[size_t((y - 1) * width + x)] + gray[size_t((y + 1) * width + x)] - 4.0 * c;
            resp.push_back(r);
        }
    double mean = 0.0;
    for (double r : resp) mean += r;
    mean /= double(resp.size());
    double var = 0.0;
    for (double r : resp) var += (r - mean) * (r - mean);
    return var / double(resp.size());
}

double entropy_aesthetic(const std::vector<double>& gray) {
    std::array<double, 256> hist{};
    for (double g : gray) {
        int bin = std::clamp(int(g), 0, 255);
        hist[size_t(bin)] += 1.0;
    }
    double n = double(gray.size());
    double entropy = 0.0;
    for (double h : hist)
        if (h > 0.0) {
            double p = h / n;
            entropy -= p * std::log2(p);
        }
    return std::clamp(entropy * 10.0 / 8.0, 0.0, 10.0);
}

double mean_abs_frame_diff(const RawVideo& v) {
    if (v.frames < 2) return 0.0;
    double acc = 0.0;
    size_t per_frame = size_t(v.channels) * v.height * v.width;
    for (int64_t t = 0; t + 1 < v.frames; ++t) {
        const uint8_t* a = v.data.data() + size_t(t) * per_frame;
        const uint8_t* b = a + per_frame;
        double s = 0.0;
        for (size_t i = 0; i < per_frame; ++i) s += std::abs(int(a[i]) - int(b[i]));
        acc += s / double(per_frame);
    }
    return acc / double(v.frames - 1) / 255.0 * 10.0;
}

// ---------------------------------------------------------------------------
// admission
// ---------------------------------------------------------------------------

AdmitResult preprocess_admit(const ClipMeta& meta, const PreprocessConfig& cfg) {
    if (meta.width <= 0 || meta.height <= 0 || meta.fps <= 0.0)
        throw ConfigError("preprocess_admit: incomplete metadata for clip '" + meta.id + "'");
    if (meta.duration_s < cfg.min_duration_s) return {false, "duration"};
    if (meta.bpp < cfg.min_bpp) return {false, "bpp"};
    if (meta.fps < cfg.min_fps) return {false, "fps"};
    double aspect = double(meta.height) / double(meta.width);
    if (!std::isfinite(aspect) || aspect < cfg.aspect_lo || aspect > cfg.aspect_hi)
        return {false, "aspect"};
    if (meta.codec_profile == cfg.banned_profile) return {false, "profile"};
    if (meta.fps > cfg.max_fps) return {false, "fps-cap"};
    if (std::max(meta.width, meta.height) > cfg.max_long_side) return {false, "resolution"};
    return {true, ""};
}

// ---------------------------------------------------------------------------
// segmentation
// ---------------------------------------------------------------------------

std::vector<std::pair<int64_t, int64_t>> segment_clips(const RawVideo& v, double scene_threshold,
                                                       double max_clip_s, double min_clip_s) {
    if (v.frames < 1) throw ConfigError("segment_clips: empty video");
    size_t per_frame = size_t(v.channels) * v.height * v.width;
    // shot boundaries where the normalized frame difference spikes
    std::vector<int64_t> cuts{0};
    for (int64_t t = 0; t + 1 < v.frames; ++t) {
        const uint8_t* a = v.data.data() + size_t(t) * per_frame;
        const uint8_t* b = a + per_frame;
        double s = 0.0;
        for (size_t i = 0; i < per_frame; ++i) s += std::abs(int(a[i]) - int(b[i]));
        if (s / double(per_frame) / 255.0 > scene_threshold) cuts.push_back(t + 1);
    }
    cuts.push_back(int64_t(v.frames));

    int64_t max_frames = int64_t(max_clip_s * v.fps);
    int64_t min_frames = int64_t(std::ceil(min_clip_s * v.fps));
    std::vector<std::pair<int64_t, int64_t>> spans;
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        int64_t begin = cuts[i], end = cuts[i + 1];
        while (end - begin > max_frames) {
            spans.push_back({begin, begin + max_frames});
            begin += max_frames;
        }
        if (end - begin >= min_frames) spans.push_back({begin, end});
    }
    return spans;
}

// ---------------------------------------------------------------------------
// scoring
// ---------------------------------------------------------------------------

ScorerSet ScorerSet::builtin() {
    ScorerSet s;
    s.aesthetic = [](const RawVideo& v, int64_t f) { return entropy_aesthetic(luma_frame(v, f)); };
    // bright-overlay proxy: one box whose area is the fraction of near-white
    // pixels, reported at full confidence
    s.ocr = [](const RawVideo& v, int64_t f) {
        auto g = luma_frame(v, f);
        size_t bright = 0;
        for (double x : g)
            if (x >= 240.0) ++bright;
        return std::vector<OcrBox>{{double(bright) / double(g.size()), 1.0}};
    };
    s.blur_variance = [](const RawVideo& v, int64_t f) {
        return laplacian_variance(luma_frame(v, f), v.height, v.width);
    };
    s.motion = [](const RawVideo& v) { return mean_abs_frame_diff(v); };
    // camera-jitter proxy: mean luma frame-to-frame change
    s.jitter = [](const RawVideo& v) {
        if (v.frames < 2) return 0.0;
        double acc = 0.0;
        auto prev = luma_frame(v, 0);
        for (int64_t t = 1; t < v.frames; ++t) {
            auto cur = luma_frame(v, t);
            double s2 = 0.0;
            for (size_t i = 0; i < cur.size(); ++i) s2 += std::abs(cur[i] - prev[i]);
            acc += s2 / double(cur.size());
            prev = std::move(cur);
        }
        return acc / double(v.frames - 1) / 255.0 * 10.0;
    };
    return s;
}

namespace {

// first / middle / last
std::array<int64_t, 3> key_frames(int64_t frames) {
    return {0, frames / 2, frames - 1};
}

// five uniformly spaced frames (repeats the last frame for short clips)
std::array<int64_t, 5> uniform5(int64_t frames) {
    std::array<int64_t, 5> out{};
    for (int i = 0; i < 5; ++i)
        out[size_t(i)] = frames == 1 ? 0 : std::min<int64_t>((i * (frames - 1)) / 4, frames - 1);
    return out;
}

}  // namespace

ClipScores score_clip(const RawVideo& v, const ScorerSet& scorers) {
    if (!scorers.aesthetic || !scorers.ocr || !scorers.blur_variance || !scorers.motion ||
        !scorers.jitter)
        throw ConfigError("score_clip: scorer set must provide all five scorers");
    if (v.frames < 1) throw ConfigError("score_clip: empty video");
    ClipScores s;
    for (int64_t f : key_frames(int64_t(v.frames))) s.aesthetic += scorers.aesthetic(v, f) / 3.0;
    s.motion = scorers.motion(v);
    double ocr = 0.0;
    for (int64_t f : uniform5(int64_t(v.frames))) {
        s.blur_variances.push_back(scorers.blur_variance(v, f));
        double frame_area = 0.0;
        for (const auto& box : scorers.ocr(v, f))
            if (box.confidence > 0.7) frame_area += box.area_frac;
        ocr += frame_area / 5.0;
    }
    s.ocr_area = ocr;
    s.jitter = scorers.jitter(v);
    return s;
}

nlohmann::json clip_record_to_json(const ClipRecord& r) {
    return nlohmann::json{{"id", r.id},
                          {"duration_s", r.duration_s},
                          {"fps", r.fps},
                          {"width", r.width},
                          {"height", r.height},
                          {"bpp", r.bpp},
                          {"codec_profile", r.codec_profile},
                          {"caption", r.caption},
                          {"aesthetic", r.scores.aesthetic},
                          {"motion", r.scores.motion},
                          {"blur_variances", r.scores.blur_variances},
                          {"ocr_area", r.scores.ocr_area},
                          {"jitter", r.scores.jitter},
                          {"tiers_passed", r.tiers_passed}};
}

ClipRecord clip_record_from_json(const nlohmann::json& j) {
    ClipRecord r;
    r.id = j.at("id").get<std::string>();
    r.duration_s = j.at("duration_s").get<double>();
    r.fps = j.at("fps").get<double>();
    r.width = j.at("width").get<int64_t>();
    r.height = j.at("height").get<int64_t>();
    r.bpp = j.value("bpp", 0.0);
    r.codec_profile = j.value("codec_profile", "");
    r.caption = j.value("caption", "");
    r.scores.aesthetic = j.at("aesthetic").get<double>();
    r.scores.motion = j.at("motion").get<double>();
    r.scores.blur_variances = j.at("blur_variances").get<std::vector<double>>();
    r.scores.ocr_area = j.at("ocr_area").get<double>();
    r.scores.jitter = j.at("jitter").get<double>();
    if (j.contains("tiers_passed")) r.tiers_passed = j.at("tiers_passed").get<std::vector<int>>();
    return r;
}

// ---------------------------------------------------------------------------
// tiers
// ---------------------------------------------------------------------------

void FilterConfig::validate() const {
    for (size_t i = 1; i < tiers.size(); ++i) {
        const auto& a = tiers[i - 1];
        const auto& b = tiers[i];
        bool monotone = b.aesthetic_min >= a.aesthetic_min && b.motion_lo >= a.motion_lo &&
                        b.motion_hi <= a.motion_hi && b.blur_var_min >= a.blur_var_min &&
                        b.ocr_max <= a.ocr_max && b.jitter_max <= a.jitter_max;
        if (!monotone)
            throw ConfigError("filter config: tier " + std::to_string(i) +
                              " is looser than tier " + std::to_string(i - 1));
    }
}

FilterConfig FilterConfig::default_tiers() {
    FilterConfig cfg;
    cfg.tiers = {
        {3.0, 0.05, 6.0, 40.0, 0.30, 5.0},
        {4.0, 0.08, 5.0, 60.0, 0.20, 4.0},
        {5.0, 0.10, 4.0, 80.0, 0.10, 3.0},
    };
    return cfg;
}

TierResult filter_tier(const std::vector<ClipRecord>& records, const FilterConfig& cfg, size_t tier) {
    cfg.validate();
    if (tier >= cfg.tiers.size()) throw ConfigError("filter_tier: tier index out of range");
    const auto& th = cfg.tiers[tier];
    TierResult out;
    for (const auto& r : records) {
        if (r.scores.blur_variances.empty())
            throw ConfigError("filter_tier: record '" + r.id + "' is not scored");
        std::string reason;
        if (r.scores.aesthetic < th.aesthetic_min) reason = "aesthetic";
        else if (r.scores.motion < th.motion_lo || r.scores.motion > th.motion_hi) reason = "motion";
        else {
            int blurry = 0;
            for (double v : r.scores.blur_variances)
                if (v < th.blur_var_min) ++blurry;
            if (2 * blurry > int(r.scores.blur_variances.size())) reason = "blur";
            else if (r.scores.ocr_area > th.ocr_max) reason = "ocr";
            else if (r.scores.jitter > th.jitter_max) reason = "jitter";
        }
        if (reason.empty()) {
            ClipRecord kept = r;
            kept.tiers_passed.push_back(int(tier));
            out.kept.push_back(std::move(kept));
        } else {
            out.removed.push_back({r.id, reason});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// statistics
// ---------------------------------------------------------------------------

namespace {

nlohmann::json histogram(const std::vector<double>& values, double lo, double hi, double width) {
    int bins = int(std::lround((hi - lo) / width));
    std::vector<int64_t> counts(size_t(bins), 0);
    int64_t under = 0, over = 0;
    for (double v : values) {
        if (v < lo) {
            ++under;
        } else if (v >= hi) {
            ++over;
        } else {
            ++counts[size_t((v - lo) / width)];
        }
    }
    nlohmann::json j;
    j["lo"] = lo;
    j["hi"] = hi;
    j["bin_width"] = width;
    j["counts"] = counts;
    j["under"] = under;
    j["over"] = over;
    return j;
}

}  // namespace

nlohmann::json stats_report(const std::vector<ClipRecord>& records) {
    if (records.empty()) throw ConfigError("stats_report: empty record set");
    std::vector<double> aes, dur, aspect, words;
    std::map<std::string, int64_t> freq;
    for (const auto& r : records) {
        aes.push_back(r.scores.aesthetic);
        dur.push_back(r.duration_s);
        aspect.push_back(r.width > 0 ? double(r.height) / double(r.width) : 0.0);
        int64_t wc = 0;
        std::string word;
        for (char c : r.caption + " ") {
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!word.empty()) {
                    ++wc;
                    ++freq[word];
                    word.clear();
                }
            } else if (std::isalnum(static_cast<unsigned char>(c))) {
                word.push_back(char(std::tolower(static_cast<unsigned char>(c))));
            }
        }
        words.push_back(double(wc));
    }
    nlohmann::json j;
    j["clips"] = records.size();
    j["aesthetic_hist"] = histogram(aes, 0.0, 10.0, 0.5);
    j["duration_hist"] = histogram(dur, 2.0, 8.0, 2.0);
    j["aspect_hist"] = histogram(aspect, 0.0, 3.0, 0.25);
    j["caption_words_hist"] = histogram(words, 0.0, 150.0, 25.0);
    j["word_freq"] = freq;
    return j;
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

std::vector<ClipMeta> read_clip_metadata(const std::string& jsonl_path) {
    std::ifstream is(jsonl_path);
    if (!is) throw MissingInputError("metadata: cannot open " + jsonl_path);
    std::vector<ClipMeta> metas;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("metadata line " + std::to_string(lineno) + ": " + e.what());
        }
        ClipMeta m;
        m.id = j.at("id").get<std::string>();
        m.path = j.at("path").get<std::string>();
        m.caption = j.value("caption", "");
        m.codec_profile = j.value("codec_profile", "");
        m.bpp = j.value("bpp", 0.0);
        metas.push_back(std::move(m));
    }
    return metas;
}

PipelineResult run_filter_pipeline(const std::string& corpus_dir, const std::vector<ClipMeta>& metas,
                                   const FilterConfig& cfg, const ScorerSet& scorers) {
    cfg.validate();
    PipelineResult out;
    for (const auto& meta_in : metas) {
        ClipMeta meta = meta_in;
        RawVideo v = read_raw_video((std::filesystem::path(corpus_dir) / meta.path).string());
        meta.fps = double(v.fps);
        meta.width = int64_t(v.width);
        meta.height = int64_t(v.height);
        meta.duration_s = v.duration_s();
        auto admit = preprocess_admit(meta, cfg.preprocess);
        if (!admit.admitted) {
            out.rejected.push_back({meta.id, admit.reason});
            continue;
        }
        auto spans = segment_clips(v, cfg.scene_threshold, cfg.preprocess.max_clip_s,
                                   cfg.preprocess.min_clip_s);
        bool whole = spans.size() == 1 && spans[0].first == 0 && spans[0].second == int64_t(v.frames);
        for (size_t si = 0; si < spans.size(); ++si) {
            auto [b, e] = spans[si];
            RawVideo piece = make_raw_video(uint32_t(e - b), v.height, v.width, v.channels, v.fps);
            size_t per_frame = size_t(v.channels) * v.height * v.width;
            std::copy_n(v.data.data() + size_t(b) * per_frame, size_t(e - b) * per_frame,
                        piece.data.data());
            ClipRecord r;
            r.id = whole ? meta.id : meta.id + "#" + std::to_string(si);
            r.duration_s = piece.duration_s();
            r.fps = meta.fps;
            r.width = meta.width;
            r.height = meta.height;
            r.bpp = meta.bpp;
            r.codec_profile = meta.codec_profile;
            r.caption = meta.caption;
            r.scores = score_clip(piece, scorers);
            out.scored.push_back(std::move(r));
        }
    }
    std::vector<ClipRecord> current = out.scored;
    for (size_t tier = 0; tier < cfg.tiers.size(); ++tier) {
        auto res = filter_tier(current, cfg, tier);
        std::vector<std::string> ids;
        for (const auto& r : res.kept) ids.push_back(r.id);
        out.tier_kept_ids.push_back(std::move(ids));
        current = std::move(res.kept);
    }
    return out;
}

}  // namespace vgen
