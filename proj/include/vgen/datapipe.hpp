#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vgen/video_io.hpp"

// Hierarchical data curation: preprocessing admission, scene segmentation,
// five pluggable score filters with tiered thresholds, and attribute
// statistics. Built-in scorers are deterministic offline proxies; real
// predictors plug in through the same ScorerSet slots.

namespace vgen {

// ---------------------------------------------------------------------------
// image helpers (shared with the inference-scaling verifiers)
// ---------------------------------------------------------------------------

// ITU-R 601 luma of one frame, range [0,255].
std::vector<double> luma_frame(const RawVideo& v, int64_t frame);

// Variance of the 3x3 Laplacian [[0,1,0],[1,-4,1],[0,1,0]] over the interior.
double laplacian_variance(const std::vector<double>& gray, int64_t height, int64_t width);

// Luminance-entropy aesthetic proxy in [0,10]: entropy of the 256-bin luma
// histogram rescaled from [0,8] bits.
double entropy_aesthetic(const std::vector<double>& gray);

// Mean absolute inter-frame difference over all channels, normalized by the
// dynamic range and scaled to [0,10].
double mean_abs_frame_diff(const RawVideo& v);

// ---------------------------------------------------------------------------
// metadata and admission
// ---------------------------------------------------------------------------

struct ClipMeta {
    std::string id;
    std::string path;     // container file, relative to the corpus dir
    std::string caption;
    std::string codec_profile;
    double bpp = 0.0;     // from the original encoded stream
    // filled from the container header:
    double duration_s = 0.0;
    double fps = 0.0;
    int64_t width = 0;
    int64_t height = 0;
};

struct PreprocessConfig {
    double min_duration_s = 2.0;
    double min_bpp = 0.02;
    double min_fps = 16.0;
    double aspect_lo = 1.0 / 3.0;  // aspect = height/width
    double aspect_hi = 3.0;
    std::string banned_profile = "Constrained Baseline";
    double max_fps = 30.0;
    int64_t max_long_side = 1080;
    double max_clip_s = 8.0;
    double min_clip_s = 2.0;
};

struct AdmitResult {
    bool admitted = false;
    std::string reason;  // first violated rule: duration|bpp|fps|aspect|profile|fps-cap|resolution
};

AdmitResult preprocess_admit(const ClipMeta& meta, const PreprocessConfig& cfg);

// ---------------------------------------------------------------------------
// scene segmentation
// ---------------------------------------------------------------------------

// Cuts where the normalized mean absolute inter-frame difference exceeds
// `scene_threshold` (fraction of dynamic range), then chops shots longer than
// max_clip_s into max_clip_s pieces and drops pieces shorter than min_clip_s.
// Returns [begin, end) frame spans.
std::vector<std::pair<int64_t, int64_t>> segment_clips(const RawVideo& v, double scene_threshold,
                                                       double max_clip_s = 8.0, double min_clip_s = 2.0);

// ---------------------------------------------------------------------------
// scoring
// ---------------------------------------------------------------------------

struct OcrBox {
    double area_frac = 0.0;  // fraction of the frame covered
    double confidence = 0.0;
};

struct ScorerSet {
    std::function<double(const RawVideo&, int64_t frame)> aesthetic;      // [0,10]
    std::function<std::vector<OcrBox>(const RawVideo&, int64_t frame)> ocr;
    std::function<double(const RawVideo&, int64_t frame)> blur_variance;  // Laplacian variance
    std::function<double(const RawVideo&)> motion;                        // [0,10]
    std::function<double(const RawVideo&)> jitter;                        // [0,10]

    static ScorerSet builtin();
};

struct ClipScores {
    double aesthetic = 0.0;
    double motion = 0.0;
    std::vector<double> blur_variances;  // five uniformly spaced frames
    double ocr_area = 0.0;               // summed box area at confidence > 0.7
    double jitter = 0.0;
};

ClipScores score_clip(const RawVideo& v, const ScorerSet& scorers);

struct ClipRecord {
    std::string id;
    double duration_s = 0.0;
    double fps = 0.0;
    int64_t width = 0;
    int64_t height = 0;
    double bpp = 0.0;
    std::string codec_profile;
    std::string caption;
    ClipScores scores;
    std::vector<int> tiers_passed;
};

nlohmann::json clip_record_to_json(const ClipRecord& r);
ClipRecord clip_record_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// tier filtering
// ---------------------------------------------------------------------------

struct TierThresholds {
    double aesthetic_min = 0.0;
    double motion_lo = 0.0;   // two-sided motion band
    double motion_hi = 10.0;
    double blur_var_min = 0.0;
    double ocr_max = 1.0;
    double jitter_max = 10.0;
};

struct FilterConfig {
    PreprocessConfig preprocess;
    double scene_threshold = 0.3;
    std::vector<TierThresholds> tiers;  // ordered loose -> strict

    void validate() const;  // tiers must be monotone restrictive
    static FilterConfig default_tiers();
};

struct TierResult {
    std::vector<ClipRecord> kept;
    std::vector<std::pair<std::string, std::string>> removed;  // id, first failed filter
};

// Filters scored records against tier `tier` of the config. A clip is blurry
// when at least 3 of its 5 sampled frames fall below blur_var_min.
TierResult filter_tier(const std::vector<ClipRecord>& records, const FilterConfig& cfg, size_t tier);

// ---------------------------------------------------------------------------
// statistics
// ---------------------------------------------------------------------------

// Histograms of aesthetic score (0.5-wide bins), duration (2 s bins in
// [2,8]), aspect ratio (0.25-wide bins) and caption word count (25-word bins,
// edge at 75), plus a lowercased punctuation-stripped word-frequency table.
nlohmann::json stats_report(const std::vector<ClipRecord>& records);

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

std::vector<ClipMeta> read_clip_metadata(const std::string& jsonl_path);

struct PipelineResult {
    std::vector<ClipRecord> scored;                             // admitted, segmented, scored
    std::vector<std::pair<std::string, std::string>> rejected;  // id, admission reason
    std::vector<std::vector<std::string>> tier_kept_ids;        // per tier, in input order
};

// Full curation pass over a corpus directory: admission on metadata +
// container headers, scene segmentation, scoring, then every configured tier.
PipelineResult run_filter_pipeline(const std::string& corpus_dir, const std::vector<ClipMeta>& metas,
                                   const FilterConfig& cfg, const ScorerSet& scorers);

}  // namespace vgen
