// Command-line front end: data curation, bucket planning, batch-size search,
// the training cost model, toy training, T2V/I2V sampling, inference-time
// scaling and gradient checks over a shared JSON configuration. All
// randomness flows from one 64-bit seed (flag > config > OS2_SEED env > 0)
// through named substreams, so equal configs produce byte-identical
// artifacts.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "vgen/condition.hpp"
#include "vgen/datapipe.hpp"
#include "vgen/dcae.hpp"
#include "vgen/flow_match.hpp"
#include "vgen/gradcheck.hpp"
#include "vgen/guidance.hpp"
#include "vgen/inf_scale.hpp"
#include "vgen/manifest.hpp"
#include "vgen/mmdit.hpp"
#include "vgen/optim.hpp"
#include "vgen/sched_cost.hpp"
#include "vgen/video_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vgen;

namespace {

enum ExitCode { kOk = 0, kUnknownCommand = 64, kBadConfig = 65, kMissingInput = 66, kNumeric = 70 };

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream is(path);
    if (!is) throw MissingInputError("config: cannot open " + path);
    try {
        json j;
        is >> j;
        return j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

uint64_t resolve_seed(const json& cfg, std::optional<uint64_t> flag_seed) {
    if (flag_seed) return *flag_seed;
    if (cfg.contains("seed")) return cfg.at("seed").get<uint64_t>();
    if (const char* env = std::getenv("OS2_SEED")) return std::strtoull(env, nullptr, 10);
    return 0;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw MissingInputError("cannot write " + path.string());
    os << text;
}

CompressionSpec spec_from_json(const json& j) {
    CompressionSpec s;
    auto d = j.value("d", std::vector<int64_t>{4, 8, 8});
    auto p = j.value("patch", std::vector<int64_t>{1, 2, 2});
    if (d.size() != 3 || p.size() != 3) throw ConfigError("spec: d and patch need 3 entries");
    s.d_t = d[0];
    s.d_h = d[1];
    s.d_w = d[2];
    s.p_t = p[0];
    s.p_h = p[1];
    s.p_w = p[2];
    s.latent_channels = j.value("latent_channels", int64_t(16));
    s.causal = j.value("causal", true);
    return s;
}

CompressionSpec named_spec(const std::string& name, const json& cfg) {
    if (name == "hunyuan") return hunyuan_spec();
    if (name == "dcae") return video_dcae_spec();
    if (name == "config") {
        if (!cfg.contains("spec")) throw ConfigError("spec 'config' requires a spec object in the config");
        return spec_from_json(cfg.at("spec"));
    }
    throw ConfigError("unknown spec '" + name + "' (hunyuan|dcae|config)");
}

GuidanceConfig guidance_from_json(const json& cfg) {
    GuidanceConfig g;
    if (!cfg.contains("guidance")) return g;
    const json& j = cfg.at("guidance");
    g.g_img = j.value("g_img", 3.0);
    g.g_txt = j.value("g_txt", 7.5);
    std::string mode = j.value("mode", "decoupled");
    if (mode == "single") g.mode = GuidanceMode::single;
    else if (mode == "decoupled") g.mode = GuidanceMode::decoupled;
    else throw ConfigError("guidance.mode must be single|decoupled");
    g.oscillation = j.value("oscillation", false);
    g.warmup_steps = j.value("warmup_steps", 10);
    std::string dyn = j.value("dynamic", "off");
    if (dyn == "linear") g.dynamic = DynamicScaling::linear;
    else if (dyn == "off") g.dynamic = DynamicScaling::off;
    else throw ConfigError("guidance.dynamic must be off|linear");
    g.total_steps = j.value("total_steps", 50);
    return g;
}

ScalingConfig scaling_from_json(const json& cfg) {
    ScalingConfig s;
    if (!cfg.contains("scaling")) return s;
    const json& j = cfg.at("scaling");
    s.injection_steps = j.value("injection_steps", std::vector<int>{});
    s.seeds = j.value("seeds", 1);
    s.variations = j.value("variations", 1);
    s.lookahead_depth = j.value("lookahead_depth", 2);
    s.noise_scale = j.value("noise_scale", 0.0);
    s.continue_from_lookahead = j.value("continue_from_lookahead", false);
    if (j.contains("weights")) {
        const json& w = j.at("weights");
        s.weights.subject_consistency = w.value("subject_consistency", 0.0);
        s.weights.background_consistency = w.value("background_consistency", 0.0);
        s.weights.motion_smoothness = w.value("motion_smoothness", 0.0);
        s.weights.dynamic_degree = w.value("dynamic_degree", 0.0);
        s.weights.aesthetic_quality = w.value("aesthetic_quality", 0.0);
        s.weights.imaging_quality = w.value("imaging_quality", 0.0);
    }
    return s;
}

FilterConfig filter_from_json(const json& cfg) {
    FilterConfig f = FilterConfig::default_tiers();
    if (!cfg.contains("filter")) return f;
    const json& j = cfg.at("filter");
    f.scene_threshold = j.value("scene_threshold", 0.3);
    if (j.contains("preprocess")) {
        const json& p = j.at("preprocess");
        f.preprocess.min_duration_s = p.value("min_duration_s", 2.0);
        f.preprocess.min_bpp = p.value("min_bpp", 0.02);
        f.preprocess.min_fps = p.value("min_fps", 16.0);
        f.preprocess.aspect_lo = p.value("aspect_lo", 1.0 / 3.0);
        f.preprocess.aspect_hi = p.value("aspect_hi", 3.0);
        f.preprocess.banned_profile = p.value("banned_profile", std::string("Constrained Baseline"));
        f.preprocess.max_fps = p.value("max_fps", 30.0);
        f.preprocess.max_long_side = p.value("max_long_side", int64_t(1080));
        f.preprocess.max_clip_s = p.value("max_clip_s", 8.0);
        f.preprocess.min_clip_s = p.value("min_clip_s", 2.0);
    }
    if (j.contains("tiers")) {
        f.tiers.clear();
        for (const json& t : j.at("tiers"))
            f.tiers.push_back({t.value("aesthetic_min", 0.0), t.value("motion_lo", 0.0),
                               t.value("motion_hi", 10.0), t.value("blur_var_min", 0.0),
                               t.value("ocr_max", 1.0), t.value("jitter_max", 10.0)});
    }
    return f;
}

std::vector<Bucket> buckets_from_json(const json& cfg, const std::string& stage) {
    if (cfg.contains("buckets")) {
        std::vector<Bucket> out;
        for (const json& b : cfg.at("buckets"))
            out.push_back({b.at("resolution").get<int64_t>(), b.at("frame_lo").get<int64_t>(),
                           b.at("frame_hi").get<int64_t>(), b.value("token_cap", int64_t(0)),
                           b.value("batch_size", int64_t(1)), b.value("cp", int64_t(1)),
                           b.value("videos_per_s", 0.0)});
        return out;
    }
    if (stage == "3") return stage3_buckets();
    return stage12_buckets();
}

// ---------------------------------------------------------------------------
// toy generation pipeline shared by train-toy / sample / i2v-sample / scale-search
// ---------------------------------------------------------------------------

struct ToyPipeline {
    AutoencoderConfig ae_cfg;
    ModelConfig model_cfg;
    VideoAutoencoder<float> ae;
    MmditModel<float> model;
};

ToyPipeline build_toy_pipeline(const json& cfg, Rng& rng) {
    AutoencoderConfig ac;
    ac.spec = CompressionSpec{2, 2, 2, 1, 1, 1, 4, false};
    ac.in_channels = 3;
    ac.base_width = 4;
    if (cfg.contains("ae")) {
        const json& j = cfg.at("ae");
        ac.spec = spec_from_json(j);
        ac.spec.causal = j.value("causal", false);
        ac.in_channels = j.value("in_channels", int64_t(3));
        ac.base_width = j.value("base_width", int64_t(4));
    }

    ModelConfig mc;
    mc.double_layers = 1;
    mc.single_layers = 1;
    mc.dim = 32;
    mc.ffn_dim = 64;
    mc.heads = 4;
    mc.patch = {1, 2, 2};
    mc.time_freq_dim = 64;
    if (cfg.contains("model")) {
        const json& j = cfg.at("model");
        mc.double_layers = j.value("double_layers", mc.double_layers);
        mc.single_layers = j.value("single_layers", mc.single_layers);
        mc.dim = j.value("dim", mc.dim);
        mc.ffn_dim = j.value("ffn_dim", mc.ffn_dim);
        mc.heads = j.value("heads", mc.heads);
        mc.time_freq_dim = j.value("time_freq_dim", mc.time_freq_dim);
        auto p = j.value("patch", std::vector<int64_t>{1, 2, 2});
        if (p.size() != 3) throw ConfigError("model.patch needs 3 entries");
        mc.patch = {p[0], p[1], p[2]};
    }
    // the conditioning framework fixes the channel contract: k latents in,
    // 2k+1 model inputs, k velocity outputs
    mc.in_channels = 2 * ac.spec.latent_channels + 1;
    mc.out_channels = ac.spec.latent_channels;

    ToyPipeline p;
    p.ae_cfg = ac;
    p.model_cfg = mc;
    Rng ae_rng = rng.substream("ae-init");
    Rng model_rng = rng.substream("model-init");
    p.ae = VideoAutoencoder<float>::build(ac, ae_rng);
    p.model = MmditModel<float>::build(mc, model_rng);
    return p;
}

void maybe_load_weights(ToyPipeline& p, const std::string& weights_dir) {
    if (weights_dir.empty()) return;
    load_manifest(weights_dir + "/ae", p.ae.params);
    load_manifest(weights_dir + "/model", p.model.params);
}

TensorF synth_toy_video(Rng& rng, int64_t frames, int64_t size) {
    // moving bright square on a dim textured background
    std::vector<float> v(size_t(3 * frames * size * size));
    int64_t span = std::max<int64_t>(1, size / 4);
    int64_t y = rng.uniform_int(0, size - span), x = rng.uniform_int(0, size - span);
    int64_t dy = rng.uniform_int(-1, 1), dx = rng.uniform_int(-1, 1);
    for (int64_t t = 0; t < frames; ++t) {
        int64_t yy = std::clamp<int64_t>(y + t * dy, 0, size - span);
        int64_t xx = std::clamp<int64_t>(x + t * dx, 0, size - span);
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t i = 0; i < size; ++i)
                for (int64_t j = 0; j < size; ++j) {
                    bool inside = i >= yy && i < yy + span && j >= xx && j < xx + span;
                    float base = -0.6f + 0.1f * float(c) + (inside ? 1.4f : 0.0f);
                    v[size_t(((c * frames + t) * size + i) * size + j)] = base;
                }
    }
    return TensorF::from({3, frames, size, size}, std::move(v));
}

// Velocity hook for one sampling run: conditioning + guidance around the model.
VelocityFn<float> make_guided_velocity(const ToyPipeline& p, const GuidanceConfig& gcfg,
                                       const TextEmbedding<float>& text_full,
                                       const TextEmbedding<float>& text_null,
                                       const ConditionSpec<float>& cond) {
    return [&p, gcfg, text_full, text_null, cond](const TensorF& x, double t, int step) {
        BranchEval<float> branch = [&](bool use_text, bool use_image) {
            const auto& emb = use_text ? text_full : text_null;
            auto input = build_condition_input(x, use_image ? cond : ConditionSpec<float>::none());
            return p.model.forward(input, emb.tokens, emb.pooled, t);
        };
        GuidanceConfig step_cfg = gcfg;
        step_cfg.latent_frames = x.dim(1);
        return guided_velocity<float>(branch, step_cfg, step);
    };
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_token_count(const json& cfg, const std::string& spec_name, int64_t frames, int64_t size,
                    int64_t width, int64_t height, int causal_override) {
    CompressionSpec spec = named_spec(spec_name, cfg);
    if (causal_override == 0) spec.causal = false;
    if (causal_override == 1) spec.causal = true;
    int64_t h = height > 0 ? height : size;
    int64_t w = width > 0 ? width : size;
    std::cout << token_count(frames, h, w, spec) << "\n";
    return kOk;
}

int cmd_cost(const json& cfg, const std::string& stages_name, const std::string& out_dir) {
    std::vector<StageSpec> stages;
    if (stages_name == "paper") {
        stages = reference_stages();
    } else if (stages_name == "config") {
        if (!cfg.contains("stages")) throw ConfigError("cost: config has no stages array");
        for (const json& s : cfg.at("stages"))
            stages.push_back({s.at("name").get<std::string>(), s.value("dataset_size", 1.0),
                              s.value("cp", int64_t(1)), s.at("iterations").get<int64_t>(),
                              s.at("gpu_count").get<int64_t>(), s.at("gpu_days").get<double>(),
                              s.value("price_per_gpu_hour", 2.0)});
    } else {
        throw ConfigError("cost: --stages must be paper|config");
    }
    json out = json::array();
    double total = 0.0;
    char buf[64];
    // the reference table truncates to 0.1k rather than rounding
    auto fmt_k = [&](double usd) {
        std::snprintf(buf, sizeof buf, "$%.1fk", std::floor(usd / 100.0) / 10.0);
        return std::string(buf);
    };
    for (const auto& s : stages) {
        double usd = stage_cost(s);
        total += usd;
        std::cout << s.name << ": $" << int64_t(usd) << " (" << fmt_k(usd) << ")\n";
        out.push_back({{"name", s.name}, {"usd", usd}, {"gpu_days", s.gpu_days}});
    }
    std::cout << "total: $" << int64_t(total) << " (" << fmt_k(total) << ")\n";
    if (!out_dir.empty()) {
        json doc{{"stages", out}, {"total_usd", total}};
        write_text(fs::path(out_dir) / "cost.json", doc.dump(2) + "\n");
    }
    return kOk;
}

int cmd_filter(const json& cfg, const std::string& corpus, const std::string& metadata, int tier,
               const std::string& out_dir) {
    if (out_dir.empty()) throw ConfigError("filter: --out is required");
    FilterConfig fc = filter_from_json(cfg);
    if (tier >= int(fc.tiers.size())) throw ConfigError("filter: tier index out of range");
    auto metas = read_clip_metadata(metadata);
    auto result = run_filter_pipeline(corpus, metas, fc, ScorerSet::builtin());

    std::string records;
    for (const auto& r : result.scored) records += clip_record_to_json(r).dump() + "\n";
    write_text(fs::path(out_dir) / "records.jsonl", records);

    std::string rejects;
    for (const auto& [id, reason] : result.rejected)
        rejects += json{{"id", id}, {"reason", reason}}.dump() + "\n";
    write_text(fs::path(out_dir) / "rejected.jsonl", rejects);

    for (size_t t = 0; t < result.tier_kept_ids.size(); ++t) {
        std::string ids;
        for (const auto& id : result.tier_kept_ids[t]) ids += id + "\n";
        write_text(fs::path(out_dir) / ("tier_" + std::to_string(t) + ".txt"), ids);
    }
    std::cout << "scored " << result.scored.size() << " clips, rejected " << result.rejected.size()
              << "; tier " << tier << " keeps " << result.tier_kept_ids[size_t(tier)].size() << "\n";
    return kOk;
}

int cmd_stats(const json& cfg, const std::string& records_path, const std::string& corpus,
              const std::string& metadata, const std::string& out_dir) {
    std::vector<ClipRecord> records;
    if (!records_path.empty()) {
        std::ifstream is(records_path);
        if (!is) throw MissingInputError("stats: cannot open " + records_path);
        std::string line;
        while (std::getline(is, line))
            if (!line.empty()) records.push_back(clip_record_from_json(json::parse(line)));
    } else if (!corpus.empty() && !metadata.empty()) {
        auto result = run_filter_pipeline(corpus, read_clip_metadata(metadata), filter_from_json(cfg),
                                          ScorerSet::builtin());
        records = result.scored;
    } else {
        throw ConfigError("stats: need --records or --corpus with --metadata");
    }
    auto report = stats_report(records);
    std::cout << report.dump(2) << "\n";
    if (!out_dir.empty()) write_text(fs::path(out_dir) / "report.json", report.dump(2) + "\n");
    return kOk;
}

int cmd_bucket_plan(const json& cfg, const std::string& samples_path, const std::string& stage,
                    const std::string& out_dir) {
    auto buckets = buckets_from_json(cfg, stage);
    validate_buckets(buckets);
    std::ifstream is(samples_path);
    if (!is) throw MissingInputError("bucket-plan: cannot open " + samples_path);
    std::string line, plan;
    size_t assigned = 0, rejected = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json s = json::parse(line);
        int64_t frames = s.at("frames").get<int64_t>();
        int64_t height = s.at("height").get<int64_t>();
        int64_t width = s.at("width").get<int64_t>();
        auto b = assign_bucket(frames, height, width, buckets);
        json rec{{"id", s.value("id", "")}, {"frames", frames}, {"height", height}, {"width", width}};
        if (b) {
            rec["bucket"] = {{"resolution", b->resolution}, {"frame_lo", b->frame_lo},
                             {"frame_hi", b->frame_hi}, {"token_cap", b->token_cap},
                             {"batch_size", b->batch_size}, {"cp", b->cp_degree}};
            ++assigned;
        } else {
            rec["reject"] = true;
            ++rejected;
        }
        plan += rec.dump() + "\n";
    }
    if (!out_dir.empty()) write_text(fs::path(out_dir) / "bucket_plan.jsonl", plan);
    else std::cout << plan;
    std::cout << "assigned " << assigned << ", rejected " << rejected << "\n";
    return kOk;
}

LinearCostTerms terms_from_json(const json& j) {
    return {j.value("fixed", 0.0), j.value("per_token", 0.0), j.value("per_batch", 0.0),
            j.value("per_token_batch", 0.0)};
}

int cmd_batch_search(const json& cfg, const std::string& tokens_csv, const std::string& out_dir) {
    std::vector<int64_t> tokens;
    std::string tok;
    std::istringstream ts(tokens_csv);
    while (std::getline(ts, tok, ',')) tokens.push_back(std::stoll(tok));
    if (tokens.empty()) throw ConfigError("batch-search: --tokens required (comma separated)");

    CostModel model;
    if (cfg.contains("cost_model")) {
        const json& j = cfg.at("cost_model");
        model = linear_cost_model(terms_from_json(j.value("memory", json::object())),
                                  terms_from_json(j.value("step", json::object())),
                                  terms_from_json(j.value("encode_forward", json::object())),
                                  terms_from_json(j.value("backward", json::object())),
                                  j.value("cap", 0.0), j.value("max_batch", int64_t(512)));
    } else {
        int64_t max_tok = *std::max_element(tokens.begin(), tokens.end());
        model = linear_cost_model({0, 0, 0, 1.0}, {0, 0, 0, 1.0}, {0, 0, 0, 0.5}, {0, 0, 0, 0.5},
                                  4.0 * double(max_tok), 512);
    }
    auto sizes = search_batch_sizes(tokens, model);
    json out = json::array();
    for (size_t i = 0; i < tokens.size(); ++i) {
        out.push_back({{"tokens", tokens[i]}, {"batch_size", sizes[i]}});
        std::cout << tokens[i] << " -> " << sizes[i] << "\n";
    }
    if (!out_dir.empty()) write_text(fs::path(out_dir) / "batch_sizes.json", out.dump(2) + "\n");
    return kOk;
}

int cmd_grad_check(const std::string& op, double tol, const std::string& out_dir) {
    auto ops = op.empty() ? registered_grad_ops() : std::vector<std::string>{op};
    json out = json::array();
    bool all_ok = true;
    for (const auto& name : ops) {
        auto rep = grad_check(name, {}, tol);
        all_ok = all_ok && rep.passed;
        std::printf("%-16s max_rel_err=%.3e tol=%.1e %s\n", rep.op.c_str(), rep.max_rel_err,
                    rep.tolerance, rep.passed ? "PASS" : "FAIL");
        out.push_back({{"op", rep.op}, {"max_rel_err", rep.max_rel_err}, {"passed", rep.passed}});
    }
    if (!out_dir.empty()) write_text(fs::path(out_dir) / "gradcheck.json", out.dump(2) + "\n");
    if (!all_ok) throw NumericError("grad-check: at least one primitive failed");
    return kOk;
}

int cmd_train_toy(const json& cfg, uint64_t seed, int steps, int batch, double lr,
                  const std::string& out_dir) {
    if (out_dir.empty()) throw ConfigError("train-toy: --out is required");
    Rng rng(seed);
    Rng init = rng.substream("init");
    auto p = build_toy_pipeline(cfg, init);
    p.ae.params.freeze();  // only the diffusion model trains here
    const int64_t frames = 2 * p.ae_cfg.spec.d_t, size = 8 * p.ae_cfg.spec.d_h;

    ShiftConfig shift;
    Rng data = rng.substream("train-data");
    auto params = p.model.params.all();
    auto opt = OptimizerState<float>::make(lr);
    std::string losses;
    double first = -1, last = -1;
    for (int step = 0; step < steps; ++step) {
        p.model.params.zero_grad();
        TensorF loss_sum = TensorF::scalar(0.0f);
        for (int b = 0; b < batch; ++b) {
            auto video = synth_toy_video(data, frames, size);
            auto x0 = p.ae.encode(video);
            double motion = double(data.uniform_int(0, 9));
            auto caption = append_motion_score("moving square", motion);
            auto text = toy_text_embed<float>(caption, p.model_cfg.dim);

            // first-frame image condition, dropped at the 12.5% rate
            auto cond_frames = split(x0, 1, {1, x0.dim(1) - 1})[0].detach();
            auto cond = ConditionSpec<float>::first_frame(cond_frames);
            cond = apply_condition_dropout(cond, data);

            int64_t tokens = x0.numel() / x0.dim(0);
            double t = sample_timestep(data, shift, tokens);
            auto pair = make_training_pair(x0, data, t);
            auto input = build_condition_input(pair.xt, cond);
            auto pred = p.model.forward(input, text.tokens, text.pooled, t);
            loss_sum = add(loss_sum, fm_loss(pred, pair.target));
        }
        auto loss = scale(loss_sum, 1.0f / float(batch));
        if (step == 0) first = loss.item();
        last = loss.item();
        losses += json{{"step", step}, {"loss", loss.item()}}.dump() + "\n";
        backward(loss);
        adamw_step(params, opt);
    }
    write_text(fs::path(out_dir) / "loss.jsonl", losses);
    save_manifest((fs::path(out_dir) / "weights" / "ae").string(), p.ae.params);
    save_manifest((fs::path(out_dir) / "weights" / "model").string(), p.model.params);
    std::cout << "trained " << steps << " steps: loss " << first << " -> " << last << "\n";
    std::cout << "weights: " << (fs::path(out_dir) / "weights").string() << "\n";
    return kOk;
}

int cmd_sample(const json& cfg, uint64_t seed, const std::string& caption, int steps,
               const std::string& weights, const std::string& image_path, bool i2v,
               const std::string& out_dir) {
    if (out_dir.empty()) throw ConfigError("sample: --out is required");
    fs::create_directories(out_dir);
    Rng rng(seed);
    Rng init = rng.substream("init");
    auto p = build_toy_pipeline(cfg, init);
    maybe_load_weights(p, weights);
    p.ae.params.freeze();
    p.model.params.freeze();

    const int64_t frames = 2 * p.ae_cfg.spec.d_t, size = 8 * p.ae_cfg.spec.d_h;
    Shape latent_shape{p.ae_cfg.spec.latent_channels, frames / p.ae_cfg.spec.d_t,
                       size / p.ae_cfg.spec.d_h, size / p.ae_cfg.spec.d_w};

    auto text_full = toy_text_embed<float>(caption, p.model_cfg.dim);
    auto text_null = toy_text_embed<float>("", p.model_cfg.dim);

    ConditionSpec<float> cond = ConditionSpec<float>::none();
    if (i2v) {
        if (image_path.empty()) throw ConfigError("i2v-sample: --image is required");
        RawVideo img = read_raw_video(image_path);
        auto img_t = video_to_tensor(img);
        // repeat frame 0 across the temporal receptive field, encode, keep
        // the first latent frame as the condition
        auto frame0 = split(img_t, 1, {1, std::max<int64_t>(1, img_t.dim(1) - 1)})[0];
        std::vector<TensorF> reps(size_t(p.ae_cfg.spec.d_t), frame0);
        auto rep = concat<float>(reps, 1);
        if (rep.dim(2) != size || rep.dim(3) != size)
            throw ConfigError("i2v-sample: condition image extents must match the pipeline size " +
                              std::to_string(size));
        auto enc = p.ae.encode(rep);
        cond = ConditionSpec<float>::first_frame(enc.detach());
    }

    GuidanceConfig gcfg = guidance_from_json(cfg);
    gcfg.total_steps = steps;
    gcfg.warmup_steps = std::min(gcfg.warmup_steps, steps);
    if (!i2v && !cfg.contains("guidance")) gcfg.mode = GuidanceMode::single;

    ShiftConfig shift;
    int64_t tokens = shape_numel(latent_shape) / latent_shape[0];
    double alpha = shift.alpha(tokens);

    Rng noise = rng.substream("sample-noise");
    auto x1 = TensorF::randn(latent_shape, noise);
    auto velocity = make_guided_velocity(p, gcfg, text_full, text_null, cond);
    auto latent = euler_sample(velocity, x1, steps, alpha);
    auto video = tensor_to_video(p.ae.decode(latent), 8);
    write_raw_video((fs::path(out_dir) / "sample.rvc").string(), video);
    std::cout << "wrote " << (fs::path(out_dir) / "sample.rvc").string() << " (" << video.frames
              << " frames @ " << video.width << "px)\n";
    return kOk;
}

int cmd_scale_search(const json& cfg, uint64_t seed, const std::string& caption, int steps,
                     const std::string& weights, const std::string& out_dir) {
    if (out_dir.empty()) throw ConfigError("scale-search: --out is required");
    fs::create_directories(out_dir);
    Rng rng(seed);
    Rng init = rng.substream("init");
    auto p = build_toy_pipeline(cfg, init);
    maybe_load_weights(p, weights);
    p.ae.params.freeze();
    p.model.params.freeze();

    const int64_t frames = 2 * p.ae_cfg.spec.d_t, size = 8 * p.ae_cfg.spec.d_h;
    Shape latent_shape{p.ae_cfg.spec.latent_channels, frames / p.ae_cfg.spec.d_t,
                       size / p.ae_cfg.spec.d_h, size / p.ae_cfg.spec.d_w};

    auto text_full = toy_text_embed<float>(caption, p.model_cfg.dim);
    auto text_null = toy_text_embed<float>("", p.model_cfg.dim);
    GuidanceConfig gcfg = guidance_from_json(cfg);
    gcfg.total_steps = steps;
    gcfg.warmup_steps = std::min(gcfg.warmup_steps, steps);
    ScalingConfig scfg = scaling_from_json(cfg);
    if (scfg.weights.sum() <= 0.0) scfg.weights = VerifierWeights::one_hot_motion_smoothness();

    ShiftConfig shift;
    int64_t tokens = shape_numel(latent_shape) / latent_shape[0];
    double alpha = shift.alpha(tokens);

    auto velocity =
        make_guided_velocity(p, gcfg, text_full, text_null, ConditionSpec<float>::none());
    std::function<PixelVideo(const TensorF&)> decode = [&p](const TensorF& state) {
        return tensor_to_pixels(p.ae.decode(state));
    };

    Rng noise = rng.substream("sample-noise");
    auto x1 = TensorF::randn(latent_shape, noise);
    Rng srng = rng.substream("scale");
    auto result = scaled_sample<float>(velocity, x1, steps, alpha, scfg, decode, srng);

    std::string trace;
    for (const auto& e : result.trace) trace += trace_entry_to_json(e).dump() + "\n";
    write_text(fs::path(out_dir) / "trace.jsonl", trace);
    auto video = tensor_to_video(p.ae.decode(result.final_state), 8);
    write_raw_video((fs::path(out_dir) / "sample.rvc").string(), video);

    int64_t evals = scaling_cost(scfg, steps, gcfg.evaluations_per_step());
    std::cout << "decisions: " << result.trace.size() << ", chosen seed " << result.chosen_seed
              << ", model evaluations (closed form): " << evals << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    static const std::vector<std::string> known = {
        "filter", "stats", "bucket-plan", "batch-search", "cost", "train-toy",
        "sample", "i2v-sample", "scale-search", "grad-check", "token-count"};
    if (argc >= 2 && argv[1][0] != '-') {
        if (std::find(known.begin(), known.end(), argv[1]) == known.end()) {
            std::cerr << "unknown subcommand '" << argv[1] << "'\n";
            return kUnknownCommand;
        }
    }

    CLI::App app{"desk-scale video generation lab"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string config_path, out_dir;
    std::optional<uint64_t> flag_seed;
    app.add_option("--config", config_path, "JSON configuration file")->capture_default_str();
    app.add_option("--seed", flag_seed, "master seed (wins over config and OS2_SEED)");
    app.add_option("--out", out_dir, "output directory for artifacts");

    // token-count
    auto* tc = app.add_subcommand("token-count", "tokens for a (frames, resolution) video");
    int64_t tc_frames = 129, tc_size = 768, tc_width = 0, tc_height = 0;
    std::string tc_spec = "hunyuan";
    int tc_causal = -1;
    tc->add_option("--frames", tc_frames, "frame count")->capture_default_str();
    tc->add_option("--size", tc_size, "square size in px")->capture_default_str();
    tc->add_option("--width", tc_width, "width in px (overrides --size)");
    tc->add_option("--height", tc_height, "height in px (overrides --size)");
    tc->add_option("--spec", tc_spec, "compression spec: hunyuan|dcae|config")->capture_default_str();
    tc->add_option("--causal", tc_causal, "override causal flag: 0|1");

    // cost
    auto* cost = app.add_subcommand("cost", "training stage cost model");
    std::string cost_stages = "paper";
    cost->add_option("--stages", cost_stages, "paper|config")->capture_default_str();

    // filter
    auto* filter = app.add_subcommand("filter", "run the data curation pipeline");
    std::string f_corpus, f_metadata;
    int f_tier = 0;
    filter->add_option("--corpus", f_corpus, "corpus directory")->required();
    filter->add_option("--metadata", f_metadata, "metadata JSONL")->required();
    filter->add_option("--tier", f_tier, "tier to report")->capture_default_str();

    // stats
    auto* stats = app.add_subcommand("stats", "attribute statistics report");
    std::string s_records, s_corpus, s_metadata;
    stats->add_option("--records", s_records, "scored records JSONL");
    stats->add_option("--corpus", s_corpus, "corpus directory (scores on the fly)");
    stats->add_option("--metadata", s_metadata, "metadata JSONL");

    // bucket-plan
    auto* bp = app.add_subcommand("bucket-plan", "assign samples to training buckets");
    std::string bp_samples, bp_stage = "12";
    bp->add_option("--samples", bp_samples, "samples JSONL (frames,height,width)")->required();
    bp->add_option("--stage", bp_stage, "bucket preset: 12|3")->capture_default_str();

    // batch-search
    auto* bs = app.add_subcommand("batch-search", "search batch sizes under a cost model");
    std::string bs_tokens;
    bs->add_option("--tokens", bs_tokens, "comma-separated token counts")->required();

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient checks");
    std::string gc_op;
    double gc_tol = 1e-5;
    gc->add_option("--op", gc_op, "single op (default: all registered)");
    gc->add_option("--tol", gc_tol, "relative tolerance")->capture_default_str();

    // train-toy
    auto* tt = app.add_subcommand("train-toy", "train the toy pipeline on synthetic clips");
    int tt_steps = 50, tt_batch = 4;
    double tt_lr = 2e-3;
    tt->add_option("--steps", tt_steps, "optimizer steps")->capture_default_str();
    tt->add_option("--batch", tt_batch, "batch size")->capture_default_str();
    tt->add_option("--lr", tt_lr, "learning rate")->capture_default_str();

    // sample / i2v-sample
    auto* sample = app.add_subcommand("sample", "text-to-video sampling");
    auto* i2v = app.add_subcommand("i2v-sample", "image-to-video sampling with decoupled guidance");
    std::string sm_caption = "a moving square", sm_weights, sm_image;
    int sm_steps = 20;
    for (auto* sub : {sample, i2v}) {
        sub->add_option("--caption", sm_caption, "text prompt")->capture_default_str();
        sub->add_option("--steps", sm_steps, "denoising steps")->capture_default_str();
        sub->add_option("--weights", sm_weights, "weights directory from train-toy");
    }
    i2v->add_option("--image", sm_image, "condition image container (frame 0 used)");

    // scale-search
    auto* ss = app.add_subcommand("scale-search", "inference-time branch/verify/select search");
    std::string ss_caption = "a moving square", ss_weights;
    int ss_steps = 12;
    ss->add_option("--caption", ss_caption, "text prompt")->capture_default_str();
    ss->add_option("--steps", ss_steps, "denoising steps")->capture_default_str();
    ss->add_option("--weights", ss_weights, "weights directory from train-toy");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kBadConfig;
    }

    try {
        json cfg = load_config(config_path);
        uint64_t seed = resolve_seed(cfg, flag_seed);
        if (tc->parsed()) return cmd_token_count(cfg, tc_spec, tc_frames, tc_size, tc_width, tc_height, tc_causal);
        if (cost->parsed()) return cmd_cost(cfg, cost_stages, out_dir);
        if (filter->parsed()) return cmd_filter(cfg, f_corpus, f_metadata, f_tier, out_dir);
        if (stats->parsed()) return cmd_stats(cfg, s_records, s_corpus, s_metadata, out_dir);
        if (bp->parsed()) return cmd_bucket_plan(cfg, bp_samples, bp_stage, out_dir);
        if (bs->parsed()) return cmd_batch_search(cfg, bs_tokens, out_dir);
        if (gc->parsed()) return cmd_grad_check(gc_op, gc_tol, out_dir);
        if (tt->parsed()) return cmd_train_toy(cfg, seed, tt_steps, tt_batch, tt_lr, out_dir);
        if (sample->parsed()) return cmd_sample(cfg, seed, sm_caption, sm_steps, sm_weights, "", false, out_dir);
        if (i2v->parsed()) return cmd_sample(cfg, seed, sm_caption, sm_steps, sm_weights, sm_image, true, out_dir);
        if (ss->parsed()) return cmd_scale_search(cfg, seed, ss_caption, ss_steps, ss_weights, out_dir);
        std::cerr << "no subcommand\n";
        return kUnknownCommand;
    } catch (const MissingInputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kMissingInput;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumeric;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadConfig;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadConfig;
    }
}
