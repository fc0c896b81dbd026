#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "vgen/nn.hpp"
#include "vgen/rng.hpp"
#include "vgen/tensor.hpp"

// Miniature dual-stream/single-stream diffusion transformer. Dual blocks keep
// separate video/text parameter sets and attend jointly over the concatenated
// sequence; single blocks share one parameter set over the concatenation.
// Positions enter through axial 3D rotary embeddings; the timestep plus the
// pooled text vector modulate every block with per-path shift/scale/gate.

namespace vgen {

struct ModelConfig {
    int64_t double_layers = 1;
    int64_t single_layers = 1;
    int64_t dim = 32;
    int64_t ffn_dim = 64;
    int64_t heads = 4;
    std::array<int64_t, 3> patch{1, 2, 2};
    std::array<int64_t, 3> rope_split{0, 0, 0};  // zeros -> derived 2:3:3 default
    int64_t in_channels = 4;                     // latent channels entering the model
    int64_t out_channels = 4;                    // velocity channels produced
    int64_t time_freq_dim = 256;

    int64_t head_dim() const { return dim / heads; }

    void validate() const {
        if (double_layers < 0 || single_layers < 0) throw ConfigError("model: negative layer count");
        if (dim <= 0 || dim % 2) throw ConfigError("model: dim must be positive and even");
        if (heads <= 0 || dim % heads) throw ConfigError("model: dim must divide by heads");
        for (int64_t p : patch)
            if (p < 1) throw ConfigError("model: patch entries must be >= 1");
        auto s = effective_rope_split();
        if (s[0] + s[1] + s[2] != head_dim()) throw ConfigError("model: rope split must sum to head_dim");
        for (int64_t d : s)
            if (d % 2) throw ConfigError("model: rope split entries must be even");
        if (in_channels < 1 || out_channels < 1) throw ConfigError("model: channel counts must be >= 1");
    }

    std::array<int64_t, 3> effective_rope_split() const;
};

// head_dim portions in ratio (2:3:3), rounded down to even with the remainder
// (in twos) given to the spatial axes.
inline std::array<int64_t, 3> default_rope_split(int64_t head_dim) {
    if (head_dim < 6 || head_dim % 2) throw ConfigError("rope split: head_dim must be even and >= 6");
    auto even_floor = [](double v) { return 2 * int64_t(v / 2.0); };
    std::array<int64_t, 3> s{even_floor(head_dim * 2.0 / 8.0), even_floor(head_dim * 3.0 / 8.0),
                             even_floor(head_dim * 3.0 / 8.0)};
    if (s[0] == 0) s[0] = 2;
    int64_t rem = head_dim - s[0] - s[1] - s[2];
    int axis = 1;
    while (rem > 0) {
        s[axis] += 2;
        rem -= 2;
        axis = axis == 1 ? 2 : 1;
    }
    while (rem < 0) {  // overshoot from forcing the temporal minimum
        if (s[2] > 2) s[2] -= 2;
        else s[1] -= 2;
        rem += 2;
    }
    return s;
}

inline std::array<int64_t, 3> ModelConfig::effective_rope_split() const {
    if (rope_split[0] == 0 && rope_split[1] == 0 && rope_split[2] == 0)
        return default_rope_split(head_dim());
    return rope_split;
}

// Full-scale configuration (11B-class), used for parameter accounting only;
// never materialized in tests.
inline ModelConfig full_scale_config() {
    ModelConfig c;
    c.double_layers = 19;
    c.single_layers = 38;
    c.dim = 3072;
    c.ffn_dim = 12288;
    c.heads = 24;
    c.patch = {1, 2, 2};
    c.in_channels = 33;  // 2k+1 over 16 latent channels
    c.out_channels = 16;
    return c;
}

using GridPos = std::array<int64_t, 3>;

// ---------------------------------------------------------------------------
// patchify / unpatchify
// ---------------------------------------------------------------------------

template <class T>
struct PatchTokens {
    Tensor<T> tokens;  // [n, c*pt*ph*pw]
    std::vector<GridPos> positions;
    Shape latent_shape;  // (c,t,h,w) for the inverse
};

template <class T>
PatchTokens<T> patchify(const Tensor<T>& latent, const std::array<int64_t, 3>& patch) {
    if (latent.rank() != 4) throw ShapeError("patchify: expected (c,t,h,w)");
    int64_t c = latent.dim(0), t = latent.dim(1), h = latent.dim(2), w = latent.dim(3);
    auto [pt, ph, pw] = patch;
    if (t % pt || h % ph || w % pw) throw ShapeError("patchify: extents not divisible by patch");
    int64_t gt = t / pt, gh = h / ph, gw = w / pw;
    auto r = reshape(latent, {c, gt, pt, gh, ph, gw, pw});
    auto p = permute(r, {1, 3, 5, 0, 2, 4, 6});  // (gt, gh, gw, c, pt, ph, pw)
    PatchTokens<T> out;
    out.tokens = reshape(p, {gt * gh * gw, c * pt * ph * pw});
    out.positions.reserve(static_cast<size_t>(gt * gh * gw));
    for (int64_t a = 0; a < gt; ++a)
        for (int64_t b = 0; b < gh; ++b)
            for (int64_t d = 0; d < gw; ++d) out.positions.push_back({a, b, d});
    out.latent_shape = {c, t, h, w};
    return out;
}

template <class T>
Tensor<T> unpatchify(const Tensor<T>& tokens, const std::array<int64_t, 3>& patch, const Shape& latent_shape) {
    int64_t c = latent_shape[0], t = latent_shape[1], h = latent_shape[2], w = latent_shape[3];
    auto [pt, ph, pw] = patch;
    int64_t gt = t / pt, gh = h / ph, gw = w / pw;
    if (tokens.dim(0) != gt * gh * gw || tokens.dim(1) != c * pt * ph * pw)
        throw ShapeError("unpatchify: token grid does not match latent shape");
    auto r = reshape(tokens, {gt, gh, gw, c, pt, ph, pw});
    auto p = permute(r, {3, 0, 4, 1, 5, 2, 6});  // (c, gt, pt, gh, ph, gw, pw)
    return reshape(p, {c, t, h, w});
}

// ---------------------------------------------------------------------------
// 3D rotary embedding
// ---------------------------------------------------------------------------

// Axial rotary rotation of q or k laid out as [heads, n, head_dim]; the head
// dimension is split (d_t, d_h, d_w) across the three axes and each part is
// rotated pairwise by pos * base^(-2j/d_axis). Norm preserving; inner
// products depend only on relative positions per axis.
template <class T>
Tensor<T> rope3d(const Tensor<T>& x, const std::vector<GridPos>& positions,
                 const std::array<int64_t, 3>& split, double freq_base = 10000.0) {
    if (x.rank() != 3) throw ShapeError("rope3d: expected [heads, n, head_dim]");
    int64_t n = x.dim(1), hd = x.dim(2);
    if (split[0] + split[1] + split[2] != hd) throw ShapeError("rope3d: split does not sum to head_dim");
    for (int64_t d : split)
        if (d % 2) throw ShapeError("rope3d: split entries must be even");
    if (static_cast<int64_t>(positions.size()) != n) throw ShapeError("rope3d: positions length mismatch");

    // split the head dim into the non-empty axis parts
    std::vector<int64_t> sizes;
    std::vector<int> axes;
    for (int axis = 0; axis < 3; ++axis)
        if (split[static_cast<size_t>(axis)] > 0) {
            sizes.push_back(split[static_cast<size_t>(axis)]);
            axes.push_back(axis);
        }
    std::vector<Tensor<T>> xs =
        sizes.size() == 1 ? std::vector<Tensor<T>>{x} : vgen::split(x, 2, sizes);
    std::vector<Tensor<T>> rotated;
    for (size_t part_i = 0; part_i < axes.size(); ++part_i) {
        int axis = axes[part_i];
        int64_t da = sizes[part_i];
        int64_t half = da / 2;
        std::vector<T> cosv(static_cast<size_t>(n * half)), sinv(static_cast<size_t>(n * half));
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < half; ++j) {
                double freq = std::pow(freq_base, -2.0 * double(j) / double(da));
                double ang = double(positions[static_cast<size_t>(i)][static_cast<size_t>(axis)]) * freq;
                cosv[static_cast<size_t>(i * half + j)] = static_cast<T>(std::cos(ang));
                sinv[static_cast<size_t>(i * half + j)] = static_cast<T>(std::sin(ang));
            }
        auto cosb = Tensor<T>::from({1, n, half, 1}, std::move(cosv));
        auto sinb = Tensor<T>::from({1, n, half, 1}, std::move(sinv));
        auto part = reshape(xs[part_i], {x.dim(0), n, half, 2});
        auto eo = vgen::split(part, 3, {1, 1});
        auto re = sub(mul(eo[0], cosb), mul(eo[1], sinb));
        auto ro = add(mul(eo[0], sinb), mul(eo[1], cosb));
        rotated.push_back(reshape(concat<T>({re, ro}, 3), {x.dim(0), n, da}));
    }
    if (rotated.size() == 1) return rotated[0];
    return concat<T>(rotated, 2);
}

// ---------------------------------------------------------------------------
// deterministic toy text embedder
// ---------------------------------------------------------------------------

template <class T>
struct TextEmbedding {
    Tensor<T> tokens;  // [n_txt, dim]
    Tensor<T> pooled;  // [dim]
};

// Whitespace tokenization; each token's stable 64-bit hash seeds a fixed
// pseudo-random unit vector. The pooled vector is the token mean. An empty
// caption maps to the single null token.
template <class T>
TextEmbedding<T> toy_text_embed(const std::string& caption, int64_t dim) {
    if (dim < 1) throw ConfigError("toy_text_embed: dim must be >= 1");
    std::vector<std::string> words;
    std::istringstream is(caption);
    std::string w;
    while (is >> w) words.push_back(w);
    if (words.empty()) words.push_back("<null>");

    std::vector<T> tok(static_cast<size_t>(words.size()) * static_cast<size_t>(dim));
    std::vector<T> pooled(static_cast<size_t>(dim), T(0));
    for (size_t i = 0; i < words.size(); ++i) {
        Rng r(splitmix64(fnv1a64(words[i])));
        double sq = 0.0;
        std::vector<double> v(static_cast<size_t>(dim));
        for (auto& x : v) {
            x = r.normal();
            sq += x * x;
        }
        double inv = 1.0 / std::sqrt(sq);
        for (int64_t j = 0; j < dim; ++j) {
            T val = static_cast<T>(v[static_cast<size_t>(j)] * inv);
            tok[i * static_cast<size_t>(dim) + static_cast<size_t>(j)] = val;
            pooled[static_cast<size_t>(j)] += val / static_cast<T>(words.size());
        }
    }
    TextEmbedding<T> e;
    e.tokens = Tensor<T>::from({static_cast<int64_t>(words.size()), dim}, std::move(tok));
    e.pooled = Tensor<T>::from({dim}, std::move(pooled));
    return e;
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

namespace mmdit_detail {

inline std::vector<ParamSpec> stream_specs(const std::string& p, int64_t dim, int64_t ffn) {
    std::vector<ParamSpec> s;
    spec_linear(s, p + ".mod", dim, 6 * dim);
    spec_linear(s, p + ".qkv", dim, 3 * dim);
    spec_linear(s, p + ".proj", dim, dim);
    spec_linear(s, p + ".mlp1", dim, ffn);
    spec_linear(s, p + ".mlp2", ffn, dim);
    return s;
}

template <class T>
void build_stream(ParamStore<T>& ps, const std::string& p, int64_t dim, int64_t ffn, Rng& rng) {
    add_linear(ps, p + ".mod", dim, 6 * dim, rng);
    add_linear(ps, p + ".qkv", dim, 3 * dim, rng);
    add_linear(ps, p + ".proj", dim, dim, rng);
    add_linear(ps, p + ".mlp1", dim, ffn, rng);
    add_linear(ps, p + ".mlp2", ffn, dim, rng);
}

// x*(1+scale)+shift with [1,dim] modulation rows broadcast over tokens.
template <class T>
Tensor<T> modulate(const Tensor<T>& x, const Tensor<T>& shift, const Tensor<T>& sc) {
    return add(mul(x, add(sc, Tensor<T>::ones(sc.shape()))), shift);
}

template <class T>
struct Mod {
    Tensor<T> shift_a, scale_a, gate_a, shift_m, scale_m, gate_m;
};

template <class T>
Mod<T> block_mod(const ParamStore<T>& ps, const std::string& p, const Tensor<T>& cvec) {
    auto m = split(linear(ps, p + ".mod", cvec), 1,
                   std::vector<int64_t>(6, cvec.dim(1)));  // six [1,dim] rows
    return Mod<T>{m[0], m[1], m[2], m[3], m[4], m[5]};
}

}  // namespace mmdit_detail

template <class T>
struct MmditModel {
    ModelConfig cfg;
    ParamStore<T> params;

    static std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
        cfg.validate();
        std::vector<ParamSpec> s;
        int64_t in_patch = cfg.in_channels * cfg.patch[0] * cfg.patch[1] * cfg.patch[2];
        int64_t out_patch = cfg.out_channels * cfg.patch[0] * cfg.patch[1] * cfg.patch[2];
        spec_linear(s, "patch_in", in_patch, cfg.dim);
        spec_linear(s, "txt_in", cfg.dim, cfg.dim);
        spec_linear(s, "time1", cfg.time_freq_dim, cfg.dim);
        spec_linear(s, "time2", cfg.dim, cfg.dim);
        spec_linear(s, "pool_in", cfg.dim, cfg.dim);
        for (int64_t i = 0; i < cfg.double_layers; ++i)
            for (const char* stream : {".vid", ".txt"}) {
                auto part = mmdit_detail::stream_specs("double" + std::to_string(i) + stream, cfg.dim,
                                                       cfg.ffn_dim);
                s.insert(s.end(), part.begin(), part.end());
            }
        for (int64_t i = 0; i < cfg.single_layers; ++i) {
            auto part = mmdit_detail::stream_specs("single" + std::to_string(i), cfg.dim, cfg.ffn_dim);
            s.insert(s.end(), part.begin(), part.end());
        }
        spec_linear(s, "final.mod", cfg.dim, 2 * cfg.dim);
        spec_linear(s, "final.proj", cfg.dim, out_patch);
        return s;
    }

    static MmditModel build(const ModelConfig& cfg, Rng& rng) {
        cfg.validate();
        MmditModel m;
        m.cfg = cfg;
        auto& ps = m.params;
        int64_t in_patch = cfg.in_channels * cfg.patch[0] * cfg.patch[1] * cfg.patch[2];
        int64_t out_patch = cfg.out_channels * cfg.patch[0] * cfg.patch[1] * cfg.patch[2];
        add_linear(ps, "patch_in", in_patch, cfg.dim, rng);
        add_linear(ps, "txt_in", cfg.dim, cfg.dim, rng);
        add_linear(ps, "time1", cfg.time_freq_dim, cfg.dim, rng);
        add_linear(ps, "time2", cfg.dim, cfg.dim, rng);
        add_linear(ps, "pool_in", cfg.dim, cfg.dim, rng);
        for (int64_t i = 0; i < cfg.double_layers; ++i)
            for (const char* stream : {".vid", ".txt"})
                mmdit_detail::build_stream(ps, "double" + std::to_string(i) + stream, cfg.dim, cfg.ffn_dim,
                                           rng);
        for (int64_t i = 0; i < cfg.single_layers; ++i)
            mmdit_detail::build_stream(ps, "single" + std::to_string(i), cfg.dim, cfg.ffn_dim, rng);
        add_linear(ps, "final.mod", cfg.dim, 2 * cfg.dim, rng);
        // zero-initialized output projection: a fresh model predicts zero velocity
        add_linear(ps, "final.proj", cfg.dim, out_patch, rng, Init::zero);
        return m;
    }

    // Sinusoidal features of t (scaled by 1000), half cos / half sin.
    Tensor<T> time_features(double t) const {
        int64_t f = cfg.time_freq_dim, half = f / 2;
        std::vector<T> v(static_cast<size_t>(f));
        for (int64_t j = 0; j < half; ++j) {
            double freq = std::pow(10000.0, -double(j) / double(half));
            v[static_cast<size_t>(j)] = static_cast<T>(std::cos(1000.0 * t * freq));
            v[static_cast<size_t>(half + j)] = static_cast<T>(std::sin(1000.0 * t * freq));
        }
        return Tensor<T>::from({1, f}, std::move(v));
    }

    // Token-level forward: video tokens [n_vid, in_patch_dim] with their grid
    // positions, text tokens [n_txt, dim], pooled [dim], timestep t.
    // Returns velocity tokens [n_vid, out_patch_dim].
    Tensor<T> forward_tokens(const Tensor<T>& vid_raw, const std::vector<GridPos>& vid_pos,
                             const Tensor<T>& text_tokens, const Tensor<T>& pooled, double t) const {
        using namespace mmdit_detail;
        const auto& ps = params;
        int64_t n_vid = vid_raw.dim(0), n_txt = text_tokens.dim(0);
        if (static_cast<int64_t>(vid_pos.size()) != n_vid)
            throw ShapeError("model: video token/position count mismatch");

        auto xv = linear(ps, "patch_in", vid_raw);
        auto xt = linear(ps, "txt_in", text_tokens);
        auto cond = add(linear(ps, "time2", silu(linear(ps, "time1", time_features(t)))),
                        linear(ps, "pool_in", reshape(pooled, {1, cfg.dim})));
        auto cvec = silu(cond);

        std::vector<GridPos> joint_pos = vid_pos;
        joint_pos.resize(static_cast<size_t>(n_vid + n_txt), GridPos{0, 0, 0});
        auto rsplit = cfg.effective_rope_split();

        auto joint_attention = [&](const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
            int64_t n = q.dim(0), hd = cfg.head_dim();
            auto heads_first = [&](const Tensor<T>& x) {
                return permute(reshape(x, {n, cfg.heads, hd}), {1, 0, 2});
            };
            auto qh = rope3d(heads_first(q), joint_pos, rsplit);
            auto kh = rope3d(heads_first(k), joint_pos, rsplit);
            auto vh = heads_first(v);
            auto scores = scale(matmul(qh, permute(kh, {0, 2, 1})),
                                static_cast<T>(1.0 / std::sqrt(double(hd))));
            auto out = matmul(softmax(scores), vh);
            return reshape(permute(out, {1, 0, 2}), {n, cfg.dim});
        };

        auto qkv_of = [&](const std::string& p, const Tensor<T>& h) {
            return split(linear(ps, p + ".qkv", h), 1, {cfg.dim, cfg.dim, cfg.dim});
        };
        auto mlp_of = [&](const std::string& p, const Tensor<T>& h) {
            return linear(ps, p + ".mlp2", gelu(linear(ps, p + ".mlp1", h)));
        };

        for (int64_t i = 0; i < cfg.double_layers; ++i) {
            std::string pv = "double" + std::to_string(i) + ".vid";
            std::string pt = "double" + std::to_string(i) + ".txt";
            auto mv = block_mod(ps, pv, cvec);
            auto mt = block_mod(ps, pt, cvec);
            auto hv = modulate(rms_norm(xv), mv.shift_a, mv.scale_a);
            auto ht = modulate(rms_norm(xt), mt.shift_a, mt.scale_a);
            auto qv = qkv_of(pv, hv), qt = qkv_of(pt, ht);
            auto attn = joint_attention(concat<T>({qv[0], qt[0]}, 0), concat<T>({qv[1], qt[1]}, 0),
                                        concat<T>({qv[2], qt[2]}, 0));
            auto parts = split(attn, 0, {n_vid, n_txt});
            xv = add(xv, mul(mv.gate_a, linear(ps, pv + ".proj", parts[0])));
            xt = add(xt, mul(mt.gate_a, linear(ps, pt + ".proj", parts[1])));
            xv = add(xv, mul(mv.gate_m, mlp_of(pv, modulate(rms_norm(xv), mv.shift_m, mv.scale_m))));
            xt = add(xt, mul(mt.gate_m, mlp_of(pt, modulate(rms_norm(xt), mt.shift_m, mt.scale_m))));
        }

        auto x = concat<T>({xv, xt}, 0);
        for (int64_t i = 0; i < cfg.single_layers; ++i) {
            std::string p = "single" + std::to_string(i);
            auto m = block_mod(ps, p, cvec);
            auto h = modulate(rms_norm(x), m.shift_a, m.scale_a);
            auto q = qkv_of(p, h);
            x = add(x, mul(m.gate_a, linear(ps, p + ".proj", joint_attention(q[0], q[1], q[2]))));
            x = add(x, mul(m.gate_m, mlp_of(p, modulate(rms_norm(x), m.shift_m, m.scale_m))));
        }
        auto vid_out = split(x, 0, {n_vid, n_txt})[0];

        auto fm = split(linear(ps, "final.mod", cvec), 1, {cfg.dim, cfg.dim});
        auto y = modulate(rms_norm(vid_out), fm[0], fm[1]);
        return linear(ps, "final.proj", y);
    }

    // Latent-level forward: (in_channels, t, h, w) -> (out_channels, t, h, w).
    Tensor<T> forward(const Tensor<T>& latent, const Tensor<T>& text_tokens, const Tensor<T>& pooled,
                      double t) const {
        if (latent.rank() != 4 || latent.dim(0) != cfg.in_channels)
            throw ShapeError("model: latent must be (in_channels,t,h,w)");
        auto pt = patchify(latent, cfg.patch);
        auto out_tokens = forward_tokens(pt.tokens, pt.positions, text_tokens, pooled, t);
        Shape out_shape{cfg.out_channels, latent.dim(1), latent.dim(2), latent.dim(3)};
        return unpatchify(out_tokens, cfg.patch, out_shape);
    }
};

}  // namespace vgen
