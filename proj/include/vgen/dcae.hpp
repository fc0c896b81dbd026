#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vgen/nn.hpp"
#include "vgen/tensor.hpp"

// Video deep-compression autoencoder blocks: lossless space-time/channel
// pixel shuffling, shortcut residual down/upsampling (shuffle + channel-group
// averaging down, channel duplication + unshuffle up), a simplified
// encoder/decoder built from those blocks, the token-count model, and the AE
// loss combiner.

namespace vgen {

struct CompressionSpec {
    int64_t d_t = 4, d_h = 8, d_w = 8;  // autoencoder downsample ratios
    int64_t p_t = 1, p_h = 2, p_w = 2;  // generation-model patch sizes
    int64_t latent_channels = 16;
    bool causal = true;

    void validate() const {
        if (d_t < 1 || d_h < 1 || d_w < 1 || p_t < 1 || p_h < 1 || p_w < 1)
            throw ConfigError("compression spec: ratios and patch sizes must be >= 1");
        if (latent_channels < 1) throw ConfigError("compression spec: latent_channels must be >= 1");
    }
};

// HunyuanVideo-style VAE: 4x8x8, causal, 16 latent channels, model patch 1x2x2.
inline CompressionSpec hunyuan_spec() { return CompressionSpec{4, 8, 8, 1, 2, 2, 16, true}; }

// Video DC-AE: 4x32x32, 128 latent channels, model patch 1x1x1, non-causal.
inline CompressionSpec video_dcae_spec() { return CompressionSpec{4, 32, 32, 1, 1, 1, 128, false}; }

// Latent frame count under the temporal rule: causal keeps frame 0 and
// compresses the rest; non-causal divides evenly.
inline int64_t latent_frames(int64_t frames, const CompressionSpec& spec) {
    if (frames < 1) throw ShapeError("latent_frames: need at least one frame");
    if (spec.causal) {
        if ((frames - 1) % spec.d_t != 0)
            throw ShapeError("latent_frames: (T-1) not divisible by d_t for causal spec");
        return (frames - 1) / spec.d_t + 1;
    }
    if (frames % spec.d_t != 0) throw ShapeError("latent_frames: T not divisible by d_t");
    return frames / spec.d_t;
}

// Tokens seen by the generation model for a (frames, height, width) video.
inline int64_t token_count(int64_t frames, int64_t height, int64_t width, const CompressionSpec& spec) {
    spec.validate();
    int64_t t_lat = latent_frames(frames, spec);
    if (t_lat % spec.p_t != 0) throw ShapeError("token_count: latent frames not divisible by p_t");
    if (height % (spec.d_h * spec.p_h) != 0 || width % (spec.d_w * spec.p_w) != 0)
        throw ShapeError("token_count: spatial extents not divisible by d*p");
    return (t_lat / spec.p_t) * (height / (spec.d_h * spec.p_h)) * (width / (spec.d_w * spec.p_w));
}

// D_token = d_t*d_h*d_w * p_t*p_h*p_w, the per-video token downsample ratio.
inline int64_t token_downsample_ratio(const CompressionSpec& spec) {
    return spec.d_t * spec.d_h * spec.d_w * spec.p_t * spec.p_h * spec.p_w;
}

template <class T>
struct VideoLatent {
    Tensor<T> tensor;  // (channels, t_lat, h_lat, w_lat)
    CompressionSpec spec;
};

// ---------------------------------------------------------------------------
// pixel shuffling
// ---------------------------------------------------------------------------

// (c,t,h,w) -> (c*ft*fh*fw, t/ft, h/fh, w/fw). Bijective; channel index is
// channel-major over (c, it, ih, iw) so a source channel maps to a contiguous
// block of ft*fh*fw output channels.
template <class T>
Tensor<T> space_time_to_channel(const Tensor<T>& x, int64_t ft, int64_t fh, int64_t fw) {
    if (x.rank() != 4) throw ShapeError("space_time_to_channel: expected (c,t,h,w)");
    int64_t c = x.dim(0), t = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (ft < 1 || fh < 1 || fw < 1) throw ShapeError("space_time_to_channel: factors must be >= 1");
    if (t % ft || h % fh || w % fw)
        throw ShapeError("space_time_to_channel: extents not divisible by factors");
    auto r = reshape(x, {c, t / ft, ft, h / fh, fh, w / fw, fw});
    auto p = permute(r, {0, 2, 4, 6, 1, 3, 5});  // (c, ft, fh, fw, t', h', w')
    return reshape(p, {c * ft * fh * fw, t / ft, h / fh, w / fw});
}

// Exact inverse of space_time_to_channel.
template <class T>
Tensor<T> channel_to_space_time(const Tensor<T>& x, int64_t ft, int64_t fh, int64_t fw) {
    if (x.rank() != 4) throw ShapeError("channel_to_space_time: expected (c,t,h,w)");
    int64_t cf = x.dim(0), t = x.dim(1), h = x.dim(2), w = x.dim(3);
    int64_t f = ft * fh * fw;
    if (cf % f) throw ShapeError("channel_to_space_time: channels not divisible by factors");
    int64_t c = cf / f;
    auto r = reshape(x, {c, ft, fh, fw, t, h, w});
    auto p = permute(r, {0, 4, 1, 5, 2, 6, 3});  // (c, t, ft, h, fh, w, fw)
    return reshape(p, {c, t * ft, h * fh, w * fw});
}

namespace dcae_detail {

// Average contiguous channel groups: (c,s...) -> (c/g, s...).
template <class T>
Tensor<T> channel_group_mean(const Tensor<T>& x, int64_t out_channels) {
    int64_t c = x.dim(0);
    if (c % out_channels) throw ShapeError("channel averaging: group size is not integral");
    int64_t g = c / out_channels;
    if (g == 1) return x;
    int64_t s = x.numel() / c;
    Shape grid(x.shape().begin() + 1, x.shape().end());
    auto r = permute(reshape(x, {out_channels, g, s}), {0, 2, 1});  // (out, s, g)
    auto m = matmul(r, Tensor<T>::full({g, 1}, static_cast<T>(1.0 / double(g))));
    Shape os{out_channels};
    os.insert(os.end(), grid.begin(), grid.end());
    return reshape(m, os);
}

// Repeat each channel k times contiguously: (c,s...) -> (c*k, s...).
template <class T>
Tensor<T> channel_repeat(const Tensor<T>& x, int64_t k) {
    if (k == 1) return x;
    int64_t c = x.dim(0);
    int64_t s = x.numel() / c;
    Shape grid(x.shape().begin() + 1, x.shape().end());
    auto r = reshape(x, {c, s, 1});
    auto d = permute(matmul(r, Tensor<T>::ones({1, k})), {0, 2, 1});  // (c, k, s)
    Shape os{c * k};
    os.insert(os.end(), grid.begin(), grid.end());
    return reshape(d, os);
}

}  // namespace dcae_detail

// Shortcut downsampling: shuffle space-time into channels, then average
// contiguous channel groups down to out_channels.
template <class T>
Tensor<T> downsample_residual(const Tensor<T>& x, int64_t ft, int64_t fh, int64_t fw,
                              int64_t out_channels) {
    auto shuffled = space_time_to_channel(x, ft, fh, fw);
    if (shuffled.dim(0) % out_channels)
        throw ShapeError("downsample_residual: shuffled channels not divisible by out_channels");
    return dcae_detail::channel_group_mean(shuffled, out_channels);
}

// Shortcut upsampling: duplicate channels up to out_channels*ft*fh*fw, then
// redistribute them back into space-time.
template <class T>
Tensor<T> upsample_residual(const Tensor<T>& x, int64_t ft, int64_t fh, int64_t fw,
                            int64_t out_channels) {
    int64_t target = out_channels * ft * fh * fw;
    if (target % x.dim(0))
        throw ShapeError("upsample_residual: target channels not divisible by input channels");
    auto dup = dcae_detail::channel_repeat(x, target / x.dim(0));
    return channel_to_space_time(dup, ft, fh, fw);
}

// ---------------------------------------------------------------------------
// simplified encoder/decoder
// ---------------------------------------------------------------------------

struct AutoencoderConfig {
    CompressionSpec spec;
    int64_t in_channels = 3;
    int64_t base_width = 8;  // channels double at each downsampling stage
    int64_t mid_heads = 2;
    int64_t mid_blocks = 1;
};

namespace dcae_detail {

inline int log2_exact(int64_t v, const char* what) {
    int k = 0;
    int64_t x = v;
    while (x > 1) {
        if (x % 2) throw ConfigError(std::string(what) + ": downsample ratio must be a power of two");
        x /= 2;
        ++k;
    }
    return k;
}

// Per-stage (ft,fh,fw). Spatial twos go to the earliest of the five stages;
// temporal twos to the last stages (4 and 5), matching where temporal
// compression happens in the reference layout.
inline std::array<std::array<int64_t, 3>, 5> stage_factors(const CompressionSpec& spec) {
    int kt = log2_exact(spec.d_t, "d_t");
    int kh = log2_exact(spec.d_h, "d_h");
    int kw = log2_exact(spec.d_w, "d_w");
    if (kh > 5 || kw > 5 || kt > 2)
        throw ConfigError("autoencoder: supports d_h,d_w <= 32 and d_t <= 4");
    std::array<std::array<int64_t, 3>, 5> f{};
    for (int i = 0; i < 5; ++i) f[i] = {1, 1, 1};
    for (int i = 0; i < kh; ++i) f[i][1] = 2;
    for (int i = 0; i < kw; ++i) f[i][2] = 2;
    for (int i = 0; i < kt; ++i) f[4 - i][0] = 2;
    return f;
}

// Grid tensor (c, t, h, w) <-> voxel tokens (t*h*w, c).
template <class T>
Tensor<T> to_tokens(const Tensor<T>& x) {
    return permute(reshape(x, {x.dim(0), x.numel() / x.dim(0)}), {1, 0});
}

template <class T>
Tensor<T> to_grid(const Tensor<T>& tok, const Shape& grid_dims) {
    Shape s{tok.dim(1)};
    s.insert(s.end(), grid_dims.begin(), grid_dims.end());
    return reshape(permute(tok, {1, 0}), s);
}

// 1x1x1 voxelwise linear.
template <class T>
Tensor<T> pointwise(const ParamStore<T>& ps, const std::string& name, const Tensor<T>& x) {
    Shape grid(x.shape().begin() + 1, x.shape().end());
    return to_grid(linear(ps, name, to_tokens(x)), grid);
}

}  // namespace dcae_detail

// Encoder: pointwise stem, five downsampling stages (learned voxel MLP over
// the shuffled grid + averaging shortcut), mid attention block(s), latent
// head. Decoder mirrors with duplication shortcuts. The learned paths and the
// attention outputs are zero-initialized, so a fresh model is exactly the
// shortcut pipeline, and with all ratios at 1 and identity stems it is the
// identity map.
template <class T>
struct VideoAutoencoder {
    AutoencoderConfig cfg;
    std::array<std::array<int64_t, 3>, 5> factors{};
    std::array<int64_t, 6> widths{};  // widths[0] = stem output, widths[i] = after stage i
    ParamStore<T> params;

    static VideoAutoencoder build(const AutoencoderConfig& cfg, Rng& rng, bool identity_stems = false) {
        cfg.spec.validate();
        if (cfg.spec.causal) throw ConfigError("autoencoder: causal specs are not supported");
        VideoAutoencoder ae;
        ae.cfg = cfg;
        ae.factors = dcae_detail::stage_factors(cfg.spec);
        ae.widths[0] = cfg.base_width;
        for (int i = 0; i < 5; ++i) {
            int64_t f = ae.factors[i][0] * ae.factors[i][1] * ae.factors[i][2];
            ae.widths[i + 1] = f > 1 ? ae.widths[i] * 2 : ae.widths[i];
        }
        Init stem_init = identity_stems ? Init::identity : Init::normal;
        auto& ps = ae.params;
        add_linear(ps, "enc.stem", cfg.in_channels, ae.widths[0], rng, stem_init);
        for (int i = 0; i < 5; ++i) {
            int64_t cin = ae.widths[i] * ae.factors[i][0] * ae.factors[i][1] * ae.factors[i][2];
            int64_t cout = ae.widths[i + 1];
            add_linear(ps, "enc.stage" + std::to_string(i + 1) + ".mlp1", cin, 2 * cout, rng);
            add_linear(ps, "enc.stage" + std::to_string(i + 1) + ".mlp2", 2 * cout, cout, rng, Init::zero);
        }
        for (int b = 0; b < cfg.mid_blocks; ++b)
            AttnBlock<T>::build(ps, "enc.mid" + std::to_string(b), ae.widths[5], 2 * ae.widths[5], rng);
        add_linear(ps, "enc.head", ae.widths[5], cfg.spec.latent_channels, rng, stem_init);

        add_linear(ps, "dec.stem", cfg.spec.latent_channels, ae.widths[5], rng, stem_init);
        for (int b = 0; b < cfg.mid_blocks; ++b)
            AttnBlock<T>::build(ps, "dec.mid" + std::to_string(b), ae.widths[5], 2 * ae.widths[5], rng);
        for (int i = 4; i >= 0; --i) {
            int64_t cin = ae.widths[i + 1];
            int64_t f = ae.factors[i][0] * ae.factors[i][1] * ae.factors[i][2];
            int64_t cout_f = ae.widths[i] * f;
            add_linear(ps, "dec.stage" + std::to_string(i + 1) + ".mlp1", cin, 2 * ae.widths[i], rng);
            add_linear(ps, "dec.stage" + std::to_string(i + 1) + ".mlp2", 2 * ae.widths[i], cout_f, rng,
                       Init::zero);
        }
        add_linear(ps, "dec.head", ae.widths[0], cfg.in_channels, rng, stem_init);
        return ae;
    }

    // (c,t,h,w) -> latent (latent_channels, t/d_t, h/d_h, w/d_w)
    Tensor<T> encode(const Tensor<T>& video) const {
        using namespace dcae_detail;
        check_input(video);
        auto x = pointwise(params, "enc.stem", video);
        for (int i = 0; i < 5; ++i) {
            const auto& f = factors[i];
            auto shortcut = downsample_residual(x, f[0], f[1], f[2], widths[i + 1]);
            auto h = space_time_to_channel(x, f[0], f[1], f[2]);
            auto name = "enc.stage" + std::to_string(i + 1);
            auto learned = pointwise(params, name + ".mlp2", silu(pointwise(params, name + ".mlp1", h)));
            x = add(shortcut, learned);
        }
        x = mid(x, "enc.mid");
        return pointwise(params, "enc.head", x);
    }

    Tensor<T> decode(const Tensor<T>& latent) const {
        using namespace dcae_detail;
        auto x = pointwise(params, "dec.stem", latent);
        x = mid(x, "dec.mid");
        for (int i = 4; i >= 0; --i) {
            const auto& f = factors[i];
            auto shortcut = upsample_residual(x, f[0], f[1], f[2], widths[i]);
            auto name = "dec.stage" + std::to_string(i + 1);
            auto learned = pointwise(params, name + ".mlp2", silu(pointwise(params, name + ".mlp1", x)));
            x = add(shortcut, channel_to_space_time(learned, f[0], f[1], f[2]));
        }
        return pointwise(params, "dec.head", x);
    }

    std::pair<VideoLatent<T>, Tensor<T>> autoencode(const Tensor<T>& video) const {
        auto lat = encode(video);
        auto recon = decode(lat);
        return {VideoLatent<T>{lat, cfg.spec}, recon};
    }

private:
    void check_input(const Tensor<T>& video) const {
        if (video.rank() != 4) throw ShapeError("autoencoder: expected (c,t,h,w)");
        if (video.dim(0) != cfg.in_channels) throw ShapeError("autoencoder: channel count mismatch");
        if (video.dim(1) % cfg.spec.d_t || video.dim(2) % cfg.spec.d_h || video.dim(3) % cfg.spec.d_w)
            throw ShapeError("autoencoder: extents not divisible by the compression spec");
    }

    Tensor<T> mid(Tensor<T> x, const std::string& prefix) const {
        Shape grid(x.shape().begin() + 1, x.shape().end());
        auto tok = dcae_detail::to_tokens(x);
        for (int b = 0; b < cfg.mid_blocks; ++b)
            tok = AttnBlock<T>::forward(params, prefix + std::to_string(b), tok, cfg.mid_heads);
        return dcae_detail::to_grid(tok, grid);
    }
};

// ---------------------------------------------------------------------------
// AE loss
// ---------------------------------------------------------------------------

struct AeLossWeights {
    double l1 = 1.0;
    double perceptual = 0.5;
    double adversarial = 0.0;
};

inline AeLossWeights ae_phase1_weights() { return {1.0, 0.5, 0.0}; }
inline AeLossWeights ae_phase2_weights() { return {1.0, 0.5, 0.05}; }

// Optional plugin terms; a null function contributes zero.
template <class T>
struct AeLossPlugins {
    std::function<Tensor<T>(const Tensor<T>& recon, const Tensor<T>& target)> perceptual;
    std::function<Tensor<T>(const Tensor<T>& recon)> adversarial;
};

// L = w1*L1 + wp*L_perceptual + wa*L_adv. L1 is mean absolute error; its
// gradient (sign of the difference) is obtained by multiplying with the
// detached sign, which stays inside the fixed primitive set.
template <class T>
Tensor<T> ae_loss(const Tensor<T>& recon, const Tensor<T>& target, const AeLossWeights& w,
                  const AeLossPlugins<T>& plugins = {}) {
    if (recon.shape() != target.shape()) throw ShapeError("ae_loss: shape mismatch");
    auto diff = sub(recon, target);
    std::vector<T> sgn(diff.values().size());
    for (size_t i = 0; i < sgn.size(); ++i) {
        T v = diff.values()[i];
        sgn[i] = v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
    }
    auto loss = scale(mean(mul(diff, Tensor<T>::from(diff.shape(), std::move(sgn)))), static_cast<T>(w.l1));
    if (plugins.perceptual && w.perceptual != 0.0)
        loss = add(loss, scale(plugins.perceptual(recon, target), static_cast<T>(w.perceptual)));
    if (plugins.adversarial && w.adversarial != 0.0)
        loss = add(loss, scale(plugins.adversarial(recon), static_cast<T>(w.adversarial)));
    return loss;
}

// ---------------------------------------------------------------------------
// reconstruction metrics (evaluation only)
// ---------------------------------------------------------------------------

template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
    if (a.shape() != b.shape()) throw ShapeError("psnr: shape mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < a.values().size(); ++i) {
        double d = double(a.values()[i]) - double(b.values()[i]);
        mse += d * d;
    }
    mse /= double(a.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

// Global (single-window) SSIM over all elements.
template <class T>
double ssim_global(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
    if (a.shape() != b.shape()) throw ShapeError("ssim: shape mismatch");
    double n = double(a.numel());
    double ma = 0, mb = 0;
    for (size_t i = 0; i < a.values().size(); ++i) {
        ma += a.values()[i];
        mb += b.values()[i];
    }
    ma /= n;
    mb /= n;
    double va = 0, vb = 0, cov = 0;
    for (size_t i = 0; i < a.values().size(); ++i) {
        double da = a.values()[i] - ma, db = b.values()[i] - mb;
        va += da * da;
        vb += db * db;
        cov += da * db;
    }
    va /= n;
    vb /= n;
    cov /= n;
    double c1 = 0.01 * peak * 0.01 * peak, c2 = 0.03 * peak * 0.03 * peak;
    return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

}  // namespace vgen
