#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vgen/flow_match.hpp"
#include "vgen/mmdit.hpp"
#include "vgen/optim.hpp"

using namespace vgen;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.double_layers = 1;
    c.single_layers = 1;
    c.dim = 12;
    c.ffn_dim = 16;
    c.heads = 2;
    c.patch = {1, 1, 1};
    c.in_channels = 2;
    c.out_channels = 2;
    c.time_freq_dim = 32;
    return c;
}

}  // namespace

TEST_CASE("patchify token counts and round trip") {
    Rng rng(1);
    auto lat = TensorF::randn({4, 2, 4, 4}, rng);
    auto pt = patchify(lat, {1, 2, 2});
    CHECK(pt.tokens.shape() == Shape{8, 16});
    CHECK(pt.positions.size() == 8);
    CHECK(pt.positions[0] == GridPos{0, 0, 0});
    CHECK(pt.positions.back() == GridPos{1, 1, 1});

    // patch 1: tokens are the per-voxel channel vectors
    auto p1 = patchify(lat, {1, 1, 1});
    CHECK(p1.tokens.shape() == Shape{32, 4});
    for (int64_t ch = 0; ch < 4; ++ch)
        CHECK(p1.tokens.values()[ch] == lat.values()[ch * 32]);  // first voxel

    // identity projection round trip is exact
    auto back = unpatchify(pt.tokens, {1, 2, 2}, pt.latent_shape);
    CHECK(back.values() == lat.values());

    CHECK_THROWS_AS(patchify(lat, {3, 1, 1}), ShapeError);
}

TEST_CASE("rope3d zero position is the identity and rotations are isometries") {
    Rng rng(2);
    std::array<int64_t, 3> split{2, 2, 4};
    std::vector<GridPos> zero_pos(5, GridPos{0, 0, 0});
    auto x = TensorD::randn({2, 5, 8}, rng);
    auto y = rope3d(x, zero_pos, split);
    for (size_t i = 0; i < x.values().size(); ++i)
        CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-12));

    std::vector<GridPos> pos;
    for (int i = 0; i < 5; ++i) pos.push_back({i, 7 - i, 2 * i});
    auto r = rope3d(x, pos, split);
    // per-token norms preserved
    for (int64_t h = 0; h < 2; ++h)
        for (int64_t i = 0; i < 5; ++i) {
            double n0 = 0, n1 = 0;
            for (int64_t j = 0; j < 8; ++j) {
                n0 += x.values()[(h * 5 + i) * 8 + j] * x.values()[(h * 5 + i) * 8 + j];
                n1 += r.values()[(h * 5 + i) * 8 + j] * r.values()[(h * 5 + i) * 8 + j];
            }
            CHECK(std::abs(std::sqrt(n0) - std::sqrt(n1)) < 1e-5);
        }
}

TEST_CASE("rope3d inner products depend only on relative positions") {
    Rng rng(3);
    std::array<int64_t, 3> split{2, 4, 2};
    for (int trial = 0; trial < 100; ++trial) {
        auto q = TensorD::randn({1, 1, 8}, rng);
        auto k = TensorD::randn({1, 1, 8}, rng);
        GridPos p1{rng.uniform_int(0, 9), rng.uniform_int(0, 9), rng.uniform_int(0, 9)};
        GridPos p2{rng.uniform_int(0, 9), rng.uniform_int(0, 9), rng.uniform_int(0, 9)};
        GridPos d{rng.uniform_int(0, 5), rng.uniform_int(0, 5), rng.uniform_int(0, 5)};
        auto dot = [&](GridPos a, GridPos b) {
            auto qa = rope3d(q, {a}, split);
            auto kb = rope3d(k, {b}, split);
            double s = 0;
            for (int j = 0; j < 8; ++j) s += qa.values()[j] * kb.values()[j];
            return s;
        };
        GridPos p1s{p1[0] + d[0], p1[1] + d[1], p1[2] + d[2]};
        GridPos p2s{p2[0] + d[0], p2[1] + d[1], p2[2] + d[2]};
        CHECK(std::abs(dot(p1, p2) - dot(p1s, p2s)) < 1e-4);
    }
}

TEST_CASE("default rope split follows the 2:3:3 rule") {
    CHECK(default_rope_split(128) == std::array<int64_t, 3>{32, 48, 48});
    CHECK(default_rope_split(16) == std::array<int64_t, 3>{4, 6, 6});
    auto s6 = default_rope_split(6);
    CHECK(s6[0] + s6[1] + s6[2] == 6);
    for (auto v : s6) CHECK(v % 2 == 0);
}

TEST_CASE("toy_text_embed determinism and structure") {
    auto a = toy_text_embed<float>("a dog runs", 16);
    auto b = toy_text_embed<float>("a dog runs", 16);
    CHECK(a.tokens.values() == b.tokens.values());
    CHECK(a.pooled.values() == b.pooled.values());
    CHECK(a.tokens.shape() == Shape{3, 16});

    auto c = toy_text_embed<float>("a dog sits", 16);
    int differing = 0;
    for (int64_t tok = 0; tok < 3; ++tok) {
        bool same = true;
        for (int64_t j = 0; j < 16; ++j)
            same = same && a.tokens.values()[tok * 16 + j] == c.tokens.values()[tok * 16 + j];
        if (!same) ++differing;
    }
    CHECK(differing == 1);

    auto da = toy_text_embed<float>("a a", 16);
    auto sa = toy_text_embed<float>("a", 16);
    for (int64_t j = 0; j < 16; ++j)
        CHECK(da.pooled.values()[j] == doctest::Approx(sa.tokens.values()[j]));

    auto empty = toy_text_embed<float>("   ", 16);
    CHECK(empty.tokens.shape() == Shape{1, 16});
}

TEST_CASE("model forward shape contract and gated-zero output") {
    ModelConfig cfg;
    cfg.double_layers = 1;
    cfg.single_layers = 1;
    cfg.dim = 32;
    cfg.ffn_dim = 64;
    cfg.heads = 4;
    cfg.patch = {1, 1, 1};
    cfg.in_channels = 4;
    cfg.out_channels = 4;
    cfg.time_freq_dim = 32;
    Rng rng(11);
    auto model = MmditModel<float>::build(cfg, rng);
    auto text = toy_text_embed<float>("test prompt", cfg.dim);
    auto lat = TensorF::randn({4, 2, 4, 4}, rng);
    auto v = model.forward(lat, text.tokens, text.pooled, 0.5);
    CHECK(v.shape() == lat.shape());
    // zero-initialized final projection -> zero velocity regardless of input
    for (float x : v.values()) CHECK(x == 0.0f);
}

TEST_CASE("parameter count matches the per-layer hand count for the full-scale table config") {
    auto cfg = full_scale_config();
    int64_t computed = param_count(MmditModel<double>::param_specs(cfg));

    // independent hand count
    auto lin = [](int64_t in, int64_t out) { return in * out + out; };
    int64_t dim = 3072, ffn = 12288;
    int64_t in_patch = 33 * 1 * 2 * 2, out_patch = 16 * 1 * 2 * 2;
    int64_t stream = lin(dim, 6 * dim) + lin(dim, 3 * dim) + lin(dim, dim) + lin(dim, ffn) + lin(ffn, dim);
    int64_t expected = lin(in_patch, dim) + lin(dim, dim) + lin(256, dim) + lin(dim, dim) + lin(dim, dim) +
                       19 * 2 * stream + 38 * stream + lin(dim, 2 * dim) + lin(dim, out_patch);
    MESSAGE("full-scale parameter count: ", computed);
    CHECK(computed == expected);
    CHECK(computed > 10'000'000'000);  // 11B-class
}

TEST_CASE("fm_loss gradient through the (1,1)-block model matches finite differences") {
    auto cfg = tiny_config();
    Rng rng(17);
    auto model = MmditModel<double>::build(cfg, rng);
    auto text = toy_text_embed<double>("tiny check", cfg.dim);
    auto lat = TensorD::randn({2, 2, 2, 2}, rng, 1.0, true);
    auto target = TensorD::randn({2, 2, 2, 2}, rng);
    const double t = 0.3;

    auto loss_value = [&]() { return fm_loss(model.forward(lat, text.tokens, text.pooled, t), target).item(); };

    model.params.zero_grad();
    lat.zero_grad();
    backward(fm_loss(model.forward(lat, text.tokens, text.pooled, t), target));

    auto check_tensor = [&](Tensor<double> p, const std::string& name) {
        auto node = p.node();
        const double h = 1e-6;
        for (size_t j = 0; j < node->data.size(); ++j) {
            double orig = node->data[j];
            node->data[j] = orig + h;
            double fp = loss_value();
            node->data[j] = orig - h;
            double fm = loss_value();
            node->data[j] = orig;
            double num = (fp - fm) / (2 * h);
            double ana = node->grad[j];
            double rel = std::abs(ana - num) / std::max({1.0, std::abs(ana), std::abs(num)});
            if (rel >= 1e-5) { MESSAGE("tensor ", name, " coord ", j, " rel ", rel); }
            REQUIRE(rel < 1e-5);
        }
    };

    check_tensor(lat, "latent");
    for (auto& [name, p] : model.params.params) check_tensor(p, name);
}

TEST_CASE("permuting video tokens together with positions permutes the output") {
    auto cfg = tiny_config();
    Rng rng(23);
    auto model = MmditModel<double>::build(cfg, rng);
    // break the zero-output init so the test sees real values
    {
        Rng wr(29);
        auto w = model.params.get("final.proj.w").node();
        for (auto& v : w->data) v = wr.normal() * 0.1;
    }
    auto text = toy_text_embed<double>("order free", cfg.dim);
    auto lat = TensorD::randn({2, 2, 2, 2}, rng);
    auto pt = patchify(lat, cfg.patch);
    auto out = model.forward_tokens(pt.tokens, pt.positions, text.tokens, text.pooled, 0.7);

    std::vector<int64_t> perm(static_cast<size_t>(pt.tokens.dim(0)));
    std::iota(perm.begin(), perm.end(), 0);
    for (size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_int(0, int64_t(i) - 1)]);

    int64_t n = pt.tokens.dim(0), d = pt.tokens.dim(1);
    std::vector<double> shuf(static_cast<size_t>(n * d));
    std::vector<GridPos> spos(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        spos[i] = pt.positions[static_cast<size_t>(perm[i])];
        for (int64_t j = 0; j < d; ++j) shuf[i * d + j] = pt.tokens.values()[perm[i] * d + j];
    }
    auto out2 = model.forward_tokens(TensorD::from({n, d}, std::move(shuf)), spos, text.tokens,
                                     text.pooled, 0.7);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < out.dim(1); ++j)
            CHECK(out2.values()[i * out.dim(1) + j] ==
                  doctest::Approx(out.values()[perm[i] * out.dim(1) + j]).epsilon(1e-9));
}

TEST_CASE("moving-square training smoke: loss halves within 300 steps") {
    ModelConfig cfg;
    cfg.double_layers = 1;
    cfg.single_layers = 1;
    cfg.dim = 32;
    cfg.ffn_dim = 64;
    cfg.heads = 4;
    cfg.patch = {1, 2, 2};
    cfg.in_channels = 1;
    cfg.out_channels = 1;
    cfg.time_freq_dim = 64;
    Rng rng(99);
    auto model = MmditModel<float>::build(cfg, rng);
    auto text = toy_text_embed<float>("moving square", cfg.dim);

    auto make_video = [](Rng& r) {
        std::vector<float> v(2 * 8 * 8, 0.0f);
        int64_t y = r.uniform_int(0, 6), x = r.uniform_int(0, 6);
        int64_t dy = r.uniform_int(-1, 1), dx = r.uniform_int(-1, 1);
        int64_t y2 = std::clamp<int64_t>(y + dy, 0, 6), x2 = std::clamp<int64_t>(x + dx, 0, 6);
        for (int64_t i = 0; i < 2; ++i)
            for (int64_t j = 0; j < 2; ++j) {
                v[(y + i) * 8 + (x + j)] = 1.0f;
                v[64 + (y2 + i) * 8 + (x2 + j)] = 1.0f;
            }
        return TensorF::from({1, 2, 8, 8}, std::move(v));
    };

    ShiftConfig shift;
    auto params = model.params.all();
    auto opt = OptimizerState<float>::make(2e-3);
    Rng data = rng.substream("data");
    const int batch = 4;
    double first = -1, last = -1;
    for (int step = 0; step < 300; ++step) {
        model.params.zero_grad();
        TensorF loss_sum = TensorF::scalar(0.0f);
        for (int b = 0; b < batch; ++b) {
            auto x0 = make_video(data);
            double t = sample_timestep(data, shift, 32);
            auto pair = make_training_pair(x0, data, t);
            auto pred = model.forward(pair.xt, text.tokens, text.pooled, t);
            loss_sum = add(loss_sum, fm_loss(pred, pair.target));
        }
        auto loss = scale(loss_sum, 1.0f / batch);
        if (step == 0) first = loss.item();
        last = loss.item();
        backward(loss);
        adamw_step(params, opt);
    }
    MESSAGE("moving-square loss: first=", first, " last=", last);
    CHECK(last <= 0.5 * first);
}
