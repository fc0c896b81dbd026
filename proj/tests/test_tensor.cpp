#include <doctest.h>

#include <cmath>

#include "vgen/gradcheck.hpp"
#include "vgen/optim.hpp"
#include "vgen/tensor.hpp"

using namespace vgen;

TEST_CASE("matmul identity and hand values") {
    auto I = TensorF::from({2, 2}, {1, 0, 0, 1});
    auto B = TensorF::from({2, 2}, {3, 4, 5, 6});
    auto C = matmul(I, B);
    CHECK(C.values() == std::vector<float>{3, 4, 5, 6});

    // [[1,2]] x [[3],[4]] = [[11]]
    auto a = TensorF::from({1, 2}, {1, 2});
    auto b = TensorF::from({2, 1}, {3, 4});
    CHECK(matmul(a, b).item() == doctest::Approx(11.0f));

    auto z = TensorF::zeros({2, 2});
    auto any = TensorF::from({2, 2}, {9, 8, 7, 6});
    auto zprod = matmul(z, any);
    for (float v : zprod.values()) CHECK(v == 0.0f);
}

TEST_CASE("matmul shape errors") {
    auto a = TensorF::zeros({2, 3});
    auto b = TensorF::zeros({2, 3});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("batched matmul broadcasting against per-slice products") {
    Rng rng(11);
    auto a = TensorF::randn({3, 2, 4}, rng);
    auto w = TensorF::randn({4, 5}, rng);
    auto c = matmul(a, w);
    REQUIRE(c.shape() == Shape{3, 2, 5});
    for (int64_t bi = 0; bi < 3; ++bi) {
        std::vector<float> slice(a.values().begin() + bi * 8, a.values().begin() + (bi + 1) * 8);
        auto cs = matmul(TensorF::from({2, 4}, slice), w);
        for (int64_t i = 0; i < 10; ++i)
            CHECK(c.values()[bi * 10 + i] == doctest::Approx(cs.values()[i]));
    }
}

TEST_CASE("backward linear cases") {
    auto x = TensorF::from({3}, {1, 2, 3}, true);
    backward(sum(x));
    CHECK(x.grad() == std::vector<float>{1, 1, 1});

    auto y = TensorF::from({2}, {1, 2}, true);
    backward(sum(mul(y, y)));
    CHECK(y.grad()[0] == doctest::Approx(2.0f));
    CHECK(y.grad()[1] == doctest::Approx(4.0f));
}

TEST_CASE("backward f(x)=c*x gives grad c for any shape") {
    Rng rng(3);
    for (Shape s : {Shape{4}, Shape{2, 3}, Shape{2, 2, 2}}) {
        auto x = TensorF::randn(s, rng, 1.0f, true);
        backward(sum(scale(x, 2.5f)));
        for (float g : x.grad()) CHECK(g == doctest::Approx(2.5f));
    }
}

TEST_CASE("backward rejects non-scalar and detached losses") {
    auto x = TensorF::from({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(scale(x, 2.0f)), ShapeError);
    auto c = TensorF::from({1}, {3});
    CHECK_THROWS_AS(backward(sum(c)), NumericError);
}

TEST_CASE("tape is single use") {
    auto x = TensorF::from({2}, {1, 2}, true);
    auto loss = sum(mul(x, x));
    backward(loss);
    CHECK_THROWS_AS(backward(loss), NumericError);
}

TEST_CASE("non-finite op output raises") {
    auto x = TensorF::from({1}, {1e30f});
    CHECK_THROWS_AS(mul(scale(x, 1e30f), scale(x, 1e30f)), NumericError);
}

TEST_CASE("broadcast add/mul against explicit loops") {
    auto a = TensorF::from({2, 3}, {1, 2, 3, 4, 5, 6});
    auto b = TensorF::from({1, 3}, {10, 20, 30});
    auto s = add(a, b);
    CHECK(s.values() == std::vector<float>{11, 22, 33, 14, 25, 36});
    auto p = mul(a, b);
    CHECK(p.values() == std::vector<float>{10, 40, 90, 40, 100, 180});

    // gradient reduces over the broadcast axis
    auto bb = TensorF::from({1, 3}, {10, 20, 30}, true);
    backward(sum(mul(a, bb)));
    CHECK(bb.grad() == std::vector<float>{5, 7, 9});
}

TEST_CASE("concat/split round structure") {
    auto a = TensorF::from({2, 2}, {1, 2, 3, 4});
    auto b = TensorF::from({2, 1}, {5, 6});
    auto c = concat<float>({a, b}, 1);
    CHECK(c.values() == std::vector<float>{1, 2, 5, 3, 4, 6});
    auto parts = split(c, 1, {2, 1});
    CHECK(parts[0].values() == a.values());
    CHECK(parts[1].values() == b.values());
}

TEST_CASE("softmax rows sum to one and permute inverts") {
    Rng rng(5);
    auto x = TensorF::randn({3, 6}, rng);
    auto y = softmax(x);
    for (int r = 0; r < 3; ++r) {
        float s = 0;
        for (int j = 0; j < 6; ++j) s += y.values()[r * 6 + j];
        CHECK(s == doctest::Approx(1.0f));
    }
    auto t = TensorF::randn({2, 3, 4}, rng);
    auto back = permute(permute(t, {2, 0, 1}), {1, 2, 0});
    CHECK(back.values() == t.values());
}

TEST_CASE("adamw zero gradient is identity") {
    auto p = TensorF::from({3}, {1, 2, 3}, true);
    std::vector<TensorF> params{p};
    auto st = OptimizerState<float>::make(0.1);
    adamw_step(params, st);
    CHECK(p.values() == std::vector<float>{1, 2, 3});
    CHECK(st.step == 1);
}

TEST_CASE("adamw single-scalar hand value") {
    // p=1, g=1, lr=0.1, betas (0.9,0.999), eps 1e-15, step 1 -> p ~ 0.9
    auto p = TensorF::from({1}, {1}, true);
    p.node()->grad[0] = 1.0f;
    std::vector<TensorF> params{p};
    auto st = OptimizerState<float>::make(0.1);
    adamw_step(params, st);
    CHECK(p.values()[0] == doctest::Approx(0.9f).epsilon(1e-5));
}

TEST_CASE("adamw clips by global L2 norm before moments") {
    // gradient norm 5, threshold 1 -> effective gradient scaled by 1/5
    auto p = TensorF::from({2}, {0, 0}, true);
    p.node()->grad[0] = 3.0f;
    p.node()->grad[1] = 4.0f;
    std::vector<TensorF> params{p};
    auto st = OptimizerState<float>::make(1.0);
    adamw_step(params, st);
    // after clip g = (0.6, 0.8); step1 update = lr * g/|g| per coordinate sign
    // m/bc1 = g, v/bc2 = g^2 -> update = lr * g/|g|
    CHECK(p.values()[0] == doctest::Approx(-1.0f * 0.6f / 0.6f).epsilon(1e-4));
    CHECK(p.values()[1] == doctest::Approx(-1.0f * 0.8f / 0.8f).epsilon(1e-4));
    CHECK(st.m[0][0] == doctest::Approx(0.1f * 0.6f));
    CHECK(st.m[0][1] == doctest::Approx(0.1f * 0.8f));
}

TEST_CASE("adamw rejects non-finite grads and bad betas") {
    auto p = TensorF::from({1}, {1}, true);
    p.node()->grad[0] = std::numeric_limits<float>::quiet_NaN();
    std::vector<TensorF> params{p};
    auto st = OptimizerState<float>::make(0.1);
    CHECK_THROWS_AS(adamw_step(params, st), NumericError);
    CHECK_THROWS_AS(OptimizerState<float>::make(0.1, 1.5), ConfigError);
}

TEST_CASE("grad_check passes for every registered primitive at 1e-5 in 64-bit") {
    for (const auto& name : registered_grad_ops()) {
        auto rep = grad_check(name, {}, 1e-5);
        INFO(name, " max_rel_err=", rep.max_rel_err);
        CHECK(rep.passed);
    }
}

TEST_CASE("grad_check named-shape cases from the contract") {
    CHECK(grad_check("softmax", {{4}}, 1e-3).passed);
    CHECK(grad_check("rms_norm", {{2, 8}}, 1e-3).passed);
    CHECK(grad_check("matmul", {{3, 3}, {3, 3}}, 1e-3).passed);
    CHECK_THROWS_AS(grad_check("not_an_op", {}, 1e-3), ConfigError);
}
