#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support/gradcheck.hpp"
#include "uidiff/error.hpp"
#include "uidiff/nn/checkpoint.hpp"
#include "uidiff/nn/module.hpp"

using namespace uidiff;
using namespace uidiff::nn;
using uidiff::testing::gradient_check;
using uidiff::testing::max_rel_error;

TEST_SUITE_BEGIN("nn");

namespace {

Tensor param(Shape s, Rng& rng, double std = 1.0) {
    Tensor t = randn(std::move(s), std, rng);
    t.set_requires_grad(true);
    return t;
}

void check_op(const NamedTensors& params, const std::function<Tensor()>& f, int count = 30) {
    auto samples = gradient_check(params, f, count, 7);
    for (const auto& s : samples) {
        INFO(s.param << "[" << s.index << "] analytic=" << s.analytic << " numeric=" << s.numeric);
        CHECK(s.rel_error <= 1e-6);
    }
}

// A fixed random projection turns any tensor into a scalar with a non-trivial gradient everywhere.
Tensor project(const Tensor& y, std::uint64_t seed) {
    Rng rng(seed);
    Tensor w = randn(y.shape(), 1.0, rng);
    return sum_all(mul(y, w));
}

}  // namespace

TEST_CASE("elementwise and broadcast ops backprop") {
    Rng rng(1);
    Tensor a = param({2, 3, 4}, rng), b = param({2, 3, 4}, rng), v = param({4}, rng), r = param({2, 4}, rng);
    check_op({{"a", a}, {"b", b}, {"v", v}, {"r", r}}, [&] {
        Tensor y = add(mul(a, b), sub(scale(a, 0.5), b));
        y = add_lastdim(y, v);
        y = add_per_row(silu(y), r);
        y = add(sigmoid(y), nn::tanh(y));
        return project(y, 11);
    });
}

TEST_CASE("linear backprop") {
    Rng rng(2);
    Tensor x = param({3, 5, 6}, rng), w = param({4, 6}, rng), b = param({4}, rng);
    check_op({{"x", x}, {"w", w}, {"b", b}}, [&] { return project(linear(x, w, b), 12); });
}

TEST_CASE("conv2d backprop for strided, padded and pointwise kernels") {
    Rng rng(3);
    Tensor x = param({2, 3, 7, 6}, rng), w3 = param({4, 3, 3, 3}, rng), b3 = param({4}, rng);
    Tensor w1 = param({2, 4, 1, 1}, rng), b1 = param({2}, rng), ws = param({3, 2, 3, 3}, rng);
    check_op({{"x", x}, {"w3", w3}, {"b3", b3}, {"w1", w1}, {"b1", b1}, {"ws", ws}}, [&] {
        Tensor y = conv2d(x, w3, b3, 1, 1);
        y = conv2d(y, w1, b1, 1, 0);
        y = conv2d(y, ws, Tensor(), 2, 1);
        return project(y, 13);
    });
}

TEST_CASE("conv2d output size") {
    Rng rng(4);
    Tensor x = Tensor::zeros({1, 3, 512, 288});
    Tensor w = randn({8, 3, 3, 3}, 1.0, rng);
    Tensor y = conv2d(x, w, Tensor(), 2, 1);
    CHECK(y.shape() == Shape{1, 8, 256, 144});
}

TEST_CASE("resampling, concat and token reshapes backprop") {
    Rng rng(5);
    Tensor x = param({2, 3, 4, 6}, rng), c = param({2, 2, 8, 12}, rng), ch = param({2, 3}, rng);
    check_op({{"x", x}, {"c", c}, {"ch", ch}}, [&] {
        Tensor u = upsample2x(add_channel(x, ch));
        Tensor y = concat_channels(u, c);
        Tensor t = to_tokens(avgpool2x(y));
        Tensor back = from_tokens(mul(t, t), 4, 6);
        return add(project(back, 14), project(mean_tokens(t), 15));
    });
}

TEST_CASE("group norm and layer norm backprop") {
    Rng rng(6);
    Tensor x = param({2, 4, 3, 3}, rng), g = param({4}, rng), b = param({4}, rng);
    Tensor s = param({3, 5, 8}, rng), lg = param({8}, rng), lb = param({8}, rng);
    check_op({{"x", x}, {"g", g}, {"b", b}, {"s", s}, {"lg", lg}, {"lb", lb}}, [&] {
        return add(project(group_norm(x, 2, g, b), 16), project(layer_norm(s, lg, lb), 17));
    });
}

TEST_CASE("normalization output statistics") {
    Rng rng(7);
    Tensor x = randn({1, 4, 5, 5}, 3.0, rng);
    Tensor y = group_norm(x, 2, Tensor::full({4}, 1.0), Tensor::zeros({4}));
    for (int g = 0; g < 2; ++g) {
        double mean = 0, sq = 0;
        for (int i = 0; i < 50; ++i) {
            const double v = y.values()[static_cast<size_t>(g * 50 + i)];
            mean += v / 50;
            sq += v * v / 50;
        }
        CHECK(mean == doctest::Approx(0).epsilon(1e-12));
        CHECK(sq - mean * mean == doctest::Approx(1).epsilon(1e-5));
    }
}

TEST_CASE("attention backprop, self and cross") {
    Rng rng(8);
    Tensor q = param({2, 5, 8}, rng), k = param({2, 3, 8}, rng), v = param({2, 3, 8}, rng);
    check_op({{"q", q}, {"k", k}, {"v", v}}, [&] {
        return add(project(attention(q, k, v, 2), 18), project(attention(q, q, q, 4), 19));
    });
}

TEST_CASE("attention with one key returns that value") {
    Tensor q = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
    Tensor k = Tensor::from({1, 1, 2}, {5, 6});
    Tensor v = Tensor::from({1, 1, 2}, {7, -1});
    Tensor o = attention(q, k, v, 1);
    CHECK(o.values() == std::vector<double>{7, -1, 7, -1});
}

TEST_CASE("embedding, cross entropy and mse backprop") {
    Rng rng(9);
    Tensor table = param({6, 4}, rng), w = param({5, 4}, rng), target = param({3, 5}, rng);
    const std::vector<int> ids{0, 5, 2};
    check_op({{"table", table}, {"w", w}, {"target", target}}, [&] {
        Tensor e = embedding(table, ids, {3, 4});
        Tensor logits = linear(e, w, Tensor());
        return add(cross_entropy_sum(logits, {4, -1, 1}), mse_loss(logits, target));
    });
}

TEST_CASE("cross entropy of uniform logits equals log of the class count") {
    Tensor logits = Tensor::zeros({4, 26});
    CHECK(cross_entropy_sum(logits, {0, 3, 25, -1}).item() == doctest::Approx(3 * std::log(26.0)).epsilon(1e-12));
    auto p = softmax_rows(logits);
    CHECK(p[0] == doctest::Approx(1.0 / 26));
}

TEST_CASE("frozen parents receive no gradient") {
    Rng rng(10);
    Tensor x = randn({2, 3}, 1.0, rng);
    Tensor w = param({4, 3}, rng);
    Tensor frozen = randn({4, 3}, 1.0, rng);
    backward(sum_all(add(linear(x, w, Tensor()), linear(x, frozen, Tensor()))));
    CHECK(w.has_grad());
    CHECK_FALSE(frozen.has_grad());
    CHECK_FALSE(x.has_grad());
}

TEST_CASE("no-grad guard records no history") {
    Rng rng(11);
    Tensor w = param({2, 2}, rng);
    NoGradGuard guard;
    Tensor y = mul(w, w);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("fp32 matmul guard: close to double, repeatable, off while recording") {
    Rng rng(12);
    Tensor x = randn({64, 96}, 1.0, rng);
    Tensor w = param({48, 96}, rng);
    Tensor b = param({48}, rng);
    Tensor exact, fast, again;
    {
        NoGradGuard ng;
        exact = linear(x, w, b);
        Fp32MatmulGuard fp;
        fast = linear(x, w, b);
        again = linear(x, w, b);
    }
    double max_err = 0, scale = 0;
    bool differs = false;
    for (size_t i = 0; i < exact.numel(); ++i) {
        max_err = std::max(max_err, std::abs(fast.values()[i] - exact.values()[i]));
        scale = std::max(scale, std::abs(exact.values()[i]));
        differs = differs || fast.values()[i] != exact.values()[i];
    }
    CHECK(differs);
    CHECK(max_err <= 1e-5 * scale);
    CHECK(fast.values() == again.values());

    Fp32MatmulGuard fp;
    CHECK(linear(x, w, b).values() == exact.values());
}

TEST_CASE("shape errors") {
    CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), Error);
    CHECK_THROWS_AS(linear(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}), Tensor()), Error);
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), Error);
}

namespace {
struct Tiny : Module {
    explicit Tiny(Rng& rng) : a(3, 4, rng), b(4, 2, rng) {
        add_module("a", a);
        add_module("b", b);
    }
    Tensor operator()(const Tensor& x) const { return b(silu(a(x))); }
    Linear a, b;
};
}  // namespace

TEST_CASE("module registry, copy and hashing") {
    Rng r1(1), r2(2);
    Tiny m1(r1), m2(r2);
    auto names = m1.named_parameters();
    REQUIRE(names.size() == 4);
    CHECK(names[0].first == "a.weight");
    CHECK(names[3].first == "b.bias");
    CHECK(m1.num_parameters() == 3 * 4 + 4 + 4 * 2 + 2);
    CHECK(m1.parameter_hash() != m2.parameter_hash());
    m2.copy_from(m1);
    CHECK(m1.parameter_hash() == m2.parameter_hash());
    m2.a.weight.values()[0] += 1e-12;
    CHECK(m1.parameter_hash() != m2.parameter_hash());
}

TEST_CASE("AdamW first step moves each weight by lr against the gradient sign") {
    Tensor p = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
    AdamW opt({p}, {.lr = 0.1, .weight_decay = 0.0});
    backward(sum_all(mul(p, Tensor::from({3}, {2.0, -3.0, 0.0}))));
    opt.step();
    // Bias-corrected first step: m_hat / sqrt(v_hat) = sign(g) for g != 0.
    CHECK(p.values()[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(p.values()[1] == doctest::Approx(-1.9).epsilon(1e-6));
    CHECK(p.values()[2] == 0.5);
}

TEST_CASE("AdamW with zero learning rate leaves parameters bit-identical") {
    Rng rng(3);
    Tensor p = param({16}, rng);
    const auto before = p.values();
    AdamW opt({p}, {.lr = 0.0, .weight_decay = 0.01});
    for (int i = 0; i < 5; ++i) {
        opt.zero_grad();
        backward(sum_all(mul(p, p)));
        opt.step();
    }
    CHECK(p.values() == before);
}

TEST_CASE("decoupled weight decay shrinks parameters without gradient influence") {
    Tensor p = Tensor::from({1}, {2.0}, true);
    AdamW opt({p}, {.lr = 0.1, .weight_decay = 0.5});
    backward(scale(sum_all(p), 0.0));
    opt.step();
    CHECK(p.values()[0] == doctest::Approx(2.0 * (1 - 0.05)));
}

TEST_CASE("checkpoint container round-trips and detects corruption") {
    Rng rng(4);
    Tiny m(rng);
    Checkpoint ck;
    ck.kind = "test";
    ck.meta = {{"answer", 42}};
    ck.add_module(m, "tiny.");
    const auto dir = std::filesystem::temp_directory_path() / "uidiff_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "m.ckpt";
    ck.save(path);

    Checkpoint back = Checkpoint::load(path, "test");
    CHECK(back.meta["answer"] == 42);
    CHECK(back.id() == ck.id());
    Rng other(99);
    Tiny m2(other);
    m2.load_state(back.tensors, "tiny.");
    CHECK(m2.parameter_hash() == m.parameter_hash());
    CHECK_THROWS_AS(Checkpoint::load(path, "other-kind"), Error);

    // Flip one byte near the end (inside a blob).
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-3, std::ios::end);
        f.put('\x7f');
    }
    try {
        Checkpoint::load(path);
        FAIL("expected digest mismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::CheckpointMismatch);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("timestep embedding is sin/cos of scaled time") {
    Tensor e = timestep_embedding({0.0, 3.0}, 8);
    CHECK(e.values()[0] == 0.0);
    CHECK(e.values()[4] == 1.0);
    CHECK(e.values()[8] == doctest::Approx(std::sin(3.0)));
    CHECK(e.values()[12] == doctest::Approx(std::cos(3.0)));
}

TEST_SUITE_END();
