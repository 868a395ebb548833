#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "support/errors.hpp"
#include "support/gradcheck.hpp"
#include "uidiff/layout_diffusion.hpp"
#include "uidiff/nn/ops.hpp"
#include "uidiff/synthetic.hpp"

using namespace uidiff;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("layout_diffusion");

namespace {

std::vector<Layout> synthetic_set(int n, std::uint64_t seed, int e_max = kDefaultMaxElements) {
    Rng rng(seed);
    std::vector<Layout> out;
    while (static_cast<int>(out.size()) < n) {
        Layout l = synthetic_layout(rng);
        if (static_cast<int>(l.elements.size()) <= e_max) out.push_back(std::move(l));
    }
    return out;
}

bool has_mixed_or_mask(const TokenSequence& seq, const TokenizerConfig& cfg) {
    for (int s = 0; s < seq.slots(); ++s) {
        int pads = 0;
        for (int a = 0; a < kTokensPerSlot; ++a) {
            const auto attr = static_cast<Attribute>(a);
            if (seq.at(s, attr) == cfg.mask(attr)) return true;
            pads += seq.at(s, attr) == cfg.pad(attr);
        }
        if (pads != 0 && pads != kTokensPerSlot) return true;
    }
    return false;
}

std::vector<double> moving_average(const std::vector<double>& v, int window) {
    std::vector<double> out(v.size());
    double acc = 0;
    for (size_t i = 0; i < v.size(); ++i) {
        acc += v[i];
        if (i >= static_cast<size_t>(window)) acc -= v[i - static_cast<size_t>(window)];
        out[i] = acc / static_cast<double>(std::min(i + 1, static_cast<size_t>(window)));
    }
    return out;
}

}  // namespace

TEST_CASE("mask_prob is 0 at t=0, 1 at T and non-decreasing") {
    DiscreteSchedule s;
    CHECK(s.mask_prob(0) == 0.0);
    CHECK(s.mask_prob(s.T) == 1.0);
    for (int t = 1; t <= s.T; ++t) CHECK(s.mask_prob(t) >= s.mask_prob(t - 1));
}

TEST_CASE("corrupt leaves t=0 unchanged and masks everything at t=T") {
    TokenizerConfig cfg;
    DiscreteSchedule sched;
    Rng rng(1);
    Layout l = synthetic_set(1, 4).front();
    TokenSequence clean = tokenize_layout(l, cfg);
    CHECK(corrupt(clean, 0, sched, cfg, rng) == clean);
    TokenSequence full = corrupt(clean, sched.T, sched, cfg, rng);
    for (int i = 0; i < clean.size(); ++i) {
        const auto a = attribute_at(i);
        const int c = clean.tokens[static_cast<size_t>(i)];
        CHECK(full.tokens[static_cast<size_t>(i)] == (c == cfg.pad(a) ? c : cfg.mask(a)));
    }
}

TEST_CASE("corrupt rejects MASK input and out-of-range t") {
    TokenizerConfig cfg;
    DiscreteSchedule sched;
    Rng rng(1);
    TokenSequence clean = tokenize_layout(synthetic_set(1, 4).front(), cfg);
    CHECK_ERROR_CODE(corrupt(clean, -1, sched, cfg, rng), ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(corrupt(clean, sched.T + 1, sched, cfg, rng), ErrorCode::InvalidArgument);
    TokenSequence masked = corrupt(clean, sched.T, sched, cfg, rng);
    CHECK_ERROR_CODE(corrupt(masked, 10, sched, cfg, rng), ErrorCode::MaskedSequence);
}

TEST_CASE("mask fraction at T/2 over 10000 corruptions is within 0.02 of mask_prob") {
    TokenizerConfig cfg;
    DiscreteSchedule sched;
    // A full 100-token sequence: 20 elements, no PAD.
    Layout l;
    for (int i = 0; i < 20; ++i) l.add(category::icon, {0.02 * i, 0.03 * i, 0.1, 0.1});
    TokenSequence clean = tokenize_layout(l, cfg);
    Rng rng(99);
    long masked = 0, total = 0;
    for (int k = 0; k < 10000; ++k) {
        TokenSequence c = corrupt(clean, sched.T / 2, sched, cfg, rng);
        for (int i = 0; i < c.size(); ++i) masked += c.tokens[static_cast<size_t>(i)] == cfg.mask(attribute_at(i));
        total += c.size();
    }
    CHECK(std::abs(static_cast<double>(masked) / static_cast<double>(total) - 0.5) <= 0.02);
}

TEST_CASE("corruption marginals per position lie within 4 sigma binomial bounds") {
    TokenizerConfig cfg;
    DiscreteSchedule sched;
    TokenSequence clean = tokenize_layout(synthetic_set(1, 8).front(), cfg);
    Rng rng(5);
    const int n = 4000;
    for (int t : {10, 25, 50, 75, 90}) {
        std::vector<int> hits(static_cast<size_t>(clean.size()), 0);
        for (int k = 0; k < n; ++k) {
            TokenSequence c = corrupt(clean, t, sched, cfg, rng);
            for (int i = 0; i < c.size(); ++i) hits[static_cast<size_t>(i)] += c.tokens[static_cast<size_t>(i)] == cfg.mask(attribute_at(i));
        }
        const double p = sched.mask_prob(t);
        const double sigma = std::sqrt(n * p * (1 - p));
        for (int i = 0; i < clean.size(); ++i) {
            if (clean.tokens[static_cast<size_t>(i)] == cfg.pad(attribute_at(i))) {
                CHECK(hits[static_cast<size_t>(i)] == 0);
                continue;
            }
            CHECK(std::abs(hits[static_cast<size_t>(i)] - n * p) <= 4 * sigma);
        }
    }
}

TEST_CASE("component conditions parse from text and JSON") {
    auto c = ComponentCondition::parse("text button:2, toolbar");
    CHECK(c.counts[static_cast<size_t>(category::text_button.id)] == 2);
    CHECK(c.counts[static_cast<size_t>(category::toolbar.id)] == 1);
    CHECK(c.total() == 3);
    auto sorted = c.sorted();
    REQUIRE(sorted.size() == 3);
    CHECK(sorted[0] == category::text_button);
    CHECK(sorted[2] == category::toolbar);
    CHECK(ComponentCondition::from_json(c.to_json()) == c);
    CHECK(ComponentCondition::from_json(nlohmann::json::parse(R"([{"category":"toolbar","count":1},"text button","text button"])")) == c);
    CHECK(ComponentCondition::from_json(nlohmann::json::parse(R"({"text button":2,"toolbar":1})")) == c);
    CHECK(ComponentCondition::parse("").empty());
    CHECK_ERROR_CODE(ComponentCondition::parse("spinner:1"), ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(ComponentCondition::parse("icon:x"), ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(ComponentCondition::parse("icon:0"), ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(ComponentCondition::from_json(nlohmann::json::parse(R"({"icon":-1})")), ErrorCode::InvalidArgument);
}

TEST_CASE("denoiser output rows are distributions without a MASK column") {
    auto cfg = DenoiserConfig::miniature();
    LayoutDenoiser model(cfg, 3);
    auto layouts = synthetic_set(3, 2, cfg.tokenizer.e_max);
    std::vector<TokenSequence> batch;
    Rng rng(0);
    for (const auto& l : layouts) batch.push_back(corrupt(tokenize_layout(l, cfg.tokenizer), 10, cfg.schedule, cfg.tokenizer, rng));
    const std::vector<int> ts{10, 10, 10};
    auto logits = model.forward(batch, ts);
    for (int a = 0; a < kTokensPerSlot; ++a) {
        const auto attr = static_cast<Attribute>(a);
        const int cols = cfg.tokenizer.vocab_size(attr) - 1;
        CHECK(logits[static_cast<size_t>(a)].shape() == nn::Shape{3 * cfg.tokenizer.e_max, cols});
        auto p = nn::softmax_rows(logits[static_cast<size_t>(a)]);
        for (int r = 0; r < 3 * cfg.tokenizer.e_max; ++r) {
            double s = 0;
            for (int j = 0; j < cols; ++j) s += p[static_cast<size_t>(r * cols + j)];
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    CHECK_ERROR_CODE(model.forward(batch, std::vector<int>{10}), ErrorCode::ShapeMismatch);
}

TEST_CASE("uniform output gives ln(vocab) cross-entropy per masked position") {
    DenoiserConfig cfg;
    LayoutDenoiser model(cfg, 1);
    model.zero_heads();
    Layout l = synthetic_set(1, 12).front();
    TokenSequence clean = tokenize_layout(l, cfg.tokenizer);
    Rng rng(0);
    TokenSequence corrupted = corrupt(clean, cfg.schedule.T, cfg.schedule, cfg.tokenizer, rng);
    const std::vector<TokenSequence> c{corrupted}, x{clean};
    const std::vector<int> t{cfg.schedule.T};
    int masked = 0;
    const double loss = masked_cross_entropy(model, c, x, t, &masked).item();
    CHECK(masked == 5 * static_cast<int>(l.elements.size()));
    // Category heads cover 25 categories + PAD, geometry heads 32 bins + PAD.
    const double expected = (std::log(26.0) + 4 * std::log(33.0)) / 5;
    CHECK(loss == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("nothing masked gives zero loss") {
    DenoiserConfig cfg = DenoiserConfig::miniature();
    LayoutDenoiser model(cfg, 1);
    TokenSequence clean = tokenize_layout(synthetic_set(1, 12, cfg.tokenizer.e_max).front(), cfg.tokenizer);
    const std::vector<TokenSequence> x{clean};
    const std::vector<int> t{0};
    int masked = -1;
    CHECK(masked_cross_entropy(model, x, x, t, &masked).item() == 0.0);
    CHECK(masked == 0);
}

TEST_CASE("analytic gradients of the miniature denoiser match central differences") {
    auto cfg = DenoiserConfig::miniature();
    LayoutDenoiser model(cfg, 21);
    auto layouts = synthetic_set(2, 31, cfg.tokenizer.e_max);
    Rng rng(4);
    std::vector<TokenSequence> clean, corrupted;
    for (const auto& l : layouts) {
        clean.push_back(tokenize_layout(l, cfg.tokenizer));
        corrupted.push_back(corrupt(clean.back(), 12, cfg.schedule, cfg.tokenizer, rng));
    }
    const std::vector<int> t{12, 12};
    auto samples = testing::gradient_check(model.named_parameters(), [&] { return masked_cross_entropy(model, corrupted, clean, t); }, 40, 8);
    CHECK(samples.size() >= 20);
    for (const auto& s : samples) {
        INFO(s.param << "[" << s.index << "] analytic=" << s.analytic << " numeric=" << s.numeric);
        CHECK(s.rel_error <= 1e-3);
    }
}

TEST_CASE("non-finite loss aborts the step, names the batch and leaves parameters untouched") {
    auto cfg = DenoiserConfig::miniature();
    LayoutDenoiser model(cfg, 2);
    auto params = model.named_parameters();
    for (auto& [name, p] : params)
        if (name.rfind("head_cat", 0) == 0) p.values()[0] = NAN;
    const std::string before = model.parameter_hash();
    nn::AdamW opt(model.parameters(), {.lr = 1e-2});
    const std::vector<TokenSequence> batch{tokenize_layout(synthetic_set(1, 3, cfg.tokenizer.e_max).front(), cfg.tokenizer)};
    const std::vector<int> t{cfg.schedule.T};
    const std::vector<std::string> ids{"screen-17"};
    Rng rng(0);
    try {
        training_step(model, opt, batch, rng, t, ids);
        FAIL("expected NonFiniteLoss");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteLoss);
        CHECK(std::string(e.what()).find("screen-17") != std::string::npos);
    }
    CHECK(model.parameter_hash() == before);
}

TEST_CASE("500 steps on a 50-layout set lower the smoothed loss between step 50 and 500") {
    DenoiserConfig cfg;
    LayoutDenoiser model(cfg, 7);
    auto layouts = synthetic_set(50, 17);
    auto trace = train_layout_model(model, layouts, {.steps = 500, .batch_size = 16, .lr = 1e-3, .seed = 3});
    REQUIRE(trace.size() == 500);
    auto smooth = moving_average(trace, 50);
    MESSAGE("smoothed loss at 50: " << smooth[49] << ", at 500: " << smooth[499]);
    CHECK(smooth[499] < smooth[49]);
}

TEST_CASE("count prior is the element-count histogram") {
    auto cfg = DenoiserConfig::miniature();
    LayoutDenoiser model(cfg, 1);
    std::vector<Layout> ls(4);
    ls[0].add(category::icon, {0, 0, 0.1, 0.1});
    ls[1].add(category::icon, {0, 0, 0.1, 0.1});
    ls[2].add(category::icon, {0, 0, 0.1, 0.1}).add(category::text, {0.5, 0.5, 0.1, 0.1});
    model.fit_count_prior(ls);
    REQUIRE(model.count_prior.size() == static_cast<size_t>(cfg.tokenizer.e_max) + 1);
    CHECK(model.count_prior[0] == doctest::Approx(0.25));
    CHECK(model.count_prior[1] == doctest::Approx(0.5));
    CHECK(model.count_prior[2] == doctest::Approx(0.25));
}

TEST_CASE("untrained unconditional samples are valid layouts without MASK remnants") {
    DenoiserConfig cfg;
    LayoutDenoiser model(cfg, 5);
    std::vector<ComponentCondition> conds(20);
    std::vector<std::uint64_t> seeds(20);
    std::iota(seeds.begin(), seeds.end(), 100);
    for (const auto& s : sample_layouts(model, conds, seeds, {.steps = 20})) {
        CHECK_FALSE(has_mixed_or_mask(s.tokens, cfg.tokenizer));
        CHECK(validate_layout(s.layout).empty());
    }
}

TEST_CASE("clamped category tokens survive sampling unchanged") {
    auto cfg = DenoiserConfig::miniature();
    LayoutDenoiser model(cfg, 9);
    const auto cond = ComponentCondition::parse("toolbar:1, text button:2");
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto s = sample_layout(model, cond, seed);
        const auto want = cond.sorted();
        for (size_t k = 0; k < want.size(); ++k) CHECK(s.tokens.at(static_cast<int>(k), Attribute::Category) == want[k].id);
        CHECK_FALSE(has_mixed_or_mask(s.tokens, cfg.tokenizer));
        auto got = ComponentCondition::of_layout(s.layout);
        CHECK(got.counts[static_cast<size_t>(category::toolbar.id)] >= 1);
        CHECK(got.counts[static_cast<size_t>(category::text_button.id)] >= 2);
    }
}

TEST_CASE("sampling is deterministic and batched sampling matches single draws") {
    auto cfg = DenoiserConfig::miniature();
    LayoutDenoiser model(cfg, 9);
    const auto cond = ComponentCondition::parse("icon:2");
    auto a = sample_layout(model, cond, 42);
    auto b = sample_layout(model, cond, 42);
    CHECK(a.tokens == b.tokens);
    std::vector<ComponentCondition> conds{cond, ComponentCondition{}, ComponentCondition::parse("toolbar")};
    std::vector<std::uint64_t> seeds{42, 7, 8};
    auto batch = sample_layouts(model, conds, seeds);
    CHECK(batch[0].tokens == a.tokens);
    CHECK(batch[1].tokens == sample_layout(model, conds[1], 7).tokens);
    CHECK(batch[2].tokens == sample_layout(model, conds[2], 8).tokens);
}

TEST_CASE("conditions larger than e_max are rejected") {
    auto cfg = DenoiserConfig::miniature();
    LayoutDenoiser model(cfg, 9);
    ComponentCondition c;
    c.add(category::icon, cfg.tokenizer.e_max + 1);
    CHECK_ERROR_CODE(sample_layout(model, c, 1), ErrorCode::ConditionTooLarge);
    c = ComponentCondition{};
    c.add(category::icon, cfg.tokenizer.e_max);
    CHECK(sample_layout(model, c, 1).layout.elements.size() == static_cast<size_t>(cfg.tokenizer.e_max));
}

TEST_CASE("layout checkpoints round-trip weights, config and count prior") {
    auto dir = fs::temp_directory_path() / "uidiff_ld_ckpt";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto cfg = DenoiserConfig::miniature();
    LayoutDenoiser model(cfg, 13);
    model.fit_count_prior(synthetic_set(30, 2, cfg.tokenizer.e_max));
    save_layout_model(model, dir / "m.ckpt");
    auto back = load_layout_model(dir / "m.ckpt");
    CHECK(back->parameter_hash() == model.parameter_hash());
    CHECK(back->count_prior == model.count_prior);
    CHECK(back->config().to_json() == cfg.to_json());
    const auto cond = ComponentCondition::parse("icon");
    CHECK(sample_layout(*back, cond, 5).tokens == sample_layout(model, cond, 5).tokens);

    {
        std::ofstream(dir / "bad.ckpt") << "garbage";
    }
    CHECK_THROWS_AS(load_layout_model(dir / "bad.ckpt"), Error);
    CHECK_ERROR_CODE(load_layout_model(dir / "missing.ckpt"), ErrorCode::IOFailure);
}

TEST_SUITE_END();
