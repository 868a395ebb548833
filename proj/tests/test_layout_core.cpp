#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "support/errors.hpp"
#include "uidiff/image.hpp"
#include "uidiff/layout.hpp"
#include "uidiff/synthetic.hpp"
#include "uidiff/tokenizer.hpp"
#include "uidiff/wireframe.hpp"

using namespace uidiff;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("layout_core");

namespace {

Layout two_buttons() {
    Layout l;
    l.add(category::toolbar, {0, 0, 1, 0.1});
    l.add(category::text_button, {0.25, 0.5, 0.5, 0.1});
    return l;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("uidiff_core_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("category names round-trip for all 25 categories") {
    std::set<std::string_view> seen;
    for (int i = 0; i < kNumCategories; ++i) {
        ComponentCategory c(i);
        auto back = ComponentCategory::from_name(c.name());
        REQUIRE(back.has_value());
        CHECK(*back == c);
        seen.insert(c.name());
    }
    CHECK(seen.size() == kNumCategories);
    CHECK(ComponentCategory::parse("Text Button") == category::text_button);
    CHECK_FALSE(ComponentCategory::from_name("spinner").has_value());
    CHECK_ERROR_CODE(ComponentCategory::parse("spinner"), ErrorCode::InvalidArgument);
}

TEST_CASE("validate_layout reports each broken rule") {
    CHECK(validate_layout(two_buttons()).empty());

    Layout l = two_buttons();
    l.elements[1].bbox.x = 0.8;  // right edge 1.3
    auto v = validate_layout(l);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule == "x+w<=1");
    CHECK(v[0].index == 1);

    l = two_buttons();
    l.elements[0].bbox.h = 0;
    CHECK(validate_layout(l).at(0).rule == "h>0");

    l = two_buttons();
    l.elements[0].bbox.y = -0.01;
    CHECK(validate_layout(l).at(0).rule == "y>=0");

    l = two_buttons();
    l.elements[0].bbox.w = NAN;
    CHECK(validate_layout(l).at(0).rule == "finite");

    l = two_buttons();
    l.canvas_w = 600;
    l.canvas_h = 300;
    CHECK(validate_layout(l).at(0).rule == "portrait");

    l = two_buttons();
    CHECK(validate_layout(l, 1).at(0).rule == "count<=e_max");
    CHECK_ERROR_CODE(require_valid(l, 1), ErrorCode::TooManyElements);

    l = two_buttons();
    l.elements[1].z = 5;
    CHECK(validate_layout(l).at(0).rule == "z contiguous");
    CHECK_ERROR_CODE(require_valid(l), ErrorCode::InvalidLayout);
}

TEST_CASE("an empty layout is valid") { CHECK(validate_layout(Layout{}).empty()); }

TEST_CASE("to_pixels rounds to the nearest pixel and clamps") {
    CHECK(to_pixels({0, 0, 0.5, 0.375}, 288, 512) == PixelRect{0, 0, 144, 192});
    CHECK(to_pixels({0.1, 0.1, 0.2, 0.2}, 10, 10) == PixelRect{1, 1, 3, 3});
    CHECK(to_pixels({0.9, 0.9, 0.5, 0.5}, 100, 100) == PixelRect{90, 90, 100, 100});
    PixelRect a{0, 0, 10, 10}, b{5, 5, 20, 20}, c{30, 30, 40, 40};
    CHECK(a.intersect(b) == PixelRect{5, 5, 10, 10});
    CHECK(a.intersect(c).area() == 0);
}

TEST_CASE("layout JSON round-trips at six decimals") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Layout l = synthetic_layout(rng);
        Layout back = layout_from_json(nlohmann::json::parse(layout_to_json(l).dump()));
        REQUIRE(back.elements.size() == l.elements.size());
        for (size_t i = 0; i < l.elements.size(); ++i) {
            CHECK(back.elements[i].category == l.elements[i].category);
            CHECK(back.elements[i].z == l.elements[i].z);
            CHECK(std::abs(back.elements[i].bbox.x - l.elements[i].bbox.x) <= 5e-7);
            CHECK(std::abs(back.elements[i].bbox.h - l.elements[i].bbox.h) <= 5e-7);
        }
        CHECK(layout_to_json(back) == layout_to_json(l));
    }
}

TEST_CASE("layout files round-trip and bad JSON is rejected") {
    auto dir = scratch("json");
    Layout l = two_buttons();
    save_layout(l, (dir / "l.json").string());
    CHECK(load_layout((dir / "l.json").string()) == l);
    CHECK_ERROR_CODE(load_layout((dir / "missing.json").string()), ErrorCode::IOFailure);
    nlohmann::json bad = layout_to_json(l);
    bad["elements"][0]["bbox"] = {0, 0, 1};
    CHECK_ERROR_CODE(layout_from_json(bad), ErrorCode::InvalidBBox);
    bad = layout_to_json(l);
    bad["elements"][0]["category"] = "spinner";
    CHECK_THROWS_AS(layout_from_json(bad), Error);
}

TEST_CASE("quantization puts every value within half a bin of its center") {
    for (int bins : {8, 32, 64}) {
        for (int i = 0; i <= 1000; ++i) {
            const double v = i / 1000.0;
            const int q = quantize(v, bins);
            CHECK(q >= 0);
            CHECK(q < bins);
            CHECK(std::abs(dequantize(q, bins) - v) <= 0.5 / bins + 1e-12);
        }
    }
}

TEST_CASE("tokenizer vocabulary sizes") {
    TokenizerConfig cfg;
    CHECK(cfg.vocab_size(Attribute::Category) == 27);
    CHECK(cfg.vocab_size(Attribute::X) == 34);
    CHECK(cfg.pad(Attribute::Category) == 25);
    CHECK(cfg.mask(Attribute::H) == 33);
    CHECK(cfg.sequence_length() == 100);
}

TEST_CASE("tokenize then detokenize stays within 1/64 on random layouts") {
    TokenizerConfig cfg;
    Rng rng(11);
    double worst = 0;
    for (int trial = 0; trial < 300; ++trial) {
        Layout l = synthetic_layout(rng);
        TokenSequence seq = tokenize_layout(l, cfg);
        CHECK(tokens_in_vocab(seq, cfg, false));
        auto back = detokenize_layout(seq, cfg);
        REQUIRE(back.dropped == 0);
        REQUIRE(back.layout.elements.size() == l.elements.size());
        CHECK(validate_layout(back.layout).empty());
        for (size_t i = 0; i < l.elements.size(); ++i) {
            const auto& a = l.elements[i].bbox;
            const auto& b = back.layout.elements[i].bbox;
            CHECK(back.layout.elements[i].category == l.elements[i].category);
            worst = std::max({worst, std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.w - b.w), std::abs(a.h - b.h)});
        }
    }
    CHECK(worst <= 1.0 / 64);
}

TEST_CASE("empty layouts tokenize to all PAD") {
    TokenizerConfig cfg;
    TokenSequence seq = tokenize_layout(Layout{}, cfg);
    CHECK(seq == empty_sequence(cfg));
    CHECK(detokenize_layout(seq, cfg).layout.elements.empty());
}

TEST_CASE("tokenizer rejects malformed sequences") {
    TokenizerConfig cfg;
    Layout many;
    for (int i = 0; i < 21; ++i) many.add(category::icon, {0, 0, 0.1, 0.1});
    CHECK_ERROR_CODE(tokenize_layout(many, cfg), ErrorCode::TooManyElements);

    TokenSequence seq = tokenize_layout(two_buttons(), cfg);
    TokenSequence masked = seq;
    masked.at(0, Attribute::W) = cfg.mask(Attribute::W);
    CHECK_ERROR_CODE(detokenize_layout(masked, cfg), ErrorCode::MaskedSequence);
    CHECK(tokens_in_vocab(masked, cfg, true));
    CHECK_FALSE(tokens_in_vocab(masked, cfg, false));

    TokenSequence mixed = seq;
    mixed.at(1, Attribute::X) = cfg.pad(Attribute::X);
    CHECK_ERROR_CODE(detokenize_layout(mixed, cfg), ErrorCode::MixedPadSlot);
}

TEST_CASE("detokenize drops sub-pixel elements") {
    TokenizerConfig cfg{.bins = 1024, .e_max = 2};
    TokenSequence seq = empty_sequence(cfg);
    seq.at(0, Attribute::Category) = category::icon.id;
    seq.at(0, Attribute::X) = 0;
    seq.at(0, Attribute::Y) = 0;
    seq.at(0, Attribute::W) = 0;  // 0.5/1024 * 288 < 1 px
    seq.at(0, Attribute::H) = 100;
    auto r = detokenize_layout(seq, cfg);
    CHECK(r.dropped == 1);
    CHECK(r.layout.elements.empty());
}

TEST_CASE("layout metrics on hand-computed boxes") {
    Layout l;
    l.add(category::image, {0, 0, 0.5, 0.5});
    l.add(category::image, {0.25, 0.25, 0.5, 0.5});
    auto m = layout_metrics(l);
    CHECK(m.overlap == doctest::Approx(0.0625));
    CHECK(m.coverage == doctest::Approx(0.4375).epsilon(1e-3));
    // Left edges 0 and 0.25, centers 0.25 and 0.5, right edges 0.5 and 0.75: every pair differs by 0.25.
    CHECK(m.alignment == doctest::Approx(0.25));
    CHECK(layout_metrics(Layout{}).coverage == 0);
}

TEST_CASE("standard palette has 25 distinct colors none equal to the background") {
    const auto& p = Palette::standard();
    std::set<Rgb> colors(p.colors.begin(), p.colors.end());
    CHECK(colors.size() == kNumCategories);
    CHECK_FALSE(colors.count(p.background));
    for (int i = 0; i < kNumCategories; ++i) CHECK(p.decode(p.colors[static_cast<size_t>(i)]) == ComponentCategory(i));
    CHECK_FALSE(p.decode(p.background).has_value());
    auto j = palette_to_json(p);
    CHECK(j["version"] == p.version);
    CHECK(j["categories"]["text button"] == to_hex(p.color(category::text_button)));
}

TEST_CASE("wireframe paints elements in stacking order") {
    const auto& p = Palette::standard();
    Layout l;
    l.add(category::card, {0, 0, 1, 0.5});
    l.add(category::icon, {0.25, 0.125, 0.25, 0.125});
    Image img = render_wireframe(l, p);
    REQUIRE(img.width() == 288);
    REQUIRE(img.height() == 512);
    CHECK(img.at(10, 10) == p.color(category::card));
    CHECK(img.at(100, 100) == p.color(category::icon));
    CHECK(img.at(10, 400) == p.background);
    CHECK(render_wireframe(l, p) == img);
    // Exact pixel extents follow to_pixels.
    auto r = to_pixels(l.elements[1].bbox, 288, 512);
    CHECK(img.at(r.x0, r.y0) == p.color(category::icon));
    CHECK(img.at(r.x0 - 1, r.y0) == p.color(category::card));
    CHECK(img.at(r.x1 - 1, r.y1 - 1) == p.color(category::icon));
    CHECK(img.at(r.x1, r.y1 - 1) == p.color(category::card));
}

TEST_CASE("wireframe pixels decode to the topmost covering element") {
    const auto& p = Palette::standard();
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        Layout l = synthetic_layout(rng);
        Image img = render_wireframe(l, p);
        for (int k = 0; k < 200; ++k) {
            const int x = static_cast<int>(rng.uniform_int(288));
            const int y = static_cast<int>(rng.uniform_int(512));
            std::optional<ComponentCategory> expect;
            for (const auto& e : l.elements)
                if (to_pixels(e.bbox, 288, 512).contains(x, y)) expect = e.category;
            CHECK(p.decode(img.at(x, y)) == expect);
        }
    }
}

TEST_CASE("hex colors") {
    CHECK(to_hex({255, 0, 16}) == "#ff0010");
    CHECK(rgb_from_hex("#ff0010") == Rgb{255, 0, 16});
    CHECK_ERROR_CODE(rgb_from_hex("ff0010"), ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(rgb_from_hex("#gg0010"), ErrorCode::InvalidArgument);
}

TEST_CASE("PNG round-trips exactly and JPEG is read by signature") {
    auto dir = scratch("png");
    Image img(17, 9, {1, 2, 3});
    img.fill_rect(3, 2, 10, 7, {200, 100, 50});
    CHECK(decode_png(encode_png(img)) == img);
    write_png(img, dir / "a.png");
    CHECK(read_image(dir / "a.png") == img);
    CHECK(read_image_size(dir / "a.png") == std::array<int, 2>{17, 9});

    // Saved with a misleading extension; the signature decides.
    write_jpeg(Image(32, 48, {120, 120, 120}), dir / "b.png");
    Image j = read_image(dir / "b.png");
    CHECK(j.width() == 32);
    CHECK(j.height() == 48);
    CHECK(std::abs(int(j.at(5, 5).r) - 120) <= 2);
}

TEST_CASE("corrupt images raise CorruptImage") {
    auto dir = scratch("corrupt");
    {
        std::ofstream(dir / "x.png") << "not an image";
    }
    CHECK_ERROR_CODE(read_image(dir / "x.png"), ErrorCode::CorruptImage);
    CHECK_ERROR_CODE(decode_png({0x89, 'P', 'N', 'G'}), ErrorCode::CorruptImage);
}

TEST_CASE("resizing preserves flat colors and nearest keeps the palette") {
    Image flat(540, 960, {10, 20, 30});
    Image r = resize_bilinear(flat, 288, 512);
    CHECK(r.width() == 288);
    CHECK(r.height() == 512);
    CHECK(r == Image(288, 512, {10, 20, 30}));

    Layout l = two_buttons();
    Image wf = render_wireframe(l, Palette::standard(), 540, 960);
    Image n = resize_nearest(wf, 288, 512);
    std::set<Rgb> allowed{Palette::standard().background, Palette::standard().color(category::toolbar),
                          Palette::standard().color(category::text_button)};
    for (int y = 0; y < 512; ++y)
        for (int x = 0; x < 288; ++x) REQUIRE(allowed.count(n.at(x, y)));
}

TEST_CASE("crop and fill_rect clip to the image") {
    Image img(10, 10, {0, 0, 0});
    img.fill_rect(-5, -5, 3, 3, {9, 9, 9});
    CHECK(img.at(2, 2) == Rgb{9, 9, 9});
    CHECK(img.at(3, 3) == Rgb{0, 0, 0});
    Image c = img.crop(1, 1, 4, 4);
    CHECK(c.width() == 4);
    CHECK(c.at(1, 1) == Rgb{9, 9, 9});
}

TEST_SUITE_END();
