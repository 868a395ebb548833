#include <doctest.h>

#include <algorithm>

#include "support/errors.hpp"
#include "support/oracles.hpp"
#include "uidiff/postprocess.hpp"
#include "uidiff/synthetic.hpp"

using namespace uidiff;
using namespace uidiff::testing;

TEST_SUITE_BEGIN("postprocess");

namespace {

// A screenshot with per-pixel jitter so histograms are non-trivial.
Image noisy_ui(const Layout& l, Rng& rng) {
    Image img = render_screenshot(l, random_theme(rng), kCanvasWidth, kCanvasHeight);
    for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(std::clamp(int(b) + int(rng.uniform_int(13)) - 6, 0, 255));
    return img;
}

}  // namespace

TEST_CASE("solid regions return their color") {
    CHECK(dominant_fill_color(Image(5, 4, {10, 20, 200})) == Rgb{10, 20, 200});
    CHECK_ERROR_CODE(dominant_fill_color(std::vector<Rgb>{}), ErrorCode::EmptyRegion);
    CHECK_ERROR_CODE(dominant_fill_color(Image(0, 3)), ErrorCode::EmptyRegion);
}

TEST_CASE("a 70/30 split returns the majority color") {
    std::vector<Rgb> px(70, Rgb{10, 20, 200});
    px.insert(px.end(), 30, Rgb{255, 255, 255});
    CHECK(dominant_fill_color(px) == Rgb{10, 20, 200});
}

TEST_CASE("an exact tie goes to the smaller quantized tuple") {
    std::vector<Rgb> px(50, Rgb{200, 0, 0});
    px.insert(px.end(), 50, Rgb{0, 0, 200});
    CHECK(dominant_fill_color(px) == Rgb{0, 0, 200});
    std::vector<Rgb> px2(50, Rgb{0, 9, 0});
    px2.insert(px2.end(), 50, Rgb{0, 0, 255});
    CHECK(dominant_fill_color(px2) == Rgb{0, 0, 255});
}

TEST_CASE("the winning bin reports its mean true color") {
    std::vector<Rgb> px{{0, 0, 0}, {7, 7, 7}, {1, 2, 3}, {200, 200, 200}};
    CHECK(dominant_fill_color(px) == oracle_mode(px));
    CHECK(dominant_fill_color(px) == Rgb{3, 3, 3});
}

TEST_CASE("dominant color equals the brute-force histogram mode on random regions") {
    Rng rng(12);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(400));
        const int palette = 1 + static_cast<int>(rng.uniform_int(6));
        std::vector<Rgb> colors;
        for (int i = 0; i < palette; ++i)
            colors.push_back({static_cast<std::uint8_t>(rng.uniform_int(256)), static_cast<std::uint8_t>(rng.uniform_int(256)),
                              static_cast<std::uint8_t>(rng.uniform_int(256))});
        std::vector<Rgb> px;
        for (int i = 0; i < n; ++i) {
            Rgb c = colors[rng.uniform_int(colors.size())];
            c.r = static_cast<std::uint8_t>(std::clamp(int(c.r) + int(rng.uniform_int(5)) - 2, 0, 255));
            px.push_back(c);
        }
        CHECK(dominant_fill_color(px) == oracle_mode(px));
    }
}

TEST_CASE("disjoint elements crop to raw subimages without fill") {
    Rng rng(1);
    Layout l;
    l.add(category::toolbar, {0, 0, 1, 0.1}).add(category::image, {0.1, 0.3, 0.5, 0.3});
    Image ui = noisy_ui(l, rng);
    auto crops = crop_components(ui, l);
    REQUIRE(crops.size() == 2);
    for (size_t k = 0; k < 2; ++k) {
        const auto r = to_pixels(l.elements[k].bbox, 288, 512);
        CHECK(crops[k].rect == r);
        CHECK(crops[k].category == l.elements[k].category);
        CHECK(crops[k].image == ui.crop(r.x0, r.y0, r.width(), r.height()));
        CHECK_FALSE(crops[k].fill_color.has_value());
        CHECK(crops[k].occluded_fraction == 0.0);
    }
}

TEST_CASE("an element on a solid-blue card gets a blue fill over the overlap") {
    Layout l;
    l.add(category::card, {0, 0, 0.5, 0.25}).add(category::icon, {0.125, 0.0625, 0.125, 0.0625});
    Image ui(288, 512, {255, 255, 255});
    const auto lower = to_pixels(l.elements[0].bbox, 288, 512);
    const auto upper = to_pixels(l.elements[1].bbox, 288, 512);
    ui.fill_rect(lower.x0, lower.y0, lower.x1, lower.y1, {0, 0, 255});
    ui.fill_rect(upper.x0, upper.y0, upper.x1, upper.y1, {250, 10, 10});
    auto crops = crop_components(ui, l);
    REQUIRE(crops[0].fill_color.has_value());
    CHECK(*crops[0].fill_color == Rgb{0, 0, 255});
    CHECK(crops[0].image == Image(lower.width(), lower.height(), {0, 0, 255}));
    CHECK(crops[0].occluded_fraction == doctest::Approx(static_cast<double>(upper.area()) / lower.area()));
    CHECK_FALSE(crops[0].fully_occluded);
    CHECK_FALSE(crops[1].fill_color.has_value());
}

TEST_CASE("a fully occluded element is filled from its whole rect") {
    Layout l;
    l.add(category::text, {0.25, 0.25, 0.25, 0.125}).add(category::modal, {0, 0, 1, 1});
    Image ui(288, 512, {30, 30, 30});
    const auto lower = to_pixels(l.elements[0].bbox, 288, 512);
    ui.fill_rect(lower.x0, lower.y0, lower.x1, lower.y1, {0, 200, 0});
    auto crops = crop_components(ui, l);
    CHECK(crops[0].fully_occluded);
    CHECK(crops[0].occluded_fraction == 1.0);
    REQUIRE(crops[0].fill_color.has_value());
    CHECK(*crops[0].fill_color == Rgb{0, 200, 0});
}

TEST_CASE("cropper fill equals the oracle mode and never touches visible pixels") {
    Rng rng(33);
    int filled = 0;
    for (int trial = 0; trial < 25; ++trial) {
        Layout l = synthetic_layout(rng);
        Image ui = noisy_ui(l, rng);
        auto crops = crop_components(ui, l);
        REQUIRE(crops.size() == l.elements.size());
        for (size_t k = 0; k < crops.size(); ++k) {
            const auto r = to_pixels(l.elements[k].bbox, 288, 512);
            REQUIRE(crops[k].image.width() == r.width());
            REQUIRE(crops[k].image.height() == r.height());
            std::vector<Rgb> visible, all;
            long occluded = 0;
            for (int y = r.y0; y < r.y1; ++y)
                for (int x = r.x0; x < r.x1; ++x) {
                    all.push_back(ui.at(x, y));
                    if (covered_above(l, k, x, y))
                        ++occluded;
                    else
                        visible.push_back(ui.at(x, y));
                }
            CHECK(crops[k].fill_color.has_value() == (occluded > 0));
            if (r.area() > 0) CHECK(crops[k].occluded_fraction == doctest::Approx(static_cast<double>(occluded) / r.area()));
            if (occluded == 0) continue;
            ++filled;
            const Rgb expect = oracle_mode(visible.empty() ? all : visible);
            CHECK(*crops[k].fill_color == expect);
            for (int y = r.y0; y < r.y1; ++y)
                for (int x = r.x0; x < r.x1; ++x) {
                    const Rgb got = crops[k].image.at(x - r.x0, y - r.y0);
                    if (covered_above(l, k, x, y))
                        REQUIRE(got == expect);
                    else
                        REQUIRE(got == ui.at(x, y));
                }
        }
    }
    CHECK(filled > 10);
}

TEST_CASE("sub-pixel elements give empty crops") {
    Layout l;
    l.add(category::icon, {0.5, 0.5, 0.001, 0.001});
    auto crops = crop_components(Image(288, 512), l);
    REQUIRE(crops.size() == 1);
    CHECK(crops[0].image.empty());
}

TEST_CASE("cropping rejects a canvas mismatch") {
    Layout l;
    l.add(category::icon, {0, 0, 0.5, 0.5});
    CHECK_ERROR_CODE(crop_components(Image(100, 100), l), ErrorCode::CanvasMismatch);
    CHECK_ERROR_CODE(build_gui_document(l, std::make_unique<Image>(512, 288).get()), ErrorCode::CanvasMismatch);
}

TEST_CASE("an empty layout emits only the root element") {
    auto code = generate_code(Layout{}, nullptr);
    CHECK(code.document.nodes.empty());
    CHECK(code.xml == "<screen w=\"288\" h=\"512\"/>\n");
    CHECK(parse_xml(code.xml) == code.document);
    CHECK(html_boxes(code.html).empty());
}

TEST_CASE("a full-canvas image becomes a 288x512 node") {
    Layout l;
    l.add(category::image, {0, 0, 1, 1});
    auto doc = build_gui_document(l, nullptr);
    REQUIRE(doc.nodes.size() == 1);
    CHECK(doc.nodes[0] == GuiNode{"image", 0, 0, 288, 512, std::nullopt, "square"});
}

TEST_CASE("node backgrounds come from the visible region of the UI") {
    Layout l;
    l.add(category::card, {0, 0, 0.5, 0.25}).add(category::text_button, {0.125, 0.0625, 0.125, 0.0625});
    Image ui(288, 512, {255, 255, 255});
    const auto lower = to_pixels(l.elements[0].bbox, 288, 512);
    const auto upper = to_pixels(l.elements[1].bbox, 288, 512);
    ui.fill_rect(lower.x0, lower.y0, lower.x1, lower.y1, {0, 0, 255});
    ui.fill_rect(upper.x0, upper.y0, upper.x1, upper.y1, {250, 10, 10});
    auto doc = build_gui_document(l, &ui);
    CHECK(doc.nodes[0].background == Rgb{0, 0, 255});
    CHECK(doc.nodes[1].background == Rgb{250, 10, 10});
    CHECK(doc.nodes[0].corner == "rounded");
}

TEST_CASE("emit, parse, emit is a fixed point and HTML geometry equals the document") {
    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        Layout l = synthetic_layout(rng);
        std::optional<Image> ui;
        if (trial % 2) ui = noisy_ui(l, rng);
        auto code = generate_code(l, ui ? &*ui : nullptr);
        const GuiDocument parsed = parse_xml(code.xml);
        CHECK(parsed == code.document);
        CHECK(emit_xml(parsed) == code.xml);
        CHECK(emit_html(parsed) == code.html);

        const auto boxes = html_boxes(code.html);
        REQUIRE(boxes.size() == code.document.nodes.size());
        for (size_t i = 0; i < boxes.size(); ++i) {
            const auto& n = code.document.nodes[i];
            CHECK(boxes[i].kind == n.kind);
            CHECK(boxes[i].x == n.x);
            CHECK(boxes[i].y == n.y);
            CHECK(boxes[i].w == n.w);
            CHECK(boxes[i].h == n.h);
            // Children lie inside the root.
            CHECK(n.x + n.w <= code.document.width);
            CHECK(n.y + n.h <= code.document.height);
            const auto r = to_pixels(l.elements[i].bbox, 288, 512);
            CHECK(n.x == r.x0);
            CHECK(n.w == r.width());
        }
    }
}

TEST_CASE("the XML parser rejects markup outside the dialect") {
    CHECK_ERROR_CODE(parse_xml("<screen w=\"288\""), ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(parse_xml("<page w=\"288\" h=\"512\"/>"), ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(parse_xml("<screen w=\"288\" h=\"512\"><div/></screen>"), ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(parse_xml("<screen w=\"288\" h=\"512\"><node kind=\"spinner\" x=\"0\" y=\"0\" w=\"1\" h=\"1\"/></screen>"),
                     ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(parse_xml("<screen w=\"288\" h=\"512\"><node kind=\"icon\" x=\"a\" y=\"0\" w=\"1\" h=\"1\"/></screen>"),
                     ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(parse_xml("<screen w=\"288\" h=\"512\"><node kind=\"icon\" x=\"0\" y=\"0\" w=\"1\" h=\"1\" bg=\"red\"/></screen>"),
                     ErrorCode::InvalidArgument);
}

TEST_SUITE_END();
