#include "uidiff/wireframe.hpp"

#include <nlohmann/json.hpp>

#include "uidiff/error.hpp"

namespace uidiff {

namespace {

constexpr std::array<const char*, kNumCategories> kStandardHex = {
    "#000000", "#0066ff", "#66ff00", "#ff0066", "#00ff99", "#9900ff", "#ff9900", "#666666", "#000099",
    "#009900", "#990000", "#66ccff", "#ccff66", "#ff66cc", "#006666", "#660066", "#666600", "#0000ff",
    "#00ff00", "#ff0000", "#6666cc", "#66cc66", "#cc6666", "#00ccff", "#ccff00",
};

}  // namespace

const Palette& Palette::standard() {
    static const Palette palette = [] {
        Palette p;
        p.version = "uidiff-palette-v1";
        for (size_t i = 0; i < kStandardHex.size(); ++i) p.colors[i] = rgb_from_hex(kStandardHex[i]);
        p.background = {255, 255, 255};
        return p;
    }();
    return palette;
}

std::optional<ComponentCategory> Palette::decode(Rgb c) const {
    for (size_t i = 0; i < colors.size(); ++i)
        if (colors[i] == c) return ComponentCategory(static_cast<int>(i));
    return std::nullopt;
}

nlohmann::json palette_to_json(const Palette& palette) {
    nlohmann::json cats = nlohmann::json::object();
    for (int i = 0; i < kNumCategories; ++i)
        cats[std::string(ComponentCategory(i).name())] = to_hex(palette.colors[static_cast<size_t>(i)]);
    return {{"version", palette.version}, {"background", to_hex(palette.background)}, {"categories", cats}};
}

Image render_wireframe(const Layout& layout, const Palette& palette, int width, int height) {
    auto violations = validate_layout(layout, static_cast<int>(layout.elements.size()));
    if (!violations.empty())
        throw Error(ErrorCode::InvalidLayout,
                    "cannot render: violation '" + violations.front().rule + "' at element " +
                        std::to_string(violations.front().index));
    Image img(width, height, palette.background);
    for (const auto& e : layout.elements) {
        const PixelRect r = to_pixels(e.bbox, width, height);
        img.fill_rect(r.x0, r.y0, r.x1, r.y1, palette.color(e.category));
    }
    return img;
}

}  // namespace uidiff
