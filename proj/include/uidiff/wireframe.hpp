#pragma once

#include <array>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "uidiff/image.hpp"
#include "uidiff/layout.hpp"

namespace uidiff {

/// Category -> flat fill color used for conditioning wireframes.
struct Palette {
    std::string version;
    std::array<Rgb, kNumCategories> colors{};
    Rgb background{255, 255, 255};

    Rgb color(ComponentCategory c) const { return colors.at(static_cast<size_t>(c.id)); }
    /// Exact color lookup; nullopt for the background or any unknown color.
    std::optional<ComponentCategory> decode(Rgb c) const;

    /// Shipped table: 25 farthest-point RGB colors on a white background.
    static const Palette& standard();
};

/// {"version": ..., "background": "#ffffff", "categories": {"text": "#000000", ...}}
nlohmann::json palette_to_json(const Palette& palette);

/// Paints the background then every element as a solid rectangle in stacking
/// order. No anti-aliasing; output depends only on the arguments.
Image render_wireframe(const Layout& layout, const Palette& palette = Palette::standard(),
                       int width = kCanvasWidth, int height = kCanvasHeight);

}  // namespace uidiff
