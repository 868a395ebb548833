#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uidiff/image.hpp"
#include "uidiff/layout.hpp"

namespace uidiff {

/// Modal color after quantizing each channel to 32 levels; returns the mean
/// true color of the winning bin. Ties go to the lowest quantized (r, g, b).
/// Throws EmptyRegion.
Rgb dominant_fill_color(const std::vector<Rgb>& pixels);
Rgb dominant_fill_color(const Image& region);

struct CroppedComponent {
    ComponentCategory category;
    PixelRect rect;
    Image image;                    // rect.width() x rect.height()
    std::optional<Rgb> fill_color;  // present iff occluded_fraction > 0
    double occluded_fraction = 0.0;
    bool fully_occluded = false;    // fill came from the whole rect
};

/// One crop per element, in layout order. Pixels covered by any element
/// higher in the stack are replaced by the dominant color of the element's
/// visible pixels. Elements that round to zero pixels give an empty crop.
/// Throws CanvasMismatch.
std::vector<CroppedComponent> crop_components(const Image& ui, const Layout& layout);

struct GuiNode {
    std::string kind;  // category name
    int x = 0, y = 0, w = 0, h = 0;
    std::optional<Rgb> background;
    std::string corner = "square";  // "square" | "rounded"

    friend bool operator==(const GuiNode&, const GuiNode&) = default;
};

/// Root container is the canvas; nodes are its children in stacking order.
struct GuiDocument {
    int width = kCanvasWidth, height = kCanvasHeight;
    std::vector<GuiNode> nodes;

    friend bool operator==(const GuiDocument&, const GuiDocument&) = default;
};

/// Throws CanvasMismatch when `ui` is given and differs from the layout canvas.
GuiDocument build_gui_document(const Layout& layout, const Image* ui);

/// <screen w=".." h=".."><node kind x y w h [bg] corner/>...</screen>
std::string emit_xml(const GuiDocument& doc);
/// Throws InvalidArgument on markup outside the dialect.
GuiDocument parse_xml(const std::string& xml);
/// Self-contained page; one absolutely positioned div per node.
std::string emit_html(const GuiDocument& doc);

struct GeneratedCode {
    GuiDocument document;
    std::string xml, html;
};
GeneratedCode generate_code(const Layout& layout, const Image* ui);


}  // namespace uidiff
