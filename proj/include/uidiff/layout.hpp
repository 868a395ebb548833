#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace uidiff {

inline constexpr int kNumCategories = 25;
inline constexpr int kDefaultMaxElements = 20;
inline constexpr int kCanvasWidth = 288;
inline constexpr int kCanvasHeight = 512;
inline constexpr double kBBoxEpsilon = 1e-6;

/// Rico semantic component vocabulary. Ids are stable: they index the
/// tokenizer's category vocabulary and the wireframe palette.
struct ComponentCategory {
    int id = 0;

    constexpr ComponentCategory() = default;
    constexpr explicit ComponentCategory(int category_id) : id(category_id) {}

    std::string_view name() const;

    static std::optional<ComponentCategory> from_name(std::string_view name);
    /// Like from_name but throws InvalidArgument for unknown names.
    static ComponentCategory parse(std::string_view name);

    friend constexpr bool operator==(ComponentCategory, ComponentCategory) = default;
    friend constexpr auto operator<=>(ComponentCategory a, ComponentCategory b) { return a.id <=> b.id; }
};

/// All category names, indexed by id.
const std::array<std::string_view, kNumCategories>& category_names();

namespace category {
inline constexpr ComponentCategory text{0};
inline constexpr ComponentCategory text_button{1};
inline constexpr ComponentCategory icon{2};
inline constexpr ComponentCategory image{3};
inline constexpr ComponentCategory toolbar{4};
inline constexpr ComponentCategory list_item{5};
inline constexpr ComponentCategory input{6};
inline constexpr ComponentCategory background_image{7};
inline constexpr ComponentCategory card{8};
inline constexpr ComponentCategory web_view{9};
inline constexpr ComponentCategory radio_button{10};
inline constexpr ComponentCategory drawer{11};
inline constexpr ComponentCategory checkbox{12};
inline constexpr ComponentCategory advertisement{13};
inline constexpr ComponentCategory modal{14};
inline constexpr ComponentCategory pager_indicator{15};
inline constexpr ComponentCategory slider{16};
inline constexpr ComponentCategory on_off_switch{17};
inline constexpr ComponentCategory button_bar{18};
inline constexpr ComponentCategory number_stepper{19};
inline constexpr ComponentCategory multi_tab{20};
inline constexpr ComponentCategory date_picker{21};
inline constexpr ComponentCategory map_view{22};
inline constexpr ComponentCategory video{23};
inline constexpr ComponentCategory bottom_navigation{24};
}  // namespace category

/// Normalized box; (x, y) is the top-left corner, all values are canvas fractions.
struct BBox {
    double x = 0, y = 0, w = 0, h = 0;

    double area() const { return w * h; }
    double right() const { return x + w; }
    double bottom() const { return y + h; }

    friend bool operator==(const BBox&, const BBox&) = default;
};

struct LayoutElement {
    ComponentCategory category;
    BBox bbox;
    int z = 0;

    friend bool operator==(const LayoutElement&, const LayoutElement&) = default;
};

/// Flat list of elements on a portrait canvas; element order is stacking order.
struct Layout {
    int canvas_w = kCanvasWidth;
    int canvas_h = kCanvasHeight;
    std::vector<LayoutElement> elements;

    /// Appends an element on top of the stack.
    Layout& add(ComponentCategory c, BBox box);

    friend bool operator==(const Layout&, const Layout&) = default;
};

/// Integer pixel rectangle, half-open: [x0, x1) x [y0, y1).
struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    long area() const { return static_cast<long>(std::max(0, width())) * std::max(0, height()); }
    bool empty() const { return x1 <= x0 || y1 <= y0; }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    PixelRect intersect(const PixelRect& o) const;

    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Pixel bounds used by every rasterizing consumer: edges at round(fraction * dimension).
PixelRect to_pixels(const BBox& box, int width, int height);

struct Violation {
    std::string rule;
    int index = -1;  // element index, -1 for layout-level rules

    friend bool operator==(const Violation&, const Violation&) = default;
};

std::vector<Violation> validate_layout(const Layout& layout, int e_max = kDefaultMaxElements);

/// Throws InvalidLayout carrying the first violation when the layout is invalid.
void require_valid(const Layout& layout, int e_max = kDefaultMaxElements);

// Canonical JSON form: {"canvas":{"w":288,"h":512},"elements":[{"category":"toolbar","bbox":[x,y,w,h],"z":0}]}
nlohmann::json layout_to_json(const Layout& layout);
Layout layout_from_json(const nlohmann::json& j);
std::string layout_to_string(const Layout& layout);
Layout load_layout(const std::string& path);
void save_layout(const Layout& layout, const std::string& path);

/// Rounds to the 6-decimal grid used in serialized layouts.
double round6(double v);

}  // namespace uidiff
