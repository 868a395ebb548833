#include "uidiff/layout.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "uidiff/error.hpp"

namespace uidiff {

using nlohmann::json;

const std::array<std::string_view, kNumCategories>& category_names() {
    static constexpr std::array<std::string_view, kNumCategories> names = {
        "text",          "text button",    "icon",           "image",          "toolbar",
        "list item",     "input",          "background image", "card",         "web view",
        "radio button",  "drawer",         "checkbox",       "advertisement",  "modal",
        "pager indicator", "slider",       "on/off switch",  "button bar",     "number stepper",
        "multi-tab",     "date picker",    "map view",       "video",          "bottom navigation",
    };
    return names;
}

std::string_view ComponentCategory::name() const {
    if (id < 0 || id >= kNumCategories) return "invalid";
    return category_names()[static_cast<size_t>(id)];
}

std::optional<ComponentCategory> ComponentCategory::from_name(std::string_view name) {
    // Accept Rico's title-cased labels ("Text Button") as well as the canonical lowercase.
    std::string lowered;
    lowered.reserve(name.size());
    for (char c : name) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    while (!lowered.empty() && std::isspace(static_cast<unsigned char>(lowered.back()))) lowered.pop_back();
    size_t start = 0;
    while (start < lowered.size() && std::isspace(static_cast<unsigned char>(lowered[start]))) ++start;
    lowered.erase(0, start);

    const auto& names = category_names();
    for (size_t i = 0; i < names.size(); ++i) {
        if (names[i] == lowered) return ComponentCategory(static_cast<int>(i));
    }
    return std::nullopt;
}

ComponentCategory ComponentCategory::parse(std::string_view name) {
    auto c = from_name(name);
    if (!c) throw Error(ErrorCode::InvalidArgument, fmt::format("unknown component category '{}'", name));
    return *c;
}

Layout& Layout::add(ComponentCategory c, BBox box) {
    elements.push_back({c, box, static_cast<int>(elements.size())});
    return *this;
}

PixelRect PixelRect::intersect(const PixelRect& o) const {
    PixelRect r{std::max(x0, o.x0), std::max(y0, o.y0), std::min(x1, o.x1), std::min(y1, o.y1)};
    if (r.x1 < r.x0) r.x1 = r.x0;
    if (r.y1 < r.y0) r.y1 = r.y0;
    return r;
}

PixelRect to_pixels(const BBox& box, int width, int height) {
    auto px = [](double f, int dim) {
        long v = std::lround(f * dim);
        return static_cast<int>(std::clamp<long>(v, 0, dim));
    };
    return {px(box.x, width), px(box.y, height), px(box.x + box.w, width), px(box.y + box.h, height)};
}

std::vector<Violation> validate_layout(const Layout& layout, int e_max) {
    std::vector<Violation> out;
    if (layout.canvas_w <= 0 || layout.canvas_h <= 0) out.push_back({"canvas>0", -1});
    if (layout.canvas_h <= layout.canvas_w) out.push_back({"portrait", -1});
    if (static_cast<int>(layout.elements.size()) > e_max) out.push_back({"count<=e_max", -1});

    for (size_t i = 0; i < layout.elements.size(); ++i) {
        const auto& e = layout.elements[i];
        const int idx = static_cast<int>(i);
        const auto& b = e.bbox;
        if (e.category.id < 0 || e.category.id >= kNumCategories) out.push_back({"category", idx});
        if (!std::isfinite(b.x) || !std::isfinite(b.y) || !std::isfinite(b.w) || !std::isfinite(b.h)) {
            out.push_back({"finite", idx});
            continue;
        }
        if (b.x < 0) out.push_back({"x>=0", idx});
        if (b.y < 0) out.push_back({"y>=0", idx});
        if (!(b.w > 0)) out.push_back({"w>0", idx});
        if (!(b.h > 0)) out.push_back({"h>0", idx});
        if (b.x + b.w > 1 + kBBoxEpsilon) out.push_back({"x+w<=1", idx});
        if (b.y + b.h > 1 + kBBoxEpsilon) out.push_back({"y+h<=1", idx});
    }
    // z must be exactly the element order 0..n-1.
    for (size_t i = 0; i < layout.elements.size(); ++i) {
        if (layout.elements[i].z != static_cast<int>(i)) out.push_back({"z contiguous", static_cast<int>(i)});
    }
    return out;
}

void require_valid(const Layout& layout, int e_max) {
    auto v = validate_layout(layout, e_max);
    if (v.empty()) return;
    const auto& first = v.front();
    if (first.rule == "count<=e_max")
        throw Error(ErrorCode::TooManyElements,
                    fmt::format("{} elements exceed e_max={}", layout.elements.size(), e_max));
    throw Error(ErrorCode::InvalidLayout, fmt::format("violation '{}' at element {}", first.rule, first.index));
}

double round6(double v) {
    double r = std::round(v * 1e6) / 1e6;
    return r == 0.0 ? 0.0 : r;  // drop negative zero
}

json layout_to_json(const Layout& layout) {
    json elems = json::array();
    for (const auto& e : layout.elements) {
        elems.push_back({
            {"category", std::string(e.category.name())},
            {"bbox", {round6(e.bbox.x), round6(e.bbox.y), round6(e.bbox.w), round6(e.bbox.h)}},
            {"z", e.z},
        });
    }
    return {{"canvas", {{"w", layout.canvas_w}, {"h", layout.canvas_h}}}, {"elements", elems}};
}

Layout layout_from_json(const json& j) {
    try {
        Layout layout;
        layout.canvas_w = j.at("canvas").at("w").get<int>();
        layout.canvas_h = j.at("canvas").at("h").get<int>();
        for (const auto& je : j.at("elements")) {
            LayoutElement e;
            e.category = ComponentCategory::parse(je.at("category").get<std::string>());
            const auto& b = je.at("bbox");
            if (!b.is_array() || b.size() != 4) throw Error(ErrorCode::InvalidBBox, "bbox must be [x,y,w,h]");
            e.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
            e.z = je.value("z", static_cast<int>(layout.elements.size()));
            layout.elements.push_back(e);
        }
        std::stable_sort(layout.elements.begin(), layout.elements.end(),
                         [](const LayoutElement& a, const LayoutElement& b) { return a.z < b.z; });
        return layout;
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::InvalidLayout, ex.what());
    }
}

std::string layout_to_string(const Layout& layout) { return layout_to_json(layout).dump(); }

Layout load_layout(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IOFailure, "cannot open layout " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::InvalidLayout, path + ": " + ex.what());
    }
    return layout_from_json(j);
}

void save_layout(const Layout& layout, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IOFailure, "cannot write layout " + path);
    out << layout_to_json(layout).dump(2) << '\n';
}

}  // namespace uidiff
