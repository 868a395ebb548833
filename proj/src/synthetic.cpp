#include "uidiff/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "uidiff/error.hpp"
#include "uidiff/wireframe.hpp"

namespace uidiff {

using nlohmann::json;
namespace cat = category;

std::string_view archetype_name(Archetype a) {
    static constexpr std::string_view names[] = {"login", "list", "gallery", "media", "map", "profile", "tutorial", "settings"};
    return names[static_cast<int>(a)];
}

namespace {

constexpr double G = 1.0 / 64.0;

int irange(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(hi - lo + 1))); }
bool coin(Rng& rng, double p) { return rng.uniform() < p; }

// Adds an element given in 1/64 grid units, clipped to the canvas.
void put(Layout& l, ComponentCategory c, int gx, int gy, int gw, int gh) {
    gx = std::clamp(gx, 0, 63);
    gy = std::clamp(gy, 0, 63);
    gw = std::min(gw, 64 - gx);
    gh = std::min(gh, 64 - gy);
    if (gw <= 0 || gh <= 0 || static_cast<int>(l.elements.size()) >= kDefaultMaxElements) return;
    l.add(c, {gx * G, gy * G, gw * G, gh * G});
}

int toolbar(Layout& l, Rng& rng) {
    const int h = irange(rng, 4, 6);
    put(l, cat::toolbar, 0, 0, 64, h);
    if (coin(rng, 0.6)) put(l, cat::icon, 1, 1, 3, h - 2);
    return h;
}

void bottom_nav(Layout& l, Rng& rng) {
    const int h = irange(rng, 5, 6);
    put(l, cat::bottom_navigation, 0, 64 - h, 64, h);
}

void login(Layout& l, Rng& rng) {
    int y = coin(rng, 0.5) ? toolbar(l, rng) + 3 : irange(rng, 4, 8);
    const int logo = irange(rng, 10, 16);
    put(l, coin(rng, 0.5) ? cat::image : cat::icon, 32 - logo / 2, y, logo, logo * 9 / 16 + 2);
    y += logo * 9 / 16 + 4;
    if (coin(rng, 0.7)) {
        put(l, cat::text, 12, y, 40, 3);
        y += 5;
    }
    const int inputs = irange(rng, 2, 3);
    for (int i = 0; i < inputs; ++i) {
        put(l, cat::input, 6, y, 52, 4);
        y += 6;
    }
    y += 1;
    put(l, cat::text_button, 6, y, 52, 4);
    y += 6;
    if (coin(rng, 0.6)) put(l, cat::text_button, 16, y, 32, 3);
    if (coin(rng, 0.4)) put(l, cat::checkbox, 6, y + 5, 3, 2);
}

void list_screen(Layout& l, Rng& rng) {
    int y = toolbar(l, rng);
    const bool nav = coin(rng, 0.5);
    const int h = irange(rng, 6, 8);
    const int n = irange(rng, 4, 7);
    const bool icons = coin(rng, 0.6);
    for (int i = 0; i < n && y + h <= (nav ? 58 : 64); ++i) {
        put(l, cat::list_item, 0, y, 64, h);
        if (icons) put(l, cat::icon, 2, y + 1, 5, h - 2);
        y += h;
    }
    if (nav) bottom_nav(l, rng);
}

void gallery(Layout& l, Rng& rng) {
    int y = toolbar(l, rng) + 1;
    if (coin(rng, 0.4)) {
        put(l, cat::multi_tab, 0, y - 1, 64, 4);
        y += 4;
    }
    const int cols = irange(rng, 2, 3);
    const int cell = 64 / cols;
    const int ch = irange(rng, 10, 14);
    const bool nav = coin(rng, 0.4);
    for (int r = 0; r < 4 && y + ch <= (nav ? 58 : 64); ++r) {
        for (int c = 0; c < cols; ++c) put(l, cat::image, c * cell + 1, y, cell - 2, ch - 1);
        y += ch;
    }
    if (nav) bottom_nav(l, rng);
}

void media(Layout& l, Rng& rng) {
    int y = toolbar(l, rng);
    const int vh = irange(rng, 18, 26);
    put(l, coin(rng, 0.5) ? cat::video : cat::image, 0, y, 64, vh);
    y += vh + 2;
    put(l, cat::text, 4, y, 44, 3);
    y += 4;
    put(l, cat::text, 4, y, 30, 2);
    y += 5;
    put(l, cat::slider, 4, y, 56, 2);
    y += 4;
    if (coin(rng, 0.5)) {
        put(l, cat::button_bar, 8, y, 48, 5);
    } else {
        for (int i = 0; i < 3; ++i) put(l, cat::icon, 14 + i * 14, y, 6, 4);
    }
    y += 7;
    if (coin(rng, 0.5))
        for (int i = 0; i < 2 && y + 7 <= 64; ++i, y += 7) put(l, cat::list_item, 0, y, 64, 6);
}

void map_screen(Layout& l, Rng& rng) {
    const int top = coin(rng, 0.6) ? toolbar(l, rng) : 0;
    put(l, cat::map_view, 0, top, 64, 64 - top);
    put(l, cat::input, 4, top + 2, 56, 4);
    if (coin(rng, 0.7)) put(l, cat::icon, 54, 40, 6, 4);
    if (coin(rng, 0.6)) put(l, cat::card, 2, 48, 60, 14);
    if (coin(rng, 0.3)) put(l, cat::text_button, 40, 56, 20, 4);
}

void profile(Layout& l, Rng& rng) {
    int y = toolbar(l, rng) + 2;
    if (coin(rng, 0.4)) {
        put(l, cat::background_image, 0, y - 2, 64, 14);
    }
    put(l, cat::image, 24, y, 16, 9);
    y += 11;
    put(l, cat::text, 16, y, 32, 3);
    y += 4;
    put(l, cat::text, 20, y, 24, 2);
    y += 4;
    if (coin(rng, 0.6)) {
        put(l, cat::multi_tab, 0, y, 64, 4);
        y += 5;
    }
    const int n = irange(rng, 2, 4);
    for (int i = 0; i < n && y + 7 <= 64; ++i, y += 7) put(l, cat::list_item, 0, y, 64, 7);
    if (coin(rng, 0.3)) put(l, cat::text_button, 20, std::min(y + 1, 59), 24, 4);
}

void tutorial(Layout& l, Rng& rng) {
    put(l, cat::background_image, 0, 0, 64, 64);
    const int iy = irange(rng, 10, 16);
    if (coin(rng, 0.6)) put(l, cat::image, 16, iy, 32, 18);
    put(l, cat::text, 8, iy + 22, 48, 4);
    put(l, cat::text, 12, iy + 27, 40, 3);
    put(l, cat::pager_indicator, 24, 52, 16, 2);
    put(l, cat::text_button, 8, 56, 48, 5);
    if (coin(rng, 0.4)) put(l, cat::text_button, 48, 2, 14, 3);
}

void settings(Layout& l, Rng& rng) {
    int y = toolbar(l, rng) + 1;
    const int n = irange(rng, 3, 6);
    for (int i = 0; i < n && y + 6 <= 62; ++i, y += 7) {
        put(l, cat::text, 3, y + 1, 36, 3);
        const double r = rng.uniform();
        if (r < 0.6)
            put(l, cat::on_off_switch, 52, y + 1, 9, 3);
        else if (r < 0.85)
            put(l, cat::checkbox, 56, y + 1, 4, 3);
        else
            put(l, cat::radio_button, 56, y + 1, 4, 3);
    }
    if (coin(rng, 0.3) && y + 5 <= 64) put(l, cat::number_stepper, 40, y, 20, 4);
}

}  // namespace

Layout synthetic_layout(Archetype kind, Rng& rng) {
    Layout l;
    switch (kind) {
        case Archetype::Login: login(l, rng); break;
        case Archetype::List: list_screen(l, rng); break;
        case Archetype::Gallery: gallery(l, rng); break;
        case Archetype::Media: media(l, rng); break;
        case Archetype::Map: map_screen(l, rng); break;
        case Archetype::Profile: profile(l, rng); break;
        case Archetype::Tutorial: tutorial(l, rng); break;
        case Archetype::Settings: settings(l, rng); break;
    }
    if (coin(rng, 0.1) && l.elements.size() < kDefaultMaxElements) put(l, cat::advertisement, 0, 58, 64, 6);
    return l;
}

Layout synthetic_layout(Rng& rng) {
    return synthetic_layout(static_cast<Archetype>(rng.uniform_int(kNumArchetypes)), rng);
}

// ---- screenshot rendering ----

namespace {

Rgb mix(Rgb a, Rgb b, double t) {
    auto m = [t](std::uint8_t x, std::uint8_t y) { return static_cast<std::uint8_t>(std::lround(x + (y - x) * t)); };
    return {m(a.r, b.r), m(a.g, b.g), m(a.b, b.b)};
}

struct Painter {
    Image& img;
    void rect(int x0, int y0, int x1, int y1, Rgb c) { img.fill_rect(x0, y0, x1, y1, c); }
    void border(int x0, int y0, int x1, int y1, int t, Rgb c) {
        rect(x0, y0, x1, y0 + t, c);
        rect(x0, y1 - t, x1, y1, c);
        rect(x0, y0, x0 + t, y1, c);
        rect(x1 - t, y0, x1, y1, c);
    }
    void ellipse(int x0, int y0, int x1, int y1, Rgb c, double inner = 0.0) {
        const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
        const double rx = 0.5 * (x1 - x0), ry = 0.5 * (y1 - y0);
        if (rx <= 0 || ry <= 0) return;
        for (int y = std::max(0, y0); y < std::min(img.height(), y1); ++y)
            for (int x = std::max(0, x0); x < std::min(img.width(), x1); ++x) {
                const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
                const double d = dx * dx + dy * dy;
                if (d <= 1.0 && d >= inner * inner) img.set(x, y, c);
            }
    }
};

}  // namespace

Theme random_theme(Rng& rng) {
    static const Rgb primaries[] = {{33, 150, 243}, {76, 175, 80}, {244, 67, 54}, {156, 39, 176}, {255, 152, 0}, {0, 150, 136}, {63, 81, 181}};
    static const Rgb accents[] = {{255, 64, 129}, {255, 193, 7}, {0, 188, 212}, {139, 195, 74}, {103, 58, 183}};
    Theme t;
    const bool dark = rng.uniform() < 0.25;
    t.background = dark ? Rgb{33, 33, 33} : Rgb{250, 250, 250};
    t.surface = dark ? Rgb{55, 55, 55} : Rgb{255, 255, 255};
    t.ink = dark ? Rgb{230, 230, 230} : Rgb{40, 40, 40};
    t.primary = primaries[rng.uniform_int(std::size(primaries))];
    t.accent = accents[rng.uniform_int(std::size(accents))];
    return t;
}

Image render_screenshot(const Layout& layout, const Theme& th, int width, int height) {
    Image img(width, height, th.background);
    Painter p{img};
    const Rgb white{255, 255, 255};
    const Rgb muted = mix(th.ink, th.background, 0.6);
    for (const auto& e : layout.elements) {
        const PixelRect r = to_pixels(e.bbox, width, height);
        const int x0 = r.x0, y0 = r.y0, x1 = r.x1, y1 = r.y1;
        const int w = r.width(), h = r.height();
        const int t = std::max(1, width / 200);
        switch (e.category.id) {
            case 0: {  // text
                const int line = std::max(2, std::min(h, height / 48));
                for (int y = y0; y + line <= y1; y += line * 2)
                    p.rect(x0, y, x0 + w * (y == y0 ? 9 : 7) / 10, y + line * 3 / 4 + 1, th.ink);
                if (h < 2 * line) p.rect(x0, y0, x0 + w * 9 / 10, y1, th.ink);
                break;
            }
            case 1:  // text button
                p.rect(x0, y0, x1, y1, th.accent);
                p.rect(x0 + w / 4, y0 + h * 2 / 5, x1 - w / 4, y1 - h * 2 / 5, white);
                break;
            case 2:  // icon
                p.ellipse(x0, y0, x1, y1, th.ink == white ? white : mix(th.primary, th.ink, 0.3));
                break;
            case 3:  // image
                p.rect(x0, y0, x1, y1, mix(th.primary, white, 0.55));
                for (int y = y0; y < y1; ++y) {
                    const int span = w * (y - y0) / std::max(1, h);
                    p.rect(x0, y, x0 + span, y + 1, mix(th.primary, th.ink, 0.2));
                }
                break;
            case 4:  // toolbar
                p.rect(x0, y0, x1, y1, th.primary);
                p.rect(x0 + w / 6, y0 + h * 2 / 5, x0 + w / 2, y1 - h * 2 / 5, white);
                break;
            case 5:  // list item
                p.rect(x0, y0, x1, y1, th.surface);
                p.rect(x0, y1 - t, x1, y1, muted);
                p.rect(x0 + w / 6, y0 + h / 3, x0 + w * 2 / 3, y0 + h / 3 + std::max(2, h / 6), th.ink);
                p.rect(x0 + w / 6, y0 + h * 3 / 5, x0 + w / 2, y0 + h * 3 / 5 + std::max(2, h / 8), muted);
                break;
            case 6:  // input
                p.rect(x0, y0, x1, y1, th.surface);
                p.border(x0, y0, x1, y1, t, muted);
                p.rect(x0 + w / 20, y0 + h * 2 / 5, x0 + w / 3, y1 - h * 2 / 5, muted);
                break;
            case 7:  // background image
                for (int y = y0; y < y1; ++y) p.rect(x0, y, x1, y + 1, mix(th.primary, th.accent, static_cast<double>(y - y0) / std::max(1, h)));
                break;
            case 8:  // card
                p.rect(x0, y0, x1, y1, th.surface);
                p.border(x0, y0, x1, y1, t, muted);
                p.rect(x0 + w / 12, y0 + h / 5, x0 + w / 2, y0 + h / 5 + std::max(2, h / 8), th.ink);
                break;
            case 9:  // web view
                p.rect(x0, y0, x1, y1, mix(th.background, th.ink, 0.08));
                for (int y = y0 + h / 10; y < y1; y += std::max(4, h / 12)) p.rect(x0 + w / 12, y, x1 - w / 12, y + 2, muted);
                break;
            case 10:  // radio button
                p.ellipse(x0, y0, x1, y1, th.accent, 0.6);
                p.ellipse(x0 + w / 3, y0 + h / 3, x1 - w / 3, y1 - h / 3, th.accent);
                break;
            case 11:  // drawer
                p.rect(x0, y0, x1, y1, th.surface);
                p.rect(x1 - t, y0, x1, y1, muted);
                break;
            case 12:  // checkbox
                p.rect(x0, y0, x1, y1, th.accent);
                p.rect(x0 + w / 4, y0 + h / 4, x1 - w / 4, y1 - h / 4, white);
                break;
            case 13:  // advertisement
                p.rect(x0, y0, x1, y1, {255, 235, 150});
                p.rect(x0 + w / 10, y0 + h / 3, x0 + w / 2, y1 - h / 3, {90, 70, 20});
                break;
            case 14:  // modal
                p.rect(x0, y0, x1, y1, th.surface);
                p.border(x0, y0, x1, y1, 2 * t, th.ink);
                break;
            case 15: {  // pager indicator
                const int dots = 4;
                for (int i = 0; i < dots; ++i) {
                    const int cx0 = x0 + w * i / dots, cx1 = x0 + w * (i + 1) / dots;
                    const int d = std::min(cx1 - cx0, h);
                    const int ox = cx0 + (cx1 - cx0 - d) / 2;
                    p.ellipse(ox, y0 + (h - d) / 2, ox + d, y0 + (h - d) / 2 + d, i == 0 ? th.accent : muted);
                }
                break;
            }
            case 16:  // slider
                p.rect(x0, y0 + h * 2 / 5, x1, y1 - h * 2 / 5, muted);
                p.rect(x0, y0 + h * 2 / 5, x0 + w / 3, y1 - h * 2 / 5, th.accent);
                p.ellipse(x0 + w / 3 - h / 2, y0, x0 + w / 3 + h / 2, y1, th.accent);
                break;
            case 17:  // on/off switch
                p.ellipse(x0, y0, x1, y1, th.accent);
                p.ellipse(x1 - h, y0, x1, y1, white);
                break;
            case 18:  // button bar
                p.rect(x0, y0, x1, y1, mix(th.primary, th.background, 0.3));
                for (int i = 1; i < 3; ++i) p.rect(x0 + w * i / 3 - t, y0, x0 + w * i / 3 + t, y1, th.background);
                break;
            case 19:  // number stepper
                p.border(x0, y0, x1, y1, t, muted);
                p.rect(x0, y0, x0 + w / 4, y1, th.accent);
                p.rect(x1 - w / 4, y0, x1, y1, th.accent);
                break;
            case 20:  // multi-tab
                p.rect(x0, y0, x1, y1, mix(th.primary, th.ink, 0.15));
                p.rect(x0, y1 - 2 * t, x0 + w / 3, y1, th.accent);
                break;
            case 21:  // date picker
                p.rect(x0, y0, x1, y1, th.surface);
                for (int i = 0; i < 7; ++i)
                    for (int j = 0; j < 5; ++j)
                        p.rect(x0 + w * i / 7 + 2, y0 + h * j / 5 + 2, x0 + w * (i + 1) / 7 - 2, y0 + h * (j + 1) / 5 - 2, muted);
                break;
            case 22:  // map view
                p.rect(x0, y0, x1, y1, {200, 230, 201});
                for (int i = 1; i < 4; ++i) {
                    p.rect(x0, y0 + h * i / 4, x1, y0 + h * i / 4 + 3 * t, {255, 255, 255});
                    p.rect(x0 + w * i / 4, y0, x0 + w * i / 4 + 3 * t, y1, {250, 240, 200});
                }
                break;
            case 23:  // video
                p.rect(x0, y0, x1, y1, {20, 20, 20});
                for (int y = y0 + h / 3; y < y1 - h / 3; ++y) {
                    const int half = (h / 3) - std::abs(y - (y0 + h / 2));
                    p.rect(x0 + w / 2 - h / 8, y, x0 + w / 2 - h / 8 + std::max(0, half), y + 1, white);
                }
                break;
            case 24:  // bottom navigation
                p.rect(x0, y0, x1, y1, th.surface);
                p.rect(x0, y0, x1, y0 + t, muted);
                for (int i = 0; i < 4; ++i) {
                    const int cx = x0 + w * (2 * i + 1) / 8;
                    p.ellipse(cx - h / 5, y0 + h / 4, cx + h / 5, y1 - h / 4, i == 0 ? th.primary : muted);
                }
                break;
            default: break;
        }
    }
    return img;
}

// ---- hierarchy ----

namespace {

std::string rico_label(std::string_view name) {
    std::string out(name);
    bool up = true;
    for (char& c : out) {
        if (up && std::isalpha(static_cast<unsigned char>(c))) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        up = (c == ' ' || c == '/' || c == '-');
    }
    return out;
}

std::array<int, 4> px_bounds(const BBox& b, int rw, int rh) {
    return {static_cast<int>(std::lround(b.x * rw)), static_cast<int>(std::lround(b.y * rh)),
            static_cast<int>(std::lround(b.right() * rw)), static_cast<int>(std::lround(b.bottom() * rh))};
}

}  // namespace

json synthetic_hierarchy(const Layout& layout, int root_w, int root_h, int extra_unknown, Rng& rng) {
    json root = {{"class", "com.android.internal.policy.PhoneWindow$DecorView"},
                 {"bounds", {0, 0, root_w, root_h}},
                 {"children", json::array()}};
    size_t i = 0;
    while (i < layout.elements.size()) {
        const size_t n = std::min(layout.elements.size() - i, static_cast<size_t>(1 + rng.uniform_int(3)));
        json group = {{"class", "android.widget.LinearLayout"}, {"children", json::array()}};
        std::array<int, 4> u{root_w, root_h, 0, 0};
        for (size_t k = i; k < i + n; ++k) {
            const auto& e = layout.elements[k];
            const auto b = px_bounds(e.bbox, root_w, root_h);
            u = {std::min(u[0], b[0]), std::min(u[1], b[1]), std::max(u[2], b[2]), std::max(u[3], b[3])};
            group["children"].push_back({{"class", "android.view.View"}, {"componentLabel", rico_label(e.category.name())}, {"bounds", b}});
        }
        group["bounds"] = u;
        root["children"].push_back(std::move(group));
        i += n;
    }
    for (int k = 0; k < extra_unknown; ++k) {
        const int x = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(root_w / 2)));
        const int y = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(root_h / 2)));
        root["children"].push_back({{"class", "android.view.View"}, {"componentLabel", "Widget Frame"}, {"bounds", {x, y, x + root_w / 8, y + root_h / 16}}});
    }
    return root;
}

std::vector<std::string> write_synthetic_rico(const std::filesystem::path& root, const SyntheticDatasetConfig& cfg) {
    namespace fs = std::filesystem;
    for (const char* d : {"combined", "semantic", "hierarchies"}) fs::create_directories(root / d);
    Rng rng(cfg.seed);
    std::vector<std::string> ids;
    const int total = cfg.portrait + cfg.landscape;
    for (int i = 0; i < total; ++i) {
        const bool landscape = i >= cfg.portrait;
        const std::string id = fmt::format("{}{:05d}", landscape ? "land" : "syn", i);
        const int w = landscape ? cfg.height : cfg.width;
        const int h = landscape ? cfg.width : cfg.height;
        Layout layout = synthetic_layout(rng);
        layout.canvas_w = w;
        layout.canvas_h = h;
        const Theme theme = random_theme(rng);
        write_jpeg(render_screenshot(layout, theme, w, h), root / "combined" / (id + ".jpg"), 92);
        // Landscape canvases fail layout validation, so the wireframe is painted directly.
        Image wire(w, h, Palette::standard().background);
        for (const auto& e : layout.elements) {
            const PixelRect r = to_pixels(e.bbox, w, h);
            wire.fill_rect(r.x0, r.y0, r.x1, r.y1, Palette::standard().color(e.category));
        }
        write_png(wire, root / "semantic" / (id + ".png"));
        // Rico hierarchies use a 1440x2560 coordinate space for portrait screens.
        const int rw = landscape ? 2560 : 1440, rh = landscape ? 1440 : 2560;
        const json hier = synthetic_hierarchy(layout, rw, rh, rng.uniform() < 0.2 ? 1 : 0, rng);
        std::ofstream f(root / "hierarchies" / (id + ".json"));
        if (!f) throw Error(ErrorCode::IOFailure, "cannot write hierarchy for " + id);
        f << hier.dump();
        ids.push_back(id);
    }
    return ids;
}

}  // namespace uidiff
