#include "uidiff/postprocess.hpp"

#include <array>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "uidiff/error.hpp"

namespace uidiff {

Rgb dominant_fill_color(const std::vector<Rgb>& pixels) {
    if (pixels.empty()) throw Error(ErrorCode::EmptyRegion, "dominant_fill_color of an empty region");
    struct Bin {
        long n = 0, r = 0, g = 0, b = 0;
    };
    std::vector<Bin> bins(32 * 32 * 32);
    for (const Rgb& p : pixels) {
        Bin& bin = bins[static_cast<size_t>((p.r >> 3) * 1024 + (p.g >> 3) * 32 + (p.b >> 3))];
        ++bin.n;
        bin.r += p.r;
        bin.g += p.g;
        bin.b += p.b;
    }
    // Index order equals lexicographic (r, g, b) order, so the first maximum wins ties.
    size_t best = 0;
    for (size_t i = 1; i < bins.size(); ++i)
        if (bins[i].n > bins[best].n) best = i;
    const Bin& w = bins[best];
    auto mean = [&](long s) { return static_cast<std::uint8_t>((2 * s + w.n) / (2 * w.n)); };
    return {mean(w.r), mean(w.g), mean(w.b)};
}

Rgb dominant_fill_color(const Image& region) {
    std::vector<Rgb> px;
    px.reserve(static_cast<size_t>(region.width()) * region.height());
    for (int y = 0; y < region.height(); ++y)
        for (int x = 0; x < region.width(); ++x) px.push_back(region.at(x, y));
    return dominant_fill_color(px);
}

namespace {

void require_canvas(const Image& ui, const Layout& layout) {
    if (ui.width() != layout.canvas_w || ui.height() != layout.canvas_h)
        throw Error(ErrorCode::CanvasMismatch,
                    fmt::format("image {}x{} vs layout canvas {}x{}", ui.width(), ui.height(), layout.canvas_w, layout.canvas_h));
}

std::vector<PixelRect> pixel_rects(const Layout& layout) {
    std::vector<PixelRect> out;
    for (const auto& e : layout.elements) out.push_back(to_pixels(e.bbox, layout.canvas_w, layout.canvas_h));
    return out;
}

// Mask over rects[i]: true where an element above it covers the pixel.
std::vector<char> occlusion_mask(const std::vector<PixelRect>& rects, size_t i) {
    const PixelRect& r = rects[i];
    std::vector<char> mask(static_cast<size_t>(r.area()), 0);
    for (size_t j = i + 1; j < rects.size(); ++j) {
        const PixelRect o = r.intersect(rects[j]);
        if (o.empty()) continue;
        for (int y = o.y0; y < o.y1; ++y)
            for (int x = o.x0; x < o.x1; ++x) mask[static_cast<size_t>(y - r.y0) * r.width() + (x - r.x0)] = 1;
    }
    return mask;
}

struct VisibleFill {
    Rgb color;
    long occluded = 0;
    bool fully = false;
};

VisibleFill visible_fill(const Image& ui, const PixelRect& r, const std::vector<char>& mask) {
    std::vector<Rgb> visible, all;
    VisibleFill f;
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x) {
            const Rgb p = ui.at(x, y);
            all.push_back(p);
            if (mask[static_cast<size_t>(y - r.y0) * r.width() + (x - r.x0)])
                ++f.occluded;
            else
                visible.push_back(p);
        }
    f.fully = visible.empty();
    f.color = dominant_fill_color(f.fully ? all : visible);
    return f;
}

}  // namespace

std::vector<CroppedComponent> crop_components(const Image& ui, const Layout& layout) {
    require_canvas(ui, layout);
    const auto rects = pixel_rects(layout);
    std::vector<CroppedComponent> out(rects.size());
    // Top of the stack first; each element only consults the ones above it.
    for (size_t k = rects.size(); k-- > 0;) {
        const PixelRect& r = rects[k];
        CroppedComponent& c = out[k];
        c.category = layout.elements[k].category;
        c.rect = r;
        c.image = ui.crop(r.x0, r.y0, r.width(), r.height());
        if (r.empty()) continue;
        const auto mask = occlusion_mask(rects, k);
        const VisibleFill f = visible_fill(ui, r, mask);
        if (f.occluded == 0) continue;
        c.occluded_fraction = static_cast<double>(f.occluded) / static_cast<double>(r.area());
        c.fill_color = f.color;
        c.fully_occluded = f.fully;
        if (f.fully) spdlog::warn("element {} ({}) is fully occluded; filled from its whole rect", k, c.category.name());
        for (int y = 0; y < r.height(); ++y)
            for (int x = 0; x < r.width(); ++x)
                if (mask[static_cast<size_t>(y) * r.width() + x]) c.image.set(x, y, f.color);
    }
    return out;
}

namespace {

std::string corner_style(ComponentCategory c) {
    switch (c.id) {
        case category::text_button.id:
        case category::input.id:
        case category::on_off_switch.id:
        case category::radio_button.id:
        case category::card.id:
        case category::modal.id: return "rounded";
        default: return "square";
    }
}

}  // namespace

GuiDocument build_gui_document(const Layout& layout, const Image* ui) {
    if (ui) require_canvas(*ui, layout);
    GuiDocument doc;
    doc.width = layout.canvas_w;
    doc.height = layout.canvas_h;
    const auto rects = pixel_rects(layout);
    for (size_t i = 0; i < rects.size(); ++i) {
        const PixelRect& r = rects[i];
        GuiNode n;
        n.kind = std::string(layout.elements[i].category.name());
        n.x = r.x0;
        n.y = r.y0;
        n.w = r.width();
        n.h = r.height();
        n.corner = corner_style(layout.elements[i].category);
        if (ui && !r.empty()) n.background = visible_fill(*ui, r, occlusion_mask(rects, i)).color;
        doc.nodes.push_back(std::move(n));
    }
    return doc;
}

std::string emit_xml(const GuiDocument& doc) {
    std::string out = fmt::format("<screen w=\"{}\" h=\"{}\"", doc.width, doc.height);
    if (doc.nodes.empty()) return out + "/>\n";
    out += ">\n";
    for (const auto& n : doc.nodes) {
        out += fmt::format("  <node kind=\"{}\" x=\"{}\" y=\"{}\" w=\"{}\" h=\"{}\"", n.kind, n.x, n.y, n.w, n.h);
        if (n.background) out += fmt::format(" bg=\"{}\"", to_hex(*n.background));
        out += fmt::format(" corner=\"{}\"/>\n", n.corner);
    }
    return out + "</screen>\n";
}

GuiDocument parse_xml(const std::string& xml) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream in(xml);
        pt::read_xml(in, tree);
    } catch (const pt::xml_parser_error& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed screen XML: ") + e.what());
    }
    const auto screen = tree.get_child_optional("screen");
    if (!screen) throw Error(ErrorCode::InvalidArgument, "XML root must be <screen>");
    GuiDocument doc;
    try {
        doc.width = screen->get<int>("<xmlattr>.w");
        doc.height = screen->get<int>("<xmlattr>.h");
        for (const auto& [tag, node] : *screen) {
            if (tag == "<xmlattr>" || tag == "<xmlcomment>") continue;
            if (tag != "node") throw Error(ErrorCode::InvalidArgument, "unexpected element <" + tag + ">");
            GuiNode n;
            n.kind = node.get<std::string>("<xmlattr>.kind");
            if (!ComponentCategory::from_name(n.kind)) throw Error(ErrorCode::InvalidArgument, "unknown node kind " + n.kind);
            n.x = node.get<int>("<xmlattr>.x");
            n.y = node.get<int>("<xmlattr>.y");
            n.w = node.get<int>("<xmlattr>.w");
            n.h = node.get<int>("<xmlattr>.h");
            if (auto bg = node.get_optional<std::string>("<xmlattr>.bg")) n.background = rgb_from_hex(*bg);
            n.corner = node.get<std::string>("<xmlattr>.corner", "square");
            doc.nodes.push_back(std::move(n));
        }
    } catch (const pt::ptree_error& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("screen XML: ") + e.what());
    }
    return doc;
}

std::string emit_html(const GuiDocument& doc) {
    std::string out =
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>screen</title>\n</head>\n<body style=\"margin:0\">\n";
    out += fmt::format("<div class=\"screen\" style=\"position:relative;width:{}px;height:{}px;background:#ffffff;overflow:hidden\">\n",
                       doc.width, doc.height);
    for (const auto& n : doc.nodes) {
        out += fmt::format("  <div class=\"node\" data-kind=\"{}\" style=\"position:absolute;left:{}px;top:{}px;width:{}px;height:{}px", n.kind,
                           n.x, n.y, n.w, n.h);
        if (n.background) out += ";background:" + to_hex(*n.background);
        if (n.corner == "rounded") out += ";border-radius:8px";
        out += "\"></div>\n";
    }
    return out + "</div>\n</body>\n</html>\n";
}

GeneratedCode generate_code(const Layout& layout, const Image* ui) {
    GeneratedCode c;
    c.document = build_gui_document(layout, ui);
    c.xml = emit_xml(c.document);
    c.html = emit_html(c.document);
    return c;
}

}  // namespace uidiff
