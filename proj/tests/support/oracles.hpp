#pragma once

#include <cmath>
#include <map>
#include <regex>
#include <string>
#include <tuple>
#include <vector>

#include "uidiff/image.hpp"
#include "uidiff/layout.hpp"

namespace uidiff::testing {

// Brute-force histogram mode: ordered map over quantized tuples, first maximum wins.
inline Rgb oracle_mode(const std::vector<Rgb>& px) {
    std::map<std::tuple<int, int, int>, std::vector<Rgb>> bins;
    for (const Rgb& p : px) bins[{p.r / 8, p.g / 8, p.b / 8}].push_back(p);
    const std::vector<Rgb>* best = nullptr;
    for (const auto& [_, members] : bins)
        if (!best || members.size() > best->size()) best = &members;
    double r = 0, g = 0, b = 0;
    for (const Rgb& p : *best) {
        r += p.r;
        g += p.g;
        b += p.b;
    }
    const double n = static_cast<double>(best->size());
    return {static_cast<std::uint8_t>(std::lround(r / n)), static_cast<std::uint8_t>(std::lround(g / n)),
            static_cast<std::uint8_t>(std::lround(b / n))};
}

inline bool covered_above(const Layout& l, size_t k, int x, int y) {
    for (size_t j = k + 1; j < l.elements.size(); ++j)
        if (to_pixels(l.elements[j].bbox, l.canvas_w, l.canvas_h).contains(x, y)) return true;
    return false;
}

struct HtmlBox {
    std::string kind;
    int x, y, w, h;
};

inline std::vector<HtmlBox> html_boxes(const std::string& html) {
    static const std::regex re(R"re(<div class="node" data-kind="([^"]+)" style="position:absolute;left:(\d+)px;top:(\d+)px;width:(\d+)px;height:(\d+)px)re");
    std::vector<HtmlBox> out;
    for (auto it = std::sregex_iterator(html.begin(), html.end(), re); it != std::sregex_iterator(); ++it)
        out.push_back({(*it)[1], std::stoi((*it)[2]), std::stoi((*it)[3]), std::stoi((*it)[4]), std::stoi((*it)[5])});
    return out;
}

}  // namespace uidiff::testing
