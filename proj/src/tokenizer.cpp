#include "uidiff/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include <fmt/format.h>

#include "uidiff/error.hpp"

namespace uidiff {

void TokenizerConfig::check() const {
    if (bins < 2) throw Error(ErrorCode::InvalidArgument, fmt::format("bins must be >= 2, got {}", bins));
    if (e_max < 1) throw Error(ErrorCode::InvalidArgument, fmt::format("e_max must be >= 1, got {}", e_max));
}

TokenSequence empty_sequence(const TokenizerConfig& cfg) {
    TokenSequence seq;
    const int n = cfg.sequence_length();
    seq.tokens.resize(static_cast<size_t>(n));
    seq.attribute_kinds.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        seq.attribute_kinds[static_cast<size_t>(i)] = attribute_at(i);
        seq.tokens[static_cast<size_t>(i)] = cfg.pad(attribute_at(i));
    }
    return seq;
}

int quantize(double value, int bins) {
    const double scaled = std::floor(value * bins);
    return static_cast<int>(std::clamp(scaled, 0.0, static_cast<double>(bins - 1)));
}

double dequantize(int bin, int bins) { return (bin + 0.5) / bins; }

TokenSequence tokenize_layout(const Layout& layout, const TokenizerConfig& cfg) {
    cfg.check();
    if (static_cast<int>(layout.elements.size()) > cfg.e_max)
        throw Error(ErrorCode::TooManyElements,
                    fmt::format("{} elements exceed e_max={}", layout.elements.size(), cfg.e_max));
    for (const auto& v : validate_layout(layout, cfg.e_max)) {
        throw Error(ErrorCode::InvalidBBox, fmt::format("violation '{}' at element {}", v.rule, v.index));
    }

    TokenSequence seq = empty_sequence(cfg);
    for (size_t i = 0; i < layout.elements.size(); ++i) {
        const auto& e = layout.elements[i];
        const int slot = static_cast<int>(i);
        seq.at(slot, Attribute::Category) = e.category.id;
        seq.at(slot, Attribute::X) = quantize(e.bbox.x, cfg.bins);
        seq.at(slot, Attribute::Y) = quantize(e.bbox.y, cfg.bins);
        seq.at(slot, Attribute::W) = quantize(e.bbox.w, cfg.bins);
        seq.at(slot, Attribute::H) = quantize(e.bbox.h, cfg.bins);
    }
    return seq;
}

DetokenizeResult detokenize_layout(const TokenSequence& seq, const TokenizerConfig& cfg, int canvas_w, int canvas_h) {
    cfg.check();
    if (seq.size() != cfg.sequence_length())
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("sequence length {} != {}", seq.size(), cfg.sequence_length()));
    for (int i = 0; i < seq.size(); ++i) {
        if (seq.tokens[static_cast<size_t>(i)] == cfg.mask(attribute_at(i)))
            throw Error(ErrorCode::MaskedSequence, fmt::format("MASK token at position {}", i));
    }
    if (!tokens_in_vocab(seq, cfg, false)) throw Error(ErrorCode::InvalidArgument, "token outside vocabulary");

    DetokenizeResult result;
    result.layout.canvas_w = canvas_w;
    result.layout.canvas_h = canvas_h;
    for (int slot = 0; slot < seq.slots(); ++slot) {
        int pads = 0;
        for (int a = 0; a < kTokensPerSlot; ++a) {
            const auto attr = static_cast<Attribute>(a);
            if (seq.at(slot, attr) == cfg.pad(attr)) ++pads;
        }
        if (pads == kTokensPerSlot) continue;
        if (pads != 0) throw Error(ErrorCode::MixedPadSlot, fmt::format("slot {} mixes PAD and content", slot));

        BBox b{dequantize(seq.at(slot, Attribute::X), cfg.bins), dequantize(seq.at(slot, Attribute::Y), cfg.bins),
               dequantize(seq.at(slot, Attribute::W), cfg.bins), dequantize(seq.at(slot, Attribute::H), cfg.bins)};
        b.w = std::min(b.w, 1.0 - b.x);
        b.h = std::min(b.h, 1.0 - b.y);
        if (b.w * canvas_w < 1.0 || b.h * canvas_h < 1.0) {
            ++result.dropped;
            continue;
        }
        result.layout.add(ComponentCategory(seq.at(slot, Attribute::Category)), b);
    }
    return result;
}

bool tokens_in_vocab(const TokenSequence& seq, const TokenizerConfig& cfg, bool allow_mask) {
    for (int i = 0; i < seq.size(); ++i) {
        const auto attr = attribute_at(i);
        const int t = seq.tokens[static_cast<size_t>(i)];
        const int limit = allow_mask ? cfg.vocab_size(attr) : cfg.vocab_size(attr) - 1;
        if (t < 0 || t >= limit) return false;
    }
    return true;
}

namespace {

double union_area(const std::vector<BBox>& boxes) {
    // Coordinate compression: exact union over the grid of distinct edges.
    std::vector<double> xs, ys;
    for (const auto& b : boxes) {
        xs.push_back(b.x);
        xs.push_back(b.right());
        ys.push_back(b.y);
        ys.push_back(b.bottom());
    }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

    double area = 0;
    for (size_t i = 0; i + 1 < xs.size(); ++i) {
        const double cx = 0.5 * (xs[i] + xs[i + 1]);
        for (size_t j = 0; j + 1 < ys.size(); ++j) {
            const double cy = 0.5 * (ys[j] + ys[j + 1]);
            for (const auto& b : boxes) {
                if (cx > b.x && cx < b.right() && cy > b.y && cy < b.bottom()) {
                    area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
                    break;
                }
            }
        }
    }
    return area;
}

double intersection(const BBox& a, const BBox& b) {
    const double w = std::min(a.right(), b.right()) - std::max(a.x, b.x);
    const double h = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
    return (w > 0 && h > 0) ? w * h : 0.0;
}

}  // namespace

LayoutMetrics layout_metrics(const Layout& layout) {
    LayoutMetrics m;
    const auto& els = layout.elements;
    if (els.empty()) return m;

    std::vector<BBox> boxes;
    boxes.reserve(els.size());
    for (const auto& e : els) boxes.push_back(e.bbox);
    // Canonical order makes the float sums independent of element order.
    std::sort(boxes.begin(), boxes.end(), [](const BBox& a, const BBox& b) {
        return std::tie(a.x, a.y, a.w, a.h) < std::tie(b.x, b.y, b.w, b.h);
    });

    for (size_t i = 0; i < boxes.size(); ++i)
        for (size_t j = i + 1; j < boxes.size(); ++j) m.overlap += intersection(boxes[i], boxes[j]);

    if (boxes.size() > 1) {
        double total = 0;
        for (size_t i = 0; i < boxes.size(); ++i) {
            const std::array<double, 3> mine{boxes[i].x, boxes[i].x + boxes[i].w / 2, boxes[i].right()};
            double best = std::numeric_limits<double>::infinity();
            for (size_t j = 0; j < boxes.size(); ++j) {
                if (i == j) continue;
                const std::array<double, 3> theirs{boxes[j].x, boxes[j].x + boxes[j].w / 2, boxes[j].right()};
                for (int k = 0; k < 3; ++k) best = std::min(best, std::abs(mine[static_cast<size_t>(k)] - theirs[static_cast<size_t>(k)]));
            }
            total += best;
        }
        m.alignment = total / static_cast<double>(boxes.size());
    }

    m.coverage = union_area(boxes);
    return m;
}

}  // namespace uidiff
