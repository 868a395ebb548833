#pragma once

#include <array>
#include <span>
#include <vector>

#include "uidiff/layout.hpp"

namespace uidiff {

/// Attribute carried by a token position; each attribute has its own vocabulary.
enum class Attribute : int { Category = 0, X = 1, Y = 2, W = 3, H = 4 };
inline constexpr int kTokensPerSlot = 5;

struct TokenizerConfig {
    int bins = 32;
    int e_max = kDefaultMaxElements;

    /// Vocabulary size for an attribute, specials included.
    int vocab_size(Attribute a) const { return a == Attribute::Category ? kNumCategories + 2 : bins + 2; }
    int pad(Attribute a) const { return a == Attribute::Category ? kNumCategories : bins; }
    int mask(Attribute a) const { return pad(a) + 1; }
    int sequence_length() const { return kTokensPerSlot * e_max; }

    /// Throws InvalidArgument unless bins >= 2 and e_max >= 1.
    void check() const;

    friend bool operator==(const TokenizerConfig&, const TokenizerConfig&) = default;
};

inline Attribute attribute_at(int position) { return static_cast<Attribute>(position % kTokensPerSlot); }

/// Fixed-length encoding of a layout: e_max slots of [cat, x, y, w, h].
struct TokenSequence {
    std::vector<int> tokens;
    std::vector<Attribute> attribute_kinds;

    int size() const { return static_cast<int>(tokens.size()); }
    int slots() const { return size() / kTokensPerSlot; }
    int& at(int slot, Attribute a) { return tokens[static_cast<size_t>(slot * kTokensPerSlot + static_cast<int>(a))]; }
    int at(int slot, Attribute a) const {
        return tokens[static_cast<size_t>(slot * kTokensPerSlot + static_cast<int>(a))];
    }

    friend bool operator==(const TokenSequence& a, const TokenSequence& b) { return a.tokens == b.tokens; }
};

/// An all-PAD sequence.
TokenSequence empty_sequence(const TokenizerConfig& cfg);

int quantize(double value, int bins);
double dequantize(int bin, int bins);

TokenSequence tokenize_layout(const Layout& layout, const TokenizerConfig& cfg);

struct DetokenizeResult {
    Layout layout;
    int dropped = 0;  // elements that dequantized below one pixel
};

DetokenizeResult detokenize_layout(const TokenSequence& seq, const TokenizerConfig& cfg, int canvas_w = kCanvasWidth,
                                   int canvas_h = kCanvasHeight);

/// True when every token is valid for its position's vocabulary (MASK allowed when allow_mask).
bool tokens_in_vocab(const TokenSequence& seq, const TokenizerConfig& cfg, bool allow_mask);

struct LayoutMetrics {
    double overlap = 0;
    double alignment = 0;
    double coverage = 0;
};

/// Overlap: summed pairwise intersection area over canvas area. Alignment: mean
/// over elements of the smallest left/center/right x-distance to any other
/// element's matching edge. Coverage: union area over canvas area.
LayoutMetrics layout_metrics(const Layout& layout);

}  // namespace uidiff
