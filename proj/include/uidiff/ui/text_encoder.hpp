#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "uidiff/nn/module.hpp"

namespace uidiff::ui {

/// Lower-cased alphanumeric words. Ids 0..2 are PAD, UNK and MASK.
class WordTokenizer {
public:
    static constexpr int kPad = 0, kUnk = 1, kMask = 2;

    WordTokenizer();
    /// Words seen at least `min_count` times, most frequent first (ties alphabetical), capped at max_vocab.
    static WordTokenizer build(const std::vector<std::string>& corpus, int min_count = 1, int max_vocab = 4096);

    static std::vector<std::string> words(const std::string& text);
    /// Exactly max_len ids, PAD-filled. Sets *truncated when words were dropped.
    std::vector<int> encode(const std::string& text, int max_len, bool* truncated = nullptr) const;
    int size() const { return static_cast<int>(vocab_.size()); }
    const std::string& word(int id) const { return vocab_.at(static_cast<size_t>(id)); }

    nlohmann::json to_json() const;
    static WordTokenizer from_json(const nlohmann::json& j);
    std::string hash() const;

private:
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, int> index_;
};

struct TextEncoderConfig {
    int max_len = 40;  // L_txt; generated captions run to about 33 words
    int dim = 32;      // D_txt
    int heads = 2;
    nlohmann::json to_json() const;
    static TextEncoderConfig from_json(const nlohmann::json& j);
};

/// Token + position embeddings, one pre-norm self-attention block, final norm.
/// `head` exists only for the masked-word pretraining objective.
class TextEncoder : public nn::Module {
    Rng init_rng_;  // first member: consumed by the initializers below

public:
    TextEncoder(WordTokenizer tokenizer, TextEncoderConfig cfg, std::uint64_t seed);

    /// [B, L] ids -> [B, L, D], recorded on the graph.
    nn::Tensor forward(const std::vector<int>& ids, int batch) const;
    /// [1, L, D] without graph. The default prompt's result is computed once and reused.
    nn::Tensor encode(const std::string& prompt) const;
    nn::Tensor encode_batch(const std::vector<std::string>& prompts) const;

    const WordTokenizer& tokenizer() const { return tokenizer_; }
    const TextEncoderConfig& config() const { return cfg_; }
    /// Drops the cached default-prompt embedding (after any weight change).
    void invalidate_cache();

    nn::Embedding tok;
    nn::Tensor pos;  // [L, D]
    nn::LayerNorm ln1, ln2, ln_out;
    nn::MultiHeadAttention attn;
    nn::Linear ff1, ff2, head;

private:
    WordTokenizer tokenizer_;
    TextEncoderConfig cfg_;
    mutable std::mutex cache_mu_;
    mutable std::optional<std::vector<double>> default_cache_;
};

struct TextPretrainConfig {
    int steps = 300;
    int batch = 16;
    double lr = 3e-3;
    double mask_prob = 0.25;
    std::uint64_t seed = 0;
};

/// Masked-word reconstruction on captions; returns the per-step loss.
std::vector<double> pretrain_text_encoder(TextEncoder& enc, const std::vector<std::string>& captions, const TextPretrainConfig& cfg);

}  // namespace uidiff::ui
