#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "uidiff/layout.hpp"
#include "uidiff/nn/module.hpp"
#include "uidiff/rng.hpp"
#include "uidiff/tokenizer.hpp"

namespace uidiff {

/// Absorbing-state schedule: a non-PAD token is MASK at step t with probability t / T.
struct DiscreteSchedule {
    int T = 100;
    double mask_prob(int t) const { return std::clamp(static_cast<double>(t) / T, 0.0, 1.0); }
    friend bool operator==(const DiscreteSchedule&, const DiscreteSchedule&) = default;
};

/// Multiset of required categories.
struct ComponentCondition {
    std::array<int, kNumCategories> counts{};

    int total() const;
    bool empty() const { return total() == 0; }
    /// Expanded list sorted by category id, e.g. {icon, icon, toolbar}.
    std::vector<ComponentCategory> sorted() const;
    ComponentCondition& add(ComponentCategory c, int n = 1);

    /// Parses "text button:2, toolbar:1" (count defaults to 1). Throws InvalidArgument.
    static ComponentCondition parse(const std::string& spec);
    /// Accepts either {"text button": 2} or [{"category": "...", "count": n}].
    static ComponentCondition from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    std::string to_string() const;
    static ComponentCondition of_layout(const Layout& layout);

    friend bool operator==(const ComponentCondition&, const ComponentCondition&) = default;
};

/// Replaces each non-PAD token by MASK with probability mask_prob(t). Input must be MASK-free.
TokenSequence corrupt(const TokenSequence& seq, int t, const DiscreteSchedule& schedule, const TokenizerConfig& cfg, Rng& rng);

struct DenoiserConfig {
    TokenizerConfig tokenizer;
    DiscreteSchedule schedule;
    int layers = 4;
    int width = 128;
    int heads = 4;
    int ff_mult = 4;

    /// Two layers at width 16, for gradient checks.
    static DenoiserConfig miniature();
    nlohmann::json to_json() const;
    static DenoiserConfig from_json(const nlohmann::json& j);
};

/// Bidirectional transformer over element slots. Each slot's input is the sum
/// of its five attribute embeddings, a slot embedding and the timestep
/// embedding; five heads give logits over each attribute vocabulary minus MASK.
class LayoutDenoiser : public nn::Module {
public:
    LayoutDenoiser(const DenoiserConfig& cfg, std::uint64_t seed);

    /// logits[a] has shape [B * slots, vocab(a) - 1]; the missing last column is MASK.
    std::array<nn::Tensor, kTokensPerSlot> forward(std::span<const TokenSequence> batch, std::span<const int> t) const;

    const DenoiserConfig& config() const { return cfg_; }

    /// Zeroes the output heads so every position predicts the uniform distribution.
    void zero_heads();

    /// P(element count = n), n = 0..e_max; used to place PAD slots when sampling.
    std::vector<double> count_prior;
    void fit_count_prior(std::span<const Layout> layouts);

private:
    struct Block : nn::Module {
        Block(int width, int heads, int ff, Rng& rng);
        nn::LayerNorm ln1, ln2;
        nn::MultiHeadAttention attn;
        nn::Linear ff1, ff2;
    };

    DenoiserConfig cfg_;
    std::array<std::unique_ptr<nn::Embedding>, kTokensPerSlot> attr_embed_;
    std::unique_ptr<nn::Embedding> slot_embed_;
    std::unique_ptr<nn::Linear> time1_, time2_;
    std::vector<std::unique_ptr<Block>> blocks_;
    std::unique_ptr<nn::LayerNorm> final_ln_;
    std::array<std::unique_ptr<nn::Linear>, kTokensPerSlot> heads_;
};

/// Mean cross-entropy over positions where `corrupted` holds MASK; a zero
/// tensor when nothing is masked.
nn::Tensor masked_cross_entropy(const LayoutDenoiser& model, std::span<const TokenSequence> corrupted,
                                std::span<const TokenSequence> clean, std::span<const int> t, int* masked_count = nullptr);

struct LayoutStepResult {
    double loss = 0;
    int masked = 0;
};

/// One optimizer step: t ~ U{1..T} per example unless `fixed_t` is given,
/// corrupt, masked cross-entropy, AdamW update. Throws NonFiniteLoss naming
/// `batch_ids` and leaves parameters untouched in that case.
LayoutStepResult training_step(LayoutDenoiser& model, nn::AdamW& opt, std::span<const TokenSequence> batch, Rng& rng,
                               std::span<const int> fixed_t = {}, std::span<const std::string> batch_ids = {});

struct LayoutTrainConfig {
    int steps = 500;
    int batch_size = 16;
    double lr = 1e-3;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
};

/// Trains on `layouts` and returns the per-step loss trace.
std::vector<double> train_layout_model(LayoutDenoiser& model, std::span<const Layout> layouts, const LayoutTrainConfig& cfg,
                                       const std::function<void(int, double)>& on_step = {});

struct LayoutSampleConfig {
    int steps = 100;  // reverse steps, at most T
    int canvas_w = kCanvasWidth;
    int canvas_h = kCanvasHeight;
};

struct LayoutSample {
    Layout layout;
    TokenSequence tokens;
    int dropped = 0;
};

/// Draws an element count from the count prior (at least |condition|), clamps
/// the first |condition| category tokens to the sorted condition, then
/// unmasks the rest from t = T down to 0. Throws ConditionTooLarge.
LayoutSample sample_layout(const LayoutDenoiser& model, const ComponentCondition& condition, std::uint64_t seed,
                           const LayoutSampleConfig& cfg = {});

/// Same as sample_layout for each (condition, seed) pair, sharing forward passes
/// across the batch. Results match sample_layout up to floating-point
/// reassociation in the batched products.
std::vector<LayoutSample> sample_layouts(const LayoutDenoiser& model, std::span<const ComponentCondition> conditions,
                                         std::span<const std::uint64_t> seeds, const LayoutSampleConfig& cfg = {});

void save_layout_model(const LayoutDenoiser& model, const std::filesystem::path& path);
std::unique_ptr<LayoutDenoiser> load_layout_model(const std::filesystem::path& path);

}  // namespace uidiff
