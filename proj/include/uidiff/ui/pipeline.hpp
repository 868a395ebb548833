#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uidiff/image.hpp"
#include "uidiff/layout.hpp"
#include "uidiff/rico.hpp"
#include "uidiff/ui/codec.hpp"
#include "uidiff/ui/schedule.hpp"
#include "uidiff/ui/text_encoder.hpp"
#include "uidiff/ui/unet.hpp"

namespace uidiff::ui {

inline constexpr const char* kProfileToy = "toy";
inline constexpr const char* kProfileAdapter = "pretrained-adapter";

struct FrozenHashes {
    std::string text, denoiser, codec;
    bool operator==(const FrozenHashes&) const = default;
    nlohmann::json to_json() const;
    static FrozenHashes from_json(const nlohmann::json& j);
};

struct UiModelConfig {
    TextEncoderConfig text;
    CodecConfig codec;
    UNetConfig unet;
    ContinuousSchedule schedule;
    nlohmann::json to_json() const;
    static UiModelConfig from_json(const nlohmann::json& j);
};

/// Frozen text encoder, codec and denoiser plus the trainable control branch.
class UiModel {
public:
    UiModel(std::string profile, WordTokenizer tokenizer, const UiModelConfig& cfg, std::uint64_t seed);

    std::string profile;
    UiModelConfig config;
    std::unique_ptr<TextEncoder> text;
    std::unique_ptr<ImageCodec> codec;
    std::unique_ptr<UNet> unet;
    std::unique_ptr<ControlBranch> control;
    double latent_scale = 1.0;
    std::string palette_version;

    FrozenHashes frozen_hashes() const;
    std::string control_hash() const { return control->parameter_hash(); }
    /// Marks only control parameters trainable.
    void freeze_base();
    /// Control encoder copied from the denoiser, injection convolutions zeroed.
    void reset_control();

    /// Throws CheckpointMismatch if the frozen weights no longer match the
    /// hashes recorded at load time or the palette differs from the renderer's.
    void verify() const;

    /// Full model ("ui-model": base, control and the frozen hash manifest).
    void save(const std::filesystem::path& path, const nlohmann::json& extra_meta = nlohmann::json::object()) const;
    static std::unique_ptr<UiModel> load(const std::filesystem::path& path);
    /// Frozen components only ("ui-base"); loading gives a fresh control branch.
    void save_base(const std::filesystem::path& path) const;
    static std::unique_ptr<UiModel> load_base(const std::filesystem::path& path, const std::string& profile = kProfileAdapter);

    /// Identifier of the checkpoint this model was last saved to or loaded from.
    mutable std::string checkpoint_id;

private:
    std::optional<FrozenHashes> recorded_;
};

/// A training example as delivered to the UI model.
struct UiTrainingItem {
    std::string id;
    Image image;         // 288x512
    Image conditioning;  // 288x512 wireframe
    std::string caption;
};

std::vector<UiTrainingItem> load_ui_items(const std::vector<ManifestEntry>& entries);

/// Scaled latents of every item, encoded once with the frozen codec.
std::vector<nn::Tensor> encode_latents(const UiModel& model, const std::vector<UiTrainingItem>& items);

struct ToyPretrainConfig {
    TextPretrainConfig text;
    CodecTrainConfig codec;
    int denoiser_steps = 600;
    int denoiser_batch = 4;
    double denoiser_lr = 2e-3;
    double prompt_dropout = 0.5;
    std::uint64_t seed = 0;
};

struct ToyPretrainReport {
    std::vector<double> text_loss, codec_loss, denoiser_loss;
    double latent_scale = 1.0;
};

/// Trains the frozen components from scratch at desk scale, in order: text
/// encoder, codec (sets latent_scale = 1 / std of the latents), denoiser.
ToyPretrainReport pretrain_toy_base(UiModel& model, const std::vector<UiTrainingItem>& items, const ToyPretrainConfig& cfg);

struct FinetuneConfig {
    int epochs = 1;
    int batch_size = 4;
    double learning_rate = 1e-5;
    double weight_decay = 0.01;
    double prompt_dropout = 0.5;
    std::uint64_t seed = 0;
    /// When positive, overrides epochs * ceil(N / batch_size).
    long max_steps = 0;
    /// Timesteps follow a golden-ratio sequence from a seeded phase instead of
    /// independent uniform draws. Any window of k draws covers [1, T] with gaps
    /// near T / k, so windowed loss means are not dominated by which t came up.
    bool stratified_t = true;
    nlohmann::json to_json() const;
};

struct FinetuneResult {
    std::vector<double> loss;  // one entry per step
    long steps = 0;
    FrozenHashes frozen_before, frozen_after;
    std::string control_before, control_after;
};

/// Epsilon-prediction MSE, gradients applied to the control branch only.
/// Throws FrozenDrift, NonFiniteLoss.
FinetuneResult finetune_control(UiModel& model, const std::vector<UiTrainingItem>& items, const FinetuneConfig& cfg,
                                const std::function<void(long step, double loss)>& on_step = {});

/// Deterministic sampler from seeded noise. With `wireframe` the control
/// branch is applied; without it the frozen denoiser runs alone.
nn::Tensor sample_latent(const UiModel& model, const std::string& prompt, const Image* wireframe, std::uint64_t seed, int steps);

/// Throws CheckpointMismatch (see UiModel::verify) and InvalidLayout.
Image generate_ui(const UiModel& model, const std::string& prompt, const Layout& layout, std::uint64_t seed, int steps = 50);
/// The frozen base model alone, same noise and sampler.
Image generate_base(const UiModel& model, const std::string& prompt, std::uint64_t seed, int steps = 50);

}  // namespace uidiff::ui
