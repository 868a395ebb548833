#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "uidiff/image.hpp"
#include "uidiff/nn/module.hpp"

namespace uidiff::ui {

/// [1, 3, H, W] in [0, 1].
nn::Tensor image_to_tensor(const Image& img);
/// Batch item `b` of a [B, 3, H, W] tensor, clamped and rounded to 8 bits.
Image tensor_to_image(const nn::Tensor& t, int b = 0);
/// Stacks equally sized [1, ...] tensors along the batch axis.
nn::Tensor stack_batch(const std::vector<nn::Tensor>& items);

struct CodecConfig {
    int latent_channels = 4;
    int c1 = 16;
    int c2 = 32;
    nlohmann::json to_json() const;
    static CodecConfig from_json(const nlohmann::json& j);
};

/// Deterministic convolutional autoencoder with downsample factor 8.
class ImageCodec : public nn::Module {
    Rng init_rng_;

public:
    static constexpr int kFactor = 8;

    ImageCodec(CodecConfig cfg, std::uint64_t seed);

    /// [B, 3, H, W] -> [B, C, H/8, W/8]; H and W must be multiples of 8.
    nn::Tensor encode(const nn::Tensor& x) const;
    /// [B, C, h, w] -> [B, 3, 8h, 8w] in (0, 1).
    nn::Tensor decode(const nn::Tensor& z) const;
    const CodecConfig& config() const { return cfg_; }

    nn::Conv2d e1, e2, e3, e_out;
    nn::Conv2d d_in, d1, d2, d3, d_out;

private:
    CodecConfig cfg_;
};

struct Autoencoded {
    nn::Tensor latent;  // [1, C, 64, 36]
    Image reconstruction;
};

/// Throws ShapeMismatch unless the image is 288x512.
Autoencoded autoencode(const ImageCodec& codec, const Image& img);

struct CodecTrainConfig {
    int steps = 800;
    int batch = 4;
    int crop = 96;  // multiple of 8
    double lr = 2e-3;
    std::uint64_t seed = 0;
};

/// MSE reconstruction on random crops; returns the per-step loss.
std::vector<double> pretrain_codec(ImageCodec& codec, const std::vector<Image>& images, const CodecTrainConfig& cfg);

/// Mean absolute per-channel error in [0, 1] units over full images.
double reconstruction_mae(const ImageCodec& codec, const std::vector<Image>& images);

}  // namespace uidiff::ui
