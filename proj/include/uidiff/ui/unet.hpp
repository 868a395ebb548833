#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "uidiff/nn/module.hpp"

namespace uidiff::ui {

struct UNetConfig {
    int latent_channels = 4;
    int c0 = 16;  // full latent resolution
    int c1 = 32;  // half resolution
    int groups = 4;
    int temb = 64;
    int text_dim = 32;
    int heads = 2;
    nlohmann::json to_json() const;
    static UNetConfig from_json(const nlohmann::json& j);
    /// Tiny sizes for gradient checks.
    static UNetConfig miniature();
};

/// GN -> SiLU -> conv, plus a per-channel projection of the conditioning
/// vector, twice, with a 1x1 skip when the channel count changes.
class ResBlock : public nn::Module {
public:
    ResBlock(int in, int out, int temb, int groups, Rng& rng);
    nn::Tensor operator()(const nn::Tensor& x, const nn::Tensor& emb) const;

    nn::GroupNorm n1, n2;
    nn::Conv2d c1, c2;
    nn::Linear proj;
    std::unique_ptr<nn::Conv2d> skip;
};

struct EncoderFeatures {
    nn::Tensor s0;  // [B, c0, H, W]
    nn::Tensor s1;  // [B, c1, H/2, W/2]
    nn::Tensor m;   // [B, c1, H/2, W/2]
};

/// The half of the denoiser that the control branch clones.
class UNetEncoder : public nn::Module {
public:
    UNetEncoder(const UNetConfig& cfg, Rng& rng);
    /// `hint`, when given, is added right after conv_in.
    EncoderFeatures operator()(const nn::Tensor& x, const nn::Tensor& emb, const nn::Tensor& text, const nn::Tensor* hint) const;

    nn::Conv2d conv_in;
    ResBlock res0;
    nn::Conv2d down;
    ResBlock res1, mid;
    nn::LayerNorm mid_norm;
    nn::MultiHeadAttention mid_attn;
};

/// Additive corrections to the decoder's skip inputs.
struct ControlResiduals {
    nn::Tensor s0, s1, m;
};

/// Frozen epsilon predictor: encoder, mid cross-attention on the prompt, decoder with skips.
class UNet : public nn::Module {
    Rng init_rng_;

public:
    UNet(UNetConfig cfg, std::uint64_t seed);

    /// Time embedding plus pooled text: [B, temb].
    nn::Tensor embed(const std::vector<double>& t, const nn::Tensor& text) const;
    /// x [B, C, H, W], one t per item, text [B, L, D]; ctrl = nullptr runs the frozen model alone.
    nn::Tensor forward(const nn::Tensor& x, const std::vector<double>& t, const nn::Tensor& text, const ControlResiduals* ctrl) const;
    nn::Tensor forward_with_emb(const nn::Tensor& x, const nn::Tensor& emb, const nn::Tensor& text, const ControlResiduals* ctrl) const;
    const UNetConfig& config() const { return cfg_; }

    nn::Linear t1, t2, text_proj;
    UNetEncoder encoder;
    ResBlock up1, up0;
    nn::GroupNorm out_norm;
    nn::Conv2d conv_out;

private:
    UNetConfig cfg_;
};

/// Trainable copy of the encoder half, a hint encoder for the wireframe and
/// zero-initialized 1x1 convolutions at each injection point.
class ControlBranch : public nn::Module {
    Rng init_rng_;

public:
    ControlBranch(UNetConfig cfg, std::uint64_t seed);
    /// Copies the encoder from `base` and zeroes the injection convolutions.
    void reset_from(const UNet& base);

    /// hint_image [B, 3, 8H, 8W] in [0, 1].
    ControlResiduals operator()(const nn::Tensor& x, const nn::Tensor& emb, const nn::Tensor& text, const nn::Tensor& hint_image) const;

    UNetEncoder encoder;
    nn::Conv2d h1, h2, h3, h_out;
    nn::Conv2d zero_s0, zero_s1, zero_m;

private:
    UNetConfig cfg_;
};

/// Frozen denoiser with the control branch's residuals injected.
nn::Tensor control_denoise_step(const nn::Tensor& x, const std::vector<double>& t, const nn::Tensor& text, const nn::Tensor& wireframe,
                                const UNet& base, const ControlBranch& control);

}  // namespace uidiff::ui
