#include "uidiff/ui/codec.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "uidiff/error.hpp"
#include "uidiff/layout.hpp"

namespace uidiff::ui {

using nlohmann::json;

nn::Tensor image_to_tensor(const Image& img) {
    const int W = img.width(), H = img.height();
    std::vector<double> v(static_cast<size_t>(3) * H * W);
    const size_t plane = static_cast<size_t>(H) * W;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const Rgb p = img.at(x, y);
            const size_t i = static_cast<size_t>(y) * W + x;
            v[i] = p.r / 255.0;
            v[plane + i] = p.g / 255.0;
            v[2 * plane + i] = p.b / 255.0;
        }
    return nn::Tensor::from({1, 3, H, W}, std::move(v));
}

Image tensor_to_image(const nn::Tensor& t, int b) {
    if (t.ndim() != 4 || t.dim(1) != 3) throw Error(ErrorCode::ShapeMismatch, "tensor_to_image expects [B, 3, H, W]");
    const int H = t.dim(2), W = t.dim(3);
    const size_t plane = static_cast<size_t>(H) * W;
    const double* d = t.values().data() + static_cast<size_t>(b) * 3 * plane;
    auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    Image img(W, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const size_t i = static_cast<size_t>(y) * W + x;
            img.set(x, y, {q(d[i]), q(d[plane + i]), q(d[2 * plane + i])});
        }
    return img;
}

nn::Tensor stack_batch(const std::vector<nn::Tensor>& items) {
    if (items.empty()) throw Error(ErrorCode::InvalidArgument, "stack_batch of nothing");
    nn::Shape shape = items[0].shape();
    std::vector<double> v;
    v.reserve(items[0].numel() * items.size());
    for (const auto& t : items) {
        if (t.shape() != items[0].shape()) throw Error(ErrorCode::ShapeMismatch, "stack_batch: shapes differ");
        v.insert(v.end(), t.values().begin(), t.values().end());
    }
    shape[0] *= static_cast<int>(items.size());
    return nn::Tensor::from(std::move(shape), std::move(v));
}

json CodecConfig::to_json() const { return {{"latent_channels", latent_channels}, {"c1", c1}, {"c2", c2}}; }

CodecConfig CodecConfig::from_json(const json& j) {
    CodecConfig c;
    c.latent_channels = j.at("latent_channels").get<int>();
    c.c1 = j.at("c1").get<int>();
    c.c2 = j.at("c2").get<int>();
    return c;
}

ImageCodec::ImageCodec(CodecConfig cfg, std::uint64_t seed)
    : init_rng_(seed),
      e1(3, cfg.c1, 3, 2, 1, init_rng_),
      e2(cfg.c1, cfg.c2, 3, 2, 1, init_rng_),
      e3(cfg.c2, cfg.c2, 3, 2, 1, init_rng_),
      e_out(cfg.c2, cfg.latent_channels, 1, 1, 0, init_rng_),
      d_in(cfg.latent_channels, cfg.c2, 3, 1, 1, init_rng_),
      d1(cfg.c2, cfg.c2, 3, 1, 1, init_rng_),
      d2(cfg.c2, cfg.c1, 3, 1, 1, init_rng_),
      d3(cfg.c1, cfg.c1 / 2, 3, 1, 1, init_rng_),
      d_out(cfg.c1 / 2, 3, 1, 1, 0, init_rng_),
      cfg_(cfg) {
    add_module("e1", e1);
    add_module("e2", e2);
    add_module("e3", e3);
    add_module("e_out", e_out);
    add_module("d_in", d_in);
    add_module("d1", d1);
    add_module("d2", d2);
    add_module("d3", d3);
    add_module("d_out", d_out);
}

nn::Tensor ImageCodec::encode(const nn::Tensor& x) const {
    if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) % kFactor || x.dim(3) % kFactor)
        throw Error(ErrorCode::ShapeMismatch, "codec input must be [B, 3, 8k, 8m], got " + nn::shape_str(x.shape()));
    nn::Tensor h = nn::silu(e1(x));
    h = nn::silu(e2(h));
    h = nn::silu(e3(h));
    return e_out(h);
}

nn::Tensor ImageCodec::decode(const nn::Tensor& z) const {
    if (z.ndim() != 4 || z.dim(1) != cfg_.latent_channels)
        throw Error(ErrorCode::ShapeMismatch, "codec latent must have shape [B, C, h, w], got " + nn::shape_str(z.shape()));
    nn::Tensor h = nn::silu(d_in(z));
    h = nn::silu(d1(nn::upsample2x(h)));
    h = nn::silu(d2(nn::upsample2x(h)));
    h = nn::silu(d3(nn::upsample2x(h)));
    return nn::sigmoid(d_out(h));
}

Autoencoded autoencode(const ImageCodec& codec, const Image& img) {
    if (img.width() != kCanvasWidth || img.height() != kCanvasHeight)
        throw Error(ErrorCode::ShapeMismatch, fmt::format("autoencode expects {}x{}, got {}x{}", kCanvasWidth, kCanvasHeight, img.width(), img.height()));
    nn::NoGradGuard ng;
    Autoencoded out;
    out.latent = codec.encode(image_to_tensor(img));
    out.reconstruction = tensor_to_image(codec.decode(out.latent));
    return out;
}

std::vector<double> pretrain_codec(ImageCodec& codec, const std::vector<Image>& images, const CodecTrainConfig& cfg) {
    std::vector<double> trace;
    if (images.empty() || cfg.steps <= 0) return trace;
    if (cfg.crop % ImageCodec::kFactor) throw Error(ErrorCode::InvalidArgument, "codec crop must be a multiple of 8");
    codec.set_trainable(true);
    nn::AdamW opt(codec.parameters(), {.lr = cfg.lr, .weight_decay = 0.0});
    Rng rng(cfg.seed);
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<nn::Tensor> crops;
        for (int b = 0; b < cfg.batch; ++b) {
            const Image& img = images[rng.uniform_int(images.size())];
            const int cw = std::min(cfg.crop, img.width() / 8 * 8), ch = std::min(cfg.crop, img.height() / 8 * 8);
            // Crop origins sit on the 8-pixel grid so latents stay aligned with full-image encoding.
            const int x0 = 8 * static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>((img.width() - cw) / 8 + 1)));
            const int y0 = 8 * static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>((img.height() - ch) / 8 + 1)));
            crops.push_back(image_to_tensor(img.crop(x0, y0, cw, ch)));
        }
        const nn::Tensor x = stack_batch(crops);
        opt.zero_grad();
        const nn::Tensor loss = nn::mse_loss(codec.decode(codec.encode(x)), x);
        if (!std::isfinite(loss.item())) throw Error(ErrorCode::NonFiniteLoss, "codec pretraining diverged");
        nn::backward(loss);
        nn::clip_grad_norm(codec.parameters(), 1.0);
        opt.step();
        trace.push_back(loss.item());
    }
    codec.set_trainable(false);
    return trace;
}

double reconstruction_mae(const ImageCodec& codec, const std::vector<Image>& images) {
    if (images.empty()) return 0.0;
    double total = 0.0;
    size_t n = 0;
    nn::NoGradGuard ng;
    for (const auto& img : images) {
        const nn::Tensor x = image_to_tensor(img);
        const nn::Tensor r = codec.decode(codec.encode(x));
        for (size_t i = 0; i < x.numel(); ++i) total += std::abs(x.values()[i] - r.values()[i]);
        n += x.numel();
    }
    return total / static_cast<double>(n);
}

}  // namespace uidiff::ui
