#include "uidiff/ui/unet.hpp"

#include <fmt/format.h>

#include "uidiff/error.hpp"

namespace uidiff::ui {

using nlohmann::json;

json UNetConfig::to_json() const {
    return {{"latent_channels", latent_channels}, {"c0", c0}, {"c1", c1}, {"groups", groups},
            {"temb", temb}, {"text_dim", text_dim}, {"heads", heads}};
}

UNetConfig UNetConfig::from_json(const json& j) {
    UNetConfig c;
    c.latent_channels = j.at("latent_channels").get<int>();
    c.c0 = j.at("c0").get<int>();
    c.c1 = j.at("c1").get<int>();
    c.groups = j.at("groups").get<int>();
    c.temb = j.at("temb").get<int>();
    c.text_dim = j.at("text_dim").get<int>();
    c.heads = j.at("heads").get<int>();
    return c;
}

UNetConfig UNetConfig::miniature() {
    UNetConfig c;
    c.latent_channels = 2;
    c.c0 = 4;
    c.c1 = 4;
    c.groups = 2;
    c.temb = 8;
    c.text_dim = 4;
    c.heads = 2;
    return c;
}

ResBlock::ResBlock(int in, int out, int temb, int groups, Rng& rng)
    : n1(groups, in), n2(groups, out), c1(in, out, 3, 1, 1, rng), c2(out, out, 3, 1, 1, rng), proj(temb, out, rng) {
    add_module("n1", n1);
    add_module("c1", c1);
    add_module("proj", proj);
    add_module("n2", n2);
    add_module("c2", c2);
    if (in != out) {
        skip = std::make_unique<nn::Conv2d>(in, out, 1, 1, 0, rng);
        add_module("skip", *skip);
    }
}

nn::Tensor ResBlock::operator()(const nn::Tensor& x, const nn::Tensor& emb) const {
    nn::Tensor h = c1(nn::silu(n1(x)));
    h = nn::add_channel(h, proj(nn::silu(emb)));
    h = c2(nn::silu(n2(h)));
    return nn::add(skip ? (*skip)(x) : x, h);
}

UNetEncoder::UNetEncoder(const UNetConfig& cfg, Rng& rng)
    : conv_in(cfg.latent_channels, cfg.c0, 3, 1, 1, rng),
      res0(cfg.c0, cfg.c0, cfg.temb, cfg.groups, rng),
      down(cfg.c0, cfg.c1, 3, 2, 1, rng),
      res1(cfg.c1, cfg.c1, cfg.temb, cfg.groups, rng),
      mid(cfg.c1, cfg.c1, cfg.temb, cfg.groups, rng),
      mid_norm(cfg.c1),
      mid_attn(cfg.c1, cfg.text_dim, cfg.heads, rng) {
    add_module("conv_in", conv_in);
    add_module("res0", res0);
    add_module("down", down);
    add_module("res1", res1);
    add_module("mid", mid);
    add_module("mid_norm", mid_norm);
    add_module("mid_attn", mid_attn);
}

EncoderFeatures UNetEncoder::operator()(const nn::Tensor& x, const nn::Tensor& emb, const nn::Tensor& text, const nn::Tensor* hint) const {
    nn::Tensor h = conv_in(x);
    if (hint) h = nn::add(h, *hint);
    EncoderFeatures f;
    f.s0 = res0(h, emb);
    f.s1 = res1(down(f.s0), emb);
    nn::Tensor m = mid(f.s1, emb);
    const int H = m.dim(2), W = m.dim(3);
    const nn::Tensor tokens = nn::to_tokens(m);
    f.m = nn::add(m, nn::from_tokens(mid_attn(mid_norm(tokens), text), H, W));
    return f;
}

UNet::UNet(UNetConfig cfg, std::uint64_t seed)
    : init_rng_(seed),
      t1(cfg.c0, cfg.temb, init_rng_),
      t2(cfg.temb, cfg.temb, init_rng_),
      text_proj(cfg.text_dim, cfg.temb, init_rng_),
      encoder(cfg, init_rng_),
      up1(2 * cfg.c1, cfg.c1, cfg.temb, cfg.groups, init_rng_),
      up0(cfg.c1 + cfg.c0, cfg.c0, cfg.temb, cfg.groups, init_rng_),
      out_norm(cfg.groups, cfg.c0),
      conv_out(cfg.c0, cfg.latent_channels, 3, 1, 1, init_rng_, 0.1),
      cfg_(cfg) {
    add_module("t1", t1);
    add_module("t2", t2);
    add_module("text_proj", text_proj);
    add_module("encoder", encoder);
    add_module("up1", up1);
    add_module("up0", up0);
    add_module("out_norm", out_norm);
    add_module("conv_out", conv_out);
}

nn::Tensor UNet::embed(const std::vector<double>& t, const nn::Tensor& text) const {
    if (text.ndim() != 3 || text.dim(0) != static_cast<int>(t.size()) || text.dim(2) != cfg_.text_dim)
        throw Error(ErrorCode::ShapeMismatch, fmt::format("text embeddings {} for {} timesteps", nn::shape_str(text.shape()), t.size()));
    const nn::Tensor te = t2(nn::silu(t1(nn::timestep_embedding(t, cfg_.c0))));
    return nn::add(te, text_proj(nn::mean_tokens(text)));
}

nn::Tensor UNet::forward(const nn::Tensor& x, const std::vector<double>& t, const nn::Tensor& text, const ControlResiduals* ctrl) const {
    return forward_with_emb(x, embed(t, text), text, ctrl);
}

nn::Tensor UNet::forward_with_emb(const nn::Tensor& x, const nn::Tensor& emb, const nn::Tensor& text, const ControlResiduals* ctrl) const {
    if (x.ndim() != 4 || x.dim(1) != cfg_.latent_channels || x.dim(2) % 2 || x.dim(3) % 2)
        throw Error(ErrorCode::ShapeMismatch, "denoiser input " + nn::shape_str(x.shape()));
    if (x.dim(0) != emb.dim(0)) throw Error(ErrorCode::ShapeMismatch, "denoiser batch differs from embedding batch");
    EncoderFeatures f = encoder(x, emb, text, nullptr);
    if (ctrl) {
        f.s0 = nn::add(f.s0, ctrl->s0);
        f.s1 = nn::add(f.s1, ctrl->s1);
        f.m = nn::add(f.m, ctrl->m);
    }
    nn::Tensor h = up1(nn::concat_channels(f.m, f.s1), emb);
    h = up0(nn::concat_channels(nn::upsample2x(h), f.s0), emb);
    return conv_out(nn::silu(out_norm(h)));
}

ControlBranch::ControlBranch(UNetConfig cfg, std::uint64_t seed)
    : init_rng_(seed),
      encoder(cfg, init_rng_),
      h1(3, 8, 3, 2, 1, init_rng_),
      h2(8, 16, 3, 2, 1, init_rng_),
      h3(16, 16, 3, 2, 1, init_rng_),
      h_out(16, cfg.c0, 3, 1, 1, init_rng_),
      zero_s0(cfg.c0, cfg.c0, 1, 1, 0, init_rng_),
      zero_s1(cfg.c1, cfg.c1, 1, 1, 0, init_rng_),
      zero_m(cfg.c1, cfg.c1, 1, 1, 0, init_rng_),
      cfg_(cfg) {
    add_module("encoder", encoder);
    add_module("h1", h1);
    add_module("h2", h2);
    add_module("h3", h3);
    add_module("h_out", h_out);
    add_module("zero_s0", zero_s0);
    add_module("zero_s1", zero_s1);
    add_module("zero_m", zero_m);
    zero_s0.zero_init();
    zero_s1.zero_init();
    zero_m.zero_init();
}

void ControlBranch::reset_from(const UNet& base) {
    encoder.copy_from(base.encoder);
    zero_s0.zero_init();
    zero_s1.zero_init();
    zero_m.zero_init();
}

ControlResiduals ControlBranch::operator()(const nn::Tensor& x, const nn::Tensor& emb, const nn::Tensor& text, const nn::Tensor& hint_image) const {
    if (hint_image.ndim() != 4 || hint_image.dim(1) != 3 || hint_image.dim(2) != 8 * x.dim(2) || hint_image.dim(3) != 8 * x.dim(3))
        throw Error(ErrorCode::ShapeMismatch,
                    fmt::format("wireframe {} does not match latent {}", nn::shape_str(hint_image.shape()), nn::shape_str(x.shape())));
    nn::Tensor h = nn::silu(h1(hint_image));
    h = nn::silu(h2(h));
    h = nn::silu(h3(h));
    const nn::Tensor hint = h_out(h);
    const EncoderFeatures f = encoder(x, emb, text, &hint);
    return {zero_s0(f.s0), zero_s1(f.s1), zero_m(f.m)};
}

nn::Tensor control_denoise_step(const nn::Tensor& x, const std::vector<double>& t, const nn::Tensor& text, const nn::Tensor& wireframe,
                                const UNet& base, const ControlBranch& control) {
    const nn::Tensor emb = base.embed(t, text);
    const ControlResiduals r = control(x, emb, text, wireframe);
    return base.forward_with_emb(x, emb, text, &r);
}

}  // namespace uidiff::ui
