#include "uidiff/ui/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "uidiff/error.hpp"
#include "uidiff/nn/checkpoint.hpp"
#include "uidiff/wireframe.hpp"

namespace uidiff::ui {

using nlohmann::json;
namespace fs = std::filesystem;

json FrozenHashes::to_json() const { return {{"text_encoder", text}, {"denoiser", denoiser}, {"codec", codec}}; }

FrozenHashes FrozenHashes::from_json(const json& j) {
    return {j.at("text_encoder").get<std::string>(), j.at("denoiser").get<std::string>(), j.at("codec").get<std::string>()};
}

json UiModelConfig::to_json() const {
    return {{"text", text.to_json()}, {"codec", codec.to_json()}, {"unet", unet.to_json()}, {"schedule", schedule.to_json()}};
}

UiModelConfig UiModelConfig::from_json(const json& j) {
    UiModelConfig c;
    c.text = TextEncoderConfig::from_json(j.at("text"));
    c.codec = CodecConfig::from_json(j.at("codec"));
    c.unet = UNetConfig::from_json(j.at("unet"));
    c.schedule = ContinuousSchedule::from_json(j.at("schedule"));
    return c;
}

UiModel::UiModel(std::string profile_, WordTokenizer tokenizer, const UiModelConfig& cfg, std::uint64_t seed)
    : profile(std::move(profile_)), config(cfg), palette_version(Palette::standard().version) {
    if (cfg.unet.text_dim != cfg.text.dim) throw Error(ErrorCode::ShapeMismatch, "denoiser text width differs from the text encoder's");
    if (cfg.unet.latent_channels != cfg.codec.latent_channels) throw Error(ErrorCode::ShapeMismatch, "denoiser and codec latent channels differ");
    text = std::make_unique<TextEncoder>(std::move(tokenizer), cfg.text, mix_seed(seed, 1));
    codec = std::make_unique<ImageCodec>(cfg.codec, mix_seed(seed, 2));
    unet = std::make_unique<UNet>(cfg.unet, mix_seed(seed, 3));
    control = std::make_unique<ControlBranch>(cfg.unet, mix_seed(seed, 4));
    reset_control();
    freeze_base();
}

FrozenHashes UiModel::frozen_hashes() const { return {text->parameter_hash(), unet->parameter_hash(), codec->parameter_hash()}; }

void UiModel::freeze_base() {
    text->set_trainable(false);
    codec->set_trainable(false);
    unet->set_trainable(false);
    control->set_trainable(true);
}

void UiModel::reset_control() { control->reset_from(*unet); }

void UiModel::verify() const {
    if (palette_version != Palette::standard().version)
        throw Error(ErrorCode::CheckpointMismatch, fmt::format("checkpoint palette '{}' vs renderer '{}'", palette_version, Palette::standard().version));
    if (recorded_ && !(*recorded_ == frozen_hashes()))
        throw Error(ErrorCode::CheckpointMismatch, "frozen weights differ from the hashes recorded in the checkpoint");
}

namespace {

json common_meta(const UiModel& m) {
    return {{"profile", m.profile},
            {"config", m.config.to_json()},
            {"tokenizer", m.text->tokenizer().to_json()},
            {"tokenizer_hash", m.text->tokenizer().hash()},
            {"palette_version", m.palette_version},
            {"latent_scale", m.latent_scale},
            {"frozen_hashes", m.frozen_hashes().to_json()}};
}

std::unique_ptr<UiModel> model_from_meta(const nn::Checkpoint& ck, const std::string& profile) {
    const json& meta = ck.meta;
    auto tk = WordTokenizer::from_json(meta.at("tokenizer"));
    if (tk.hash() != meta.at("tokenizer_hash").get<std::string>()) throw Error(ErrorCode::CheckpointMismatch, "tokenizer hash disagrees with its vocabulary");
    auto m = std::make_unique<UiModel>(profile, std::move(tk), UiModelConfig::from_json(meta.at("config")), 0);
    m->palette_version = meta.at("palette_version").get<std::string>();
    m->latent_scale = meta.at("latent_scale").get<double>();
    m->text->load_state(ck.tensors, "text.");
    m->codec->load_state(ck.tensors, "codec.");
    m->unet->load_state(ck.tensors, "unet.");
    m->text->invalidate_cache();
    return m;
}

}  // namespace

void UiModel::save(const fs::path& path, const json& extra_meta) const {
    nn::Checkpoint ck;
    ck.kind = "ui-model";
    ck.meta = common_meta(*this);
    ck.meta["control_hash"] = control_hash();
    for (auto& [k, v] : extra_meta.items()) ck.meta[k] = v;
    ck.add_module(*text, "text.");
    ck.add_module(*codec, "codec.");
    ck.add_module(*unet, "unet.");
    ck.add_module(*control, "control.");
    ck.save(path);
    checkpoint_id = ck.id();
}

std::unique_ptr<UiModel> UiModel::load(const fs::path& path) {
    const auto ck = nn::Checkpoint::load(path, "ui-model");
    auto m = model_from_meta(ck, ck.meta.at("profile").get<std::string>());
    m->control->load_state(ck.tensors, "control.");
    m->recorded_ = FrozenHashes::from_json(ck.meta.at("frozen_hashes"));
    if (m->control_hash() != ck.meta.at("control_hash").get<std::string>())
        throw Error(ErrorCode::CheckpointMismatch, "control parameters disagree with the recorded hash");
    m->verify();
    m->freeze_base();
    m->checkpoint_id = ck.id();
    return m;
}

void UiModel::save_base(const fs::path& path) const {
    nn::Checkpoint ck;
    ck.kind = "ui-base";
    ck.meta = common_meta(*this);
    ck.add_module(*text, "text.");
    ck.add_module(*codec, "codec.");
    ck.add_module(*unet, "unet.");
    ck.save(path);
    checkpoint_id = ck.id();
}

std::unique_ptr<UiModel> UiModel::load_base(const fs::path& path, const std::string& profile) {
    const auto ck = nn::Checkpoint::load(path, "ui-base");
    auto m = model_from_meta(ck, profile);
    m->recorded_ = FrozenHashes::from_json(ck.meta.at("frozen_hashes"));
    m->verify();
    m->reset_control();
    m->freeze_base();
    m->checkpoint_id = ck.id();
    return m;
}

std::vector<UiTrainingItem> load_ui_items(const std::vector<ManifestEntry>& entries) {
    std::vector<UiTrainingItem> out;
    out.reserve(entries.size());
    for (const auto& e : entries) {
        UiTrainingItem it;
        it.id = e.source_id;
        it.image = read_image(e.image);
        it.conditioning = read_image(e.conditioning);
        it.caption = e.caption;
        for (const Image* img : {&it.image, &it.conditioning})
            if (img->width() != kCanvasWidth || img->height() != kCanvasHeight)
                throw Error(ErrorCode::DimensionMismatch, fmt::format("{}: training images must be {}x{}", e.source_id, kCanvasWidth, kCanvasHeight));
        out.push_back(std::move(it));
    }
    return out;
}

std::vector<nn::Tensor> encode_latents(const UiModel& model, const std::vector<UiTrainingItem>& items) {
    nn::NoGradGuard ng;
    std::vector<nn::Tensor> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back(nn::scale(model.codec->encode(image_to_tensor(it.image)), model.latent_scale));
    return out;
}

namespace {

// Draws t in [1, T]: independent uniform, or a golden-ratio walk.
class TimestepDraw {
public:
    TimestepDraw(int T, bool stratified, Rng& rng) : T_(T), stratified_(stratified), phase_(stratified ? rng.uniform() : 0.0) {}
    int next(Rng& rng) {
        if (!stratified_) return 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(T_)));
        static constexpr double kStep = 0.6180339887498949;
        phase_ += kStep;
        phase_ -= std::floor(phase_);
        return 1 + std::min(T_ - 1, static_cast<int>(phase_ * T_));
    }

private:
    int T_;
    bool stratified_;
    double phase_;
};

// Shared by denoiser pretraining and control finetuning: one noisy batch.
struct NoisyBatch {
    nn::Tensor noisy, eps, text;
    std::vector<double> t;
    std::vector<size_t> idx;
};

NoisyBatch make_noisy_batch(const UiModel& model, const std::vector<UiTrainingItem>& items, const std::vector<nn::Tensor>& latents,
                            const std::vector<size_t>& idx, double dropout, TimestepDraw& draw_t, Rng& rng) {
    NoisyBatch b;
    b.idx = idx;
    std::vector<std::string> prompts;
    std::vector<nn::Tensor> xs, es;
    std::vector<int> ts;
    for (size_t i : idx) {
        prompts.push_back(apply_prompt_dropout(items[i].caption, dropout, rng));
        ts.push_back(draw_t.next(rng));
        xs.push_back(latents[i]);
        es.push_back(gaussian(latents[i].shape(), rng));
    }
    const nn::Tensor x0 = stack_batch(xs);
    b.eps = stack_batch(es);
    b.noisy = add_noise(x0, ts, b.eps, model.config.schedule);
    b.text = model.text->encode_batch(prompts);
    b.t.assign(ts.begin(), ts.end());
    return b;
}

}  // namespace

ToyPretrainReport pretrain_toy_base(UiModel& model, const std::vector<UiTrainingItem>& items, const ToyPretrainConfig& cfg) {
    ToyPretrainReport rep;
    if (items.empty()) throw Error(ErrorCode::InvalidArgument, "toy pretraining needs at least one item");
    std::vector<std::string> captions;
    std::vector<Image> images;
    for (const auto& it : items) {
        captions.push_back(it.caption);
        images.push_back(it.image);
    }
    rep.text_loss = pretrain_text_encoder(*model.text, captions, cfg.text);
    rep.codec_loss = pretrain_codec(*model.codec, images, cfg.codec);

    model.latent_scale = 1.0;
    const auto raw = encode_latents(model, items);
    double sum = 0, sq = 0;
    size_t n = 0;
    for (const auto& z : raw)
        for (double v : z.values()) {
            sum += v;
            sq += v * v;
            ++n;
        }
    const double mean = sum / n, sd = std::sqrt(std::max(sq / n - mean * mean, 1e-12));
    model.latent_scale = 1.0 / sd;
    rep.latent_scale = model.latent_scale;
    std::vector<nn::Tensor> latents;
    for (const auto& z : raw) latents.push_back(nn::scale(z, model.latent_scale));

    model.unet->set_trainable(true);
    nn::AdamW opt(model.unet->parameters(), {.lr = cfg.denoiser_lr, .weight_decay = 0.0});
    Rng rng(cfg.seed);
    TimestepDraw draw_t(model.config.schedule.T(), false, rng);
    for (int step = 0; step < cfg.denoiser_steps; ++step) {
        std::vector<size_t> idx;
        for (int b = 0; b < cfg.denoiser_batch; ++b) idx.push_back(rng.uniform_int(items.size()));
        const NoisyBatch nb = make_noisy_batch(model, items, latents, idx, cfg.prompt_dropout, draw_t, rng);
        opt.zero_grad();
        const nn::Tensor loss = nn::mse_loss(model.unet->forward(nb.noisy, nb.t, nb.text, nullptr), nb.eps);
        if (!std::isfinite(loss.item())) throw Error(ErrorCode::NonFiniteLoss, fmt::format("denoiser pretraining diverged at step {}", step));
        nn::backward(loss);
        nn::clip_grad_norm(model.unet->parameters(), 1.0);
        opt.step();
        rep.denoiser_loss.push_back(loss.item());
    }
    model.reset_control();
    model.freeze_base();
    return rep;
}

json FinetuneConfig::to_json() const {
    return {{"epochs", epochs}, {"batch_size", batch_size}, {"learning_rate", learning_rate}, {"weight_decay", weight_decay},
            {"prompt_dropout", prompt_dropout}, {"seed", seed}, {"max_steps", max_steps}, {"stratified_t", stratified_t}};
}

FinetuneResult finetune_control(UiModel& model, const std::vector<UiTrainingItem>& items, const FinetuneConfig& cfg,
                                const std::function<void(long, double)>& on_step) {
    if (items.empty()) throw Error(ErrorCode::InvalidArgument, "finetune_control needs at least one item");
    if (cfg.batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be positive");
    model.freeze_base();
    FinetuneResult res;
    res.frozen_before = model.frozen_hashes();
    res.control_before = model.control_hash();
    const auto latents = encode_latents(model, items);

    const long per_epoch = static_cast<long>((items.size() + static_cast<size_t>(cfg.batch_size) - 1) / static_cast<size_t>(cfg.batch_size));
    const long total = cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * per_epoch;
    const auto params = model.control->parameters();
    nn::AdamW opt(params, {.lr = cfg.learning_rate, .weight_decay = cfg.weight_decay});
    Rng rng(cfg.seed);
    TimestepDraw draw_t(model.config.schedule.T(), cfg.stratified_t, rng);
    std::vector<size_t> order(items.size());
    size_t cursor = order.size();
    for (long step = 0; step < total; ++step) {
        std::vector<size_t> idx;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor == order.size()) {
                std::iota(order.begin(), order.end(), 0);
                for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
                cursor = 0;
            }
            idx.push_back(order[cursor++]);
        }
        const NoisyBatch nb = make_noisy_batch(model, items, latents, idx, cfg.prompt_dropout, draw_t, rng);
        std::vector<nn::Tensor> hints;
        for (size_t i : idx) hints.push_back(image_to_tensor(items[i].conditioning));
        opt.zero_grad();
        const nn::Tensor pred = control_denoise_step(nb.noisy, nb.t, nb.text, stack_batch(hints), *model.unet, *model.control);
        const nn::Tensor loss = nn::mse_loss(pred, nb.eps);
        if (!std::isfinite(loss.item())) {
            std::string ids;
            for (size_t i : idx) ids += (ids.empty() ? "" : ",") + items[i].id;
            throw Error(ErrorCode::NonFiniteLoss, fmt::format("step {} on records [{}]", step, ids));
        }
        nn::backward(loss);
        opt.step();
        res.loss.push_back(loss.item());
        if (on_step) on_step(step, loss.item());
    }
    res.steps = total;
    res.frozen_after = model.frozen_hashes();
    res.control_after = model.control_hash();
    if (!(res.frozen_after == res.frozen_before)) throw Error(ErrorCode::FrozenDrift, "a frozen component changed during control finetuning");
    return res;
}

nn::Tensor sample_latent(const UiModel& model, const std::string& prompt, const Image* wireframe, std::uint64_t seed, int steps) {
    nn::NoGradGuard ng;
    const auto& s = model.config.schedule;
    const int C = model.config.unet.latent_channels;
    const int h = kCanvasHeight / ImageCodec::kFactor, w = kCanvasWidth / ImageCodec::kFactor;
    Rng rng(seed);
    nn::Tensor x = gaussian({1, C, h, w}, rng);
    const nn::Tensor text = model.text->encode(prompt);
    nn::Tensor hint;
    if (wireframe) hint = image_to_tensor(*wireframe);
    for (const auto& [t, prev] : s.sampler_timesteps(steps)) {
        const std::vector<double> tv{static_cast<double>(t)};
        const nn::Tensor eps = wireframe ? control_denoise_step(x, tv, text, hint, *model.unet, *model.control)
                                         : model.unet->forward(x, tv, text, nullptr);
        const double ab = s.alpha_bar(t), ab_prev = s.alpha_bar(prev);
        const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
        const double pa = std::sqrt(ab_prev), pb = std::sqrt(1.0 - ab_prev);
        auto& xv = x.values();
        const auto& ev = eps.values();
        std::vector<double> next(xv.size());
        for (size_t i = 0; i < xv.size(); ++i) {
            const double x0 = (xv[i] - sb * ev[i]) / sa;
            next[i] = pa * x0 + pb * ev[i];
        }
        x = nn::Tensor::from(x.shape(), std::move(next));
    }
    return x;
}

namespace {

Image decode_latent(const UiModel& model, const nn::Tensor& z) {
    nn::NoGradGuard ng;
    return tensor_to_image(model.codec->decode(nn::scale(z, 1.0 / model.latent_scale)));
}

}  // namespace

Image generate_ui(const UiModel& model, const std::string& prompt, const Layout& layout, std::uint64_t seed, int steps) {
    model.verify();
    const Image wf = render_wireframe(layout);
    return decode_latent(model, sample_latent(model, prompt, &wf, seed, steps));
}

Image generate_base(const UiModel& model, const std::string& prompt, std::uint64_t seed, int steps) {
    model.verify();
    return decode_latent(model, sample_latent(model, prompt, nullptr, seed, steps));
}

}  // namespace uidiff::ui
