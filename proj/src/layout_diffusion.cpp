#include "uidiff/layout_diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "uidiff/error.hpp"
#include "uidiff/nn/checkpoint.hpp"

namespace uidiff {

using nlohmann::json;
using nn::Tensor;

namespace {

std::string trim(std::string_view s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

}  // namespace

// ---- ComponentCondition ----

int ComponentCondition::total() const { return std::accumulate(counts.begin(), counts.end(), 0); }

std::vector<ComponentCategory> ComponentCondition::sorted() const {
    std::vector<ComponentCategory> out;
    for (int c = 0; c < kNumCategories; ++c)
        for (int i = 0; i < counts[static_cast<size_t>(c)]; ++i) out.emplace_back(c);
    return out;
}

ComponentCondition& ComponentCondition::add(ComponentCategory c, int n) {
    if (c.id < 0 || c.id >= kNumCategories) throw Error(ErrorCode::InvalidArgument, fmt::format("category id {}", c.id));
    if (n < 0) throw Error(ErrorCode::InvalidArgument, "negative component count");
    counts[static_cast<size_t>(c.id)] += n;
    return *this;
}

ComponentCondition ComponentCondition::parse(const std::string& spec) {
    ComponentCondition out;
    size_t start = 0;
    while (start <= spec.size()) {
        size_t end = spec.find(',', start);
        if (end == std::string::npos) end = spec.size();
        const std::string item = trim(std::string_view(spec).substr(start, end - start));
        start = end + 1;
        if (item.empty()) continue;
        const size_t colon = item.rfind(':');
        int n = 1;
        std::string name = item;
        if (colon != std::string::npos) {
            name = trim(item.substr(0, colon));
            const std::string num = trim(item.substr(colon + 1));
            try {
                size_t used = 0;
                n = std::stoi(num, &used);
                if (used != num.size()) throw std::invalid_argument(num);
            } catch (const std::exception&) {
                throw Error(ErrorCode::InvalidArgument, fmt::format("bad count in '{}'", item));
            }
            if (n < 1) throw Error(ErrorCode::InvalidArgument, fmt::format("count must be >= 1 in '{}'", item));
        }
        out.add(ComponentCategory::parse(name), n);
    }
    return out;
}

ComponentCondition ComponentCondition::from_json(const json& j) {
    ComponentCondition out;
    if (j.is_null()) return out;
    if (j.is_string()) return parse(j.get<std::string>());
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!it.value().is_number_integer() || it.value().get<int>() < 0)
                throw Error(ErrorCode::InvalidArgument, "component count for '" + it.key() + "' must be a non-negative integer");
            out.add(ComponentCategory::parse(it.key()), it.value().get<int>());
        }
        return out;
    }
    if (j.is_array()) {
        for (const auto& item : j) {
            if (item.is_string()) {
                out.add(ComponentCategory::parse(item.get<std::string>()));
            } else if (item.is_object() && item.contains("category")) {
                const int n = item.value("count", 1);
                if (n < 0) throw Error(ErrorCode::InvalidArgument, "negative component count");
                out.add(ComponentCategory::parse(item.at("category").get<std::string>()), n);
            } else {
                throw Error(ErrorCode::InvalidArgument, "component entries must be names or {category, count}");
            }
        }
        return out;
    }
    throw Error(ErrorCode::InvalidArgument, "components must be a string, object or array");
}

json ComponentCondition::to_json() const {
    json j = json::object();
    for (int c = 0; c < kNumCategories; ++c)
        if (counts[static_cast<size_t>(c)] > 0) j[std::string(ComponentCategory(c).name())] = counts[static_cast<size_t>(c)];
    return j;
}

std::string ComponentCondition::to_string() const {
    std::string out;
    for (int c = 0; c < kNumCategories; ++c) {
        if (counts[static_cast<size_t>(c)] == 0) continue;
        if (!out.empty()) out += ",";
        out += fmt::format("{}:{}", ComponentCategory(c).name(), counts[static_cast<size_t>(c)]);
    }
    return out;
}

ComponentCondition ComponentCondition::of_layout(const Layout& layout) {
    ComponentCondition out;
    for (const auto& e : layout.elements) out.add(e.category);
    return out;
}

// ---- corruption ----

TokenSequence corrupt(const TokenSequence& seq, int t, const DiscreteSchedule& schedule, const TokenizerConfig& cfg, Rng& rng) {
    if (t < 0 || t > schedule.T) throw Error(ErrorCode::InvalidArgument, fmt::format("t={} outside [0,{}]", t, schedule.T));
    const double p = schedule.mask_prob(t);
    TokenSequence out = seq;
    for (int i = 0; i < out.size(); ++i) {
        const Attribute a = attribute_at(i);
        int& tok = out.tokens[static_cast<size_t>(i)];
        if (tok == cfg.mask(a)) throw Error(ErrorCode::MaskedSequence, "corrupt() expects a clean sequence");
        if (tok == cfg.pad(a)) continue;
        if (rng.uniform() < p) tok = cfg.mask(a);
    }
    return out;
}

// ---- configuration ----

DenoiserConfig DenoiserConfig::miniature() {
    DenoiserConfig c;
    c.layers = 2;
    c.width = 16;
    c.heads = 2;
    c.ff_mult = 2;
    c.tokenizer.e_max = 6;
    c.tokenizer.bins = 8;
    c.schedule.T = 20;
    return c;
}

json DenoiserConfig::to_json() const {
    return {{"bins", tokenizer.bins}, {"e_max", tokenizer.e_max}, {"T", schedule.T}, {"layers", layers},
            {"width", width},         {"heads", heads},           {"ff_mult", ff_mult}};
}

DenoiserConfig DenoiserConfig::from_json(const json& j) {
    DenoiserConfig c;
    c.tokenizer.bins = j.at("bins");
    c.tokenizer.e_max = j.at("e_max");
    c.schedule.T = j.at("T");
    c.layers = j.at("layers");
    c.width = j.at("width");
    c.heads = j.at("heads");
    c.ff_mult = j.at("ff_mult");
    return c;
}

// ---- model ----

LayoutDenoiser::Block::Block(int width, int heads, int ff, Rng& rng)
    : ln1(width), ln2(width), attn(width, width, heads, rng), ff1(width, ff, rng), ff2(ff, width, rng, true, 0.5) {
    add_module("ln1", ln1);
    add_module("ln2", ln2);
    add_module("attn", attn);
    add_module("ff1", ff1);
    add_module("ff2", ff2);
}

LayoutDenoiser::LayoutDenoiser(const DenoiserConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.tokenizer.check();
    if (cfg.width % cfg.heads) throw Error(ErrorCode::InvalidArgument, "width must be divisible by heads");
    Rng rng(seed);
    const int D = cfg.width;
    static constexpr const char* kNames[] = {"cat", "x", "y", "w", "h"};
    for (int a = 0; a < kTokensPerSlot; ++a) {
        attr_embed_[static_cast<size_t>(a)] =
            std::make_unique<nn::Embedding>(cfg.tokenizer.vocab_size(static_cast<Attribute>(a)), D, rng, 0.5);
        add_module(std::string("embed_") + kNames[a], *attr_embed_[static_cast<size_t>(a)]);
    }
    slot_embed_ = std::make_unique<nn::Embedding>(cfg.tokenizer.e_max, D, rng, 0.5);
    add_module("embed_slot", *slot_embed_);
    time1_ = std::make_unique<nn::Linear>(D, D, rng);
    time2_ = std::make_unique<nn::Linear>(D, D, rng);
    add_module("time1", *time1_);
    add_module("time2", *time2_);
    for (int l = 0; l < cfg.layers; ++l) {
        blocks_.push_back(std::make_unique<Block>(D, cfg.heads, D * cfg.ff_mult, rng));
        add_module(fmt::format("block{}", l), *blocks_.back());
    }
    final_ln_ = std::make_unique<nn::LayerNorm>(D);
    add_module("final_ln", *final_ln_);
    for (int a = 0; a < kTokensPerSlot; ++a) {
        const int out = cfg.tokenizer.vocab_size(static_cast<Attribute>(a)) - 1;
        heads_[static_cast<size_t>(a)] = std::make_unique<nn::Linear>(D, out, rng);
        add_module(std::string("head_") + kNames[a], *heads_[static_cast<size_t>(a)]);
    }
    count_prior.assign(static_cast<size_t>(cfg.tokenizer.e_max) + 1, 1.0 / (cfg.tokenizer.e_max + 1));
}

void LayoutDenoiser::zero_heads() {
    for (auto& h : heads_) h->zero_init();
}

void LayoutDenoiser::fit_count_prior(std::span<const Layout> layouts) {
    std::vector<double> hist(static_cast<size_t>(cfg_.tokenizer.e_max) + 1, 0.0);
    for (const auto& l : layouts) {
        const size_t n = std::min(l.elements.size(), hist.size() - 1);
        hist[n] += 1.0;
    }
    const double total = std::accumulate(hist.begin(), hist.end(), 0.0);
    if (total == 0) return;
    for (auto& h : hist) h /= total;
    count_prior = std::move(hist);
}

std::array<Tensor, kTokensPerSlot> LayoutDenoiser::forward(std::span<const TokenSequence> batch, std::span<const int> t) const {
    const int B = static_cast<int>(batch.size());
    const int S = cfg_.tokenizer.e_max;
    const int D = cfg_.width;
    if (static_cast<int>(t.size()) != B) throw Error(ErrorCode::ShapeMismatch, "one timestep per sequence required");
    for (const auto& seq : batch)
        if (seq.size() != cfg_.tokenizer.sequence_length())
            throw Error(ErrorCode::ShapeMismatch, fmt::format("sequence length {} != {}", seq.size(), cfg_.tokenizer.sequence_length()));

    Tensor x;
    std::vector<int> ids(static_cast<size_t>(B) * S);
    for (int a = 0; a < kTokensPerSlot; ++a) {
        for (int b = 0; b < B; ++b)
            for (int s = 0; s < S; ++s)
                ids[static_cast<size_t>(b * S + s)] = batch[static_cast<size_t>(b)].at(s, static_cast<Attribute>(a));
        Tensor e = (*attr_embed_[static_cast<size_t>(a)])(ids, {B, S, D});
        x = x.defined() ? nn::add(x, e) : e;
    }
    for (int b = 0; b < B; ++b)
        for (int s = 0; s < S; ++s) ids[static_cast<size_t>(b * S + s)] = s;
    x = nn::add(x, (*slot_embed_)(ids, {B, S, D}));

    std::vector<double> tt(t.begin(), t.end());
    Tensor temb = (*time2_)(nn::silu((*time1_)(nn::timestep_embedding(tt, D))));
    x = nn::add_per_row(x, temb);

    for (const auto& blk : blocks_) {
        Tensor h = blk->ln1(x);
        x = nn::add(x, blk->attn(h, h));
        h = blk->ln2(x);
        x = nn::add(x, blk->ff2(nn::silu(blk->ff1(h))));
    }
    Tensor flat = (*final_ln_)(x).reshape({B * S, D});
    std::array<Tensor, kTokensPerSlot> logits;
    for (int a = 0; a < kTokensPerSlot; ++a) logits[static_cast<size_t>(a)] = (*heads_[static_cast<size_t>(a)])(flat);
    return logits;
}

// ---- training ----

Tensor masked_cross_entropy(const LayoutDenoiser& model, std::span<const TokenSequence> corrupted,
                            std::span<const TokenSequence> clean, std::span<const int> t, int* masked_count) {
    const auto& tok = model.config().tokenizer;
    const int B = static_cast<int>(corrupted.size());
    const int S = tok.e_max;
    if (clean.size() != corrupted.size()) throw Error(ErrorCode::ShapeMismatch, "clean/corrupted batch sizes differ");

    std::array<std::vector<int>, kTokensPerSlot> targets;
    int masked = 0;
    for (int a = 0; a < kTokensPerSlot; ++a) {
        const auto attr = static_cast<Attribute>(a);
        auto& tg = targets[static_cast<size_t>(a)];
        tg.assign(static_cast<size_t>(B) * S, -1);
        for (int b = 0; b < B; ++b)
            for (int s = 0; s < S; ++s)
                if (corrupted[static_cast<size_t>(b)].at(s, attr) == tok.mask(attr)) {
                    tg[static_cast<size_t>(b * S + s)] = clean[static_cast<size_t>(b)].at(s, attr);
                    ++masked;
                }
    }
    if (masked_count) *masked_count = masked;
    if (masked == 0) return Tensor::zeros({1});

    auto logits = model.forward(corrupted, t);
    Tensor total;
    for (int a = 0; a < kTokensPerSlot; ++a) {
        Tensor ce = nn::cross_entropy_sum(logits[static_cast<size_t>(a)], targets[static_cast<size_t>(a)]);
        total = total.defined() ? nn::add(total, ce) : ce;
    }
    return nn::scale(total, 1.0 / masked);
}

LayoutStepResult training_step(LayoutDenoiser& model, nn::AdamW& opt, std::span<const TokenSequence> batch, Rng& rng,
                               std::span<const int> fixed_t, std::span<const std::string> batch_ids) {
    const auto& cfg = model.config();
    if (!fixed_t.empty() && fixed_t.size() != batch.size()) throw Error(ErrorCode::ShapeMismatch, "fixed_t size");
    std::vector<int> t(batch.size());
    std::vector<TokenSequence> corrupted;
    corrupted.reserve(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        t[i] = fixed_t.empty() ? 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.schedule.T))) : fixed_t[i];
        corrupted.push_back(corrupt(batch[i], t[i], cfg.schedule, cfg.tokenizer, rng));
    }
    LayoutStepResult r;
    opt.zero_grad();
    Tensor loss = masked_cross_entropy(model, corrupted, batch, t, &r.masked);
    r.loss = loss.item();
    if (!std::isfinite(r.loss)) {
        std::string ids;
        for (size_t i = 0; i < batch.size(); ++i) {
            if (!ids.empty()) ids += ",";
            ids += i < batch_ids.size() ? batch_ids[i] : std::to_string(i);
        }
        throw Error(ErrorCode::NonFiniteLoss, "layout loss is not finite for batch [" + ids + "]");
    }
    if (r.masked == 0) return r;
    nn::backward(loss);
    nn::clip_grad_norm(model.parameters(), 1.0);
    opt.step();
    return r;
}

std::vector<double> train_layout_model(LayoutDenoiser& model, std::span<const Layout> layouts, const LayoutTrainConfig& cfg,
                                       const std::function<void(int, double)>& on_step) {
    if (layouts.empty()) throw Error(ErrorCode::InvalidArgument, "no training layouts");
    const auto& tok = model.config().tokenizer;
    std::vector<TokenSequence> data;
    data.reserve(layouts.size());
    for (const auto& l : layouts) data.push_back(tokenize_layout(l, tok));
    model.fit_count_prior(layouts);

    nn::AdamW opt(model.parameters(), {.lr = cfg.lr, .weight_decay = cfg.weight_decay});
    Rng rng(cfg.seed);
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = order.size();
    std::vector<double> trace;
    trace.reserve(static_cast<size_t>(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<TokenSequence> batch;
        std::vector<std::string> ids;
        for (int i = 0; i < cfg.batch_size; ++i) {
            if (cursor == order.size()) {
                for (size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.uniform_int(k)]);
                cursor = 0;
            }
            ids.push_back(std::to_string(order[cursor]));
            batch.push_back(data[order[cursor++]]);
        }
        const auto r = training_step(model, opt, batch, rng, {}, ids);
        trace.push_back(r.loss);
        if (on_step) on_step(step, r.loss);
    }
    return trace;
}

// ---- sampling ----

namespace {

struct SamplerState {
    Rng rng{0};
    TokenSequence tokens;
    std::vector<char> active;  // slot < N
};

int draw_count(const std::vector<double>& prior, int k, int e_max, Rng& rng) {
    double mass = 0;
    for (int n = k; n <= e_max && n < static_cast<int>(prior.size()); ++n) mass += prior[static_cast<size_t>(n)];
    const double u = rng.uniform();
    if (mass <= 0) return k;
    double acc = 0;
    for (int n = k; n <= e_max && n < static_cast<int>(prior.size()); ++n) {
        acc += prior[static_cast<size_t>(n)] / mass;
        if (u < acc) return n;
    }
    for (int n = std::min<int>(e_max, static_cast<int>(prior.size()) - 1); n >= k; --n)
        if (prior[static_cast<size_t>(n)] > 0) return n;
    return k;
}

// Inverse-CDF draw over the non-PAD columns of one probability row.
int draw_token(const double* probs, int n_content, double u) {
    double mass = 0;
    for (int j = 0; j < n_content; ++j) mass += probs[j];
    if (!(mass > 0)) return static_cast<int>(u * n_content);
    double acc = 0;
    for (int j = 0; j < n_content; ++j) {
        acc += probs[j] / mass;
        if (u < acc) return j;
    }
    for (int j = n_content - 1; j >= 0; --j)
        if (probs[j] > 0) return j;
    return n_content - 1;
}

}  // namespace

std::vector<LayoutSample> sample_layouts(const LayoutDenoiser& model, std::span<const ComponentCondition> conditions,
                                         std::span<const std::uint64_t> seeds, const LayoutSampleConfig& cfg) {
    if (conditions.size() != seeds.size()) throw Error(ErrorCode::InvalidArgument, "one seed per condition required");
    const auto& tok = model.config().tokenizer;
    const int T = model.config().schedule.T;
    const int S = tok.e_max;
    const int steps = std::clamp(cfg.steps, 1, T);
    nn::NoGradGuard no_grad;
    nn::Fp32MatmulGuard fp32;

    std::vector<SamplerState> states(conditions.size());
    for (size_t i = 0; i < conditions.size(); ++i) {
        const auto cond = conditions[i].sorted();
        const int k = static_cast<int>(cond.size());
        if (k > S) throw Error(ErrorCode::ConditionTooLarge, fmt::format("condition has {} components, e_max is {}", k, S));
        auto& st = states[i];
        st.rng = Rng(seeds[i]);
        const int n = draw_count(model.count_prior, k, S, st.rng);
        st.tokens = empty_sequence(tok);
        st.active.assign(static_cast<size_t>(S), 0);
        for (int s = 0; s < n; ++s) {
            st.active[static_cast<size_t>(s)] = 1;
            for (int a = 0; a < kTokensPerSlot; ++a) st.tokens.at(s, static_cast<Attribute>(a)) = tok.mask(static_cast<Attribute>(a));
            if (s < k) st.tokens.at(s, Attribute::Category) = cond[static_cast<size_t>(s)].id;
        }
    }

    auto has_mask = [&](const SamplerState& st) {
        for (int i = 0; i < st.tokens.size(); ++i)
            if (st.tokens.tokens[static_cast<size_t>(i)] == tok.mask(attribute_at(i))) return true;
        return false;
    };

    for (int k = 0; k < steps; ++k) {
        const int t = static_cast<int>(std::lround(static_cast<double>(T) * (steps - k) / steps));
        const int s_next = static_cast<int>(std::lround(static_cast<double>(T) * (steps - k - 1) / steps));
        const double p_unmask = s_next == 0 ? 1.0 : static_cast<double>(t - s_next) / t;

        std::vector<size_t> live;
        std::vector<TokenSequence> batch;
        for (size_t i = 0; i < states.size(); ++i)
            if (has_mask(states[i])) {
                live.push_back(i);
                batch.push_back(states[i].tokens);
            }
        if (live.empty()) break;
        const std::vector<int> ts(live.size(), t);
        const auto logits = model.forward(batch, ts);
        std::array<std::vector<double>, kTokensPerSlot> probs;
        for (int a = 0; a < kTokensPerSlot; ++a) probs[static_cast<size_t>(a)] = nn::softmax_rows(logits[static_cast<size_t>(a)]);

        for (size_t li = 0; li < live.size(); ++li) {
            auto& st = states[live[li]];
            for (int slot = 0; slot < S; ++slot) {
                if (!st.active[static_cast<size_t>(slot)]) continue;
                for (int a = 0; a < kTokensPerSlot; ++a) {
                    const auto attr = static_cast<Attribute>(a);
                    int& token = st.tokens.at(slot, attr);
                    if (token != tok.mask(attr)) continue;
                    if (st.rng.uniform() >= p_unmask) continue;
                    const int cols = tok.vocab_size(attr) - 1;
                    const double* row = probs[static_cast<size_t>(a)].data() + (li * static_cast<size_t>(S) + static_cast<size_t>(slot)) * static_cast<size_t>(cols);
                    // Active slots never take PAD, which is the last output column.
                    token = draw_token(row, cols - 1, st.rng.uniform());
                }
            }
        }
    }

    std::vector<LayoutSample> out;
    out.reserve(states.size());
    for (auto& st : states) {
        auto det = detokenize_layout(st.tokens, tok, cfg.canvas_w, cfg.canvas_h);
        out.push_back({std::move(det.layout), std::move(st.tokens), det.dropped});
    }
    return out;
}

LayoutSample sample_layout(const LayoutDenoiser& model, const ComponentCondition& condition, std::uint64_t seed,
                           const LayoutSampleConfig& cfg) {
    const ComponentCondition conds[1] = {condition};
    const std::uint64_t seeds[1] = {seed};
    return std::move(sample_layouts(model, conds, seeds, cfg).front());
}

// ---- persistence ----

void save_layout_model(const LayoutDenoiser& model, const std::filesystem::path& path) {
    nn::Checkpoint ck;
    ck.kind = "layout-denoiser";
    ck.meta = {{"config", model.config().to_json()}, {"count_prior", model.count_prior}};
    ck.add_module(model, "");
    ck.save(path);
}

std::unique_ptr<LayoutDenoiser> load_layout_model(const std::filesystem::path& path) {
    auto ck = nn::Checkpoint::load(path, "layout-denoiser");
    DenoiserConfig cfg;
    try {
        cfg = DenoiserConfig::from_json(ck.meta.at("config"));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CheckpointMismatch, std::string("layout checkpoint config: ") + e.what());
    }
    auto model = std::make_unique<LayoutDenoiser>(cfg, 0);
    model->load_state(ck.tensors);
    model->count_prior = ck.meta.at("count_prior").get<std::vector<double>>();
    if (model->count_prior.size() != static_cast<size_t>(cfg.tokenizer.e_max) + 1)
        throw Error(ErrorCode::CheckpointMismatch, "count prior length does not match e_max");
    return model;
}

}  // namespace uidiff
