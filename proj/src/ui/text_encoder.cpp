#include "uidiff/ui/text_encoder.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <map>

#include <spdlog/spdlog.h>

#include "uidiff/error.hpp"
#include "uidiff/hash.hpp"
#include "uidiff/rico.hpp"

namespace uidiff::ui {

using nlohmann::json;

WordTokenizer::WordTokenizer() : vocab_{"<pad>", "<unk>", "<mask>"} {
    for (int i = 0; i < 3; ++i) index_[vocab_[static_cast<size_t>(i)]] = i;
}

std::vector<std::string> WordTokenizer::words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

WordTokenizer WordTokenizer::build(const std::vector<std::string>& corpus, int min_count, int max_vocab) {
    std::map<std::string, int> counts;
    for (const auto& text : corpus)
        for (auto& w : words(text)) ++counts[w];
    // The default prompt is always representable.
    for (auto& w : words(kDefaultPrompt)) counts[w] = std::max(counts[w], min_count);
    std::vector<std::pair<std::string, int>> sorted(counts.begin(), counts.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    WordTokenizer tk;
    for (const auto& [w, n] : sorted) {
        if (n < min_count || tk.size() >= max_vocab) break;
        tk.index_[w] = tk.size();
        tk.vocab_.push_back(w);
    }
    return tk;
}

std::vector<int> WordTokenizer::encode(const std::string& text, int max_len, bool* truncated) const {
    const auto ws = words(text);
    std::vector<int> ids(static_cast<size_t>(max_len), kPad);
    for (size_t i = 0; i < ws.size() && i < ids.size(); ++i) {
        auto it = index_.find(ws[i]);
        ids[i] = it == index_.end() ? kUnk : it->second;
    }
    if (truncated) *truncated = ws.size() > ids.size();
    return ids;
}

json WordTokenizer::to_json() const { return vocab_; }

WordTokenizer WordTokenizer::from_json(const json& j) {
    WordTokenizer tk;
    const auto v = j.get<std::vector<std::string>>();
    if (v.size() < 3 || v[0] != "<pad>" || v[1] != "<unk>" || v[2] != "<mask>")
        throw Error(ErrorCode::CheckpointMismatch, "tokenizer vocabulary lacks the special tokens");
    tk.vocab_ = v;
    tk.index_.clear();
    for (size_t i = 0; i < v.size(); ++i) tk.index_[v[i]] = static_cast<int>(i);
    return tk;
}

std::string WordTokenizer::hash() const { return sha256_hex(to_json().dump()); }

json TextEncoderConfig::to_json() const { return {{"max_len", max_len}, {"dim", dim}, {"heads", heads}}; }

TextEncoderConfig TextEncoderConfig::from_json(const json& j) {
    TextEncoderConfig c;
    c.max_len = j.at("max_len").get<int>();
    c.dim = j.at("dim").get<int>();
    c.heads = j.at("heads").get<int>();
    return c;
}

TextEncoder::TextEncoder(WordTokenizer tokenizer, TextEncoderConfig cfg, std::uint64_t seed)
    : init_rng_(seed),
      tok(tokenizer.size(), cfg.dim, init_rng_),
      pos(nn::randn({cfg.max_len, cfg.dim}, 0.02, init_rng_)),
      ln1(cfg.dim),
      ln2(cfg.dim),
      ln_out(cfg.dim),
      attn(cfg.dim, cfg.dim, cfg.heads, init_rng_),
      ff1(cfg.dim, 2 * cfg.dim, init_rng_),
      ff2(2 * cfg.dim, cfg.dim, init_rng_),
      head(cfg.dim, tokenizer.size(), init_rng_),
      tokenizer_(std::move(tokenizer)),
      cfg_(cfg) {
    add_module("tok", tok);
    add_param("pos", pos);
    add_module("ln1", ln1);
    add_module("attn", attn);
    add_module("ln2", ln2);
    add_module("ff1", ff1);
    add_module("ff2", ff2);
    add_module("ln_out", ln_out);
    add_module("head", head);
}

nn::Tensor TextEncoder::forward(const std::vector<int>& ids, int batch) const {
    const int L = cfg_.max_len, D = cfg_.dim;
    if (static_cast<int>(ids.size()) != batch * L) throw Error(ErrorCode::ShapeMismatch, "text ids must be batch * max_len");
    std::vector<int> positions(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i) % L;
    nn::Tensor x = nn::add(tok(ids, {batch, L, D}), nn::embedding(pos, positions, {batch, L, D}));
    const nn::Tensor h = ln1(x);
    x = nn::add(x, attn(h, h));
    x = nn::add(x, ff2(nn::silu(ff1(ln2(x)))));
    return ln_out(x);
}

nn::Tensor TextEncoder::encode_batch(const std::vector<std::string>& prompts) const {
    nn::NoGradGuard ng;
    const int B = static_cast<int>(prompts.size());
    const size_t per = static_cast<size_t>(cfg_.max_len) * cfg_.dim;
    std::vector<double> out;
    out.reserve(per * prompts.size());
    for (const auto& p : prompts) {
        const auto one = encode(p);
        out.insert(out.end(), one.values().begin(), one.values().end());
    }
    return nn::Tensor::from({B, cfg_.max_len, cfg_.dim}, std::move(out));
}

nn::Tensor TextEncoder::encode(const std::string& prompt) const {
    const bool is_default = prompt == kDefaultPrompt;
    if (is_default) {
        std::lock_guard lk(cache_mu_);
        if (default_cache_) return nn::Tensor::from({1, cfg_.max_len, cfg_.dim}, *default_cache_);
    }
    bool truncated = false;
    const auto ids = tokenizer_.encode(prompt, cfg_.max_len, &truncated);
    static std::atomic<bool> warned{false};
    if (truncated && !warned.exchange(true)) spdlog::warn("prompt longer than {} words was truncated (reported once)", cfg_.max_len);
    nn::NoGradGuard ng;
    nn::Tensor out = forward(ids, 1).detach();
    if (is_default) {
        std::lock_guard lk(cache_mu_);
        default_cache_ = out.values();
    }
    return out;
}

void TextEncoder::invalidate_cache() {
    std::lock_guard lk(cache_mu_);
    default_cache_.reset();
}

std::vector<double> pretrain_text_encoder(TextEncoder& enc, const std::vector<std::string>& captions, const TextPretrainConfig& cfg) {
    std::vector<double> trace;
    if (captions.empty() || cfg.steps <= 0) return trace;
    const int L = enc.config().max_len, V = enc.tokenizer().size();
    std::vector<std::vector<int>> encoded;
    for (const auto& c : captions) encoded.push_back(enc.tokenizer().encode(c, L));
    enc.set_trainable(true);
    nn::AdamW opt(enc.parameters(), {.lr = cfg.lr, .weight_decay = 0.0});
    Rng rng(cfg.seed);
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<int> ids, targets;
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& seq = encoded[rng.uniform_int(encoded.size())];
            int forced = -1;  // at least one masked word per sequence
            const int n_words = static_cast<int>(std::count_if(seq.begin(), seq.end(), [](int v) { return v != WordTokenizer::kPad; }));
            if (n_words > 0) forced = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_words)));
            for (int i = 0; i < L; ++i) {
                const int v = seq[static_cast<size_t>(i)];
                const bool mask = v != WordTokenizer::kPad && (i == forced || rng.uniform() < cfg.mask_prob);
                ids.push_back(mask ? WordTokenizer::kMask : v);
                targets.push_back(mask ? v : -1);
            }
        }
        opt.zero_grad();
        const nn::Tensor h = enc.forward(ids, cfg.batch);
        const nn::Tensor logits = enc.head(h).reshape({cfg.batch * L, V});
        const int n = static_cast<int>(std::count_if(targets.begin(), targets.end(), [](int v) { return v >= 0; }));
        if (n == 0) continue;
        const nn::Tensor loss = nn::scale(nn::cross_entropy_sum(logits, targets), 1.0 / n);
        if (!std::isfinite(loss.item())) throw Error(ErrorCode::NonFiniteLoss, "text encoder pretraining diverged");
        nn::backward(loss);
        nn::clip_grad_norm(enc.parameters(), 1.0);
        opt.step();
        trace.push_back(loss.item());
    }
    enc.set_trainable(false);
    enc.invalidate_cache();
    return trace;
}

}  // namespace uidiff::ui
