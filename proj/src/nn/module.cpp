#include "uidiff/nn/module.hpp"

#include <cmath>

#include <fmt/format.h>

#include "uidiff/error.hpp"
#include "uidiff/hash.hpp"

namespace uidiff::nn {

Tensor& Module::add_param(std::string name, Tensor t) {
    t.set_requires_grad(true);
    params_.emplace_back(std::move(name), std::move(t));
    return params_.back().second;
}

void Module::add_module(std::string name, Module& child) { children_.emplace_back(std::move(name), &child); }

void Module::collect(const std::string& prefix, NamedTensors& out) const {
    for (const auto& [name, t] : params_) out.emplace_back(prefix + name, t);
    for (const auto& [name, child] : children_) child->collect(prefix + name + ".", out);
}

NamedTensors Module::named_parameters() const {
    NamedTensors out;
    collect("", out);
    return out;
}

std::vector<Tensor> Module::parameters() const {
    std::vector<Tensor> out;
    for (auto& [_, t] : named_parameters()) out.push_back(t);
    return out;
}

size_t Module::num_parameters() const {
    size_t n = 0;
    for (auto& [_, t] : named_parameters()) n += t.numel();
    return n;
}

void Module::set_trainable(bool trainable) {
    for (auto& [_, t] : named_parameters()) {
        t.set_requires_grad(trainable);
        if (!trainable) t.zero_grad();
    }
}

void Module::zero_grad() {
    for (auto& [_, t] : named_parameters()) t.zero_grad();
}

void Module::copy_from(const Module& other) {
    std::map<std::string, Tensor> src;
    for (auto& [name, t] : other.named_parameters()) src.emplace(name, t);
    for (auto& [name, t] : named_parameters()) {
        auto it = src.find(name);
        if (it == src.end()) throw Error(ErrorCode::ShapeMismatch, "copy_from: source lacks parameter " + name);
        if (it->second.shape() != t.shape())
            throw Error(ErrorCode::ShapeMismatch, fmt::format("copy_from: {} is {} vs {}", name, shape_str(t.shape()),
                                                              shape_str(it->second.shape())));
        t.values() = it->second.values();
    }
}

void Module::load_state(const std::map<std::string, Tensor>& state, const std::string& prefix) {
    for (auto& [name, t] : named_parameters()) {
        auto it = state.find(prefix + name);
        if (it == state.end()) throw Error(ErrorCode::CheckpointMismatch, "checkpoint lacks parameter " + prefix + name);
        if (it->second.shape() != t.shape())
            throw Error(ErrorCode::CheckpointMismatch, fmt::format("parameter {} is {} in checkpoint, {} in model", prefix + name,
                                                                   shape_str(it->second.shape()), shape_str(t.shape())));
        t.values() = it->second.values();
    }
}

std::string Module::parameter_hash() const {
    Sha256 h;
    for (const auto& [name, t] : named_parameters()) {
        h.update(name);
        h.update(shape_str(t.shape()));
        h.update(t.values().data(), t.values().size() * sizeof(double));
    }
    return h.hex_digest();
}

Tensor randn(Shape shape, double std, Rng& rng) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.normal() * std;
    return Tensor::from(std::move(shape), std::move(v));
}

Linear::Linear(int in_features, int out_features, Rng& rng, bool with_bias, double init_scale) {
    weight = add_param("weight", randn({out_features, in_features}, init_scale / std::sqrt(in_features), rng));
    if (with_bias) bias = add_param("bias", Tensor::zeros({out_features}));
}

void Linear::zero_init() {
    std::fill(weight.values().begin(), weight.values().end(), 0.0);
    if (bias.defined()) std::fill(bias.values().begin(), bias.values().end(), 0.0);
}

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, int padding, Rng& rng, double init_scale)
    : stride_(stride), padding_(padding) {
    weight = add_param("weight", randn({out_ch, in_ch, kernel, kernel}, init_scale / std::sqrt(in_ch * kernel * kernel), rng));
    bias = add_param("bias", Tensor::zeros({out_ch}));
}

void Conv2d::zero_init() {
    std::fill(weight.values().begin(), weight.values().end(), 0.0);
    std::fill(bias.values().begin(), bias.values().end(), 0.0);
}

GroupNorm::GroupNorm(int groups, int channels) : groups_(groups) {
    gamma = add_param("gamma", Tensor::full({channels}, 1.0));
    beta = add_param("beta", Tensor::zeros({channels}));
}

LayerNorm::LayerNorm(int dim) {
    gamma = add_param("gamma", Tensor::full({dim}, 1.0));
    beta = add_param("beta", Tensor::zeros({dim}));
}

Embedding::Embedding(int vocab, int dim, Rng& rng, double std) { table = add_param("table", randn({vocab, dim}, std, rng)); }

Tensor timestep_embedding(const std::vector<double>& t, int dim) {
    const int half = dim / 2;
    std::vector<double> out(t.size() * static_cast<size_t>(dim), 0.0);
    for (size_t n = 0; n < t.size(); ++n) {
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * i / half);
            out[n * dim + i] = std::sin(t[n] * freq);
            out[n * dim + half + i] = std::cos(t[n] * freq);
        }
    }
    return Tensor::from({static_cast<int>(t.size()), dim}, std::move(out));
}

MultiHeadAttention::MultiHeadAttention(int dim, int context_dim, int heads, Rng& rng)
    : q(dim, dim, rng, false), k(context_dim, dim, rng, false), v(context_dim, dim, rng, false), out(dim, dim, rng), heads_(heads) {
    add_module("q", q);
    add_module("k", k);
    add_module("v", v);
    add_module("out", out);
}

Tensor MultiHeadAttention::operator()(const Tensor& x, const Tensor& context) const {
    return out(attention(q(x), k(context), v(context), heads_));
}

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.has_grad()) continue;
        auto& val = p.values();
        auto g = p.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (size_t j = 0; j < val.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
            val[j] = val[j] * decay - cfg_.lr * update;
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
    double sq = 0;
    for (const auto& p : params)
        if (p.has_grad())
            for (double g : p.node()->grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        const double s = max_norm / norm;
        for (const auto& p : params)
            if (p.has_grad())
                for (double& g : p.node()->grad) g *= s;
    }
    return norm;
}

}  // namespace uidiff::nn
