#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "uidiff/nn/ops.hpp"
#include "uidiff/rng.hpp"

namespace uidiff::nn {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Owner of named parameters and child modules. Children are registered by
/// pointer, so modules are neither copyable nor movable.
class Module {
public:
    Module() = default;
    virtual ~Module() = default;
    Module(const Module&) = delete;
    Module& operator=(const Module&) = delete;

    /// Parameters in registration order, names joined with '.'.
    NamedTensors named_parameters() const;
    std::vector<Tensor> parameters() const;
    size_t num_parameters() const;

    void set_trainable(bool trainable);
    void zero_grad();

    /// Copies values name by name from `other`; every parameter of this module
    /// must exist in `other` with the same shape (ShapeMismatch otherwise).
    void copy_from(const Module& other);

    /// Loads values from a name -> tensor map (CheckpointMismatch on missing or misshapen entries).
    void load_state(const std::map<std::string, Tensor>& state, const std::string& prefix = "");

    /// SHA-256 over names, shapes and raw little-endian values.
    std::string parameter_hash() const;

protected:
    Tensor& add_param(std::string name, Tensor t);
    void add_module(std::string name, Module& child);

private:
    void collect(const std::string& prefix, NamedTensors& out) const;

    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::pair<std::string, Module*>> children_;
};

/// Normal(0, std) fill.
Tensor randn(Shape shape, double std, Rng& rng);

class Linear : public Module {
public:
    Linear(int in_features, int out_features, Rng& rng, bool bias = true, double init_scale = 1.0);
    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
    /// Sets weight and bias to exactly zero.
    void zero_init();

    Tensor weight, bias;
};

class Conv2d : public Module {
public:
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int padding, Rng& rng, double init_scale = 1.0);
    Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride_, padding_); }
    void zero_init();

    Tensor weight, bias;

private:
    int stride_, padding_;
};

class GroupNorm : public Module {
public:
    GroupNorm(int groups, int channels);
    Tensor operator()(const Tensor& x) const { return group_norm(x, groups_, gamma, beta); }
    Tensor gamma, beta;

private:
    int groups_;
};

class LayerNorm : public Module {
public:
    explicit LayerNorm(int dim);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
    Tensor gamma, beta;
};

class Embedding : public Module {
public:
    Embedding(int vocab, int dim, Rng& rng, double std = 0.02);
    Tensor operator()(const std::vector<int>& ids, Shape out_shape) const { return embedding(table, ids, std::move(out_shape)); }
    Tensor table;
};

/// Standard sinusoidal embedding of (possibly fractional) timesteps: [n, dim].
Tensor timestep_embedding(const std::vector<double>& t, int dim);

/// Multi-head attention block with separate q/k/v/out projections.
class MultiHeadAttention : public Module {
public:
    MultiHeadAttention(int dim, int context_dim, int heads, Rng& rng);
    Tensor operator()(const Tensor& x, const Tensor& context) const;

    Linear q, k, v, out;

private:
    int heads_;
};

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. With lr = 0 parameters stay bit-identical.
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWConfig cfg);
    void step();
    void zero_grad();
    long steps() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    std::vector<Tensor> params_;
    AdamWConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

/// Scales gradients so their global L2 norm is at most max_norm; returns the pre-clip norm.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

}  // namespace uidiff::nn
