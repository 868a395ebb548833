#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "uidiff/nn/tensor.hpp"
#include "uidiff/rng.hpp"

namespace uidiff::ui {

/// Linear beta schedule over t = 1..T; alpha_bar(0) = 1.
class ContinuousSchedule {
public:
    explicit ContinuousSchedule(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02);

    int T() const { return T_; }
    double beta(int t) const;
    double alpha_bar(int t) const;

    /// Descending timesteps for a deterministic sampler with `steps` iterations,
    /// each paired with its predecessor; the last predecessor is 0.
    /// For T = 1000, steps = 50: (1000, 980), (980, 960), ..., (20, 0).
    std::vector<std::pair<int, int>> sampler_timesteps(int steps) const;

    nlohmann::json to_json() const;
    static ContinuousSchedule from_json(const nlohmann::json& j);
    bool operator==(const ContinuousSchedule& o) const;

private:
    int T_;
    double beta_start_, beta_end_;
    std::vector<double> alpha_bar_;  // size T + 1
};

/// sqrt(abar_t) * latent + sqrt(1 - abar_t) * eps, one t per batch item. No graph.
nn::Tensor add_noise(const nn::Tensor& latent, std::span<const int> t, const nn::Tensor& eps, const ContinuousSchedule& s);
nn::Tensor add_noise(const nn::Tensor& latent, int t, const nn::Tensor& eps, const ContinuousSchedule& s);

/// Standard normal tensor.
nn::Tensor gaussian(nn::Shape shape, Rng& rng);

}  // namespace uidiff::ui
