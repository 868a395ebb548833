#include "uidiff/ui/schedule.hpp"

#include <cmath>

#include <fmt/format.h>

#include "uidiff/error.hpp"

namespace uidiff::ui {

ContinuousSchedule::ContinuousSchedule(int T, double beta_start, double beta_end)
    : T_(T), beta_start_(beta_start), beta_end_(beta_end) {
    if (T < 1) throw Error(ErrorCode::InvalidArgument, "schedule needs T >= 1");
    if (!(beta_start > 0 && beta_end < 1 && beta_start <= beta_end))
        throw Error(ErrorCode::InvalidArgument, fmt::format("bad beta range [{}, {}]", beta_start, beta_end));
    alpha_bar_.resize(static_cast<size_t>(T) + 1);
    alpha_bar_[0] = 1.0;
    for (int t = 1; t <= T; ++t) alpha_bar_[static_cast<size_t>(t)] = alpha_bar_[static_cast<size_t>(t) - 1] * (1.0 - beta(t));
}

double ContinuousSchedule::beta(int t) const {
    if (t < 1 || t > T_) throw Error(ErrorCode::InvalidArgument, fmt::format("beta: t={} outside [1, {}]", t, T_));
    if (T_ == 1) return beta_start_;
    return beta_start_ + (beta_end_ - beta_start_) * static_cast<double>(t - 1) / (T_ - 1);
}

double ContinuousSchedule::alpha_bar(int t) const {
    if (t < 0 || t > T_) throw Error(ErrorCode::InvalidArgument, fmt::format("alpha_bar: t={} outside [0, {}]", t, T_));
    return alpha_bar_[static_cast<size_t>(t)];
}

std::vector<std::pair<int, int>> ContinuousSchedule::sampler_timesteps(int steps) const {
    if (steps < 1 || steps > T_) throw Error(ErrorCode::InvalidArgument, fmt::format("sampler steps {} outside [1, {}]", steps, T_));
    std::vector<int> ts;
    for (int i = 0; i <= steps; ++i) ts.push_back(static_cast<int>(std::lround(T_ - static_cast<double>(i) * T_ / steps)));
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < steps; ++i) out.emplace_back(ts[static_cast<size_t>(i)], ts[static_cast<size_t>(i) + 1]);
    return out;
}

nlohmann::json ContinuousSchedule::to_json() const {
    return {{"type", "linear"}, {"T", T_}, {"beta_start", beta_start_}, {"beta_end", beta_end_}};
}

ContinuousSchedule ContinuousSchedule::from_json(const nlohmann::json& j) {
    return ContinuousSchedule(j.at("T").get<int>(), j.at("beta_start").get<double>(), j.at("beta_end").get<double>());
}

bool ContinuousSchedule::operator==(const ContinuousSchedule& o) const {
    return T_ == o.T_ && beta_start_ == o.beta_start_ && beta_end_ == o.beta_end_;
}

nn::Tensor add_noise(const nn::Tensor& latent, std::span<const int> t, const nn::Tensor& eps, const ContinuousSchedule& s) {
    if (latent.shape() != eps.shape())
        throw Error(ErrorCode::ShapeMismatch, fmt::format("add_noise: latent {} vs eps {}", nn::shape_str(latent.shape()), nn::shape_str(eps.shape())));
    const int B = latent.dim(0);
    if (static_cast<int>(t.size()) != B) throw Error(ErrorCode::ShapeMismatch, "add_noise: one timestep per batch item");
    const size_t per = latent.numel() / static_cast<size_t>(B);
    std::vector<double> out(latent.numel());
    const auto& x = latent.values();
    const auto& e = eps.values();
    for (int b = 0; b < B; ++b) {
        const double ab = s.alpha_bar(t[static_cast<size_t>(b)]);
        const double a = std::sqrt(ab), c = std::sqrt(1.0 - ab);
        for (size_t i = b * per; i < (b + 1) * per; ++i) out[i] = a * x[i] + c * e[i];
    }
    return nn::Tensor::from(latent.shape(), std::move(out));
}

nn::Tensor add_noise(const nn::Tensor& latent, int t, const nn::Tensor& eps, const ContinuousSchedule& s) {
    std::vector<int> ts(static_cast<size_t>(latent.dim(0)), t);
    return add_noise(latent, ts, eps, s);
}

nn::Tensor gaussian(nn::Shape shape, Rng& rng) {
    std::vector<double> v(nn::shape_numel(shape));
    for (auto& x : v) x = rng.normal();
    return nn::Tensor::from(std::move(shape), std::move(v));
}

}  // namespace uidiff::ui
