#include "mixgen/optim.hpp"

#include <cmath>
#include <numbers>

namespace mixgen {

template <class T>
Adam<T>::Adam(std::vector<std::pair<std::string, Tensor<T>>> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    for (const auto& [_, p] : params_) {
        m_.emplace_back(static_cast<std::size_t>(p.size()), T(0));
        v_.emplace_back(static_cast<std::size_t>(p.size()), T(0));
    }
}

template <class T>
void Adam<T>::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i].second;
        if (!p.has_grad()) continue;
        auto g = p.grad();
        auto x = p.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < x.size(); ++k) {
            double gk = g[k];
            if (cfg_.weight_decay != 0.0) gk += cfg_.weight_decay * double(x[k]);
            m[k] = T(cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk);
            v[k] = T(cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk);
            const double mh = m[k] / bc1;
            const double vh = v[k] / bc2;
            x[k] = T(double(x[k]) - lr * mh / (std::sqrt(vh) + cfg_.eps));
        }
    }
}

double cosine_lr(double lr, std::int64_t step, std::int64_t total, std::int64_t warmup, double min_ratio) {
    if (warmup > 0 && step < warmup) return lr * double(step + 1) / double(warmup);
    const double span = double(std::max<std::int64_t>(total - warmup, 1));
    const double progress = std::min(1.0, double(step - warmup) / span);
    const double floor = lr * min_ratio;
    return floor + 0.5 * (lr - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

template <class T>
double clip_grad_norm(const std::vector<std::pair<std::string, Tensor<T>>>& params, double max_norm) {
    double total = 0.0;
    for (const auto& [_, p] : params) {
        if (!p.has_grad()) continue;
        for (T g : p.grad()) total += double(g) * double(g);
    }
    const double norm = std::sqrt(total);
    if (max_norm > 0.0 && norm > max_norm) {
        const T s = T(max_norm / (norm + 1e-12));
        for (const auto& [_, p] : params) {
            if (!p.has_grad()) continue;
            auto t = p;
            for (auto& g : t.mutable_grad()) g *= s;
        }
    }
    return norm;
}

template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm(const std::vector<std::pair<std::string, Tensor<float>>>&, double);
template double clip_grad_norm(const std::vector<std::pair<std::string, Tensor<double>>>&, double);

}  // namespace mixgen
