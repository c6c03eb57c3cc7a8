#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mixgen/tensor.hpp"

namespace mixgen {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

template <class T>
class Adam {
public:
    Adam(std::vector<std::pair<std::string, Tensor<T>>> params, AdamConfig cfg = {});

    // Applies one update from the current grads; params without grads are skipped.
    void step(double lr);
    std::int64_t steps() const { return t_; }

    // Moment buffers by parameter index, for checkpointing.
    std::vector<std::vector<T>>& first_moments() { return m_; }
    std::vector<std::vector<T>>& second_moments() { return v_; }
    void set_steps(std::int64_t t) { t_ = t; }
    const std::vector<std::pair<std::string, Tensor<T>>>& params() const { return params_; }

private:
    std::vector<std::pair<std::string, Tensor<T>>> params_;
    AdamConfig cfg_;
    std::vector<std::vector<T>> m_, v_;
    std::int64_t t_ = 0;
};

// Cosine decay from lr to lr*min_ratio over `total` steps after a linear warmup.
double cosine_lr(double lr, std::int64_t step, std::int64_t total, std::int64_t warmup = 0, double min_ratio = 0.0);

// Scales all grads so their joint L2 norm is at most max_norm; returns the
// norm before scaling.
template <class T>
double clip_grad_norm(const std::vector<std::pair<std::string, Tensor<T>>>& params, double max_norm);

}  // namespace mixgen
