#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mixgen/nn.hpp"
#include "mixgen/schedule.hpp"
#include "mixgen/tensor.hpp"

namespace mixgen {

struct HeadConfig {
    std::int64_t width = 128;
    std::int64_t resblocks = 12;
    std::int64_t cond_dim = 128;
    std::int64_t freq_dim = 256;
    int T_train = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    bool operator==(const HeadConfig&) const = default;
};

struct DiffLossConfig {
    int M = 16;
    double vlb_weight = 1.0;

    bool operator==(const DiffLossConfig&) const = default;
};

// Adaptive-norm residual MLP denoiser: (x_t, t, c) -> [eps_hat | var_logits].
template <class T>
class DiffHead {
public:
    DiffHead(const HeadConfig& cfg, std::uint64_t seed);

    const HeadConfig& config() const { return cfg_; }
    const DiffusionSchedule& schedule() const { return sched_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }

    // x_t [N,3], one timestep per row (training-schedule index), c [N,cond_dim] -> [N,6].
    Tensor<T> forward(const Tensor<T>& x_t, std::span<const int> t, const Tensor<T>& c) const;
    // True while the output layer is still at its zero initialization.
    bool untrained() const;

private:
    struct Block {
        Tensor<T> w1, b1, w2, b2, ada_w, ada_b;
    };

    HeadConfig cfg_;
    DiffusionSchedule sched_;
    ParamStore<T> params_;
    Tensor<T> in_w_, in_b_, t_w1_, t_b1_, t_w2_, t_b2_, c_w_, c_b_;
    std::vector<Block> blocks_;
    Tensor<T> final_ada_w_, final_ada_b_, out_w_, out_b_;
};

// Sinusoidal embedding [cos | sin] of integer timesteps, [N, dim].
std::vector<double> timestep_embedding(std::span<const int> t, std::int64_t dim);

// i.i.d. uniform draws over {0, ..., T-1}.
std::vector<int> timestep_sample(int T, std::int64_t count, std::mt19937_64& rng);

// Noise-prediction MSE plus the learned-variance VLB (bits) evaluated with a
// detached eps_hat; mean over rows and channels. All row-aligned, width 3.
template <class T>
Tensor<T> diffusion_loss_terms(const Tensor<T>& eps_hat, const Tensor<T>& var_logits, std::span<const double> x0,
                               std::span<const double> x_t, std::span<const double> eps, std::span<const int> t,
                               const DiffusionSchedule& sched, double vlb_weight);

// DiffMul loss: targets x0 [N,3] and conditions [N,cond_dim] are replicated M
// times, each replica gets its own timestep and noise. Zero targets -> 0.
template <class T>
Tensor<T> diffloss_forward(const DiffHead<T>& head, std::span<const double> x0, const Tensor<T>& cond,
                           const DiffLossConfig& cfg, std::mt19937_64& rng);

// eps_strong + g * (eps_strong - eps_weak).
void guided_eps(std::span<double> out, std::span<const double> eps_strong, std::span<const double> eps_weak, double g);

template <class T>
struct WeakGuidance {
    const DiffHead<T>* head = nullptr;
    Tensor<T> cond;  // weak backbone's hidden states, row-aligned with the strong ones
    double g = 0.0;
};

// One guided prediction: [N,6] where eps channels are guided and the variance
// logits come from the strong head. Throws ScheduleMismatch.
template <class T>
Tensor<T> guided_denoise(const DiffHead<T>& strong, const DiffHead<T>& weak, const Tensor<T>& x_t,
                         std::span<const int> t, const Tensor<T>& h_strong, const Tensor<T>& h_weak, double g);

// Ancestral sampling over a respaced chain of `steps` timesteps. Row i draws
// its noise from rngs[i]. Throws UntrainedHead when `strict` and untrained.
template <class T>
std::vector<Payload> diffhead_sample(const DiffHead<T>& head, const Tensor<T>& cond, int steps,
                                     std::span<std::mt19937_64> rngs, const WeakGuidance<T>* guidance = nullptr,
                                     bool strict = false);

}  // namespace mixgen
