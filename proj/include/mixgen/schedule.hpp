#pragma once

#include <random>
#include <vector>

#include "mixgen/seqformat.hpp"

namespace mixgen {

enum class ScheduleKind { Ddpm, Respaced };

// Discrete variance-preserving schedule. Index t runs over 0..T-1; alpha_hat
// and sigma_hat are the square roots of alphas_cumprod and its complement.
struct DiffusionSchedule {
    ScheduleKind kind = ScheduleKind::Ddpm;
    int T = 0;
    std::vector<double> betas;
    std::vector<double> alphas_cumprod;
    std::vector<double> alphas_cumprod_prev;
    std::vector<double> alpha_hat;
    std::vector<double> sigma_hat;
    std::vector<double> sqrt_recip_alphas_cumprod;
    std::vector<double> sqrt_recipm1_alphas_cumprod;
    std::vector<double> posterior_variance;
    std::vector<double> posterior_log_variance_clipped;
    std::vector<double> posterior_mean_coef1;  // multiplies x0
    std::vector<double> posterior_mean_coef2;  // multiplies x_t
    // Training-schedule timestep each index stands for (identity for Ddpm).
    std::vector<int> timestep_map;

    bool operator==(const DiffusionSchedule&) const = default;
};

// Linear beta ramp. Throws BadRange.
DiffusionSchedule build_ddpm(int T, double beta_start, double beta_end);
DiffusionSchedule schedule_from_betas(std::vector<double> betas, std::vector<int> timestep_map, ScheduleKind kind);
// Uniformly strided subsequence of `base` with `steps` entries, first 0 and
// last T-1. Throws BadRange unless 1 <= steps <= T.
DiffusionSchedule respace(const DiffusionSchedule& base, int steps);

// Throws TOutOfRange.
Payload q_sample(const Payload& x0, int t, const Payload& eps, const DiffusionSchedule& sched);

// --- target conversions ------------------------------------------------------

struct ScheduleCoeffs {
    double alpha = 0, sigma = 0, dalpha = 0, dsigma = 0;
};

// alpha = 1 - t, sigma = t.
ScheduleCoeffs interpolation_coeffs(double t);
// Continuous-time VP process matching a linear discrete beta ramp:
// beta(s) = T*(beta_start + s*(beta_end - beta_start)), s in [0,1].
ScheduleCoeffs vp_coeffs(double t, int T = 1000, double beta_start = 1e-4, double beta_end = 0.02);

enum class Target { Score, Eps, X0, Velocity };

struct TargetBundle {
    double x_t = 0, score = 0, eps = 0, x0 = 0, v = 0;
    ScheduleCoeffs c;
};

// Given x_t and one target, fills in the other three. Throws SingularConversion.
TargetBundle convert(Target from, double value, double x_t, const ScheduleCoeffs& c);

// --- EDM --------------------------------------------------------------------

struct EdmConfig {
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    int steps = 18;
    double p_mean = -1.4;
    double p_std = 1.2;
    double sigma_data = 1.0;
    bool printed_grid = false;  // the "1/(N-i)", outer 1/rho variant
    bool printed_skip = false;  // c_skip = sigma*sigma_data/(sigma_data^2+sigma^2)
};

// Throws BadRange.
std::vector<double> edm_sigma_grid(const EdmConfig& cfg);

struct EdmPrecondition {
    double c_skip, c_in, c_out, c_noise;
};
EdmPrecondition edm_precondition(double sigma, const EdmConfig& cfg);
double edm_loss_weight(double sigma, const EdmConfig& cfg);
// ln sigma ~ N(p_mean, p_std^2).
double edm_sample_sigma(const EdmConfig& cfg, std::mt19937_64& rng);

}  // namespace mixgen
