#include "mixgen/schedule.hpp"

#include <cmath>
#include <string>

#include "mixgen/error.hpp"

namespace mixgen {

DiffusionSchedule build_ddpm(int T, double beta_start, double beta_end) {
    if (T < 1 || beta_start < 0.0 || beta_end < beta_start || beta_end >= 1.0) {
        throw Error(ErrorKind::BadRange, "need T >= 1 and 0 <= beta_start <= beta_end < 1, got T=" + std::to_string(T) +
                                             " beta=[" + std::to_string(beta_start) + ", " + std::to_string(beta_end) +
                                             "]");
    }
    std::vector<double> betas(T);
    for (int t = 0; t < T; ++t) {
        betas[t] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * double(t) / double(T - 1);
    }
    std::vector<int> map(T);
    for (int t = 0; t < T; ++t) map[t] = t;
    return schedule_from_betas(std::move(betas), std::move(map), ScheduleKind::Ddpm);
}

DiffusionSchedule schedule_from_betas(std::vector<double> betas, std::vector<int> timestep_map, ScheduleKind kind) {
    DiffusionSchedule s;
    s.kind = kind;
    s.T = static_cast<int>(betas.size());
    s.betas = std::move(betas);
    s.timestep_map = std::move(timestep_map);
    const int T = s.T;
    s.alphas_cumprod.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        prod *= 1.0 - s.betas[t];
        s.alphas_cumprod[t] = prod;
    }
    s.alphas_cumprod_prev.resize(T);
    for (int t = 0; t < T; ++t) s.alphas_cumprod_prev[t] = t == 0 ? 1.0 : s.alphas_cumprod[t - 1];

    auto fill = [T](std::vector<double>& v, auto f) {
        v.resize(T);
        for (int t = 0; t < T; ++t) v[t] = f(t);
    };
    const auto& ac = s.alphas_cumprod;
    const auto& acp = s.alphas_cumprod_prev;
    fill(s.alpha_hat, [&](int t) { return std::sqrt(ac[t]); });
    fill(s.sigma_hat, [&](int t) { return std::sqrt(1.0 - ac[t]); });
    fill(s.sqrt_recip_alphas_cumprod, [&](int t) { return 1.0 / std::sqrt(ac[t]); });
    fill(s.sqrt_recipm1_alphas_cumprod, [&](int t) { return std::sqrt(1.0 / ac[t] - 1.0); });
    fill(s.posterior_variance, [&](int t) {
        double denom = 1.0 - ac[t];
        return denom > 0.0 ? s.betas[t] * (1.0 - acp[t]) / denom : 0.0;
    });
    fill(s.posterior_log_variance_clipped, [&](int t) {
        double v = t == 0 ? (T > 1 ? s.posterior_variance[1] : s.betas[0]) : s.posterior_variance[t];
        return std::log(v);
    });
    fill(s.posterior_mean_coef1, [&](int t) {
        double denom = 1.0 - ac[t];
        return denom > 0.0 ? s.betas[t] * std::sqrt(acp[t]) / denom : 1.0;
    });
    fill(s.posterior_mean_coef2, [&](int t) {
        double denom = 1.0 - ac[t];
        return denom > 0.0 ? (1.0 - acp[t]) * std::sqrt(1.0 - s.betas[t]) / denom : 0.0;
    });
    return s;
}

DiffusionSchedule respace(const DiffusionSchedule& base, int steps) {
    if (steps < 1 || steps > base.T) {
        throw Error(ErrorKind::BadRange,
                    "sampling steps " + std::to_string(steps) + " outside [1, " + std::to_string(base.T) + "]");
    }
    std::vector<int> use(steps);
    if (steps == 1) {
        use[0] = base.T - 1;
    } else {
        for (int i = 0; i < steps; ++i) {
            use[i] = static_cast<int>(std::lround(double(i) * double(base.T - 1) / double(steps - 1)));
        }
    }
    std::vector<double> betas;
    double last = 1.0;
    for (int t : use) {
        betas.push_back(1.0 - base.alphas_cumprod[t] / last);
        last = base.alphas_cumprod[t];
    }
    std::vector<int> map;
    for (int t : use) map.push_back(base.timestep_map.empty() ? t : base.timestep_map[t]);
    return schedule_from_betas(std::move(betas), std::move(map), ScheduleKind::Respaced);
}

Payload q_sample(const Payload& x0, int t, const Payload& eps, const DiffusionSchedule& sched) {
    if (t < 0 || t >= sched.T) {
        throw Error(ErrorKind::TOutOfRange, "t=" + std::to_string(t) + " outside [0, " + std::to_string(sched.T) + ")");
    }
    Payload out;
    for (std::size_t c = 0; c < kPayloadWidth; ++c) {
        out[c] = sched.alpha_hat[t] * x0[c] + sched.sigma_hat[t] * eps[c];
    }
    return out;
}

ScheduleCoeffs interpolation_coeffs(double t) { return {1.0 - t, t, -1.0, 1.0}; }

ScheduleCoeffs vp_coeffs(double t, int T, double beta_start, double beta_end) {
    const double b0 = beta_start * T;
    const double b1 = beta_end * T;
    const double log_ac = -(b0 * t + 0.5 * (b1 - b0) * t * t);
    const double alpha = std::exp(0.5 * log_ac);
    const double sigma = std::sqrt(-std::expm1(log_ac));
    const double beta_t = b0 + (b1 - b0) * t;
    const double dalpha = -0.5 * beta_t * alpha;
    const double dsigma = -alpha * dalpha / sigma;
    return {alpha, sigma, dalpha, dsigma};
}

TargetBundle convert(Target from, double value, double x_t, const ScheduleCoeffs& c) {
    TargetBundle b;
    b.x_t = x_t;
    b.c = c;
    auto singular = [](const char* what) { throw Error(ErrorKind::SingularConversion, what); };
    if (c.sigma == 0.0) singular("sigma is zero");
    switch (from) {
        case Target::X0:
            b.x0 = value;
            b.eps = (x_t - c.alpha * value) / c.sigma;
            break;
        case Target::Score:
        case Target::Eps: {
            if (c.alpha == 0.0) singular("alpha is zero");
            b.eps = from == Target::Eps ? value : -c.sigma * value;
            b.x0 = (x_t - c.sigma * b.eps) / c.alpha;
            break;
        }
        case Target::Velocity: {
            const double det = c.alpha * c.dsigma - c.sigma * c.dalpha;
            if (det == 0.0) singular("alpha*dsigma - sigma*dalpha is zero");
            b.x0 = (c.dsigma * x_t - c.sigma * value) / det;
            b.eps = (c.alpha * value - c.dalpha * x_t) / det;
            break;
        }
    }
    b.score = from == Target::Score ? value : -b.eps / c.sigma;
    b.v = from == Target::Velocity ? value : c.dalpha * b.x0 + c.dsigma * b.eps;
    return b;
}

std::vector<double> edm_sigma_grid(const EdmConfig& cfg) {
    if (!(cfg.sigma_min > 0.0 && cfg.sigma_min < cfg.sigma_max && cfg.rho > 0.0 && cfg.steps >= 2)) {
        throw Error(ErrorKind::BadRange, "EDM grid needs 0 < sigma_min < sigma_max, rho > 0, steps >= 2");
    }
    const int n = cfg.steps;
    const double lo = std::pow(cfg.sigma_min, 1.0 / cfg.rho);
    const double hi = std::pow(cfg.sigma_max, 1.0 / cfg.rho);
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        if (cfg.printed_grid) {
            out[i] = std::pow(hi + (lo - hi) / double(n - i), 1.0 / cfg.rho);
        } else {
            out[i] = std::pow(hi + double(i) / double(n - 1) * (lo - hi), cfg.rho);
        }
    }
    return out;
}

EdmPrecondition edm_precondition(double sigma, const EdmConfig& cfg) {
    const double sd2 = cfg.sigma_data * cfg.sigma_data;
    const double denom = sd2 + sigma * sigma;
    EdmPrecondition p{};
    p.c_skip = cfg.printed_skip ? sigma * cfg.sigma_data / denom : sd2 / denom;
    p.c_out = sigma * cfg.sigma_data / std::sqrt(denom);
    p.c_in = 1.0 / std::sqrt(denom);
    p.c_noise = std::log(sigma) / 4.0;
    return p;
}

double edm_loss_weight(double sigma, const EdmConfig& cfg) {
    const double sd2 = cfg.sigma_data * cfg.sigma_data;
    const double r = sd2 / (sd2 + sigma * sigma);
    return r * r;
}

double edm_sample_sigma(const EdmConfig& cfg, std::mt19937_64& rng) {
    std::normal_distribution<double> n(cfg.p_mean, cfg.p_std);
    return std::exp(n(rng));
}

}  // namespace mixgen
