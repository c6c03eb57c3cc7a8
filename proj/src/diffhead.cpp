#include "mixgen/diffhead.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mixgen/error.hpp"

namespace mixgen {

template <class T>
DiffHead<T>::DiffHead(const HeadConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), sched_(build_ddpm(cfg.T_train, cfg.beta_start, cfg.beta_end)) {
    if (cfg_.width < 1 || cfg_.resblocks < 1 || cfg_.cond_dim < 1 || cfg_.freq_dim < 2 || cfg_.freq_dim % 2) {
        throw Error(ErrorKind::InvalidConfig, "diffusion head needs width, resblocks, cond_dim >= 1 and even freq_dim");
    }
    std::mt19937_64 rng(seed);
    const auto w = cfg_.width;
    in_w_ = params_.add("head.in.w", {3, w}, Init::XavierUniform, rng);
    in_b_ = params_.add("head.in.b", {w}, Init::Zeros, rng);
    t_w1_ = params_.add("head.time.w1", {cfg_.freq_dim, w}, Init::Normal, rng);
    t_b1_ = params_.add("head.time.b1", {w}, Init::Zeros, rng);
    t_w2_ = params_.add("head.time.w2", {w, w}, Init::Normal, rng);
    t_b2_ = params_.add("head.time.b2", {w}, Init::Zeros, rng);
    c_w_ = params_.add("head.cond.w", {cfg_.cond_dim, w}, Init::XavierUniform, rng);
    c_b_ = params_.add("head.cond.b", {w}, Init::Zeros, rng);
    for (std::int64_t r = 0; r < cfg_.resblocks; ++r) {
        const std::string p = "head.block" + std::to_string(r) + ".";
        Block b;
        b.w1 = params_.add(p + "w1", {w, w}, Init::XavierUniform, rng);
        b.b1 = params_.add(p + "b1", {w}, Init::Zeros, rng);
        b.w2 = params_.add(p + "w2", {w, w}, Init::XavierUniform, rng);
        b.b2 = params_.add(p + "b2", {w}, Init::Zeros, rng);
        b.ada_w = params_.add(p + "ada.w", {w, 3 * w}, Init::Zeros, rng);
        b.ada_b = params_.add(p + "ada.b", {3 * w}, Init::Zeros, rng);
        blocks_.push_back(std::move(b));
    }
    final_ada_w_ = params_.add("head.final.ada.w", {w, 2 * w}, Init::Zeros, rng);
    final_ada_b_ = params_.add("head.final.ada.b", {2 * w}, Init::Zeros, rng);
    out_w_ = params_.add("head.out.w", {w, 6}, Init::Zeros, rng);
    out_b_ = params_.add("head.out.b", {6}, Init::Zeros, rng);
}

std::vector<double> timestep_embedding(std::span<const int> t, std::int64_t dim) {
    const std::int64_t half = dim / 2;
    std::vector<double> out(t.size() * static_cast<std::size_t>(dim));
    for (std::size_t r = 0; r < t.size(); ++r) {
        for (std::int64_t i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
            const double arg = double(t[r]) * freq;
            out[r * dim + i] = std::cos(arg);
            out[r * dim + half + i] = std::sin(arg);
        }
    }
    return out;
}

template <class T>
Tensor<T> DiffHead<T>::forward(const Tensor<T>& x_t, std::span<const int> t, const Tensor<T>& c) const {
    const auto n = x_t.dim(0);
    if (x_t.rank() != 2 || x_t.dim(1) != 3 || c.rank() != 2 || c.dim(0) != n || c.dim(1) != cfg_.cond_dim ||
        static_cast<std::int64_t>(t.size()) != n) {
        throw Error(ErrorKind::ShapeMismatch, "diffusion head inputs " + shape_str(x_t.shape()) + ", " +
                                                  shape_str(c.shape()) + ", " + std::to_string(t.size()) + " steps");
    }
    for (int ti : t) {
        if (ti < 0 || ti >= cfg_.T_train) throw Error(ErrorKind::TOutOfRange, "t=" + std::to_string(ti));
    }
    const auto w = cfg_.width;
    const T eps = T(1e-6);
    auto emb = timestep_embedding(t, cfg_.freq_dim);
    auto temb = Tensor<T>::from({n, cfg_.freq_dim}, std::vector<T>(emb.begin(), emb.end()));
    auto te = linear(silu(linear(temb, t_w1_, t_b1_)), t_w2_, t_b2_);
    auto y = silu(add(te, linear(c, c_w_, c_b_)));

    auto x = linear(x_t, in_w_, in_b_);
    for (const auto& b : blocks_) {
        auto mod = split(linear(y, b.ada_w, b.ada_b), 1, {w, w, w});
        auto h = add(mul(layer_norm(x, -1, eps), add_scalar(mod[1], T(1))), mod[0]);
        h = linear(silu(linear(h, b.w1, b.b1)), b.w2, b.b2);
        x = add(x, mul(mod[2], h));
    }
    auto mod = split(linear(y, final_ada_w_, final_ada_b_), 1, {w, w});
    auto h = add(mul(layer_norm(x, -1, eps), add_scalar(mod[1], T(1))), mod[0]);
    return linear(h, out_w_, out_b_);
}

template <class T>
bool DiffHead<T>::untrained() const {
    for (const auto* p : {&out_w_, &final_ada_w_}) {
        for (T v : p->data()) {
            if (v != T(0)) return false;
        }
    }
    return true;
}

std::vector<int> timestep_sample(int T, std::int64_t count, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> u(0, T - 1);
    std::vector<int> out(static_cast<std::size_t>(count));
    for (auto& t : out) t = u(rng);
    return out;
}

template <class T>
Tensor<T> diffusion_loss_terms(const Tensor<T>& eps_hat, const Tensor<T>& var_logits, std::span<const double> x0,
                               std::span<const double> x_t, std::span<const double> eps, std::span<const int> t,
                               const DiffusionSchedule& s, double vlb_weight) {
    const auto n = static_cast<std::int64_t>(t.size());
    const auto k = static_cast<std::size_t>(n * 3);
    if (eps_hat.shape() != Shape{n, 3} || var_logits.shape() != Shape{n, 3} || x0.size() != k || x_t.size() != k ||
        eps.size() != k) {
        throw Error(ErrorKind::ShapeMismatch, "diffusion loss inputs for " + std::to_string(n) + " rows: " +
                                                  shape_str(eps_hat.shape()) + ", " + shape_str(var_logits.shape()));
    }
    std::vector<T> eps_c(k), lv1(k), span_c(k), d2(k);
    auto eh = eps_hat.data();
    for (std::int64_t r = 0; r < n; ++r) {
        const int tt = t[r];
        if (tt < 0 || tt >= s.T) throw Error(ErrorKind::TOutOfRange, "t=" + std::to_string(tt));
        const double min_log = s.posterior_log_variance_clipped[tt];
        const double max_log = std::log(s.betas[tt]);
        for (int c = 0; c < 3; ++c) {
            const auto i = static_cast<std::size_t>(r * 3 + c);
            eps_c[i] = T(eps[i]);
            const double true_mean = s.posterior_mean_coef1[tt] * x0[i] + s.posterior_mean_coef2[tt] * x_t[i];
            const double pred_x0 =
                s.sqrt_recip_alphas_cumprod[tt] * x_t[i] - s.sqrt_recipm1_alphas_cumprod[tt] * double(eh[i]);
            const double model_mean = s.posterior_mean_coef1[tt] * pred_x0 + s.posterior_mean_coef2[tt] * x_t[i];
            lv1[i] = T(min_log);
            span_c[i] = T(max_log - min_log);
            d2[i] = T((true_mean - model_mean) * (true_mean - model_mean));
        }
    }
    const Shape shape{n, 3};
    auto mse = square(sub(eps_hat, Tensor<T>::from(shape, std::move(eps_c))));
    auto lv1_t = Tensor<T>::from(shape, lv1);
    auto lv2 = add(lv1_t, mul(sigmoid(var_logits), Tensor<T>::from(shape, std::move(span_c))));
    // KL(N(mu1, e^lv1) || N(mu2, e^lv2)); the mean term is constant because eps_hat is detached.
    auto kl = add(sub(lv2, lv1_t), add(mixgen::exp(sub(lv1_t, lv2)),
                                       mul(mixgen::exp(scale(lv2, T(-1))), Tensor<T>::from(shape, std::move(d2)))));
    auto vlb = scale(add_scalar(kl, T(-1)), T(0.5 / std::numbers::ln2));
    return mean(add(mse, scale(vlb, T(vlb_weight))));
}

template <class T>
Tensor<T> diffloss_forward(const DiffHead<T>& head, std::span<const double> x0, const Tensor<T>& cond,
                           const DiffLossConfig& cfg, std::mt19937_64& rng) {
    if (cfg.M < 1) throw Error(ErrorKind::InvalidConfig, "DiffMul count M must be >= 1");
    const auto n = static_cast<std::int64_t>(x0.size() / 3);
    if (n == 0) return Tensor<T>::scalar(T(0));
    if (cond.rank() != 2 || cond.dim(0) != n) {
        throw Error(ErrorKind::ShapeMismatch,
                    std::to_string(n) + " numeric targets but conditions " + shape_str(cond.shape()));
    }
    const auto& s = head.schedule();
    const std::int64_t rows = n * cfg.M;
    auto t = timestep_sample(s.T, rows, rng);
    std::normal_distribution<double> n01;
    std::vector<double> x0r(static_cast<std::size_t>(rows * 3)), eps(x0r.size()), x_t(x0r.size());
    for (std::int64_t r = 0; r < rows; ++r) {
        for (int c = 0; c < 3; ++c) {
            const auto i = static_cast<std::size_t>(r * 3 + c);
            x0r[i] = x0[static_cast<std::size_t>((r % n) * 3 + c)];
            eps[i] = n01(rng);
            x_t[i] = s.alpha_hat[t[r]] * x0r[i] + s.sigma_hat[t[r]] * eps[i];
        }
    }
    auto xt = Tensor<T>::from({rows, 3}, std::vector<T>(x_t.begin(), x_t.end()));
    auto out = head.forward(xt, t, repeat_rows(cond, cfg.M));
    auto parts = split(out, 1, {3, 3});
    return diffusion_loss_terms(parts[0], parts[1], x0r, x_t, eps, t, s, cfg.vlb_weight);
}

void guided_eps(std::span<double> out, std::span<const double> eps_strong, std::span<const double> eps_weak, double g) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = eps_strong[i] + g * (eps_strong[i] - eps_weak[i]);
}

template <class T>
Tensor<T> guided_denoise(const DiffHead<T>& strong, const DiffHead<T>& weak, const Tensor<T>& x_t,
                         std::span<const int> t, const Tensor<T>& h_strong, const Tensor<T>& h_weak, double g) {
    const auto& a = strong.config();
    const auto& b = weak.config();
    if (a.T_train != b.T_train || a.beta_start != b.beta_start || a.beta_end != b.beta_end) {
        throw Error(ErrorKind::ScheduleMismatch, "strong and weak heads were trained on different schedules");
    }
    NoGradGuard ng;
    auto os = strong.forward(x_t, t, h_strong);
    if (g == 0.0) return os;
    auto ow = weak.forward(x_t, t, h_weak);
    const auto n = x_t.dim(0);
    std::vector<T> out(os.data().begin(), os.data().end());
    auto ws = ow.data();
    for (std::int64_t r = 0; r < n; ++r) {
        for (int c = 0; c < 3; ++c) {
            const auto i = r * 6 + c;
            out[i] = T(double(out[i]) + g * (double(out[i]) - double(ws[i])));
        }
    }
    return Tensor<T>::from({n, 6}, std::move(out));
}

template <class T>
std::vector<Payload> diffhead_sample(const DiffHead<T>& head, const Tensor<T>& cond, int steps,
                                     std::span<std::mt19937_64> rngs, const WeakGuidance<T>* guidance, bool strict) {
    if (strict && head.untrained()) {
        throw Error(ErrorKind::UntrainedHead, "diffusion head output layer is still at initialization");
    }
    const auto n = cond.dim(0);
    if (static_cast<std::int64_t>(rngs.size()) != n) {
        throw Error(ErrorKind::SizeMismatch, std::to_string(rngs.size()) + " RNG streams for " + std::to_string(n) +
                                                 " conditions");
    }
    const DiffusionSchedule sp = respace(head.schedule(), steps);
    NoGradGuard ng;
    // One distribution per row: normal_distribution caches a spare draw.
    std::vector<std::normal_distribution<double>> n01(static_cast<std::size_t>(n));
    std::vector<double> x(static_cast<std::size_t>(n * 3));
    for (std::int64_t r = 0; r < n; ++r)
        for (int c = 0; c < 3; ++c) x[r * 3 + c] = n01[r](rngs[r]);

    std::vector<int> t(static_cast<std::size_t>(n));
    for (int i = sp.T - 1; i >= 0; --i) {
        std::fill(t.begin(), t.end(), sp.timestep_map[i]);
        auto xt = Tensor<T>::from({n, 3}, std::vector<T>(x.begin(), x.end()));
        Tensor<T> out = guidance && guidance->head
                            ? guided_denoise(head, *guidance->head, xt, t, cond, guidance->cond, guidance->g)
                            : head.forward(xt, t, cond);
        auto o = out.data();
        const double min_log = sp.posterior_log_variance_clipped[i];
        const double max_log = std::log(sp.betas[i]);
        for (std::int64_t r = 0; r < n; ++r) {
            for (int c = 0; c < 3; ++c) {
                const auto k = static_cast<std::size_t>(r * 3 + c);
                const double e = o[r * 6 + c];
                const double frac = 1.0 / (1.0 + std::exp(-double(o[r * 6 + 3 + c])));
                const double log_var = frac * max_log + (1.0 - frac) * min_log;
                const double pred_x0 = sp.sqrt_recip_alphas_cumprod[i] * x[k] - sp.sqrt_recipm1_alphas_cumprod[i] * e;
                x[k] = sp.posterior_mean_coef1[i] * pred_x0 + sp.posterior_mean_coef2[i] * x[k];
                if (i > 0) x[k] += std::exp(0.5 * log_var) * n01[r](rngs[r]);
            }
        }
    }
    std::vector<Payload> result(static_cast<std::size_t>(n));
    for (std::int64_t r = 0; r < n; ++r)
        for (int c = 0; c < 3; ++c) result[r][c] = x[r * 3 + c];
    return result;
}

template class DiffHead<float>;
template class DiffHead<double>;

#define MIXGEN_INSTANTIATE(T)                                                                                         \
    template Tensor<T> diffusion_loss_terms(const Tensor<T>&, const Tensor<T>&, std::span<const double>,              \
                                            std::span<const double>, std::span<const double>, std::span<const int>,   \
                                            const DiffusionSchedule&, double);                                        \
    template Tensor<T> diffloss_forward(const DiffHead<T>&, std::span<const double>, const Tensor<T>&,                \
                                        const DiffLossConfig&, std::mt19937_64&);                                     \
    template Tensor<T> guided_denoise(const DiffHead<T>&, const DiffHead<T>&, const Tensor<T>&, std::span<const int>, \
                                      const Tensor<T>&, const Tensor<T>&, double);                                    \
    template std::vector<Payload> diffhead_sample(const DiffHead<T>&, const Tensor<T>&, int,                          \
                                                  std::span<std::mt19937_64>, const WeakGuidance<T>*, bool);

MIXGEN_INSTANTIATE(float)
MIXGEN_INSTANTIATE(double)

#undef MIXGEN_INSTANTIATE

}  // namespace mixgen
