#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mixgen/diffhead.hpp"
#include "mixgen/error.hpp"

using namespace mixgen;

namespace {

HeadConfig small_head() {
    HeadConfig c;
    c.width = 12;
    c.resblocks = 2;
    c.cond_dim = 5;
    c.freq_dim = 8;
    c.T_train = 100;
    return c;
}

template <class T>
void randomize(ParamStore<T>& store, std::uint64_t seed, double sd = 0.3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sd);
    for (auto& [name, t] : store.items())
        for (auto& v : t.mutable_data()) v = T(v + n(rng));
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Io;
}

// Row-by-row recomputation of the adaptive-norm MLP.
std::vector<double> reference_head(const DiffHead<double>& head, const Payload& x, int t, std::span<const double> c) {
    const auto& cfg = head.config();
    const auto w = cfg.width;
    auto P = [&](const std::string& n) { return head.params().get(n).data(); };
    auto affine = [](std::span<const double> in, std::span<const double> W, std::span<const double> b) {
        const auto out = static_cast<std::int64_t>(b.size());
        std::vector<double> y(b.begin(), b.end());
        for (std::size_t i = 0; i < in.size(); ++i)
            for (std::int64_t j = 0; j < out; ++j) y[j] += in[i] * W[i * out + j];
        return y;
    };
    auto silu = [](std::vector<double> v) {
        for (auto& x : v) x = x / (1 + std::exp(-x));
        return v;
    };
    auto ln = [](const std::vector<double>& v) {
        double m = 0, s = 0;
        for (double x : v) m += x;
        m /= v.size();
        for (double x : v) s += (x - m) * (x - m);
        s /= v.size();
        std::vector<double> y(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) y[i] = (v[i] - m) / std::sqrt(s + 1e-6);
        return y;
    };
    std::vector<double> emb(cfg.freq_dim);
    const auto half = cfg.freq_dim / 2;
    for (std::int64_t i = 0; i < half; ++i) {
        double f = std::pow(10000.0, -double(i) / half);
        emb[i] = std::cos(t * f);
        emb[half + i] = std::sin(t * f);
    }
    auto te = affine(silu(affine(emb, P("head.time.w1"), P("head.time.b1"))), P("head.time.w2"), P("head.time.b2"));
    auto ce = affine(c, P("head.cond.w"), P("head.cond.b"));
    std::vector<double> y(w);
    for (std::int64_t i = 0; i < w; ++i) y[i] = te[i] + ce[i];
    y = silu(y);
    auto h = affine(std::span<const double>(x), P("head.in.w"), P("head.in.b"));
    for (std::int64_t r = 0; r < cfg.resblocks; ++r) {
        const std::string p = "head.block" + std::to_string(r) + ".";
        auto mod = affine(y, P(p + "ada.w"), P(p + "ada.b"));
        auto n = ln(h);
        for (std::int64_t i = 0; i < w; ++i) n[i] = n[i] * (1 + mod[w + i]) + mod[i];
        auto f = affine(silu(affine(n, P(p + "w1"), P(p + "b1"))), P(p + "w2"), P(p + "b2"));
        for (std::int64_t i = 0; i < w; ++i) h[i] += mod[2 * w + i] * f[i];
    }
    auto mod = affine(y, P("head.final.ada.w"), P("head.final.ada.b"));
    auto n = ln(h);
    for (std::int64_t i = 0; i < w; ++i) n[i] = n[i] * (1 + mod[w + i]) + mod[i];
    return affine(n, P("head.out.w"), P("head.out.b"));
}

}  // namespace

TEST_CASE("timestep embedding") {
    std::vector<int> t{0, 7};
    auto e = timestep_embedding(t, 6);
    for (int i = 0; i < 3; ++i) {
        CHECK(e[i] == 1.0);
        CHECK(e[3 + i] == 0.0);
        double f = std::exp(-std::log(10000.0) * i / 3.0);
        CHECK(e[6 + i] == doctest::Approx(std::cos(7 * f)));
        CHECK(e[9 + i] == doctest::Approx(std::sin(7 * f)));
    }
}

TEST_CASE("timestep sampling") {
    std::mt19937_64 rng(1);
    for (int t : timestep_sample(1, 100, rng)) CHECK(t == 0);

    const int T = 1000;
    const int n = 1000000;
    auto draws = timestep_sample(T, n, rng);
    std::vector<double> counts(T, 0.0);
    for (int t : draws) {
        REQUIRE(t >= 0);
        REQUIRE(t < T);
        counts[t] += 1;
    }
    double chi2 = 0;
    const double expect = double(n) / T;
    for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
    boost::math::chi_squared dist(T - 1);
    CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) > 0.01);

    // Consecutive replicas are uncorrelated.
    auto pairs = timestep_sample(T, 200000, rng);
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    const int m = 100000;
    for (int i = 0; i < m; ++i) {
        double x = pairs[2 * i], y = pairs[2 * i + 1];
        sx += x, sy += y, sxx += x * x, syy += y * y, sxy += x * y;
    }
    double r = (sxy / m - sx / m * sy / m) /
               std::sqrt((sxx / m - sx * sx / m / m) * (syy / m - sy * sy / m / m));
    CHECK(std::abs(r) < 0.01);
}

TEST_CASE("head starts at zero output") {
    DiffHead<float> head(small_head(), 1);
    CHECK(head.untrained());
    std::mt19937_64 rng(2);
    auto x = testutil::random_tensor<float>({4, 3}, rng, -1, 1, false);
    auto c = testutil::random_tensor<float>({4, 5}, rng, -1, 1, false);
    std::vector<int> t{0, 5, 50, 99};
    auto out = head.forward(x, t, c);
    CHECK(out.shape() == Shape{4, 6});
    for (float v : out.data()) CHECK(v == 0.0f);
    head.params().get("head.out.w").mutable_data()[0] = 0.5f;
    CHECK_FALSE(head.untrained());

    CHECK(kind_of([&] { head.forward(x, std::vector<int>{0, 1, 2, 100}, c); }) == ErrorKind::TOutOfRange);
    CHECK(kind_of([&] { head.forward(x, std::vector<int>{0, 1}, c); }) == ErrorKind::ShapeMismatch);
    auto bad = small_head();
    bad.resblocks = 0;
    CHECK(kind_of([&] { DiffHead<float> h(bad, 0); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("head forward matches reference") {
    DiffHead<double> head(small_head(), 3);
    randomize(head.params(), 4);
    std::mt19937_64 rng(5);
    auto x = testutil::random_tensor<double>({6, 3}, rng, -2, 2, false);
    auto c = testutil::random_tensor<double>({6, 5}, rng, -1, 1, false);
    std::vector<int> t{0, 1, 17, 42, 98, 99};
    auto out = head.forward(x, t, c);
    for (int r = 0; r < 6; ++r) {
        Payload xr{x.data()[r * 3], x.data()[r * 3 + 1], x.data()[r * 3 + 2]};
        auto ref = reference_head(head, xr, t[r], c.data().subspan(r * 5, 5));
        for (int j = 0; j < 6; ++j) CHECK(out.data()[r * 6 + j] == doctest::Approx(ref[j]).epsilon(1e-12));
    }
}

TEST_CASE("head gradients") {
    DiffHead<double> head(small_head(), 6);
    randomize(head.params(), 7);
    std::mt19937_64 rng(8);
    auto x = testutil::random_tensor<double>({3, 3}, rng);
    auto c = testutil::random_tensor<double>({3, 5}, rng);
    std::vector<int> t{3, 40, 77};
    std::vector<Tensor<double>> inputs{x, c};
    for (auto& [_, p] : head.params().items()) inputs.push_back(p);
    auto err = testutil::gradcheck<double>(
        inputs, [&](const std::vector<Tensor<double>>& in) { return head.forward(in[0], t, in[1]); }, 1e-6);
    CHECK(err <= 1e-6);

    DiffHead<float> hf(small_head(), 6);
    randomize(hf.params(), 7);
    auto xf = testutil::random_tensor<float>({3, 3}, rng);
    auto cf = testutil::random_tensor<float>({3, 5}, rng);
    auto errf = testutil::gradcheck<float>(
        {xf, cf}, [&](const std::vector<Tensor<float>>& in) { return hf.forward(in[0], t, in[1]); }, 1e-3);
    CHECK(errf <= 1e-3);
}

TEST_CASE("loss terms") {
    auto s = build_ddpm(100, 1e-4, 0.02);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n01;
    const int n = 5;
    std::vector<int> t{0, 1, 30, 60, 99};
    std::vector<double> x0(n * 3), eps(n * 3), xt(n * 3);
    for (int i = 0; i < n * 3; ++i) {
        x0[i] = n01(rng);
        eps[i] = n01(rng);
        xt[i] = s.alpha_hat[t[i / 3]] * x0[i] + s.sigma_hat[t[i / 3]] * eps[i];
    }
    auto exact = Tensor<double>::from({n, 3}, eps);
    auto vlog = Tensor<double>::zeros({n, 3});
    CHECK(diffusion_loss_terms(exact, vlog, x0, xt, eps, t, s, 0.0).item() == 0.0);

    // Independent evaluation of MSE plus the Gaussian KL in bits.
    auto ehat = testutil::random_tensor<double>({n, 3}, rng, -1, 1, true);
    auto vl = testutil::random_tensor<double>({n, 3}, rng, -2, 2, true);
    double want = 0;
    for (int i = 0; i < n * 3; ++i) {
        const int tt = t[i / 3];
        double e = ehat.data()[i];
        double mse = (e - eps[i]) * (e - eps[i]);
        double beta = s.betas[tt], acp = s.alphas_cumprod_prev[tt], ac = s.alphas_cumprod[tt];
        double c1 = tt == 0 ? 1.0 : beta * std::sqrt(acp) / (1 - ac);
        double c2 = tt == 0 ? 0.0 : (1 - acp) * std::sqrt(1 - beta) / (1 - ac);
        double mu_true = c1 * x0[i] + c2 * xt[i];
        double px0 = xt[i] / std::sqrt(ac) - std::sqrt(1 / ac - 1) * e;
        double mu_model = c1 * px0 + c2 * xt[i];
        double post = tt == 0 ? s.betas[1] * (1 - s.alphas_cumprod[0]) / (1 - s.alphas_cumprod[1])
                              : beta * (1 - acp) / (1 - ac);
        double lo = std::log(post), hi = std::log(beta);
        double frac = 1 / (1 + std::exp(-vl.data()[i]));
        double lv = frac * hi + (1 - frac) * lo;
        double kl = 0.5 * (-1 + lv - lo + std::exp(lo - lv) + (mu_true - mu_model) * (mu_true - mu_model) * std::exp(-lv));
        want += mse + 0.7 * kl / std::numbers::ln2;
    }
    want /= n * 3;
    auto got = diffusion_loss_terms(ehat, vl, x0, xt, eps, t, s, 0.7);
    CHECK(got.item() == doctest::Approx(want).epsilon(1e-12));

    // VLB gradient never reaches the mean prediction.
    got.backward();
    std::vector<double> with_vlb(ehat.grad().begin(), ehat.grad().end());
    CHECK(vl.has_grad());
    ehat.zero_grad();
    diffusion_loss_terms(ehat, vl, x0, xt, eps, t, s, 0.0).backward();
    for (int i = 0; i < n * 3; ++i) CHECK(ehat.grad()[i] == doctest::Approx(with_vlb[i]).epsilon(1e-15));
    for (int i = 0; i < n * 3; ++i) CHECK(with_vlb[i] == doctest::Approx(2 * (ehat.data()[i] - eps[i]) / (n * 3)));
}

TEST_CASE("vlb gradient through the variance logits") {
    auto s = build_ddpm(50, 1e-4, 0.02);
    std::mt19937_64 rng(14);
    std::vector<int> t{0, 10, 49};
    std::normal_distribution<double> n01;
    std::vector<double> x0(9), eps(9), xt(9);
    for (int i = 0; i < 9; ++i) {
        x0[i] = n01(rng);
        eps[i] = n01(rng);
        xt[i] = s.alpha_hat[t[i / 3]] * x0[i] + s.sigma_hat[t[i / 3]] * eps[i];
    }
    auto ehat = testutil::random_tensor<double>({3, 3}, rng, -1, 1, false);
    auto vl = testutil::random_tensor<double>({3, 3}, rng, -3, 3, true);
    auto err = testutil::gradcheck<double>(
        {vl},
        [&](const std::vector<Tensor<double>>& in) { return diffusion_loss_terms(ehat, in[0], x0, xt, eps, t, s, 1.0); },
        1e-6);
    CHECK(err <= 1e-6);
}

TEST_CASE("vlb gradient isolation inside the head") {
    DiffHead<double> head(small_head(), 10);
    randomize(head.params(), 11);
    std::mt19937_64 rng(12);
    auto cond = testutil::random_tensor<double>({4, 5}, rng);
    std::vector<double> x0{0.1, 0.2, 0.3, -1, 0, 1, 2, 2, 2, 0.5, -0.5, 0.25};
    auto grads = [&](double vlb) {
        head.params().zero_grad();
        DiffLossConfig cfg{3, vlb};
        std::mt19937_64 r(13);
        diffloss_forward(head, x0, cond, cfg, r).backward();
        auto g = head.params().get("head.out.w").grad();
        return std::vector<double>(g.begin(), g.end());
    };
    auto a = grads(0.0), b = grads(1.0);
    const auto w = small_head().width;
    bool var_differs = false;
    for (std::int64_t i = 0; i < w; ++i) {
        for (int c = 0; c < 3; ++c) CHECK(a[i * 6 + c] == doctest::Approx(b[i * 6 + c]).epsilon(1e-14));
        for (int c = 3; c < 6; ++c) {
            CHECK(a[i * 6 + c] == 0.0);
            var_differs = var_differs || b[i * 6 + c] != 0.0;
        }
    }
    CHECK(var_differs);
}

TEST_CASE("diffloss plumbing") {
    DiffHead<float> head(small_head(), 1);
    std::mt19937_64 rng(1);
    DiffLossConfig cfg;
    auto zero = diffloss_forward(head, std::span<const double>{}, Tensor<float>::zeros({0, 5}), cfg, rng);
    CHECK(zero.item() == 0.0f);
    std::vector<double> x0{1, 2, 3};
    CHECK(kind_of([&] { diffloss_forward(head, x0, Tensor<float>::zeros({2, 5}), cfg, rng); }) ==
          ErrorKind::ShapeMismatch);
    cfg.M = 0;
    CHECK(kind_of([&] { diffloss_forward(head, x0, Tensor<float>::zeros({1, 5}), cfg, rng); }) ==
          ErrorKind::InvalidConfig);

    // Gradient reaches the conditions.
    DiffHead<double> hd(small_head(), 2);
    randomize(hd.params(), 3);
    auto cond = testutil::random_tensor<double>({1, 5}, rng);
    diffloss_forward(hd, x0, cond, DiffLossConfig{4, 1.0}, rng).backward();
    double g = 0;
    for (double v : cond.grad()) g += std::abs(v);
    CHECK(g > 0);
}

TEST_CASE("DiffMul estimator: same expectation, lower variance") {
    HeadConfig hc = small_head();
    hc.T_train = 1000;
    DiffHead<double> head(hc, 20);
    randomize(head.params(), 21, 0.2);
    std::mt19937_64 rng(22);
    auto cond = testutil::random_tensor<double>({6, 5}, rng, -1, 1, false);
    std::vector<double> x0(18);
    std::normal_distribution<double> n01;
    for (auto& v : x0) v = n01(rng);
    auto stats = [&](int M) {
        std::vector<double> losses;
        for (int seed = 0; seed < 200; ++seed) {
            std::mt19937_64 r(1000 + seed + 7919 * M);
            NoGradGuard ng;
            losses.push_back(diffloss_forward(head, x0, cond, DiffLossConfig{M, 1.0}, r).item());
        }
        double m = 0, v = 0;
        for (double l : losses) m += l;
        m /= losses.size();
        for (double l : losses) v += (l - m) * (l - m);
        v /= losses.size() - 1;
        return std::pair{m, v};
    };
    auto [m1, v1] = stats(1);
    auto [m16, v16] = stats(16);
    CHECK(std::abs(m1 - m16) <= 4 * std::sqrt(v1 / 200 + v16 / 200));
    boost::math::fisher_f f(199, 199);
    double p = boost::math::cdf(boost::math::complement(f, v1 / v16));
    CHECK(v16 < v1);
    CHECK(p < 0.05);
}

TEST_CASE("single step chain returns predicted x0") {
    DiffHead<double> head(small_head(), 30);
    randomize(head.params(), 31);
    std::mt19937_64 rng(32);
    auto cond = testutil::random_tensor<double>({3, 5}, rng, -1, 1, false);
    std::vector<std::mt19937_64> rngs{std::mt19937_64(1), std::mt19937_64(2), std::mt19937_64(3)};
    auto out = diffhead_sample(head, cond, 1, std::span(rngs));
    const auto& s = head.schedule();
    const int T = s.T - 1;
    for (int r = 0; r < 3; ++r) {
        std::mt19937_64 fresh(r + 1);
        std::normal_distribution<double> n01;
        Payload x{n01(fresh), n01(fresh), n01(fresh)};
        auto o = reference_head(head, x, T, cond.data().subspan(r * 5, 5));
        for (int c = 0; c < 3; ++c) {
            double px0 = x[c] / s.alpha_hat[T] - std::sqrt(1 / s.alphas_cumprod[T] - 1) * o[c];
            CHECK(out[r][c] == doctest::Approx(px0).epsilon(1e-10));
        }
    }
}

TEST_CASE("sampling is per-row deterministic") {
    DiffHead<float> head(small_head(), 40);
    randomize(head.params(), 41);
    std::mt19937_64 rng(42);
    auto cond = testutil::random_tensor<float>({4, 5}, rng, -1, 1, false);
    auto draw = [&] {
        std::vector<std::mt19937_64> rngs;
        for (int i = 0; i < 4; ++i) rngs.emplace_back(100 + i);
        return diffhead_sample(head, cond, 20, std::span(rngs));
    };
    CHECK(draw() == draw());
    // Row 2 alone matches row 2 of the batch.
    std::vector<std::mt19937_64> one{std::mt19937_64(102)};
    auto c2 = Tensor<float>::from({1, 5}, std::vector<float>(cond.data().begin() + 10, cond.data().begin() + 15));
    auto alone = diffhead_sample(head, c2, 20, std::span(one));
    auto batch = draw();
    for (int c = 0; c < 3; ++c) CHECK(alone[0][c] == doctest::Approx(batch[2][c]).epsilon(1e-5));

    DiffHead<float> fresh(small_head(), 1);
    std::vector<std::mt19937_64> rngs(4);
    CHECK(kind_of([&] { diffhead_sample(fresh, cond, 10, std::span(rngs), static_cast<const WeakGuidance<float>*>(nullptr), true); }) ==
          ErrorKind::UntrainedHead);
    CHECK_NOTHROW(diffhead_sample(fresh, cond, 10, std::span(rngs)));
    std::vector<std::mt19937_64> three(3);
    CHECK(kind_of([&] { diffhead_sample(head, cond, 10, std::span(three)); }) == ErrorKind::SizeMismatch);
    CHECK(kind_of([&] { diffhead_sample(head, cond, 0, std::span(rngs)); }) == ErrorKind::BadRange);
}

TEST_CASE("guided denoising") {
    DiffHead<float> strong(small_head(), 50), weak(small_head(), 51);
    randomize(strong.params(), 52);
    randomize(weak.params(), 53);
    std::mt19937_64 rng(54);
    auto x = testutil::random_tensor<float>({3, 3}, rng, -1, 1, false);
    auto hs = testutil::random_tensor<float>({3, 5}, rng, -1, 1, false);
    auto hw = testutil::random_tensor<float>({3, 5}, rng, -1, 1, false);
    std::vector<int> t{5, 50, 95};
    auto base = strong.forward(x, t, hs);
    auto g0 = guided_denoise(strong, weak, x, t, hs, hw, 0.0);
    CHECK(std::equal(base.data().begin(), base.data().end(), g0.data().begin()));
    auto same = guided_denoise(strong, strong, x, t, hs, hs, 3.0);
    CHECK(std::equal(base.data().begin(), base.data().end(), same.data().begin()));

    auto g2 = guided_denoise(strong, weak, x, t, hs, hw, 2.0);
    auto w = weak.forward(x, t, hw);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 6; ++c) {
            double s = base.data()[r * 6 + c];
            double want = c < 3 ? s + 2.0 * (s - w.data()[r * 6 + c]) : s;
            CHECK(g2.data()[r * 6 + c] == doctest::Approx(want).epsilon(1e-5));
        }
    }
    std::vector<double> out(2);
    guided_eps(out, std::vector<double>{1.0, 2.0}, std::vector<double>{0.5, 3.0}, 2.0);
    CHECK(out == std::vector<double>{2.0, 0.0});

    auto other = small_head();
    other.beta_end = 0.03;
    DiffHead<float> mismatched(other, 1);
    CHECK(kind_of([&] { guided_denoise(strong, mismatched, x, t, hs, hw, 1.0); }) == ErrorKind::ScheduleMismatch);
}
