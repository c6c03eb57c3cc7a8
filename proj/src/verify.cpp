#include "mixgen/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "mixgen/diffhead.hpp"
#include "mixgen/evalkit.hpp"
#include "mixgen/gradcheck.hpp"
#include "mixgen/model.hpp"
#include "mixgen/schedule.hpp"

namespace mixgen {

std::optional<Suite> parse_suite(std::string_view name) {
    if (name == "targets") return Suite::Targets;
    if (name == "grad") return Suite::Grad;
    if (name == "metrics") return Suite::Metrics;
    if (name == "all") return Suite::All;
    return std::nullopt;
}

template <class T>
std::vector<KernelCase<T>> kernel_cases() {
    using V = std::vector<Tensor<T>>;
    const std::vector<std::int32_t> ids{3, 0, 3, 1};
    const std::vector<std::int64_t> rows{2, 0, 2};
    const std::vector<std::uint8_t> mask{1, 0, 0, 1};
    return {
        {"add", {{4, 5}, {4, 5}}, [](const V& x) { return add(x[0], x[1]); }},
        {"add_broadcast", {{4, 5}, {5}}, [](const V& x) { return add(x[0], x[1]); }},
        {"sub", {{4, 5}, {5}}, [](const V& x) { return sub(x[0], x[1]); }},
        {"mul", {{4, 5}, {4, 5}}, [](const V& x) { return mul(x[0], x[1]); }},
        {"mul_broadcast", {{4, 5}, {5}}, [](const V& x) { return mul(x[0], x[1]); }},
        {"scale", {{4, 5}}, [](const V& x) { return scale(x[0], T(-2.5)); }},
        {"add_scalar", {{4, 5}}, [](const V& x) { return add_scalar(x[0], T(0.7)); }},
        {"square", {{4, 5}}, [](const V& x) { return square(x[0]); }},
        {"exp", {{4, 5}}, [](const V& x) { return mixgen::exp(x[0]); }},
        {"log", {{4, 5}}, [](const V& x) { return mixgen::log(x[0]); }, 0.5, 2.0},
        {"sigmoid", {{4, 5}}, [](const V& x) { return sigmoid(x[0]); }, -3.0, 3.0},
        {"silu", {{4, 5}}, [](const V& x) { return silu(x[0]); }, -3.0, 3.0},
        {"gelu", {{4, 5}}, [](const V& x) { return gelu(x[0]); }, -3.0, 3.0},
        {"matmul", {{4, 5}, {5, 3}}, [](const V& x) { return matmul(x[0], x[1]); }},
        {"matmul_folded", {{2, 4, 5}, {5, 3}}, [](const V& x) { return matmul(x[0], x[1]); }},
        {"bmm", {{2, 4, 5}, {2, 5, 3}}, [](const V& x) { return bmm(x[0], x[1], false); }},
        {"bmm_trans", {{2, 4, 5}, {2, 3, 5}}, [](const V& x) { return bmm(x[0], x[1], true); }},
        {"linear", {{4, 5}, {5, 3}, {3}}, [](const V& x) { return linear(x[0], x[1], x[2]); }},
        {"linear_nobias", {{4, 5}, {5, 3}}, [](const V& x) { return linear(x[0], x[1], Tensor<T>()); }},
        {"softmax_last", {{4, 5}}, [](const V& x) { return softmax(x[0], -1); }, -2.0, 2.0},
        {"softmax_first", {{4, 5}}, [](const V& x) { return softmax(x[0], 0); }, -2.0, 2.0},
        {"layer_norm", {{4, 5}}, [](const V& x) { return layer_norm(x[0], -1, T(1e-5)); }},
        {"layer_norm_axis0", {{4, 5}}, [](const V& x) { return layer_norm(x[0], 0, T(1e-5)); }},
        {"rms_norm", {{4, 5}, {5}}, [](const V& x) { return rms_norm(x[0], x[1], T(1e-6)); }},
        {"sum", {{4, 5}}, [](const V& x) { return sum(x[0]); }},
        {"mean", {{4, 5}}, [](const V& x) { return mean(x[0]); }},
        {"mean_axis", {{4, 5}}, [](const V& x) { return mean(x[0], 1); }},
        {"reshape", {{4, 5}}, [](const V& x) { return reshape(x[0], Shape{2, 10}); }},
        {"permute", {{2, 3, 4}}, [](const V& x) { return permute(x[0], {2, 0, 1}); }},
        {"concat", {{4, 5}, {4, 2}}, [](const V& x) { return concat(V{x[0], x[1]}, 1); }},
        {"split",
         {{4, 5}},
         [](const V& x) {
             auto parts = split(x[0], 1, {2, 3});
             return concat(V{scale(parts[0], T(2)), parts[1]}, 1);
         }},
        {"embedding", {{4, 5}}, [ids](const V& x) { return embedding(x[0], std::span(ids)); }},
        {"gather_rows", {{4, 5}}, [rows](const V& x) { return gather_rows(x[0], std::span(rows)); }},
        {"select_rows", {{4, 5}, {4, 5}}, [mask](const V& x) { return select_rows(std::span(mask), x[0], x[1]); }},
        {"repeat_rows", {{4, 5}}, [](const V& x) { return repeat_rows(x[0], 3); }},
        {"repeat_heads", {{2, 2, 5}}, [](const V& x) { return repeat_heads(x[0], 2); }},
        {"causal_masked_fill", {{2, 4, 4}}, [](const V& x) { return causal_masked_fill(x[0], T(-3)); }},
        {"rope", {{2, 4, 2, 6}}, [](const V& x) { return rope(x[0], 10000.0); }},
        {"cross_entropy",
         {{4, 5}},
         [ids](const V& x) {
             std::vector<std::int32_t> t{1, 4, 0, 2};
             return cross_entropy(x[0], std::span<const std::int32_t>(t));
         },
         -2.0, 2.0},
        {"attention_chain",
         {{2, 4, 3}, {2, 4, 3}},
         [](const V& x) {
             auto s = causal_masked_fill(scale(bmm(x[0], x[1], true), T(0.5)), -std::numeric_limits<T>::infinity());
             return bmm(softmax(s, -1), x[1]);
         }},
    };
}

template std::vector<KernelCase<float>> kernel_cases<float>();
template std::vector<KernelCase<double>> kernel_cases<double>();

// ----------------------------------------------------------------------------
// Target conversions

namespace {

double rel(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

double value_of(const TargetBundle& b, Target t) {
    switch (t) {
        case Target::Score: return b.score;
        case Target::Eps: return b.eps;
        case Target::X0: return b.x0;
        case Target::Velocity: return b.v;
    }
    return 0;
}

constexpr Target kTargets[] = {Target::Score, Target::Eps, Target::X0, Target::Velocity};

}  // namespace

double conversion_cycle_error(int samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ut(0.02, 0.98);
    std::normal_distribution<double> n01;
    double worst = 0.0;
    for (int family = 0; family < 2; ++family) {
        for (int i = 0; i < samples; ++i) {
            const double t = ut(rng);
            const auto c = family == 0 ? interpolation_coeffs(t) : vp_coeffs(t);
            const double x0 = n01(rng), eps = n01(rng);
            const double x_t = c.alpha * x0 + c.sigma * eps;
            const TargetBundle truth{x_t, -eps / c.sigma, eps, x0, c.dalpha * x0 + c.dsigma * eps, c};
            // Every ordered pair: from -> to -> all four targets.
            for (Target from : kTargets) {
                const auto first = convert(from, value_of(truth, from), x_t, c);
                for (Target to : kTargets) {
                    const auto back = convert(to, value_of(first, to), x_t, c);
                    for (Target k : kTargets) worst = std::max(worst, rel(value_of(back, k), value_of(truth, k)));
                }
            }
        }
    }
    return worst;
}

double conversion_anchor_error() {
    const auto c = interpolation_coeffs(0.5);
    const double x0 = 2.0, eps = 1.0;
    const double x_t = c.alpha * x0 + c.sigma * eps;
    double worst = std::abs(x_t - 1.5);
    const double want[] = {-2.0, 1.0, 2.0, -1.0};  // score, eps, x0, v
    for (int i = 0; i < 4; ++i) {
        const auto b = convert(kTargets[i], want[i], x_t, c);
        for (int k = 0; k < 4; ++k) worst = std::max(worst, std::abs(value_of(b, kTargets[k]) - want[k]));
    }
    return worst;
}

// ----------------------------------------------------------------------------

namespace {

void add(std::vector<CheckResult>& out, const char* suite, std::string name, double value, double tol) {
    out.push_back({suite, std::move(name), value, tol, value <= tol});
}

void targets_suite(std::vector<CheckResult>& out) {
    add(out, "targets", "conversion cycles, 1e4 draws x 2 families", conversion_cycle_error(10000, 11), 1e-10);
    add(out, "targets", "interpolation anchor t=0.5, x0=2, eps=1", conversion_anchor_error(), 0.0);
    // DDPM table against the closed form for the linear ramp.
    const auto s = build_ddpm(1000, 1e-4, 0.02);
    double worst = 0.0;
    long double prod = 1.0L;
    for (int t = 0; t < s.T; ++t) {
        prod *= 1.0L - (1e-4L + (0.02L - 1e-4L) * t / 999.0L);
        worst = std::max(worst, std::abs(double(prod) - s.alphas_cumprod[t]) / double(prod));
        worst = std::max(worst, std::abs(s.alpha_hat[t] * s.alpha_hat[t] + s.sigma_hat[t] * s.sigma_hat[t] - 1.0));
    }
    add(out, "targets", "DDPM cumulative products and VP identity", worst, 1e-12);
}

template <class T>
void randomize(ParamStore<T>& p, std::uint64_t seed, double sd) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sd);
    for (auto& [_, t] : p.items())
        for (auto& v : t.mutable_data()) v = T(v + n(rng));
}

template <class T>
double head_gradcheck(double h) {
    HeadConfig hc;
    hc.width = 8;
    hc.resblocks = 2;
    hc.cond_dim = 5;
    hc.freq_dim = 6;
    hc.T_train = 100;
    DiffHead<T> head(hc, 6);
    randomize(head.params(), 7, 0.3);
    std::mt19937_64 rng(8);
    auto x = random_tensor<T>({3, 3}, rng);
    auto c = random_tensor<T>({3, 5}, rng);
    std::vector<int> t{3, 40, 77};
    std::vector<Tensor<T>> inputs{x, c};
    for (auto& [_, p] : head.params().items()) inputs.push_back(p);
    return gradcheck<T>(inputs, [&](const std::vector<Tensor<T>>& in) { return head.forward(in[0], t, in[1]); }, h);
}

template <class T>
double joint_gradcheck(double h, bool all_params) {
    ModelConfig mc;
    mc.backbone.hidden_size = 8;
    mc.backbone.intermediate_size = 8;
    mc.backbone.num_layers = 1;
    mc.backbone.num_heads = 2;
    mc.backbone.num_kv_heads = 2;
    mc.backbone.gating = true;
    mc.head.width = 6;
    mc.head.resblocks = 1;
    mc.head.freq_dim = 4;
    mc.head.T_train = 100;
    mc.loss.M = 2;
    // The VLB term sees a detached eps_hat; its surrogate gradient is not the
    // derivative of the forward value, so that path is checked separately.
    mc.loss.vlb_weight = 0.0;
    Model<T> model(mc, 7);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto& [_, t] : model.parameters())
        for (auto& v : t.mutable_data()) v = T(v + n(rng));

    Material m{{"Cl", "Na"}, {Vec3{5.6, 0, 0}, Vec3{0, 5.6, 0}, Vec3{0, 0, 5.6}}, {{0, 0, 0}, {0.5, 0.5, 0.5}}};
    DomainRecord rec;
    rec.body = m;
    rec.conditions = {{"<bulk>", 3.2}};
    const auto seq = encode(rec, Vocabulary::standard());
    const auto batch = make_batch(std::span(&seq, 1), Vocabulary::standard());
    LossOptions opt;
    opt.word_weight = 0.7;
    opt.gate_weight = 0.4;
    std::vector<Tensor<T>> params;
    for (auto& [name, t] : model.parameters()) {
        const bool keep = all_params ? name != "embed.table" && name != "word_head.w"
                                     : name.rfind("layer0.", 0) == 0 || name.rfind("head.block0", 0) == 0;
        if (keep) params.push_back(t);
    }
    return gradcheck<T>(params, [&](const std::vector<Tensor<T>>&) {
        std::mt19937_64 loss_rng(9);
        return joint_loss(model, batch, opt, loss_rng).total;
    }, h);
}

}  // namespace

double joint_loss_gradcheck_f32() { return joint_gradcheck<float>(3e-3, false); }
double joint_loss_gradcheck_f64() { return joint_gradcheck<double>(1e-6, true); }

namespace {

double vlb_gradcheck() {
    const auto s = build_ddpm(50, 1e-4, 0.02);
    std::mt19937_64 rng(14);
    std::vector<int> t{0, 10, 49};
    std::normal_distribution<double> n01;
    std::vector<double> x0(9), eps(9), xt(9);
    for (int i = 0; i < 9; ++i) {
        x0[i] = n01(rng);
        eps[i] = n01(rng);
        xt[i] = s.alpha_hat[t[i / 3]] * x0[i] + s.sigma_hat[t[i / 3]] * eps[i];
    }
    auto ehat = random_tensor<double>({3, 3}, rng, -1, 1, false);
    auto vl = random_tensor<double>({3, 3}, rng, -3, 3, true);
    return gradcheck<double>({vl}, [&](const std::vector<Tensor<double>>& in) {
        return diffusion_loss_terms(ehat, in[0], x0, xt, eps, t, s, 1.0);
    }, 1e-6);
}

template <class T>
void kernel_checks(std::vector<CheckResult>& out, double h, double tol, const char* tag) {
    for (const auto& c : kernel_cases<T>()) {
        std::mt19937_64 rng(42);
        std::vector<Tensor<T>> inputs;
        for (const auto& s : c.shapes) inputs.push_back(random_tensor<T>(s, rng, c.lo, c.hi));
        add(out, "grad", std::string(c.name) + " " + tag, gradcheck<T>(inputs, c.fn, h), tol);
    }
}

void grad_suite(std::vector<CheckResult>& out) {
    kernel_checks<float>(out, 1e-3, 1e-3, "f32");
    kernel_checks<double>(out, 1e-6, 1e-6, "f64");
    add(out, "grad", "diffusion head f32", head_gradcheck<float>(1e-3), 1e-3);
    add(out, "grad", "diffusion head f64", head_gradcheck<double>(1e-6), 1e-6);
    add(out, "grad", "variance-logit VLB path f64", vlb_gradcheck(), 1e-6);
    // Deep f32 compositions are round-off bound at h = 1e-3.
    add(out, "grad", "joint loss f32", joint_loss_gradcheck_f32(), 1e-3);
    add(out, "grad", "joint loss f64", joint_loss_gradcheck_f64(), 1e-6);
}

CovMat brute_cov_mat(const std::vector<std::vector<double>>& d, double delta) {
    CovMat out;
    const std::size_t G = d.size(), R = d[0].size();
    for (std::size_t r = 0; r < R; ++r) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < G; ++g) best = d[g][r] < best ? d[g][r] : best;
        out.cov += best < delta ? 1 : 0;
        out.mat += best;
    }
    for (std::size_t g = 0; g < G; ++g) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < R; ++r) best = d[g][r] < best ? d[g][r] : best;
        out.cov_p += best < delta ? 1 : 0;
        out.mat_p += best;
    }
    out.cov /= double(R);
    out.mat /= double(R);
    out.cov_p /= double(G);
    out.mat_p /= double(G);
    return out;
}

void metrics_suite(std::vector<CheckResult>& out) {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(-3, 3);
    std::uniform_int_distribution<int> size(1, 6);
    double cov_dev = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 3 + trial % 5;
        auto conf = [&] {
            Coords c(n);
            for (auto& p : c) p = {u(rng), u(rng), u(rng)};
            return c;
        };
        std::vector<Coords> g(size(rng)), r(size(rng));
        for (auto& c : g) c = conf();
        for (auto& c : r) c = conf();
        std::vector<std::vector<double>> d(g.size(), std::vector<double>(r.size()));
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = 0; j < r.size(); ++j) d[i][j] = kabsch_rmsd(g[i], r[j]);
        const auto got = cov_mat(g, r, 1.5), want = brute_cov_mat(d, 1.5);
        cov_dev = std::max({cov_dev, std::abs(got.cov - want.cov), std::abs(got.mat - want.mat),
                            std::abs(got.cov_p - want.cov_p), std::abs(got.mat_p - want.mat_p)});
    }
    add(out, "metrics", "COV/MAT/COV-P/MAT-P vs double loop, 50 set pairs", cov_dev, 0.0);

    double wd = 0;
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + trial % 17;
        std::vector<double> a(n), b(n);
        for (auto& v : a) v = n01(rng);
        for (auto& v : b) v = 2 * n01(rng) + 1;
        auto as = a, bs = b;
        std::sort(as.begin(), as.end());
        std::sort(bs.begin(), bs.end());
        double want = 0;
        for (int i = 0; i < n; ++i) want += std::abs(as[i] - bs[i]);
        wd = std::max(wd, std::abs(wdist_1d(a, b) - want / n));
    }
    add(out, "metrics", "wdist_1d vs sorted-sample oracle", wd, 1e-12);

    std::vector<std::array<double, 2>> pts;
    for (int i = 0; i < 75; ++i) pts.push_back({0.0, 0.0});
    for (int i = 0; i < 25; ++i) pts.push_back({1.0, 0.0});
    const auto fes = free_energy_surface(pts, 2, 0.593);
    add(out, "metrics", "free energy two-bin case 0.593 ln 3", std::abs(fes.at(1, 0) - fes.at(0, 0) - 0.593 * std::log(3.0)),
        1e-9);

    const Coords a{{0, 0, 0}, {1, 0, 0}}, b{{0, 0, 0}, {2, 0, 0}};
    add(out, "metrics", "kabsch two-point example 0.5", std::abs(kabsch_rmsd(a, b) - 0.5), 1e-12);
}

}  // namespace

std::vector<CheckResult> run_suite(Suite suite) {
    std::vector<CheckResult> out;
    if (suite == Suite::Targets || suite == Suite::All) targets_suite(out);
    if (suite == Suite::Grad || suite == Suite::All) grad_suite(out);
    if (suite == Suite::Metrics || suite == Suite::All) metrics_suite(out);
    return out;
}

std::string format_results(const std::vector<CheckResult>& results) {
    std::ostringstream os;
    std::size_t width = 0;
    for (const auto& r : results) width = std::max(width, r.suite.size() + r.name.size() + 2);
    int failed = 0;
    for (const auto& r : results) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "  %-4s  %.3e <= %.1e", r.pass ? "ok" : "FAIL", r.value, r.tolerance);
        const std::string label = r.suite + ": " + r.name;
        os << label << std::string(width - label.size(), ' ') << buf << '\n';
        failed += !r.pass;
    }
    os << results.size() - failed << "/" << results.size() << " checks passed\n";
    return os.str();
}

}  // namespace mixgen
