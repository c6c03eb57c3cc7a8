#include <doctest.h>

#include <cstring>
#include <random>

#include "gradcheck.hpp"
#include "mixgen/error.hpp"
#include "mixgen/tensor.hpp"
#include "mixgen/verify.hpp"

using namespace mixgen;
using testutil::gradcheck;
using testutil::random_tensor;

TEST_CASE("forward examples") {
    auto s = softmax(Tensor<float>::from({3}, {0, 0, 0}));
    for (float v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0));

    auto ln = layer_norm(Tensor<float>::from({2, 4}, {2, 2, 2, 2, -1, -1, -1, -1}), -1, 1e-5f);
    for (float v : ln.data()) CHECK(v == 0.0f);

    auto a = Tensor<float>::from({2, 2}, {1, 2, 3, 4});
    auto eye = Tensor<float>::from({2, 2}, {1, 0, 0, 1});
    auto p = matmul(a, eye);
    CHECK(std::vector<float>(p.data().begin(), p.data().end()) == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("softmax rows sum to one and layer_norm standardizes") {
    std::mt19937_64 rng(3);
    auto x = random_tensor<double>({6, 7}, rng, -4, 4, false);
    auto s = softmax(x, -1);
    for (int r = 0; r < 6; ++r) {
        double t = 0;
        for (int c = 0; c < 7; ++c) t += s.at({r, c});
        CHECK(t == doctest::Approx(1.0).epsilon(1e-12));
    }
    auto ln = layer_norm(x, 0, 1e-12);
    for (int c = 0; c < 7; ++c) {
        double m = 0, v = 0;
        for (int r = 0; r < 6; ++r) m += ln.at({r, c});
        m /= 6;
        for (int r = 0; r < 6; ++r) v += (ln.at({r, c}) - m) * (ln.at({r, c}) - m);
        CHECK(std::abs(m) < 1e-12);
        CHECK(v / 6 == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("backward examples") {
    auto x = Tensor<float>::from({}, {3.0f}, true);
    mul(x, x).backward();
    CHECK(x.grad()[0] == 6.0f);

    SUBCASE("repeated calls accumulate") {
        mul(x, x).backward();
        CHECK(x.grad()[0] == 12.0f);
        x.zero_grad();
        mul(x, x).backward();
        CHECK(x.grad()[0] == 6.0f);
    }

    SUBCASE("softmax Jacobian rows sum to zero") {
        std::mt19937_64 rng(11);
        auto z = random_tensor<double>({3, 5}, rng);
        auto w = random_tensor<double>({3, 5}, rng, -1, 1, false);
        sum(mul(softmax(z, -1), w)).backward();
        for (int r = 0; r < 3; ++r) {
            double t = 0;
            for (int c = 0; c < 5; ++c) t += z.grad()[r * 5 + c];
            CHECK(std::abs(t) < 1e-14);
        }
    }
}

TEST_CASE("backward errors") {
    auto x = Tensor<float>::from({2}, {1, 2}, true);
    try {
        square(x).backward();
        FAIL("expected NotScalar");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NotScalar);
    }
    auto c = Tensor<float>::from({2}, {1, 2});
    try {
        sum(c).backward();
        FAIL("expected DetachedGraph");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DetachedGraph);
    }
    try {
        sum(detach(x)).backward();
        FAIL("expected DetachedGraph");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DetachedGraph);
    }
}

TEST_CASE("shape mismatch reports both shapes") {
    auto a = Tensor<float>::zeros({2, 3});
    auto b = Tensor<float>::zeros({4, 5});
    try {
        matmul(a, b);
        FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ShapeMismatch);
        std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,5]") != std::string::npos);
    }
    CHECK_THROWS_AS(add(a, b), Error);
    CHECK_THROWS_AS(concat(std::vector<Tensor<float>>{a, b}, 0), Error);
    CHECK_THROWS_AS(reshape(a, Shape{5}), Error);
    std::vector<std::int32_t> bad{0, 2};
    try {
        embedding(a, std::span<const std::int32_t>(bad));
        FAIL("expected IdOutOfRange");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::IdOutOfRange);
        CHECK(e.position() == std::optional<std::size_t>(1));
    }
}

TEST_CASE("detach") {
    std::mt19937_64 rng(5);
    auto x = random_tensor<float>({4, 5}, rng);
    auto d = detach(x);
    CHECK(std::memcmp(d.data().data(), x.data().data(), sizeof(float) * 20) == 0);
    CHECK_FALSE(d.requires_grad());

    auto y = random_tensor<float>({4, 5}, rng);
    sum(add(mul(detach(x), y), y)).backward();
    CHECK_FALSE(x.has_grad());
    CHECK(y.has_grad());
}

TEST_CASE("gemm matches naive product for all transpose modes") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n01;
    const int m = 7, n = 5, k = 6;
    std::vector<double> a(m * k), b(k * n);
    for (auto& v : a) v = n01(rng);
    for (auto& v : b) v = n01(rng);
    for (int ta = 0; ta < 2; ++ta) {
        for (int tb = 0; tb < 2; ++tb) {
            // Lay out op(A), op(B) physically transposed when requested.
            std::vector<double> pa(a.size()), pb(b.size());
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) pa[ta ? p * m + i : i * k + p] = a[i * k + p];
            for (int p = 0; p < k; ++p)
                for (int j = 0; j < n; ++j) pb[tb ? j * k + p : p * n + j] = b[p * n + j];
            std::vector<double> c(m * n, 1.0);
            gemm<double>(ta, tb, m, n, k, 2.0, pa.data(), ta ? m : k, pb.data(), tb ? k : n, 0.5, c.data(), n);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    double ref = 0.5;
                    for (int p = 0; p < k; ++p) ref += 2.0 * a[i * k + p] * b[p * n + j];
                    CHECK(c[i * n + j] == doctest::Approx(ref).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("every kernel passes a float32 finite-difference check") {
    for (const auto& c : kernel_cases<float>()) {
        CAPTURE(c.name);
        std::mt19937_64 rng(42);
        std::vector<Tensor<float>> inputs;
        for (const auto& s : c.shapes) inputs.push_back(random_tensor<float>(s, rng, c.lo, c.hi));
        CHECK(gradcheck<float>(inputs, c.fn, 1e-3) <= 1e-3);
    }
}

TEST_CASE("every kernel passes a float64 finite-difference check") {
    for (const auto& c : kernel_cases<double>()) {
        CAPTURE(c.name);
        std::mt19937_64 rng(43);
        std::vector<Tensor<double>> inputs;
        for (const auto& s : c.shapes) inputs.push_back(random_tensor<double>(s, rng, c.lo, c.hi));
        CHECK(gradcheck<double>(inputs, c.fn, 1e-6) <= 1e-6);
    }
}

TEST_CASE("forward is deterministic") {
    std::mt19937_64 r1(77), r2(77);
    auto a1 = random_tensor<float>({8, 16}, r1);
    auto b1 = random_tensor<float>({16, 8}, r1);
    auto a2 = random_tensor<float>({8, 16}, r2);
    auto b2 = random_tensor<float>({16, 8}, r2);
    auto y1 = softmax(layer_norm(matmul(a1, b1), -1, 1e-5f), -1);
    auto y2 = softmax(layer_norm(matmul(a2, b2), -1, 1e-5f), -1);
    CHECK(std::memcmp(y1.data().data(), y2.data().data(), sizeof(float) * 64) == 0);
}

TEST_CASE("no-grad guard suppresses graph recording") {
    auto x = Tensor<float>::from({2}, {1, 2}, true);
    {
        NoGradGuard ng;
        CHECK_FALSE(grad_enabled());
        CHECK_FALSE(square(x).requires_grad());
    }
    CHECK(grad_enabled());
    CHECK(square(x).requires_grad());
}
