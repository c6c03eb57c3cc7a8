#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mixgen/tensor.hpp"

namespace mixgen {

template <class T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<T> data(static_cast<std::size_t>(numel(shape)));
    for (auto& v : data) v = T(u(rng));
    return Tensor<T>::from(std::move(shape), std::move(data), requires_grad);
}

// Central-difference check of fn's vector-Jacobian product with a random
// cotangent. Returns max over inputs of ||analytic - numeric|| / ||numeric||.
template <class T>
double gradcheck(std::vector<Tensor<T>> inputs,
                 const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& fn, double h,
                 unsigned seed = 7) {
    std::mt19937_64 rng(seed);
    Tensor<T> probe = [&] {
        NoGradGuard ng;
        return fn(inputs);
    }();
    std::vector<double> w(static_cast<std::size_t>(probe.size()));
    std::normal_distribution<double> n01;
    for (auto& v : w) v = n01(rng);
    auto project = [&](const Tensor<T>& out) {
        double s = 0.0;
        auto d = out.data();
        for (std::size_t i = 0; i < d.size(); ++i) s += double(d[i]) * w[i];
        return s;
    };

    for (auto& x : inputs) x.zero_grad();
    {
        Tensor<T> out = fn(inputs);
        std::vector<T> wt(w.begin(), w.end());
        auto loss = sum(mul(out, Tensor<T>::from(out.shape(), wt)));
        loss.backward();
    }

    double worst = 0.0;
    NoGradGuard ng;
    for (auto& x : inputs) {
        if (!x.requires_grad()) continue;
        std::vector<double> analytic(static_cast<std::size_t>(x.size()), 0.0);
        if (x.has_grad()) {
            for (std::size_t i = 0; i < analytic.size(); ++i) analytic[i] = x.grad()[i];
        }
        double num2 = 0.0, diff2 = 0.0;
        auto data = x.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const T orig = data[i];
            const T xp = T(orig + h);
            const T xm = T(orig - h);
            data[i] = xp;
            const double fp = project(fn(inputs));
            data[i] = xm;
            const double fm = project(fn(inputs));
            data[i] = orig;
            const double numeric = (fp - fm) / (double(xp) - double(xm));
            num2 += numeric * numeric;
            diff2 += (numeric - analytic[i]) * (numeric - analytic[i]);
        }
        const double rel = std::sqrt(diff2) / std::max(std::sqrt(num2), 1e-12);
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace mixgen
