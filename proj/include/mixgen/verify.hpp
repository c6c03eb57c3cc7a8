#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mixgen/tensor.hpp"

namespace mixgen {

// One oracle comparison: pass iff value <= tolerance.
struct CheckResult {
    std::string suite;
    std::string name;
    double value = 0;
    double tolerance = 0;
    bool pass = false;
};

enum class Suite { Targets, Grad, Metrics, All };
std::optional<Suite> parse_suite(std::string_view name);

std::vector<CheckResult> run_suite(Suite suite);
std::string format_results(const std::vector<CheckResult>& results);

// Differentiable kernels with representative shapes, shared by the gradient
// suite and the unit tests.
template <class T>
struct KernelCase {
    const char* name;
    std::vector<Shape> shapes;
    std::function<Tensor<T>(const std::vector<Tensor<T>>&)> fn;
    double lo = -1.0;
    double hi = 1.0;
};
template <class T>
std::vector<KernelCase<T>> kernel_cases();

// Worst relative error over every conversion cycle among {score, eps, x0, v}
// on `samples` random draws per schedule family (interpolation, VP).
double conversion_cycle_error(int samples, std::uint64_t seed);
// Largest deviation of the interpolation worked example (t = 0.5, x0 = 2,
// eps = 1) from its exact values; zero when every route is exact.
double conversion_anchor_error();

// Joint-loss finite-difference checks on a small gated model. The f32 check
// covers the first decoder layer and head block at h = 3e-3 (deep f32
// compositions are round-off bound at 1e-3); f64 covers every parameter
// except the embedding table and word head weights at h = 1e-6.
double joint_loss_gradcheck_f32();
double joint_loss_gradcheck_f64();

}  // namespace mixgen
