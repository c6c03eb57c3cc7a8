#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mixgen/tensor.hpp"

namespace mixgen {

enum class Init { Zeros, Ones, Normal, XavierUniform };

// Named, ordered collection of trainable leaves.
template <class T>
class ParamStore {
public:
    // `scale` is the std for Normal; ignored otherwise.
    Tensor<T> add(const std::string& name, Shape shape, Init init, std::mt19937_64& rng, double scale = 0.02);

    const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }
    std::vector<std::pair<std::string, Tensor<T>>>& items() { return items_; }
    Tensor<T> get(const std::string& name) const;
    std::int64_t count() const;
    void zero_grad();

private:
    std::vector<std::pair<std::string, Tensor<T>>> items_;
};

// Copies values between stores with identical names and shapes (any dtype).
template <class Dst, class Src>
void copy_params(ParamStore<Dst>& dst, const ParamStore<Src>& src);

}  // namespace mixgen
