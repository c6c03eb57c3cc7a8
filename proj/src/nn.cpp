#include "mixgen/nn.hpp"

#include <cmath>

#include "mixgen/error.hpp"

namespace mixgen {

template <class T>
Tensor<T> ParamStore<T>::add(const std::string& name, Shape shape, Init init, std::mt19937_64& rng, double scale) {
    for (const auto& [n, _] : items_) {
        if (n == name) throw Error(ErrorKind::InvalidConfig, "duplicate parameter " + name);
    }
    std::vector<T> data(static_cast<std::size_t>(numel(shape)));
    switch (init) {
        case Init::Zeros:
            break;
        case Init::Ones:
            std::fill(data.begin(), data.end(), T(1));
            break;
        case Init::Normal: {
            std::normal_distribution<double> n(0.0, scale);
            for (auto& v : data) v = T(n(rng));
            break;
        }
        case Init::XavierUniform: {
            const double fan_in = double(shape.front());
            const double fan_out = double(shape.back());
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (auto& v : data) v = T(u(rng));
            break;
        }
    }
    auto t = Tensor<T>::from(std::move(shape), std::move(data), true);
    items_.emplace_back(name, t);
    return t;
}

template <class T>
Tensor<T> ParamStore<T>::get(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return t;
    }
    throw Error(ErrorKind::InvalidConfig, "no parameter named " + name);
}

template <class T>
std::int64_t ParamStore<T>::count() const {
    std::int64_t n = 0;
    for (const auto& [_, t] : items_) n += t.size();
    return n;
}

template <class T>
void ParamStore<T>::zero_grad() {
    for (auto& [_, t] : items_) t.zero_grad();
}

template <class Dst, class Src>
void copy_params(ParamStore<Dst>& dst, const ParamStore<Src>& src) {
    if (dst.items().size() != src.items().size()) {
        throw Error(ErrorKind::SizeMismatch, "parameter stores differ in size");
    }
    for (std::size_t i = 0; i < dst.items().size(); ++i) {
        auto& [dn, dt] = dst.items()[i];
        const auto& [sn, st] = src.items()[i];
        if (dn != sn || dt.shape() != st.shape()) {
            throw Error(ErrorKind::SizeMismatch, "parameter " + dn + " does not match " + sn);
        }
        auto out = dt.mutable_data();
        auto in = st.data();
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = Dst(in[k]);
    }
}

template class ParamStore<float>;
template class ParamStore<double>;
template void copy_params(ParamStore<float>&, const ParamStore<float>&);
template void copy_params(ParamStore<double>&, const ParamStore<float>&);
template void copy_params(ParamStore<float>&, const ParamStore<double>&);
template void copy_params(ParamStore<double>&, const ParamStore<double>&);

}  // namespace mixgen
