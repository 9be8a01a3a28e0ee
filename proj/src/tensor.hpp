#ifndef AFNET_TENSOR_HPP
#define AFNET_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "common.hpp"

namespace afnet::nn {

// Dense row-major n-d array of doubles. Value type; all layers consume and
// produce Tensors.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel(shape), 0.0);
    }
    Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel(shape)) throw RuntimeError("tensor: data length does not match shape");
    }

    static std::size_t numel(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }

    std::size_t size() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& operator()(std::size_t i) { return data[i]; }
    double operator()(std::size_t i) const { return data[i]; }
    double& at3(std::size_t b, std::size_t c, std::size_t l) {
        return data[(b * shape[1] + c) * shape[2] + l];
    }
    double at3(std::size_t b, std::size_t c, std::size_t l) const {
        return data[(b * shape[1] + c) * shape[2] + l];
    }
    double& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline Tensor randn(std::vector<std::size_t> shape, Rng& rng, double sd = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.normal(0.0, sd);
    return t;
}

} // namespace afnet::nn

#endif
