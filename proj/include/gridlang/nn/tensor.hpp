#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "gridlang/common.hpp"

namespace gridlang::nn {

// Dense row-major double tensor. Shapes are small and fixed by the network
// config, so this stays deliberately simple.
struct Tensor {
    std::vector<size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), 0.0);
    }

    static size_t numel_of(const std::vector<size_t>& s) {
        size_t n = 1;
        for (size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    size_t numel() const { return data.size(); }
    bool empty() const { return data.empty(); }
    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    // 2-D (rows, cols)
    double& at2(size_t r, size_t c) { return data[r * shape[1] + c]; }
    double at2(size_t r, size_t c) const { return data[r * shape[1] + c]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
    if (!a.same_shape(b)) throw ShapeMismatchError("shape mismatch in " + what);
}

} // namespace gridlang::nn
