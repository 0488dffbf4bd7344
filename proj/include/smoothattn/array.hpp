#ifndef SMOOTHATTN_ARRAY_HPP
#define SMOOTHATTN_ARRAY_HPP

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "smoothattn/common.hpp"

namespace smoothattn {

// Dense row-major array of doubles. Rank 0 is a scalar (one element).
struct Array {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Array() : data(1, 0.0) {}  // scalar zero

    Array(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        check(numel_of(shape) == data.size(), "Array: shape/data mismatch: shape wants ",
              numel_of(shape), " values, got ", data.size());
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto e : s) n *= e;
        return n;
    }

    static Array zeros(std::vector<std::size_t> s) {
        std::size_t n = numel_of(s);
        return Array(std::move(s), std::vector<double>(n, 0.0));
    }

    static Array full(std::vector<std::size_t> s, double v) {
        std::size_t n = numel_of(s);
        return Array(std::move(s), std::vector<double>(n, v));
    }

    static Array scalar(double v) { return Array({}, {v}); }

    static Array vec(std::initializer_list<double> vals) {
        return Array({vals.size()}, std::vector<double>(vals));
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    bool is_scalar() const { return data.size() == 1; }

    std::size_t rows() const { return shape.size() == 2 ? shape[0] : (shape.empty() ? 1 : shape[0]); }
    std::size_t cols() const { return shape.size() == 2 ? shape[1] : 1; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Array& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        s += "]";
        return s;
    }
};

}  // namespace smoothattn

#endif  // SMOOTHATTN_ARRAY_HPP
