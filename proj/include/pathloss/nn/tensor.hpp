#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "pathloss/errors.hpp"

namespace pathloss::nn {

/// Dense row-major tensor. float32 in production; tests instantiate double
/// for finite-difference work.
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;

    TensorT() = default;

    static TensorT zeros(std::vector<int> shape) {
        TensorT t;
        t.shape = std::move(shape);
        t.data.assign(t.expected_size(), T(0));
        return t;
    }

    static TensorT full(std::vector<int> shape, T value) {
        TensorT t = zeros(std::move(shape));
        std::fill(t.data.begin(), t.data.end(), value);
        return t;
    }

    static TensorT from_vector(std::vector<int> shape, std::vector<T> values) {
        TensorT t;
        t.shape = std::move(shape);
        t.data = std::move(values);
        if (t.data.size() != t.expected_size())
            throw ShapeMismatch("tensor payload does not match its shape");
        return t;
    }

    size_t expected_size() const {
        size_t n = 1;
        for (int d : shape) {
            if (d < 0) throw ShapeMismatch("negative tensor dimension");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }

    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    T& operator[](size_t i) { return data[i]; }
    T operator[](size_t i) const { return data[i]; }
};

using Tensor = TensorT<float>;

template <typename T>
bool same_shape(const TensorT<T>& a, const TensorT<T>& b) {
    return a.shape == b.shape;
}

} // namespace pathloss::nn
