#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"

namespace dveslt {

using Shape = std::vector<int64_t>;

inline int64_t shape_size(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
        if (d < 0) fail("negative dimension in shape");
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s);

// Dense row-major 64-bit float array. The single value container used for
// activations, parameters, gradients and rendered frames.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_size(shape) != static_cast<int64_t>(data.size()))
            fail("tensor data size " + std::to_string(data.size()) +
                 " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) {
        int64_t n = shape_size(s);
        return Tensor{std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0)};
    }
    static Tensor full(Shape s, double v) {
        int64_t n = shape_size(s);
        return Tensor{std::move(s), std::vector<double>(static_cast<size_t>(n), v)};
    }
    static Tensor scalar(double v) { return Tensor{{}, {v}}; }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int64_t dim(size_t i) const { return shape.at(i); }
    size_t rank() const { return shape.size(); }
    bool is_scalar() const { return shape.empty(); }

    double item() const {
        if (data.size() != 1) fail("item() on non-scalar tensor " + shape_str(shape));
        return data[0];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void require_shape(const Tensor& t, const Shape& s, const std::string& who) {
    if (t.shape != s)
        fail(who + ": expected shape " + shape_str(s) + ", got " + shape_str(t.shape));
}

} // namespace dveslt
