#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ptri/error.hpp"

namespace ptri {

// Dense row-major tensor over an Eigen array; activations use NHWC order.
template <typename S>
struct Tensor {
    std::vector<int> shape;
    Eigen::Array<S, Eigen::Dynamic, 1> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> shp) : shape(std::move(shp)) { data.setZero(numel_of(shape)); }

    static std::ptrdiff_t numel_of(const std::vector<int>& shp) {
        if (shp.empty()) throw_data("tensor: empty shape");
        std::ptrdiff_t n = 1;
        for (int d : shp) {
            if (d <= 0) throw_data("tensor: non-positive dimension");
            n *= d;
        }
        return n;
    }

    std::ptrdiff_t numel() const { return data.size(); }
    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(shape.size()); }
    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    template <typename T>
    Tensor<T> cast() const {
        Tensor<T> out;
        out.shape = shape;
        out.data = data.template cast<T>();
        return out;
    }

    bool all_finite() const { return data.isFinite().all(); }
};

inline std::string shape_string(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <typename S>
void require_shape(const Tensor<S>& t, const std::vector<int>& shape, const char* what) {
    if (t.shape != shape)
        throw_data(std::string(what) + ": expected shape " + shape_string(shape) + ", got " +
                   shape_string(t.shape));
}

template <typename S>
void require_rank(const Tensor<S>& t, int rank, const char* what) {
    if (t.rank() != rank)
        throw_data(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                   shape_string(t.shape));
}

}  // namespace ptri
