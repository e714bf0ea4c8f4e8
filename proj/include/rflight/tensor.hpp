#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "rflight/errors.hpp"
#include "rflight/rng.hpp"

namespace rflight {

// Dense row-major tensor of doubles, rank 1..3 (batch x time x feature at most).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::size_t n) : rank_(1), dims_{n, 1, 1}, data_(n, 0.0) {}
    Tensor(std::size_t r, std::size_t c) : rank_(2), dims_{r, c, 1}, data_(r * c, 0.0) {}
    Tensor(std::size_t a, std::size_t b, std::size_t c)
        : rank_(3), dims_{a, b, c}, data_(a * b * c, 0.0) {}

    static Tensor zeros_like(const Tensor& t) {
        Tensor out = t;
        std::fill(out.data_.begin(), out.data_.end(), 0.0);
        return out;
    }

    static Tensor from(std::initializer_list<double> v) {
        Tensor t(v.size());
        std::size_t i = 0;
        for (double x : v) t.data_[i++] = x;
        return t;
    }

    static Tensor from_vec(const std::vector<double>& v) {
        Tensor t(v.size());
        t.data_ = v;
        return t;
    }

    int rank() const { return rank_; }
    std::size_t dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
    std::size_t rows() const { return dims_[0]; }
    std::size_t cols() const { return rank_ >= 2 ? dims_[1] : 1; }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * dims_[1] + j) * dims_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * dims_[1] + j) * dims_[2] + k];
    }

    bool same_shape(const Tensor& o) const { return rank_ == o.rank_ && dims_ == o.dims_; }

    std::string shape_str() const;

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const;

    // Row i of a rank-2 tensor as a fresh rank-1 tensor.
    Tensor row(std::size_t i) const {
        Tensor out(dims_[1]);
        for (std::size_t j = 0; j < dims_[1]; ++j) out[j] = at(i, j);
        return out;
    }

    void fill_uniform(Rng& rng, double lo, double hi) {
        for (double& v : data_) v = rng.uniform(lo, hi);
    }

private:
    int rank_ = 0;
    std::array<std::size_t, 3> dims_{0, 0, 0};
    std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

} // namespace rflight
