#ifndef CASGAN_TENSOR_HPP
#define CASGAN_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "casgan/common.hpp"

namespace casgan {

// Dense row-major tensor. Feature maps are NCHW, conv weights OIHW, scalars {1}.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(count(shape_)), T(0));
    }

    Tensor(std::vector<std::int64_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        CASGAN_CHECK(static_cast<std::int64_t>(data_.size()) == count(shape_),
                     "tensor data size ", data_.size(), " does not match shape");
    }

    static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::int64_t> shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor scalar(T value) { return full({1}, value); }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t numel() const { return count(shape_); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // 4D access, NCHW
    T& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    const T& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v)))
                return false;
        return true;
    }

    T min_value() const {
        CASGAN_CHECK(!data_.empty(), "min of empty tensor");
        return *std::min_element(data_.begin(), data_.end());
    }
    T max_value() const {
        CASGAN_CHECK(!data_.empty(), "max of empty tensor");
        return *std::max_element(data_.begin(), data_.end());
    }

    double sum() const {
        double s = 0.0;
        for (const T& v : data_)
            s += static_cast<double>(v);
        return s;
    }
    double mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size()); }

    Tensor reshaped(std::vector<std::int64_t> shape) const {
        CASGAN_CHECK(count(shape) == numel(), "reshape changes element count");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        std::vector<U> d(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i)
            d[i] = static_cast<U>(data_[i]);
        out = Tensor<U>(shape_, std::move(d));
        return out;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i)
                s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + ")";
    }

    static std::int64_t count(const std::vector<std::int64_t>& shape) {
        std::int64_t n = 1;
        for (std::int64_t d : shape) {
            CASGAN_CHECK(d >= 0, "negative dimension in tensor shape");
            n *= d;
        }
        return n;
    }

private:
    std::vector<std::int64_t> shape_;
    std::vector<T> data_;
};

template <typename T>
Tensor<T> random_normal(std::vector<std::int64_t> shape, SplitMix& rng, double stddev = 1.0,
                        double mean = 0.0) {
    Tensor<T> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<T>(mean + stddev * rng.normal());
    return t;
}

template <typename T>
Tensor<T> random_uniform(std::vector<std::int64_t> shape, SplitMix& rng, double lo, double hi) {
    Tensor<T> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    CASGAN_CHECK(a.same_shape(b), "max_abs_diff shape mismatch ", a.shape_str(), " vs ",
                 b.shape_str());
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

} // namespace casgan

#endif
