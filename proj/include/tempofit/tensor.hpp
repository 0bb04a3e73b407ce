#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tempofit {

using Shape = std::vector<std::size_t>;

// Element count of a shape; rejects overflow so file headers can't request
// absurd allocations.
inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) {
            throw std::invalid_argument("tensor dimension must be positive");
        }
        if (d > std::numeric_limits<std::size_t>::max() / n) {
            throw std::invalid_argument("tensor shape overflows size_t");
        }
        n *= d;
    }
    return n;
}

// Dense n-dimensional array, row-major flat storage.
template <typename S>
class Tensor {
public:
    using value_type = S;

    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), S(0)) {}

    Tensor(Shape shape, std::vector<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_numel(shape_)) {
            throw std::invalid_argument("tensor data length does not match shape");
        }
    }

    static Tensor full(Shape shape, S v) {
        Tensor t(std::move(shape));
        t.fill(v);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    std::vector<S>& values() { return data_; }
    const std::vector<S>& values() const { return data_; }

    S& operator[](std::size_t i) {
        assert(i < data_.size());
        return data_[i];
    }
    const S& operator[](std::size_t i) const {
        assert(i < data_.size());
        return data_[i];
    }

    template <typename... I>
    S& operator()(I... idx) {
        return data_[offset(idx...)];
    }
    template <typename... I>
    const S& operator()(I... idx) const {
        return data_[offset(idx...)];
    }

    void fill(S v) {
        for (S& e : data_) e = v;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    template <typename... I>
    std::size_t offset(I... idx) const {
        assert(sizeof...(I) == shape_.size());
        std::size_t pos = 0;
        std::size_t axis = 0;
        ((pos = pos * shape_[axis++] + static_cast<std::size_t>(idx)), ...);
        assert(pos < data_.size());
        return pos;
    }

    Shape shape_;
    std::vector<S> data_;
};

template <typename S>
bool all_finite(const Tensor<S>& t) {
    for (const S& e : t.values()) {
        if (!std::isfinite(static_cast<double>(e))) return false;
    }
    return true;
}

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
    Tensor<To> out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
    return out;
}

inline std::string shape_to_string(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    s += ")";
    return s;
}

}  // namespace tempofit
