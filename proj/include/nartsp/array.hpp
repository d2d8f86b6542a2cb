#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nartsp/error.hpp"

namespace nartsp {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

/// Dense row-major array. Values are stored contiguously; the shape is
/// purely descriptive, so reshaping never moves data.
template <typename T>
class Array {
public:
    using value_type = T;

    Array() = default;

    explicit Array(Shape shape, T fill = T{})
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

    Array(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_size(shape_) != data_.size()) {
            throw DimensionError("array data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string(shape_));
        }
    }

    static Array scalar(T v) { return Array(Shape{}, std::vector<T>{v}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T item() const {
        if (data_.size() != 1) throw ContractError("item() on array of shape " + shape_string(shape_));
        return data_[0];
    }

    /// Element access by multi-index, checked against the shape.
    template <typename... I>
    T& at(I... idx) {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }
    template <typename... I>
    const T& at(I... idx) const {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }

    Array reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size()) {
            throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        }
        return Array(std::move(shape), data_);
    }

    void reshape_in_place(Shape shape) {
        if (shape_size(shape) != data_.size()) {
            throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        }
        shape_ = std::move(shape);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Array<U> cast() const {
        return Array<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    friend bool operator==(const Array& a, const Array& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != shape_.size()) throw DimensionError("index rank mismatch for " + shape_string(shape_));
        std::size_t off = 0;
        std::size_t axis = 0;
        for (auto i : idx) {
            if (i >= shape_[axis]) throw DimensionError("index out of range for " + shape_string(shape_));
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    Shape shape_;
    std::vector<T> data_;
};

using Mask = Array<std::uint8_t>;

}  // namespace nartsp
