#pragma once

#include <lkca/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace lkca {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        os << (i ? "," : "") << s[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major n-dimensional array. Feature maps use the [N, C, H, W] layout.
template<typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(shape_numel(shape_), fill);
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        require(data_.size() == shape_numel(shape_),
                "tensor data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
    }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t  rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t  extent(std::size_t axis) const { return shape_.at(axis); }
    [[nodiscard]] std::size_t  size() const noexcept { return data_.size(); }
    [[nodiscard]] bool         empty() const noexcept { return data_.empty(); }

    [[nodiscard]] T*       data() noexcept { return data_.data(); }
    [[nodiscard]] const T* data() const noexcept { return data_.data(); }

    [[nodiscard]] std::span<T>       values() noexcept { return data_; }
    [[nodiscard]] std::span<const T> values() const noexcept { return data_; }
    [[nodiscard]] std::vector<T>&       storage() noexcept { return data_; }
    [[nodiscard]] const std::vector<T>& storage() const noexcept { return data_; }

    T&       operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    // 2-D and 4-D element access; no bounds checks beyond the debug asserts of std::vector.
    T&       operator()(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
    const T& operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }
    T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    [[nodiscard]] Tensor reshaped(Shape s) const {
        require(shape_numel(s) == data_.size(), "cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
        return Tensor(std::move(s), data_);
    }

    template<typename U>
    [[nodiscard]] Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return Tensor<U>(shape_, std::move(out));
    }

    [[nodiscard]] bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    void validate_shape() const {
        require(!shape_.empty(), "tensor needs at least one axis");
        for (auto e : shape_) {
            require(e >= 1, "tensor extents must be >= 1, got " + shape_str(shape_));
        }
    }

    Shape          shape_;
    std::vector<T> data_;
};

template<typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    require(a.shape() == b.shape(),
            std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template<typename T>
void require_rank(const Tensor<T>& a, std::size_t rank, const char* what) {
    require(a.rank() == rank, std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                  shape_str(a.shape()));
}

template<typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += b[i];
    }
    return out;
}

template<typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= b[i];
    }
    return out;
}

template<typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "hadamard");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= b[i];
    }
    return out;
}

template<typename T>
Tensor<T> scaled(const Tensor<T>& a, T s) {
    Tensor<T> out = a;
    for (auto& v : out.values()) {
        v *= s;
    }
    return out;
}

template<typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& b) {
    require_same_shape(acc, b, "add_inplace");
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc[i] += b[i];
    }
}

template<typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "max_abs_diff");
    T m{0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

template<typename T>
double frobenius_norm(const Tensor<T>& a) {
    double s = 0.0;
    for (auto v : a.values()) {
        s += static_cast<double>(v) * static_cast<double>(v);
    }
    return std::sqrt(s);
}

/// Concatenates [N, C_i, H, W] tensors along the channel axis.
template<typename T>
Tensor<T> concat_channels(std::initializer_list<const Tensor<T>*> parts) {
    const auto& first = **parts.begin();
    require_rank(first, 4, "concat_channels");
    std::size_t channels = 0;
    for (auto* p : parts) {
        require_rank(*p, 4, "concat_channels");
        require(p->extent(0) == first.extent(0) && p->extent(2) == first.extent(2) && p->extent(3) == first.extent(3),
                "concat_channels: batch/spatial extents differ");
        channels += p->extent(1);
    }
    const std::size_t n = first.extent(0), plane = first.extent(2) * first.extent(3);
    Tensor<T>         out({n, channels, first.extent(2), first.extent(3)});
    for (std::size_t b = 0; b < n; ++b) {
        T* dst = out.data() + b * channels * plane;
        for (auto* p : parts) {
            const std::size_t block = p->extent(1) * plane;
            std::copy_n(p->data() + b * block, block, dst);
            dst += block;
        }
    }
    return out;
}

/// Channel slice [c0, c0 + count) of an [N, C, H, W] tensor.
template<typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t c0, std::size_t count) {
    require_rank(x, 4, "slice_channels");
    require(c0 + count <= x.extent(1), "slice_channels: range out of bounds");
    const std::size_t n = x.extent(0), c = x.extent(1), plane = x.extent(2) * x.extent(3);
    Tensor<T>         out({n, count, x.extent(2), x.extent(3)});
    for (std::size_t b = 0; b < n; ++b) {
        std::copy_n(x.data() + (b * c + c0) * plane, count * plane, out.data() + b * count * plane);
    }
    return out;
}

} // namespace lkca
