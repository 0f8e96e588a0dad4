#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace ldmood::nn {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned storage. Vectorized kernels pick their loop split from the
/// data address, so a fixed alignment keeps results independent of the heap.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() noexcept = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
        return true;
    }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

std::size_t shape_size(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major N-d array. Spatial tensors are laid out [C, H, W, D].
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0});
    Tensor(Shape shape, std::vector<T> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    T* data() noexcept { return values_.data(); }
    const T* data() const noexcept { return values_.data(); }
    std::span<T> values() noexcept { return values_; }
    std::span<const T> values() const noexcept { return values_; }
    T& operator[](std::size_t i) noexcept { return values_[i]; }
    const T& operator[](std::size_t i) const noexcept { return values_[i]; }

    void fill(T value);
    /// Same values, new shape of equal size.
    Tensor reshaped(Shape shape) const;
    bool all_finite() const noexcept;

    Tensor& operator+=(const Tensor& other);
    Tensor& operator*=(T scale);

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(values_.begin(), values_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    AlignedVector<T> values_;
};

/// Number of spatial positions of a [C, ...] tensor.
template <typename T>
std::size_t spatial_size(const Tensor<T>& t) {
    return t.rank() == 0 ? 0 : t.size() / t.extent(0);
}

/// Concatenate two [C, ...] tensors along channels.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Inverse of concat_channels: split at channel `first`.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, std::size_t first);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ldmood::nn
