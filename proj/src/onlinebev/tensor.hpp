#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace obev {

using Shape = std::vector<std::int64_t>;

// 64-byte aligned storage, so vectorised kernels see the same alignment (and
// round the same way) on every run.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. A rank-0 tensor (empty shape) holds one
// value and is used for scalar losses.
class Tensor {
public:
    Tensor() : data_(1, 0.0) {}
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    const Shape& shape() const noexcept { return shape_; }
    std::int64_t rank() const noexcept { return static_cast<std::int64_t>(shape_.size()); }
    // Negative axes count from the back.
    std::int64_t dim(std::int64_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }

    std::span<const double> values() const noexcept { return data_; }
    std::span<double> values() noexcept { return data_; }
    const double* data() const noexcept { return data_.data(); }
    double* data() noexcept { return data_.data(); }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    // [H, W, C] accessors, the layout of every BEV grid in this project.
    double at(std::int64_t r, std::int64_t c, std::int64_t ch) const;
    double& at(std::int64_t r, std::int64_t c, std::int64_t ch);

    double item() const;
    Tensor reshaped(Shape shape) const;
    bool all_finite() const noexcept;
    void fill(double v);

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double, AlignedAllocator<double>> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& a);

}  // namespace obev
