#include "onlinebev/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "onlinebev/error.hpp"

namespace obev {

std::size_t shape_size(const Shape& shape)
{
    std::size_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw DimensionError("negative extent in shape " + shape_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(values.begin(), values.end())
{
    if (data_.size() != shape_size(shape_)) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_string(shape_));
    }
}

std::int64_t Tensor::dim(std::int64_t axis) const
{
    const auto r = rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw DimensionError("axis out of range for shape " + shape_string(shape_));
    return shape_[static_cast<std::size_t>(axis)];
}

double Tensor::at(std::int64_t r, std::int64_t c, std::int64_t ch) const
{
    return data_[static_cast<std::size_t>((r * shape_[1] + c) * shape_[2] + ch)];
}

double& Tensor::at(std::int64_t r, std::int64_t c, std::int64_t ch)
{
    return data_[static_cast<std::size_t>((r * shape_[1] + c) * shape_[2] + ch)];
}

double Tensor::item() const
{
    if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const
{
    Tensor out(std::move(shape));
    if (out.data_.size() != data_.size()) {
        throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(out.shape_));
    }
    out.data_ = data_;
    return out;
}

bool Tensor::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v)
{
    std::fill(data_.begin(), data_.end(), v);
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape()) {
        throw DimensionError("max_abs_diff shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double max_abs(const Tensor& a)
{
    double m = 0.0;
    for (double v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace obev
