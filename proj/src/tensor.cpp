#include "genfusion/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "genfusion/error.hpp"
#include "genfusion/rng.hpp"

namespace genfusion {

std::string to_string(const Shape& s) {
    return "(" + std::to_string(s.channels) + ", " + std::to_string(s.height) + ", " +
           std::to_string(s.width) + ")";
}

ImageTensor::ImageTensor(Shape shape, double fill) : shape_(shape) {
    require(shape.channels > 0 && shape.height > 0 && shape.width > 0,
            "tensor dimensions must be positive, got " + to_string(shape));
    data_.assign(shape.size(), fill);
}

ImageTensor::ImageTensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    require(shape.channels > 0 && shape.height > 0 && shape.width > 0,
            "tensor dimensions must be positive, got " + to_string(shape));
    require(data_.size() == shape.size(), "tensor data length " + std::to_string(data_.size()) +
                                              " does not match shape " + to_string(shape));
}

ImageTensor ImageTensor::standard_normal(Shape shape, Rng& rng) {
    ImageTensor out(shape);
    for (double& v : out.data_) v = rng.normal();
    return out;
}

std::span<double> ImageTensor::channel(int c) {
    const std::size_t plane = static_cast<std::size_t>(shape_.height) * shape_.width;
    return std::span<double>(data_).subspan(plane * c, plane);
}

std::span<const double> ImageTensor::channel(int c) const {
    const std::size_t plane = static_cast<std::size_t>(shape_.height) * shape_.width;
    return std::span<const double>(data_).subspan(plane * c, plane);
}

ImageTensor ImageTensor::extract_channel(int c) const {
    require(c >= 0 && c < shape_.channels, "channel index out of range");
    auto src = channel(c);
    return ImageTensor(Shape{1, shape_.height, shape_.width}, std::vector<double>(src.begin(), src.end()));
}

double ImageTensor::channel_mean(int c) const {
    auto plane = channel(c);
    double sum = 0.0;
    for (double v : plane) sum += v;
    return sum / static_cast<double>(plane.size());
}

double ImageTensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

bool ImageTensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        fail_validation(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                        to_string(b.shape()));
    }
}

ImageTensor concat_channels(std::span<const ImageTensor> parts) {
    require(!parts.empty(), "concat_channels: no inputs");
    const int h = parts.front().height();
    const int w = parts.front().width();
    int channels = 0;
    for (const auto& p : parts) {
        require(p.height() == h && p.width() == w, "concat_channels: spatial size mismatch");
        channels += p.channels();
    }
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(channels) * h * w);
    for (const auto& p : parts) data.insert(data.end(), p.values().begin(), p.values().end());
    return ImageTensor(Shape{channels, h, w}, std::move(data));
}

ImageTensor clamp(const ImageTensor& x, double lo, double hi) {
    ImageTensor out = x;
    for (double& v : out.values()) v = std::clamp(v, lo, hi);
    return out;
}

}  // namespace genfusion
