#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace genfusion {

class Rng;

struct Shape {
    int channels = 0;
    int height = 0;
    int width = 0;

    std::size_t size() const {
        return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
               static_cast<std::size_t>(width);
    }
    friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// C x H x W raster of doubles, channel-major. Model space is [-1, 1] for
/// images; noise and latents are unconstrained.
class ImageTensor {
public:
    ImageTensor() = default;
    explicit ImageTensor(Shape shape, double fill = 0.0);
    ImageTensor(int channels, int height, int width, double fill = 0.0)
        : ImageTensor(Shape{channels, height, width}, fill) {}
    ImageTensor(Shape shape, std::vector<double> data);

    static ImageTensor standard_normal(Shape shape, Rng& rng);

    const Shape& shape() const { return shape_; }
    int channels() const { return shape_.channels; }
    int height() const { return shape_.height; }
    int width() const { return shape_.width; }
    std::size_t size() const { return data_.size(); }

    double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    std::span<double> channel(int c);
    std::span<const double> channel(int c) const;

    ImageTensor extract_channel(int c) const;
    double channel_mean(int c) const;
    double max_abs() const;
    bool all_finite() const;

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

private:
    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x;
    }

    Shape shape_{};
    std::vector<double> data_;
};

/// Throws ValidationError naming `what` when the shapes differ.
void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what);

/// Stack tensors along the channel axis.
ImageTensor concat_channels(std::span<const ImageTensor> parts);

ImageTensor clamp(const ImageTensor& x, double lo, double hi);

}  // namespace genfusion
