#pragma once

#include <string>

namespace genfusion {

/// Axis-aligned box in continuous pixel coordinates. Pixel (x, y) has its
/// centre at (x, y) and covers [x - 0.5, x + 0.5] x [y - 0.5, y + 0.5].
struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;
    std::string class_label = "apple";

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    double center_x() const { return 0.5 * (x_min + x_max); }
    double center_y() const { return 0.5 * (y_min + y_max); }
    bool valid() const { return x_max > x_min && y_max > y_min; }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

}  // namespace genfusion
