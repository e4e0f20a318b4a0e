#include "genfusion/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "genfusion/error.hpp"

namespace genfusion {

namespace {

long round_half_away(double v) { return std::lround(v); }

void stamp_dot(ImageTensor& out, const BoundingBox& box, const DotConfig& config, double value) {
    const long cx = round_half_away(box.center_x());
    const long cy = round_half_away(box.center_y());
    const int half = config.dot_side / 2;
    if (cx - half < 0 || cy - half < 0 || cx + half >= out.width() || cy + half >= out.height()) {
        fail_validation("dot centred at (" + std::to_string(cx) + ", " + std::to_string(cy) +
                        ") does not fit inside a " + std::to_string(out.width()) + "x" +
                        std::to_string(out.height()) + " image");
    }
    for (long y = cy - half; y <= cy + half; ++y)
        for (long x = cx - half; x <= cx + half; ++x) {
            double& v = out.at(0, static_cast<int>(y), static_cast<int>(x));
            v = std::max(v, value);
        }
}

}  // namespace

void DotConfig::validate() const {
    require(dot_side >= 1 && dot_side % 2 == 1, "dot_side must be an odd positive integer");
    require(intensity > 0.0, "dot intensity must be positive");
    require(extraction_threshold > 0.0 && extraction_threshold < intensity,
            "extraction threshold must lie strictly between 0 and the dot intensity");
    require(annotation_channel >= 0, "annotation channel index must be non-negative");
    require(min_component_area >= 1, "minimum component area must be positive");
}

ImageTensor encode_dots(const std::vector<BoundingBox>& boxes, int height, int width, const DotConfig& config) {
    config.validate();
    ImageTensor out(1, height, width);
    for (const auto& box : boxes) stamp_dot(out, box, config, config.intensity);
    return out;
}

ImageTensor dot_mask(const std::vector<BoundingBox>& boxes, int height, int width, const DotConfig& config) {
    config.validate();
    ImageTensor out(1, height, width);
    for (const auto& box : boxes) stamp_dot(out, box, config, 1.0);
    return out;
}

ImageTensor encode_outlines(const std::vector<BoundingBox>& boxes, int height, int width,
                            const DotConfig& config) {
    config.validate();
    ImageTensor out(1, height, width);
    for (const auto& box : boxes) {
        const long x0 = round_half_away(box.x_min), x1 = round_half_away(box.x_max);
        const long y0 = round_half_away(box.y_min), y1 = round_half_away(box.y_max);
        if (x0 < 0 || y0 < 0 || x1 >= width || y1 >= height || x1 < x0 || y1 < y0)
            fail_validation("outline box out of image bounds");
        for (long x = x0; x <= x1; ++x) {
            out.at(0, static_cast<int>(y0), static_cast<int>(x)) = config.intensity;
            out.at(0, static_cast<int>(y1), static_cast<int>(x)) = config.intensity;
        }
        for (long y = y0; y <= y1; ++y) {
            out.at(0, static_cast<int>(y), static_cast<int>(x0)) = config.intensity;
            out.at(0, static_cast<int>(y), static_cast<int>(x1)) = config.intensity;
        }
    }
    return out;
}

std::vector<Centroid> extract_dots(const ImageTensor& channel, const DotConfig& config) {
    config.validate();
    require(channel.channels() == 1, "extract_dots expects a single-channel image");
    const int h = channel.height(), w = channel.width();
    std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
    std::vector<Centroid> found;
    std::vector<std::pair<int, int>> stack;
    auto on = [&](int y, int x) { return channel.at(0, y, x) >= config.extraction_threshold; };

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!on(y, x) || label[static_cast<std::size_t>(y) * w + x] >= 0) continue;
            double m00 = 0.0, m10 = 0.0, m01 = 0.0;
            int area = 0;
            stack.assign(1, {y, x});
            label[static_cast<std::size_t>(y) * w + x] = 1;
            while (!stack.empty()) {
                auto [cy, cx] = stack.back();
                stack.pop_back();
                const double v = channel.at(0, cy, cx);
                m00 += v;
                m10 += v * cx;
                m01 += v * cy;
                ++area;
                constexpr int dy[4] = {-1, 1, 0, 0};
                constexpr int dx[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const int ny = cy + dy[k], nx = cx + dx[k];
                    if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
                    auto& l = label[static_cast<std::size_t>(ny) * w + nx];
                    if (l >= 0 || !on(ny, nx)) continue;
                    l = 1;
                    stack.emplace_back(ny, nx);
                }
            }
            if (area >= config.min_component_area) found.push_back({m10 / m00, m01 / m00});
        }
    }
    std::sort(found.begin(), found.end(), [](const Centroid& a, const Centroid& b) {
        return a.y != b.y ? a.y < b.y : a.x < b.x;
    });
    return found;
}

ImageTensor merge_annotation_channel(const ImageTensor& color, const ImageTensor& annotation) {
    require(color.channels() == 2, "merge expects a 2-channel colour image");
    require(annotation.channels() == 1, "merge expects a 1-channel annotation image");
    require(color.height() == annotation.height() && color.width() == annotation.width(),
            "merge: spatial size mismatch");
    const ImageTensor parts[] = {color, annotation};
    return concat_channels(parts);
}

std::pair<ImageTensor, ImageTensor> split_annotation_channel(const ImageTensor& merged) {
    require(merged.channels() == 3, "split expects a 3-channel image");
    const ImageTensor parts[] = {merged.extract_channel(0), merged.extract_channel(1)};
    return {concat_channels(parts), merged.extract_channel(2)};
}

double leakage_score(const ImageTensor& image, const ImageTensor& mask) {
    require(image.channels() >= 2, "leakage_score expects at least two colour channels");
    require(mask.channels() == 1 && mask.height() == image.height() && mask.width() == image.width(),
            "leakage_score: mask shape mismatch");
    // sums are taken relative to one pixel so constant images score exactly 0
    const double base = image.at(0, 0, 0);
    double in_sum = 0.0, out_sum = 0.0;
    std::size_t in_n = 0, out_n = 0;
    for (int c = 0; c < 2; ++c) {
        auto plane = image.channel(c);
        auto m = mask.channel(0);
        for (std::size_t i = 0; i < plane.size(); ++i) {
            if (m[i] > 0.5) {
                in_sum += plane[i] - base;
                ++in_n;
            } else {
                out_sum += plane[i] - base;
                ++out_n;
            }
        }
    }
    require(in_n > 0, "leakage_score: empty dot mask");
    require(out_n > 0, "leakage_score: mask covers the whole image");
    return in_sum / static_cast<double>(in_n) - out_sum / static_cast<double>(out_n);
}

ImageTensor channel_to_model_space(const ImageTensor& x) {
    ImageTensor out = x;
    for (double& v : out.values()) v = 2.0 * v - 1.0;
    return out;
}

ImageTensor model_to_channel_space(const ImageTensor& x) {
    ImageTensor out = x;
    for (double& v : out.values()) v = 0.5 * (v + 1.0);
    return out;
}

}  // namespace genfusion
