#include "genfusion/scene.hpp"

#include <algorithm>
#include <cmath>

#include "genfusion/error.hpp"
#include "genfusion/rng.hpp"

namespace genfusion {

std::string to_string(AppleColor c) { return c == AppleColor::green ? "green" : "red"; }

AppleColor apple_color_from_string(const std::string& s) {
    if (s == "green") return AppleColor::green;
    if (s == "red") return AppleColor::red;
    fail_validation("unknown apple colour '" + s + "' (expected green or red)");
}

std::array<double, 3> apple_rgb(AppleColor c) {
    if (c == AppleColor::green) return {-0.05, 0.85, -0.45};
    return {0.85, -0.45, -0.55};
}

void SceneSpec::validate() const {
    require(height > 0 && width > 0, "scene size must be positive");
    require(min_apples >= 0 && max_apples >= min_apples, "invalid apple count range");
    require(min_radius >= 2 && max_radius >= min_radius, "apple radii must be >= 2 and ordered");
    require(2 * max_radius + 1 <= std::min(height, width), "apple radius too large for the scene");
    require(occlusion_prob >= 0.0 && occlusion_prob <= 1.0, "occlusion probability must lie in [0, 1]");
    require(noise_amplitude >= 0.0, "noise amplitude must be non-negative");
}

void draw_disc(ImageTensor& image, double cx, double cy, double radius, const std::array<double, 3>& rgb) {
    constexpr int kSub = 4;
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
    const int y1 = std::min(image.height() - 1, static_cast<int>(std::ceil(cy + radius + 1)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
    const int x1 = std::min(image.width() - 1, static_cast<int>(std::ceil(cx + radius + 1)));
    const double r2 = radius * radius;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            int inside = 0;
            for (int sy = 0; sy < kSub; ++sy)
                for (int sx = 0; sx < kSub; ++sx) {
                    const double px = x - 0.5 + (sx + 0.5) / kSub - cx;
                    const double py = y - 0.5 + (sy + 0.5) / kSub - cy;
                    if (px * px + py * py <= r2) ++inside;
                }
            if (inside == 0) continue;
            const double cov = static_cast<double>(inside) / (kSub * kSub);
            for (int c = 0; c < std::min(3, image.channels()); ++c) {
                double& v = image.at(c, y, x);
                v = v * (1.0 - cov) + rgb[c] * cov;
            }
        }
    }
}

Scene gen_scene(const SceneSpec& spec, Rng& rng) {
    spec.validate();
    Scene scene{ImageTensor(3, spec.height, spec.width), {}};
    for (int c = 0; c < 3; ++c)
        for (double& v : scene.image.channel(c))
            v = std::clamp(spec.background[c] + spec.noise_amplitude * rng.normal(), -1.0, 1.0);

    const int count = static_cast<int>(rng.uniform_int(spec.min_apples, spec.max_apples));
    struct Disc {
        int cx, cy, r;
    };
    std::vector<Disc> placed;
    for (int i = 0; i < count; ++i) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            const int r = static_cast<int>(rng.uniform_int(spec.min_radius, spec.max_radius));
            const int cx = static_cast<int>(rng.uniform_int(r, spec.width - 1 - r));
            const int cy = static_cast<int>(rng.uniform_int(r, spec.height - 1 - r));
            const bool clear = std::all_of(placed.begin(), placed.end(), [&](const Disc& d) {
                const double dist = std::hypot(cx - d.cx, cy - d.cy);
                return dist >= r + d.r + 2;
            });
            if (clear) {
                placed.push_back({cx, cy, r});
                break;
            }
        }
    }
    const auto rgb = apple_rgb(spec.color);
    for (const Disc& d : placed) {
        draw_disc(scene.image, d.cx, d.cy, d.r, rgb);
        if (spec.occlusion_prob > 0.0 && rng.uniform() < spec.occlusion_prob) {
            const double angle = rng.uniform(0.0, 6.283185307179586);
            const double leaf_r = 0.6 * d.r;
            draw_disc(scene.image, d.cx + d.r * std::cos(angle), d.cy + d.r * std::sin(angle), leaf_r,
                      spec.background);
        }
        scene.boxes.push_back(BoundingBox{static_cast<double>(d.cx - d.r), static_cast<double>(d.cy - d.r),
                                          static_cast<double>(d.cx + d.r), static_cast<double>(d.cy + d.r),
                                          "apple"});
    }
    return scene;
}

ImageTensor center_crop(const ImageTensor& img, int side) {
    require(side >= 1 && side <= std::min(img.height(), img.width()),
            "crop side " + std::to_string(side) + " exceeds image size " + to_string(img.shape()));
    const int ox = (img.width() - side) / 2;
    const int oy = (img.height() - side) / 2;
    ImageTensor out(img.channels(), side, side);
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) out.at(c, y, x) = img.at(c, y + oy, x + ox);
    return out;
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_height, int out_width) {
    require(out_height > 0 && out_width > 0, "resize target must be positive");
    if (out_height == img.height() && out_width == img.width()) return img;
    ImageTensor out(img.channels(), out_height, out_width);
    const double sy = static_cast<double>(img.height()) / out_height;
    const double sx = static_cast<double>(img.width()) / out_width;
    for (int y = 0; y < out_height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, img.height() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, img.width() - 1);
            const double wx = fx - x0;
            for (int c = 0; c < img.channels(); ++c) {
                const double top = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
                const double bottom = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
                out.at(c, y, x) = top * (1 - wy) + bottom * wy;
            }
        }
    }
    return out;
}

ColorCounts balance_generation_counts(int total, int green_weight, int red_weight) {
    require(total >= 0, "generation total must be non-negative");
    require(green_weight >= 0 && red_weight >= 0 && green_weight + red_weight > 0, "invalid colour ratio");
    // round-half-up of total * g / (g + r) in exact integer arithmetic
    const long long num = 2LL * total * green_weight + (green_weight + red_weight);
    const long long den = 2LL * (green_weight + red_weight);
    const int green = static_cast<int>(num / den);
    return {green, total - green};
}

}  // namespace genfusion
