#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "genfusion/box.hpp"
#include "genfusion/tensor.hpp"

namespace genfusion {

class Rng;

enum class AppleColor { green, red };

std::string to_string(AppleColor c);
AppleColor apple_color_from_string(const std::string& s);

/// Model-space RGB of an apple of the given class.
std::array<double, 3> apple_rgb(AppleColor c);

/// Procedural orchard scene parameters.
struct SceneSpec {
    int height = 32;
    int width = 32;
    int min_apples = 1;
    int max_apples = 4;
    int min_radius = 3;
    int max_radius = 5;
    AppleColor color = AppleColor::red;
    std::array<double, 3> background{-0.55, -0.25, -0.65};
    double noise_amplitude = 0.08;
    double occlusion_prob = 0.0;

    void validate() const;
};

struct Scene {
    ImageTensor image;
    std::vector<BoundingBox> boxes;
};

/// Noisy background plus non-touching anti-aliased discs with integer
/// centres. Every box is (cx - r, cy - r, cx + r, cy + r).
Scene gen_scene(const SceneSpec& spec, Rng& rng);

/// Draws one anti-aliased disc into `image` (pixel coverage by 4x4
/// supersampling). Exposed for tests and fixtures.
void draw_disc(ImageTensor& image, double cx, double cy, double radius, const std::array<double, 3>& rgb);

ImageTensor center_crop(const ImageTensor& img, int side);

/// Bilinear, align-corners = false, edge clamped.
ImageTensor resize_bilinear(const ImageTensor& img, int out_height, int out_width);

struct ColorCounts {
    int green = 0;
    int red = 0;
};

/// Split `total` in proportion green_weight : red_weight, rounding the green
/// share half-up.
ColorCounts balance_generation_counts(int total, int green_weight = 54, int red_weight = 482);

}  // namespace genfusion
