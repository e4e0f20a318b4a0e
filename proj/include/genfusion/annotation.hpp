#pragma once

#include <vector>

#include "genfusion/box.hpp"
#include "genfusion/tensor.hpp"

namespace genfusion {

/// Annotation-channel encoding parameters. Channel values are in [0, 1].
struct DotConfig {
    int dot_side = 5;
    double intensity = 1.0;
    double extraction_threshold = 0.5;
    int annotation_channel = 2;
    int min_component_area = 4;

    void validate() const;
};

struct Centroid {
    double x = 0.0;
    double y = 0.0;
};

/// A dot_side x dot_side square at each box centre (midpoint rounded half
/// away from zero); overlaps combine by max.
ImageTensor encode_dots(const std::vector<BoundingBox>& boxes, int height, int width, const DotConfig& config);

/// Single-pixel rectangle perimeters. A box covers the pixels whose centres
/// lie in [round(x_min), round(x_max)] x [round(y_min), round(y_max)].
ImageTensor encode_outlines(const std::vector<BoundingBox>& boxes, int height, int width,
                            const DotConfig& config);

/// Threshold, 4-connected components, intensity-weighted moments per
/// component. Components below min_component_area are dropped. Sorted by
/// (y, x).
std::vector<Centroid> extract_dots(const ImageTensor& channel, const DotConfig& config);

/// Binary footprint of encode_dots (1 where a dot was drawn).
ImageTensor dot_mask(const std::vector<BoundingBox>& boxes, int height, int width, const DotConfig& config);

/// [red, green, annotation].
ImageTensor merge_annotation_channel(const ImageTensor& color, const ImageTensor& annotation);

/// Inverse of merge_annotation_channel: (2-channel colour, 1-channel annotation).
std::pair<ImageTensor, ImageTensor> split_annotation_channel(const ImageTensor& merged);

/// Mean of the first two channels inside the mask minus the mean outside.
double leakage_score(const ImageTensor& image, const ImageTensor& mask);

/// [0, 1] channel space <-> [-1, 1] model space.
ImageTensor channel_to_model_space(const ImageTensor& x);
ImageTensor model_to_channel_space(const ImageTensor& x);

}  // namespace genfusion
