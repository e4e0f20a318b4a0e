#pragma once

#include <array>
#include <string>
#include <vector>

#include "genfusion/metrics.hpp"
#include "genfusion/tensor.hpp"

namespace genfusion {

/// Colour-threshold detector used as a stand-in for a learned detector.
struct BlobDetectorConfig {
    struct Target {
        std::string class_label;
        std::array<double, 3> rgb;
    };
    std::vector<Target> targets;
    double max_distance = 1.2;   // colour distance (model space) mapped to score 0
    double score_threshold = 0.5;
    int min_area = 4;

    /// One target per apple colour, both labelled "apple".
    static BlobDetectorConfig apples();
};

/// Per-pixel score = max(0, 1 - |pixel - target| / max_distance); pixels at
/// or above score_threshold form 4-connected components; each component
/// yields its pixel-extent box and a confidence equal to its mean score.
std::vector<Detection> detect_blobs(const ImageTensor& image, const BlobDetectorConfig& config,
                                    const std::string& image_id);

}  // namespace genfusion
