#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "genfusion/box.hpp"

namespace genfusion {

struct AnnotatedBox {
    BoundingBox box;
    std::optional<double> confidence;

    friend bool operator==(const AnnotatedBox&, const AnnotatedBox&) = default;
};

/// Per-image annotation record (ground truth or detections).
struct ImageAnnotations {
    std::string image;
    int width = 0;
    int height = 0;
    std::vector<AnnotatedBox> boxes;

    friend bool operator==(const ImageAnnotations&, const ImageAnnotations&) = default;
};

std::string annotations_to_json(const ImageAnnotations& ann);
/// `source` names the input in error messages.
ImageAnnotations annotations_from_json(const std::string& text, const std::string& source = "<string>");

void write_annotations_json(const std::filesystem::path& path, const ImageAnnotations& ann);
ImageAnnotations read_annotations_json(const std::filesystem::path& path);

/// "class_index cx cy w h [confidence]" per box, normalised, 6 decimals.
std::string annotations_to_yolo(const ImageAnnotations& ann, const std::vector<std::string>& classes);
ImageAnnotations annotations_from_yolo(const std::string& text, const std::string& image, int width, int height,
                                       const std::vector<std::string>& classes,
                                       const std::string& source = "<string>");

}  // namespace genfusion
