#include "genfusion/blob_detector.hpp"

#include <algorithm>
#include <cmath>

#include "genfusion/error.hpp"
#include "genfusion/scene.hpp"

namespace genfusion {

BlobDetectorConfig BlobDetectorConfig::apples() {
    BlobDetectorConfig c;
    c.targets.push_back({"apple", apple_rgb(AppleColor::green)});
    c.targets.push_back({"apple", apple_rgb(AppleColor::red)});
    return c;
}

std::vector<Detection> detect_blobs(const ImageTensor& image, const BlobDetectorConfig& config,
                                    const std::string& image_id) {
    require(image.channels() >= 3, "blob detector expects an RGB image");
    require(config.max_distance > 0.0, "blob detector max_distance must be positive");
    const int h = image.height(), w = image.width();
    std::vector<Detection> out;
    std::vector<double> score(static_cast<std::size_t>(h) * w);
    std::vector<char> seen(score.size());
    std::vector<std::pair<int, int>> stack;

    for (const auto& target : config.targets) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double d2 = 0.0;
                for (int c = 0; c < 3; ++c) {
                    const double diff = image.at(c, y, x) - target.rgb[c];
                    d2 += diff * diff;
                }
                score[static_cast<std::size_t>(y) * w + x] = std::max(0.0, 1.0 - std::sqrt(d2) / config.max_distance);
            }
        std::fill(seen.begin(), seen.end(), 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t idx = static_cast<std::size_t>(y) * w + x;
                if (seen[idx] || score[idx] < config.score_threshold) continue;
                int x0 = x, x1 = x, y0 = y, y1 = y, area = 0;
                double total = 0.0;
                seen[idx] = 1;
                stack.assign(1, {y, x});
                while (!stack.empty()) {
                    auto [cy, cx] = stack.back();
                    stack.pop_back();
                    total += score[static_cast<std::size_t>(cy) * w + cx];
                    ++area;
                    x0 = std::min(x0, cx);
                    x1 = std::max(x1, cx);
                    y0 = std::min(y0, cy);
                    y1 = std::max(y1, cy);
                    constexpr int dy[4] = {-1, 1, 0, 0};
                    constexpr int dx[4] = {0, 0, -1, 1};
                    for (int k = 0; k < 4; ++k) {
                        const int ny = cy + dy[k], nx = cx + dx[k];
                        if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
                        const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
                        if (seen[n] || score[n] < config.score_threshold) continue;
                        seen[n] = 1;
                        stack.emplace_back(ny, nx);
                    }
                }
                if (area < config.min_area) continue;
                Detection d;
                d.box = BoundingBox{x0 - 0.5, y0 - 0.5, x1 + 0.5, y1 + 0.5, target.class_label};
                d.confidence = std::clamp(total / area, 0.0, 1.0);
                d.image_id = image_id;
                out.push_back(std::move(d));
            }
        }
    }
    return out;
}

}  // namespace genfusion
