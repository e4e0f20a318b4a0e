#include <cmath>
#include <filesystem>
#include <queue>

#include <gtest/gtest.h>

#include "genfusion/annotation.hpp"
#include "genfusion/error.hpp"
#include "genfusion/image_io.hpp"
#include "genfusion/latent_codec.hpp"
#include "genfusion/rng.hpp"

using namespace genfusion;
namespace fs = std::filesystem;

namespace {

BoundingBox box_at(double cx, double cy, double half = 3.0) { return {cx - half, cy - half, cx + half, cy + half}; }

int count_above(const ImageTensor& x, double v) {
    int n = 0;
    for (double p : x.values()) n += p >= v;
    return n;
}

// Reference labeller: BFS flood fill, 4-connected, unweighted centroid of
// the pixel set (dots are flat, so this equals the weighted one).
std::vector<Centroid> flood_centroids(const ImageTensor& ch, double thr, int min_area) {
    const int h = ch.height(), w = ch.width();
    std::vector<int> seen(static_cast<std::size_t>(h * w), 0);
    std::vector<Centroid> out;
    for (int y0 = 0; y0 < h; ++y0)
        for (int x0 = 0; x0 < w; ++x0) {
            if (seen[y0 * w + x0] || ch.at(0, y0, x0) < thr) continue;
            std::queue<std::pair<int, int>> q;
            q.push({y0, x0});
            seen[y0 * w + x0] = 1;
            double sx = 0, sy = 0;
            int n = 0;
            while (!q.empty()) {
                auto [y, x] = q.front();
                q.pop();
                sx += x, sy += y, ++n;
                const int ny[] = {y - 1, y + 1, y, y}, nx[] = {x, x, x - 1, x + 1};
                for (int k = 0; k < 4; ++k)
                    if (ny[k] >= 0 && ny[k] < h && nx[k] >= 0 && nx[k] < w && !seen[ny[k] * w + nx[k]] &&
                        ch.at(0, ny[k], nx[k]) >= thr) {
                        seen[ny[k] * w + nx[k]] = 1;
                        q.push({ny[k], nx[k]});
                    }
            }
            if (n >= min_area) out.push_back({sx / n, sy / n});
        }
    return out;
}

fs::path temp_path(const std::string& name) {
    return fs::temp_directory_path() / ("genfusion_annot_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(EncodeDots, NoBoxesGivesZeros) {
    const auto ch = encode_dots({}, 12, 9, DotConfig{});
    EXPECT_EQ(ch, ImageTensor(1, 12, 9));
}

TEST(EncodeDots, SymmetricPlacement) {
    const auto ch = encode_dots({box_at(10, 10)}, 20, 20, DotConfig{});
    EXPECT_EQ(count_above(ch, 1.0), 25);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) {
            const bool inside = y >= 8 && y <= 12 && x >= 8 && x <= 12;
            EXPECT_EQ(ch.at(0, y, x), inside ? 1.0 : 0.0) << y << "," << x;
        }
}

TEST(EncodeDots, MidpointRoundsHalfAwayFromZero) {
    // centre (10.5, 7.5) rounds to (11, 8)
    const auto ch = encode_dots({BoundingBox{8.0, 5.0, 13.0, 10.0}}, 20, 20, DotConfig{});
    EXPECT_EQ(ch.at(0, 8, 11), 1.0);
    EXPECT_EQ(ch.at(0, 6, 9), 1.0);
    EXPECT_EQ(ch.at(0, 5, 9), 0.0);
    EXPECT_EQ(ch.at(0, 10, 13), 1.0);
    EXPECT_EQ(ch.at(0, 10, 14), 0.0);
}

TEST(EncodeDots, OverlapIsUnionByEnumeration) {
    DotConfig cfg;
    cfg.intensity = 0.8;
    const auto ch = encode_dots({box_at(10, 10), box_at(13, 10)}, 20, 24, cfg);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 24; ++x) {
            const bool a = std::abs(y - 10) <= 2 && std::abs(x - 10) <= 2;
            const bool b = std::abs(y - 10) <= 2 && std::abs(x - 13) <= 2;
            EXPECT_EQ(ch.at(0, y, x), (a || b) ? 0.8 : 0.0);
        }
    EXPECT_EQ(count_above(ch, 0.8), 25 + 25 - 10);
}

TEST(EncodeDots, OutOfBoundsCentreRejected) {
    EXPECT_THROW(encode_dots({box_at(1, 10)}, 20, 20, DotConfig{}), ValidationError);
    EXPECT_THROW(encode_dots({box_at(10, 18)}, 20, 20, DotConfig{}), ValidationError);
    EXPECT_NO_THROW(encode_dots({box_at(2, 17)}, 20, 20, DotConfig{}));
}

TEST(EncodeDots, ConfigValidation) {
    EXPECT_THROW(encode_dots({}, 8, 8, DotConfig{.dot_side = 4}), ValidationError);
    EXPECT_THROW(encode_dots({}, 8, 8, DotConfig{.extraction_threshold = 1.0}), ValidationError);
    EXPECT_THROW(encode_dots({}, 8, 8, DotConfig{.extraction_threshold = 0.0}), ValidationError);
    EXPECT_EQ(DotConfig{}.dot_side, 5);
    EXPECT_EQ(DotConfig{}.annotation_channel, 2);
}

TEST(EncodeOutlines, PerimeterCount) {
    // pixel centres 2..5 on each axis: a 4x4 box
    const auto ch = encode_outlines({BoundingBox{2, 2, 5, 5}}, 10, 10, DotConfig{});
    EXPECT_EQ(count_above(ch, 1.0), 4 * 4 - 4);
    EXPECT_EQ(ch.at(0, 3, 3), 0.0);
    EXPECT_EQ(ch.at(0, 2, 5), 1.0);
}

TEST(EncodeOutlines, NestedBoxesBothDrawn) {
    const auto ch = encode_outlines({BoundingBox{1, 1, 8, 8}, BoundingBox{3, 3, 6, 6}}, 10, 10, DotConfig{});
    EXPECT_EQ(count_above(ch, 1.0), (8 * 8 - 6 * 6) + (4 * 4 - 2 * 2));
}

TEST(EncodeOutlines, EmptyAndOutOfBounds) {
    EXPECT_EQ(encode_outlines({}, 5, 6, DotConfig{}), ImageTensor(1, 5, 6));
    EXPECT_THROW(encode_outlines({BoundingBox{-2, 1, 3, 3}}, 10, 10, DotConfig{}), ValidationError);
    EXPECT_THROW(encode_outlines({BoundingBox{2, 1, 3, 10}}, 10, 10, DotConfig{}), ValidationError);
}

TEST(ExtractDots, SingleDot) {
    const auto c = extract_dots(encode_dots({box_at(10, 10)}, 20, 20, DotConfig{}), DotConfig{});
    ASSERT_EQ(c.size(), 1u);
    EXPECT_DOUBLE_EQ(c[0].x, 10.0);
    EXPECT_DOUBLE_EQ(c[0].y, 10.0);
}

TEST(ExtractDots, TwoSeparatedDots) {
    // footprints cols 3..7 and 9..13: one zero column between them
    const auto ch = encode_dots({box_at(11, 6), box_at(5, 6)}, 14, 16, DotConfig{});
    const auto c = extract_dots(ch, DotConfig{});
    ASSERT_EQ(c.size(), 2u);
    EXPECT_DOUBLE_EQ(c[0].x, 5.0);
    EXPECT_DOUBLE_EQ(c[1].x, 11.0);
    const auto oracle = flood_centroids(ch, 0.5, 4);
    ASSERT_EQ(oracle.size(), 2u);
}

TEST(ExtractDots, DiagonalNeighboursAreSeparate) {
    ImageTensor ch(1, 8, 8);
    for (int y = 1; y <= 2; ++y)
        for (int x = 1; x <= 2; ++x) ch.at(0, y, x) = 1.0;
    for (int y = 3; y <= 4; ++y)
        for (int x = 3; x <= 4; ++x) ch.at(0, y, x) = 1.0;
    EXPECT_EQ(extract_dots(ch, DotConfig{}).size(), 2u);
}

TEST(ExtractDots, IntensityWeightedMoments) {
    ImageTensor ch(1, 6, 6);
    ch.at(0, 2, 1) = 1.0;
    ch.at(0, 2, 2) = 1.0;
    ch.at(0, 2, 3) = 0.6;
    ch.at(0, 2, 4) = 0.6;
    ch.at(0, 3, 1) = 0.4;  // below threshold, excluded
    const auto c = extract_dots(ch, DotConfig{});
    ASSERT_EQ(c.size(), 1u);
    EXPECT_NEAR(c[0].x, (1 * 1 + 2 * 1 + 3 * 0.6 + 4 * 0.6) / 3.2, 1e-15);
    EXPECT_DOUBLE_EQ(c[0].y, 2.0);
}

TEST(ExtractDots, SmallComponentsDropped) {
    ImageTensor ch(1, 6, 6);
    ch.at(0, 1, 1) = ch.at(0, 1, 2) = ch.at(0, 2, 1) = 1.0;
    EXPECT_TRUE(extract_dots(ch, DotConfig{}).empty());
    ch.at(0, 2, 2) = 1.0;
    EXPECT_EQ(extract_dots(ch, DotConfig{}).size(), 1u);
}

TEST(ExtractDots, CodecRemovesSinglePixelDot) {
    const DotConfig one{.dot_side = 1, .min_component_area = 1};
    const auto ch = encode_dots({BoundingBox{5, 5, 5.5, 5.5}}, 8, 8, one);
    EXPECT_EQ(extract_dots(ch, one).size(), 1u);
    const auto rt = LatentCodec{2}.roundtrip(ch);
    EXPECT_DOUBLE_EQ(rt.max_abs(), 0.25);
    EXPECT_TRUE(extract_dots(rt, one).empty());
}

TEST(ExtractDots, FiveByFiveDotSurvivesCodec) {
    const auto rt = LatentCodec{2}.roundtrip(encode_dots({box_at(10, 10)}, 20, 20, DotConfig{}));
    const auto c = extract_dots(rt, DotConfig{});
    ASSERT_EQ(c.size(), 1u);
    EXPECT_LE(std::abs(c[0].x - 10.0), 0.5);
    EXPECT_LE(std::abs(c[0].y - 10.0), 0.5);
}

TEST(ExtractDots, RoundtripPropertyAgainstFloodFillOracle) {
    Rng rng(1);
    const DotConfig cfg;
    for (int trial = 0; trial < 300; ++trial) {
        const int h = 32, w = 32;
        std::vector<BoundingBox> boxes;
        for (int attempt = 0; attempt < 40 && boxes.size() < 6; ++attempt) {
            const double half = rng.uniform(1.0, 5.0);
            const double cx = rng.uniform_int(2, w - 3) + (rng.uniform() < 0.5 ? 0.0 : 0.25);
            const double cy = rng.uniform_int(2, h - 3);
            const auto b = box_at(cx, cy, half);
            bool ok = true;
            for (const auto& o : boxes) {
                // footprints separated by >= 1 zero pixel in x or y
                const long dx = std::labs(std::lround(o.center_x()) - std::lround(b.center_x()));
                const long dy = std::labs(std::lround(o.center_y()) - std::lround(b.center_y()));
                if (dx < 6 && dy < 6) ok = false;
            }
            if (ok) boxes.push_back(b);
        }
        const auto ch = encode_dots(boxes, h, w, cfg);
        const auto got = extract_dots(ch, cfg);
        ASSERT_EQ(got.size(), boxes.size()) << trial;
        const auto oracle = flood_centroids(ch, cfg.extraction_threshold, cfg.min_component_area);
        ASSERT_EQ(oracle.size(), got.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_NEAR(got[i].x, oracle[i].x, 1e-12);
            EXPECT_NEAR(got[i].y, oracle[i].y, 1e-12);
        }
        for (const auto& b : boxes) {
            double best = 1e9;
            for (const auto& c : got)
                best = std::min(best, std::max(std::abs(c.x - b.center_x()), std::abs(c.y - b.center_y())));
            EXPECT_LE(best, 0.5);
        }
        for (std::size_t i = 1; i < got.size(); ++i)
            EXPECT_TRUE(got[i - 1].y < got[i].y || (got[i - 1].y == got[i].y && got[i - 1].x < got[i].x));
    }
}

TEST(ExtractDots, HigherThresholdNeverAddsIsolatedDots) {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        ImageTensor ch(1, 30, 30);
        for (int k = 0; k < 9; ++k) {
            // a 3x3 grid of separated dots of random intensity
            const double v = rng.uniform(0.05, 1.0);
            const int cy = 4 + 10 * (k / 3), cx = 4 + 10 * (k % 3);
            for (int y = cy - 2; y <= cy + 2; ++y)
                for (int x = cx - 2; x <= cx + 2; ++x) ch.at(0, y, x) = v;
        }
        std::size_t prev = SIZE_MAX;
        for (double thr = 0.05; thr < 1.0; thr += 0.05) {
            DotConfig cfg;
            cfg.extraction_threshold = thr;
            const auto n = extract_dots(ch, cfg).size();
            EXPECT_LE(n, prev);
            prev = n;
        }
    }
}

TEST(ExtractDots, DimBridgeSplitsAtHigherThreshold) {
    // monotonicity fails in general: a dim bridge joins two bright dots
    ImageTensor ch(1, 8, 14);
    for (int y = 2; y <= 5; ++y) {
        for (int x = 1; x <= 4; ++x) ch.at(0, y, x) = 1.0;
        for (int x = 9; x <= 12; ++x) ch.at(0, y, x) = 1.0;
    }
    for (int x = 5; x <= 8; ++x) ch.at(0, 3, x) = 0.6;
    DotConfig lo, hi;
    lo.extraction_threshold = 0.5;
    hi.extraction_threshold = 0.7;
    EXPECT_EQ(extract_dots(ch, lo).size(), 1u);
    EXPECT_EQ(extract_dots(ch, hi).size(), 2u);
}

TEST(ExtractDots, BlankChannel) { EXPECT_TRUE(extract_dots(ImageTensor(1, 9, 9), DotConfig{}).empty()); }

TEST(Merge, StackOrderAndSplitRoundtrip) {
    Rng rng(3);
    ImageTensor color(2, 4, 5), annot(1, 4, 5);
    for (double& v : color.values()) v = rng.uniform(-1, 1);
    for (double& v : annot.values()) v = rng.uniform(-1, 1);
    const auto m = merge_annotation_channel(color, annot);
    EXPECT_EQ(m.channels(), 3);
    EXPECT_EQ(m.extract_channel(0), color.extract_channel(0));
    EXPECT_EQ(m.extract_channel(1), color.extract_channel(1));
    EXPECT_EQ(m.extract_channel(2), annot);
    const auto [c2, a2] = split_annotation_channel(m);
    EXPECT_EQ(c2, color);
    EXPECT_EQ(a2, annot);
    EXPECT_THROW(merge_annotation_channel(color, ImageTensor(1, 4, 4)), ValidationError);
    EXPECT_THROW(merge_annotation_channel(ImageTensor(3, 4, 5), annot), ValidationError);
}

TEST(Merge, ZeroAnnotationBlankThirdChannel) {
    const auto m = merge_annotation_channel(ImageTensor(2, 3, 3, 0.4), ImageTensor(1, 3, 3));
    for (double v : m.channel(2)) EXPECT_EQ(v, 0.0);
}

TEST(Merge, PngRoundtripWithinQuantisation) {
    Rng rng(4);
    ImageTensor color(2, 16, 16);
    for (double& v : color.values()) v = rng.uniform(-1, 1);
    const auto annot = channel_to_model_space(encode_dots({box_at(8, 8)}, 16, 16, DotConfig{}));
    const auto merged = merge_annotation_channel(color, annot);
    const auto path = temp_path("merged.png");
    write_png(path, merged);
    const auto back = read_png(path);
    fs::remove(path);
    EXPECT_EQ(back, quantize_to_8bit(merged));
    for (std::size_t i = 0; i < merged.size(); ++i)
        EXPECT_LE(std::abs(back.values()[i] - merged.values()[i]), 1.0 / 255.0 + 1e-12);
    // the annotation channel is exactly representable (-1 and +1)
    EXPECT_EQ(back.extract_channel(2), annot);
    const auto dots = extract_dots(model_to_channel_space(back.extract_channel(2)), DotConfig{});
    ASSERT_EQ(dots.size(), 1u);
    EXPECT_DOUBLE_EQ(dots[0].x, 8.0);
}

TEST(Leakage, ConstantChannelsScoreZero) {
    const auto mask = dot_mask({box_at(6, 6)}, 12, 12, DotConfig{});
    EXPECT_DOUBLE_EQ(leakage_score(ImageTensor(3, 12, 12, 0.3), mask), 0.0);
}

TEST(Leakage, RedEqualsMask) {
    const auto mask = dot_mask({box_at(6, 6)}, 12, 12, DotConfig{});
    ImageTensor img(3, 12, 12);
    std::copy(mask.values().begin(), mask.values().end(), img.channel(0).begin());
    EXPECT_DOUBLE_EQ(leakage_score(img, mask), 0.5);
}

TEST(Leakage, SymmetricUnderRedGreenSwap) {
    Rng rng(5);
    const auto mask = dot_mask({box_at(6, 6), box_at(14, 9)}, 20, 20, DotConfig{});
    ImageTensor img(3, 20, 20);
    for (double& v : img.values()) v = rng.uniform(-1, 1);
    ImageTensor swapped = img;
    std::copy(img.channel(0).begin(), img.channel(0).end(), swapped.channel(1).begin());
    std::copy(img.channel(1).begin(), img.channel(1).end(), swapped.channel(0).begin());
    EXPECT_NEAR(leakage_score(img, mask), leakage_score(swapped, mask), 1e-15);
}

TEST(Leakage, EmptyMaskRejected) {
    EXPECT_THROW(leakage_score(ImageTensor(3, 5, 5), ImageTensor(1, 5, 5)), ValidationError);
}

TEST(Spaces, ChannelModelConversion) {
    const ImageTensor c({1, 1, 3}, {0.0, 0.5, 1.0});
    EXPECT_EQ(channel_to_model_space(c).values(), (std::vector<double>{-1.0, 0.0, 1.0}));
    EXPECT_EQ(model_to_channel_space(channel_to_model_space(c)), c);
}
