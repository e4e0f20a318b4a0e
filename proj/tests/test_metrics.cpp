#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <gtest/gtest.h>

#include "genfusion/blob_detector.hpp"
#include "genfusion/error.hpp"
#include "genfusion/metrics.hpp"
#include "genfusion/rng.hpp"
#include "genfusion/scene.hpp"
#include "metric_oracle.hpp"

using namespace genfusion;

using namespace genfusion::test_oracle;

TEST(Iou, Examples) {
    EXPECT_DOUBLE_EQ(iou(bb(1, 2, 5, 7), bb(1, 2, 5, 7)), 1.0);
    EXPECT_EQ(iou(bb(0, 0, 1, 1), bb(2, 2, 3, 3)), 0.0);
    EXPECT_EQ(iou(bb(0, 0, 1, 1), bb(1, 0, 2, 1)), 0.0);  // shared edge
    EXPECT_DOUBLE_EQ(iou(bb(0, 0, 2, 2), bb(1, 1, 3, 3)), 1.0 / 7.0);
    EXPECT_THROW(iou(bb(0, 0, 0, 2), bb(0, 0, 1, 1)), ValidationError);
}

TEST(Iou, SymmetricBoundedMatchesOracle) {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        auto r = [&] {
            const double x = rng.uniform(0, 10), y = rng.uniform(0, 10);
            return bb(x, y, x + rng.uniform(0.1, 5), y + rng.uniform(0.1, 5));
        };
        const auto a = r(), b = r();
        const double v = iou(a, b);
        EXPECT_NEAR(v, iou(b, a), 1e-15);
        EXPECT_NEAR(v, oracle_iou(a, b), 1e-12);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Nms, Examples) {
    const Detection a{bb(0, 0, 10, 10), 0.9, "i"};
    EXPECT_EQ(nms({a}, 0.45).size(), 1u);
    // x-shift 2.5: 75 / 125 = 0.6
    const Detection b{bb(2.5, 0, 12.5, 10), 0.8, "i"};
    ASSERT_NEAR(iou(a.box, b.box), 0.6, 1e-12);
    auto kept = nms({b, a}, 0.45);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].confidence, 0.9);
    // IoU 0.3: shift s with (10 - s) / (10 + s) = 0.3
    const Detection c{bb(70.0 / 13.0, 0, 70.0 / 13.0 + 10, 10), 0.7, "i"};
    ASSERT_NEAR(iou(a.box, c.box), 0.3, 1e-12);
    kept = nms({c, a}, 0.45);
    ASSERT_EQ(kept.size(), 2u);
    EXPECT_EQ(kept[0].confidence, 0.9);
    EXPECT_THROW(nms({a}, 1.0), ValidationError);
}

TEST(Nms, TiesKeepEarlierInput) {
    const Detection first{bb(0, 0, 10.5, 10), 0.5, "i"}, second{bb(0, 0, 10, 10), 0.5, "i"};
    auto kept = nms({first, second}, 0.45);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].box.x_max, 10.5);
    kept = nms({second, first}, 0.45);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].box.x_max, 10.0);
}

TEST(Nms, OtherImagesDoNotSuppress) {
    const auto kept = nms({{bb(0, 0, 4, 4), 0.9, "a"}, {bb(0, 0, 4, 4), 0.8, "b"}}, 0.45);
    EXPECT_EQ(kept.size(), 2u);
}

TEST(Nms, SubsetPairwiseIdempotent) {
    Rng rng(2);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Detection> dets;
        const auto n = rng.uniform_int(0, 15);
        for (int k = 0; k < n; ++k) {
            const double x = rng.uniform(0, 20), y = rng.uniform(0, 20);
            dets.push_back({bb(x, y, x + rng.uniform(1, 8), y + rng.uniform(1, 8)), rng.uniform(),
                            rng.uniform() < 0.5 ? "a" : "b"});
        }
        const double thr = rng.uniform(0.1, 0.9);
        const auto kept = nms(dets, thr);
        for (const auto& k : kept)
            EXPECT_TRUE(std::any_of(dets.begin(), dets.end(), [&](const Detection& d) {
                return d.box == k.box && d.confidence == k.confidence && d.image_id == k.image_id;
            }));
        for (std::size_t i = 0; i < kept.size(); ++i) {
            if (i > 0) EXPECT_GE(kept[i - 1].confidence, kept[i].confidence);
            for (std::size_t j = i + 1; j < kept.size(); ++j)
                if (kept[i].image_id == kept[j].image_id) EXPECT_LE(iou(kept[i].box, kept[j].box), thr);
        }
        const auto again = nms(kept, thr);
        ASSERT_EQ(again.size(), kept.size());
        for (std::size_t i = 0; i < kept.size(); ++i) EXPECT_EQ(again[i].box, kept[i].box);
    }
}

TEST(Match, Examples) {
    const std::vector<GroundTruth> g{{bb(0, 0, 10, 10), "i"}};
    EXPECT_EQ(match_detections({{bb(0, 0, 10, 10), 0.9, "i"}}, g, 0.5), std::vector<bool>{true});
    const std::vector<Detection> two{{bb(0, 0, 10, 9), 0.6, "i"}, {bb(0, 0, 10, 10), 0.8, "i"}};
    EXPECT_EQ(match_detections(two, g, 0.5), (std::vector<bool>{false, true}));
    // IoU exactly 0.5: 50 / 100
    const std::vector<Detection> half{{bb(0, 0, 10, 5), 0.9, "i"}};
    ASSERT_EQ(iou(half[0].box, g[0].box), 0.5);
    EXPECT_EQ(match_detections(half, g, 0.5), std::vector<bool>{false});
    EXPECT_EQ(match_detections({{bb(0, 0, 10, 10), 0.9, "other"}}, g, 0.5), std::vector<bool>{false});
}

TEST(Match, HighestIouClaimed) {
    const std::vector<GroundTruth> g{{bb(0, 0, 10, 10), "i"}, {bb(1, 0, 11, 10), "i"}};
    const std::vector<Detection> d{{bb(1, 0, 11, 10), 0.9, "i"}, {bb(0, 0, 10, 10), 0.8, "i"}};
    EXPECT_EQ(match_detections(d, g, 0.5), (std::vector<bool>{true, true}));
}

TEST(PrCurve, Examples) {
    auto c = pr_curve({true}, {0.7}, 1);
    ASSERT_EQ(c.points.size(), 1u);
    EXPECT_EQ(c.points[0].recall, 1.0);
    EXPECT_EQ(c.points[0].precision, 1.0);
    c = pr_curve({false, true}, {0.9, 0.8}, 1);
    ASSERT_EQ(c.points.size(), 2u);
    EXPECT_EQ(c.points[0].recall, 0.0);
    EXPECT_EQ(c.points[0].precision, 0.0);
    EXPECT_EQ(c.points[1].recall, 1.0);
    EXPECT_EQ(c.points[1].precision, 0.5);
    EXPECT_TRUE(pr_curve({}, {}, 3).points.empty());
    c = pr_curve({false, false}, {0.3, 0.2}, 0);
    for (const auto& p : c.points) EXPECT_EQ(p.recall, 0.0);
}

TEST(PrCurve, EqualConfidencesShareOnePoint) {
    const auto c = pr_curve({true, false, true}, {0.5, 0.5, 0.2}, 4);
    ASSERT_EQ(c.points.size(), 2u);
    EXPECT_EQ(c.points[0].recall, 0.25);
    EXPECT_EQ(c.points[0].precision, 0.5);
}

TEST(InterpolatedAp, HandFixtures) {
    EXPECT_DOUBLE_EQ(interpolated_ap(PRCurve{{{1.0, 1.0}}, 1}), 1.0);
    EXPECT_DOUBLE_EQ(interpolated_ap(PRCurve{{{0.0, 0.0}, {1.0, 0.5}}, 1}), 0.5);
    EXPECT_DOUBLE_EQ(interpolated_ap(PRCurve{{{0.5, 1.0}}, 2}), 51.0 / 101.0);
    EXPECT_EQ(interpolated_ap(PRCurve{{}, 3}), 0.0);
    // recall 1/3 reaches levels 0..33
    EXPECT_DOUBLE_EQ(interpolated_ap(PRCurve{{{1.0 / 3.0, 1.0}}, 3}), 34.0 / 101.0);
}

TEST(ApAt, ThreeImageFixtureMatchesBruteForce) {
    const std::vector<GroundTruth> g{{bb(0, 0, 10, 10), "a"}, {bb(20, 20, 30, 30), "a"}, {bb(5, 5, 15, 15), "b"},
                                     {bb(0, 0, 4, 4), "c"}};
    const std::vector<Detection> d{{bb(0, 0, 10, 10), 0.95, "a"}, {bb(21, 20, 31, 30), 0.6, "a"},
                                   {bb(0, 0, 10, 10), 0.7, "a"},  {bb(5, 6, 15, 15), 0.9, "b"},
                                   {bb(40, 40, 44, 44), 0.8, "c"}, {bb(0, 0, 4, 3), 0.5, "c"}};
    for (double t : coco_thresholds()) EXPECT_NEAR(ap_at(d, g, t), brute_force_ap(d, g, t), 1e-9) << t;
    // by hand at 0.5: TP .95, TP .9, FP .8, FP .7, TP .6, TP .5 over 4 gts
    // envelope: p=1 up to r=.5, p=4/6 up to r=1
    EXPECT_NEAR(ap_at(d, g, 0.5), (51.0 * 1.0 + 50.0 * 4.0 / 6.0) / 101.0, 1e-12);
}

TEST(ApAt, RandomInstancesMatchBruteForce) {
    Rng rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto inst = random_instance(rng);
        for (double t : {0.3, 0.5, 0.75})
            ASSERT_NEAR(ap_at(inst.dets, inst.gts, t), brute_force_ap(inst.dets, inst.gts, t), 1e-9) << trial;
    }
}

TEST(ApAt, RankInvariance) {
    Rng rng(4);
    for (int trial = 0; trial < 300; ++trial) {
        auto inst = random_instance(rng);
        const auto flags = match_detections(inst.dets, inst.gts, 0.5);
        const double ap = ap_at(inst.dets, inst.gts, 0.5);
        // c -> c^2 is exact on the eighths grid
        for (auto& d : inst.dets) d.confidence = d.confidence * d.confidence;
        EXPECT_EQ(match_detections(inst.dets, inst.gts, 0.5), flags);
        EXPECT_EQ(ap_at(inst.dets, inst.gts, 0.5), ap);
    }
}

TEST(ApAt, LowConfidenceFalsePositiveNeverHelps) {
    Rng rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        auto inst = random_instance(rng);
        const double before = ap_at(inst.dets, inst.gts, 0.5);
        inst.dets.push_back({bb(100, 100, 101, 101), 0.01, "img0"});
        const double after = ap_at(inst.dets, inst.gts, 0.5);
        EXPECT_LE(after, before + 1e-15);
        EXPECT_GE(after, 0.0);
        EXPECT_LE(after, 1.0);
    }
}

TEST(CocoAp, PerfectDetectorOnScenes) {
    Rng rng(6);
    std::vector<Detection> d;
    std::vector<GroundTruth> g;
    for (int i = 0; i < 10; ++i) {
        const auto s = gen_scene(SceneSpec{}, rng);
        for (const auto& b : s.boxes) {
            g.push_back({b, std::to_string(i)});
            d.push_back({b, 0.9, std::to_string(i)});
        }
    }
    const auto r = coco_ap(d, g);
    ASSERT_EQ(r.ap_by_threshold.size(), 10u);
    for (const auto& [t, ap] : r.ap_by_threshold) EXPECT_EQ(ap, 1.0) << t;
    EXPECT_EQ(r.ap_coco, 1.0);
}

TEST(CocoAp, MeanOfTenThresholds) {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const auto inst = random_instance(rng);
        const auto r = coco_ap(inst.dets, inst.gts);
        double s = 0.0;
        for (const auto& [t, ap] : r.ap_by_threshold) s += ap;
        EXPECT_EQ(r.ap_coco, s / 10.0);
        EXPECT_EQ(r.ap50, ap_at(inst.dets, inst.gts, 0.5));
        EXPECT_EQ(r.ap75, ap_at(inst.dets, inst.gts, 0.75));
        EXPECT_NEAR(r.ap_by_threshold[3].first, 0.65, 1e-15);
    }
}

TEST(Aggregate, MeanAndSampleStd) {
    APReport a, b;
    a.ap_coco = 0.4, b.ap_coco = 0.5;
    a.ap50 = b.ap50 = 0.8;
    const auto s = aggregate_runs({a, b});
    ASSERT_EQ(s.size(), 3u);
    EXPECT_DOUBLE_EQ(s[0].mean, 0.45);
    EXPECT_NEAR(s[0].stddev, std::sqrt(0.005), 1e-15);
    EXPECT_EQ(s[1].stddev, 0.0);
    EXPECT_EQ(aggregate_runs({a})[0].stddev, 0.0);
    EXPECT_THROW(aggregate_runs({}), ValidationError);
    EXPECT_NE(format_summary(s).find("0.4500 +/- 0.0707"), std::string::npos) << format_summary(s);
}

TEST(BlobDetector, FindsSceneApples) {
    Rng rng(8);
    SceneSpec spec;
    spec.max_apples = 5;
    for (int i = 0; i < 40; ++i) {
        spec.color = i % 2 ? AppleColor::red : AppleColor::green;
        const auto s = gen_scene(spec, rng);
        const auto dets = nms(detect_blobs(s.image, BlobDetectorConfig::apples(), "x"), 0.45);
        std::vector<GroundTruth> g;
        for (const auto& b : s.boxes) g.push_back({b, "x"});
        EXPECT_EQ(dets.size(), s.boxes.size());
        EXPECT_EQ(ap_at(dets, g, 0.5), 1.0) << i;
        for (const auto& d : dets) {
            EXPECT_GT(d.confidence, 0.5);
            EXPECT_LE(d.confidence, 1.0);
        }
    }
}

TEST(BlobDetector, BlankImageAndConfig) {
    EXPECT_TRUE(detect_blobs(ImageTensor(3, 16, 16, -0.5), BlobDetectorConfig::apples(), "x").empty());
    EXPECT_EQ(BlobDetectorConfig::apples().targets.size(), 2u);
    EXPECT_THROW(detect_blobs(ImageTensor(1, 16, 16), BlobDetectorConfig::apples(), "x"), ValidationError);
}

TEST(BlobDetector, CleanDiscBoxWithinOnePixel) {
    ImageTensor img(3, 32, 32);
    for (int c = 0; c < 3; ++c)
        for (double& v : img.channel(c)) v = SceneSpec{}.background[c];
    draw_disc(img, 15, 12, 5, apple_rgb(AppleColor::red));
    const auto d = detect_blobs(img, BlobDetectorConfig::apples(), "x");
    ASSERT_EQ(d.size(), 1u);
    EXPECT_NEAR(d[0].box.x_min, 10, 1);
    EXPECT_NEAR(d[0].box.x_max, 20, 1);
    EXPECT_NEAR(d[0].box.y_min, 7, 1);
    EXPECT_NEAR(d[0].box.y_max, 17, 1);
}

TEST(BlobDetector, FadedDiscScoresLower) {
    ImageTensor img(3, 32, 32);
    for (int c = 0; c < 3; ++c)
        for (double& v : img.channel(c)) v = SceneSpec{}.background[c];
    const auto rgb = apple_rgb(AppleColor::green);
    std::array<double, 3> faded;
    for (int c = 0; c < 3; ++c) faded[c] = 0.8 * rgb[c] + 0.2 * SceneSpec{}.background[c];
    draw_disc(img, 8, 8, 5, rgb);
    draw_disc(img, 23, 23, 5, faded);
    const auto d = detect_blobs(img, BlobDetectorConfig::apples(), "x");
    ASSERT_EQ(d.size(), 2u);
    const auto& pure = d[0].box.x_min < 16 ? d[0] : d[1];
    const auto& weak = d[0].box.x_min < 16 ? d[1] : d[0];
    EXPECT_GT(pure.confidence, weak.confidence);
}
