#pragma once

#include <string>
#include <utility>
#include <vector>

#include "genfusion/box.hpp"

namespace genfusion {

struct Detection {
    BoundingBox box;
    double confidence = 0.0;
    std::string image_id;
};

struct GroundTruth {
    BoundingBox box;
    std::string image_id;
};

double iou(const BoundingBox& a, const BoundingBox& b);

/// Greedy suppression by descending confidence (ties keep input order). A
/// detection survives iff its IoU with every kept detection of the same
/// image is <= threshold.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold);

/// Per-image, per-class greedy matching: detections in descending
/// confidence claim the unmatched ground truth of highest IoU when that IoU
/// strictly exceeds the threshold. Flags are aligned with `dets`.
std::vector<bool> match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                   double iou_threshold);

struct PRPoint {
    double recall = 0.0;
    double precision = 0.0;
};

struct PRCurve {
    std::vector<PRPoint> points;
    std::size_t n_gt = 0;
};

/// One point per distinct confidence, descending. Recall is 0 when n_gt = 0.
PRCurve pr_curve(const std::vector<bool>& is_tp, const std::vector<double>& confidences, std::size_t n_gt);

/// Mean over r in {0, 0.01, ..., 1} of the best precision at recall >= r.
double interpolated_ap(const PRCurve& curve);

double ap_at(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, double iou_threshold);

/// The ten thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> coco_thresholds();

struct APReport {
    std::vector<std::pair<double, double>> ap_by_threshold;  // (threshold, AP)
    double ap_coco = 0.0;
    double ap50 = 0.0;
    double ap75 = 0.0;
};

APReport coco_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts);

struct MetricSummary {
    std::string name;
    double mean = 0.0;
    double stddev = 0.0;
};

/// Mean and sample standard deviation (n - 1) of each metric; std is 0 for
/// a single run.
std::vector<MetricSummary> aggregate_runs(const std::vector<APReport>& runs);

std::string format_report(const APReport& report);
std::string format_summary(const std::vector<MetricSummary>& summary);

}  // namespace genfusion
