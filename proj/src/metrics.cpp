#include "genfusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "genfusion/error.hpp"

namespace genfusion {

namespace {

std::vector<std::size_t> by_confidence(const std::vector<Detection>& dets) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
    return order;
}

}  // namespace

double iou(const BoundingBox& a, const BoundingBox& b) {
    require(a.valid() && b.valid(), "iou: degenerate box");
    const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
    require(iou_threshold > 0.0 && iou_threshold < 1.0, "NMS threshold must lie in (0, 1)");
    std::vector<Detection> kept;
    for (std::size_t i : by_confidence(dets)) {
        const Detection& d = dets[i];
        const bool keep = std::all_of(kept.begin(), kept.end(), [&](const Detection& k) {
            return k.image_id != d.image_id || iou(k.box, d.box) <= iou_threshold;
        });
        if (keep) kept.push_back(d);
    }
    return kept;
}

std::vector<bool> match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                   double iou_threshold) {
    std::vector<bool> tp(dets.size(), false);
    std::vector<bool> used(gts.size(), false);
    for (std::size_t i : by_confidence(dets)) {
        const Detection& d = dets[i];
        double best = -1.0;
        std::size_t best_gt = gts.size();
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (used[g] || gts[g].image_id != d.image_id || gts[g].box.class_label != d.box.class_label) continue;
            const double v = iou(d.box, gts[g].box);
            if (v > best) {
                best = v;
                best_gt = g;
            }
        }
        if (best_gt < gts.size() && best > iou_threshold) {
            used[best_gt] = true;
            tp[i] = true;
        }
    }
    return tp;
}

PRCurve pr_curve(const std::vector<bool>& is_tp, const std::vector<double>& confidences, std::size_t n_gt) {
    require(is_tp.size() == confidences.size(), "pr_curve: flag and confidence counts differ");
    std::vector<std::size_t> order(is_tp.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return confidences[a] > confidences[b]; });
    PRCurve curve;
    curve.n_gt = n_gt;
    std::size_t tp = 0, fp = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (is_tp[order[k]]) ++tp;
        else ++fp;
        const bool last_of_level = k + 1 == order.size() || confidences[order[k + 1]] != confidences[order[k]];
        if (!last_of_level) continue;
        const double recall = n_gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(n_gt);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        curve.points.push_back({recall, precision});
    }
    return curve;
}

double interpolated_ap(const PRCurve& curve) {
    double sum = 0.0;
    for (int level = 0; level <= 100; ++level) {
        const double r = level / 100.0;
        double best = 0.0;
        for (const auto& pt : curve.points)
            if (pt.recall >= r - 1e-12) best = std::max(best, pt.precision);
        sum += best;
    }
    return sum / 101.0;
}

double ap_at(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, double iou_threshold) {
    const std::vector<bool> flags = match_detections(dets, gts, iou_threshold);
    std::vector<double> conf(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) conf[i] = dets[i].confidence;
    return interpolated_ap(pr_curve(flags, conf, gts.size()));
}

std::vector<double> coco_thresholds() {
    std::vector<double> t;
    for (int k = 0; k < 10; ++k) t.push_back((50 + 5 * k) / 100.0);
    return t;
}

APReport coco_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts) {
    APReport r;
    double sum = 0.0;
    for (double t : coco_thresholds()) {
        const double ap = ap_at(dets, gts, t);
        r.ap_by_threshold.emplace_back(t, ap);
        sum += ap;
    }
    r.ap_coco = sum / 10.0;
    r.ap50 = r.ap_by_threshold.front().second;
    r.ap75 = r.ap_by_threshold[5].second;
    return r;
}

std::vector<MetricSummary> aggregate_runs(const std::vector<APReport>& runs) {
    require(!runs.empty(), "aggregate_runs: no runs");
    std::vector<std::pair<std::string, std::vector<double>>> metrics{{"AP@0.5:0.05:0.95", {}}, {"AP@0.50", {}},
                                                                     {"AP@0.75", {}}};
    for (const auto& r : runs) {
        metrics[0].second.push_back(r.ap_coco);
        metrics[1].second.push_back(r.ap50);
        metrics[2].second.push_back(r.ap75);
    }
    std::vector<MetricSummary> out;
    for (auto& [name, values] : metrics) {
        const double n = static_cast<double>(values.size());
        const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        out.push_back({name, mean, values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0});
    }
    return out;
}

std::string format_report(const APReport& report) {
    char buf[96];
    std::string out;
    std::snprintf(buf, sizeof buf, "AP@0.5:0.05:0.95 = %.4f\nAP@0.50 = %.4f\nAP@0.75 = %.4f\n", report.ap_coco,
                  report.ap50, report.ap75);
    out += buf;
    for (const auto& [t, ap] : report.ap_by_threshold) {
        std::snprintf(buf, sizeof buf, "  AP@%.2f = %.4f\n", t, ap);
        out += buf;
    }
    return out;
}

std::string format_summary(const std::vector<MetricSummary>& summary) {
    std::string out;
    char buf[96];
    for (const auto& m : summary) {
        std::snprintf(buf, sizeof buf, "%s = %.4f +/- %.4f\n", m.name.c_str(), m.mean, m.stddev);
        out += buf;
    }
    return out;
}

}  // namespace genfusion
