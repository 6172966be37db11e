#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace seadate {

struct Box {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
    double center_x() const { return 0.5 * (x_min + x_max); }
    double center_y() const { return 0.5 * (y_min + y_max); }
};

struct Detection {
    int class_id = 0;
    Box box;
    double confidence = 0.0;
};

struct GroundTruthBox {
    int class_id = 0;
    Box box;
};

/// Intersection over union; 0 for disjoint or degenerate boxes.
double iou(const Box& a, const Box& b);

struct MatchResult {
    std::vector<bool> tp;  // per detection, in the given (confidence) order
    std::size_t fn = 0;
    std::size_t tp_count() const;
    std::size_t fp_count() const { return tp.size() - tp_count(); }
};

/// Greedy matching in the given order (callers pass confidence-descending
/// detections of a single class): each detection takes the highest-IoU
/// unmatched ground truth with IoU >= threshold; IoU ties break by GT index.
MatchResult match_detections(const std::vector<Detection>& dets, const std::vector<Box>& gts,
                             double iou_thresh);

/// Area under the precision envelope over recall (all-points interpolation).
/// nullopt when there are no ground truths and no detections; 0 when
/// detections exist but no ground truth does.
std::optional<double> average_precision(const std::vector<bool>& tp_flags, std::size_t gt_count);

struct EvalReport {
    // class id -> AP at each of the 10 thresholds 0.50:0.05:0.95
    std::map<int, std::vector<double>> per_class_ap;
    double map50 = 0.0;
    double map75 = 0.0;
    double map = 0.0;

    std::string to_json() const;
};

/// The 10 IoU thresholds 0.50, 0.55, ..., 0.95.
const std::vector<double>& iou_thresholds();

/// COCO-style evaluation over a set of images. dets[i] and gts[i] belong to
/// image i; detections are pooled per class across images, matched per image,
/// and integrated into one PR curve per class and threshold.
EvalReport map_suite(const std::vector<std::vector<Detection>>& dets,
                     const std::vector<std::vector<GroundTruthBox>>& gts,
                     const std::vector<int>& classes);

}  // namespace seadate
