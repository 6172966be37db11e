#include "seadate/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace seadate {

double iou(const Box& a, const Box& b) {
    const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

std::size_t MatchResult::tp_count() const {
    std::size_t n = 0;
    for (bool f : tp) n += f ? 1 : 0;
    return n;
}

MatchResult match_detections(const std::vector<Detection>& dets, const std::vector<Box>& gts,
                             double iou_thresh) {
    MatchResult result;
    result.tp.assign(dets.size(), false);
    std::vector<bool> taken(gts.size(), false);
    for (std::size_t d = 0; d < dets.size(); ++d) {
        double best = 0.0;
        std::size_t best_g = gts.size();
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) continue;
            const double overlap = iou(dets[d].box, gts[g]);
            if (overlap >= iou_thresh && overlap > best) {
                best = overlap;
                best_g = g;
            }
        }
        if (best_g < gts.size()) {
            taken[best_g] = true;
            result.tp[d] = true;
        }
    }
    result.fn = gts.size() - static_cast<std::size_t>(
                                 std::count(taken.begin(), taken.end(), true));
    return result;
}

std::optional<double> average_precision(const std::vector<bool>& tp_flags,
                                        std::size_t gt_count) {
    if (gt_count == 0) {
        if (tp_flags.empty()) return std::nullopt;
        return 0.0;
    }
    const std::size_t n = tp_flags.size();
    std::vector<double> precision(n), recall(n);
    std::size_t tp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        tp += tp_flags[k] ? 1 : 0;
        precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
        recall[k] = static_cast<double>(tp) / static_cast<double>(gt_count);
    }
    // precision envelope: max precision at recall >= r
    for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        ap += (recall[k] - prev_recall) * precision[k];
        prev_recall = recall[k];
    }
    return ap;
}

const std::vector<double>& iou_thresholds() {
    static const std::vector<double> thresholds = [] {
        std::vector<double> t;
        for (int k = 0; k < 10; ++k) t.push_back((50 + 5 * k) / 100.0);
        return t;
    }();
    return thresholds;
}

EvalReport map_suite(const std::vector<std::vector<Detection>>& dets,
                     const std::vector<std::vector<GroundTruthBox>>& gts,
                     const std::vector<int>& classes) {
    if (dets.size() != gts.size()) {
        throw std::invalid_argument("map_suite: detection and ground-truth image counts differ");
    }
    EvalReport report;
    const auto& thresholds = iou_thresholds();
    std::map<int, std::vector<double>> ap_sums_by_threshold;  // class -> per-threshold AP

    for (int cls : classes) {
        // Pool this class's detections across images, keyed back to their image.
        struct Ref {
            std::size_t image;
            std::size_t index;
            double confidence;
        };
        std::vector<Ref> pool;
        std::size_t gt_count = 0;
        std::vector<std::vector<Box>> class_gts(gts.size());
        std::vector<std::vector<Detection>> class_dets(dets.size());
        for (std::size_t img = 0; img < dets.size(); ++img) {
            for (const auto& g : gts[img]) {
                if (g.class_id == cls) {
                    class_gts[img].push_back(g.box);
                    ++gt_count;
                }
            }
            for (const auto& d : dets[img]) {
                if (d.class_id == cls) {
                    pool.push_back({img, class_dets[img].size(), d.confidence});
                    class_dets[img].push_back(d);
                }
            }
        }
        std::stable_sort(pool.begin(), pool.end(), [](const Ref& a, const Ref& b) {
            return a.confidence > b.confidence;
        });

        std::vector<double> aps;
        aps.reserve(thresholds.size());
        bool defined = false;
        for (double thresh : thresholds) {
            // Match per image in pooled confidence order.
            std::vector<std::vector<Detection>> ordered(dets.size());
            for (std::size_t img = 0; img < dets.size(); ++img) {
                std::vector<Detection> sorted = class_dets[img];
                std::stable_sort(sorted.begin(), sorted.end(),
                                 [](const Detection& a, const Detection& b) {
                                     return a.confidence > b.confidence;
                                 });
                ordered[img] = std::move(sorted);
            }
            std::vector<MatchResult> matches(dets.size());
            for (std::size_t img = 0; img < dets.size(); ++img) {
                matches[img] = match_detections(ordered[img], class_gts[img], thresh);
            }
            // Flags in pooled confidence order: look up each pooled det's flag
            // by its per-image confidence rank.
            std::vector<bool> flags;
            flags.reserve(pool.size());
            std::vector<std::size_t> cursor(dets.size(), 0);
            for (const auto& ref : pool) {
                flags.push_back(matches[ref.image].tp[cursor[ref.image]++]);
            }
            auto ap = average_precision(flags, gt_count);
            if (ap.has_value()) {
                defined = true;
                aps.push_back(*ap);
            } else {
                aps.push_back(0.0);
            }
        }
        if (defined) report.per_class_ap[cls] = aps;
    }

    if (!report.per_class_ap.empty()) {
        const double nc = static_cast<double>(report.per_class_ap.size());
        double total = 0.0;
        for (const auto& [cls, aps] : report.per_class_ap) {
            report.map50 += aps[0];
            report.map75 += aps[5];
            for (double ap : aps) total += ap;
        }
        report.map50 /= nc;
        report.map75 /= nc;
        report.map = total / (nc * static_cast<double>(thresholds.size()));
    }
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    nlohmann::json per_class = nlohmann::json::object();
    const auto& thresholds = iou_thresholds();
    for (const auto& [cls, aps] : per_class_ap) {
        nlohmann::json by_threshold = nlohmann::json::object();
        for (std::size_t k = 0; k < thresholds.size(); ++k) {
            char key[8];
            std::snprintf(key, sizeof(key), "%.2f", thresholds[k]);
            by_threshold[key] = aps[k];
        }
        per_class[std::to_string(cls)] = by_threshold;
    }
    j["per_class_ap"] = per_class;
    j["map50"] = map50;
    j["map75"] = map75;
    j["map"] = map;
    return j.dump(2);
}

}  // namespace seadate
