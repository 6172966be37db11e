#include "seadate/evaluation.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "seadate/rng.hpp"

using namespace seadate;

TEST(Iou, IdenticalBoxes) {
    Box b{1, 2, 4, 6};
    EXPECT_DOUBLE_EQ(iou(b, b), 1.0);
}

TEST(Iou, DisjointBoxes) {
    EXPECT_DOUBLE_EQ(iou({0, 0, 1, 1}, {2, 2, 3, 3}), 0.0);
}

TEST(Iou, HalfOverlappingUnitSquares) {
    // unit squares overlapping in a 0.5 x 1 strip: 0.5 / 1.5 = 1/3
    EXPECT_NEAR(iou({0, 0, 1, 1}, {0.5, 0, 1.5, 1}), 1.0 / 3.0, 1e-15);
}

TEST(Iou, DegenerateBoxContributesZero) {
    EXPECT_DOUBLE_EQ(iou({1, 1, 1, 3}, {0, 0, 2, 2}), 0.0);
}

TEST(Match, PerfectSingleMatch) {
    std::vector<Detection> dets = {{0, {0, 0, 2, 2}, 0.9}};
    std::vector<Box> gts = {{0, 0, 2, 2}};
    MatchResult r = match_detections(dets, gts, 0.5);
    EXPECT_EQ(r.tp_count(), 1u);
    EXPECT_EQ(r.fp_count(), 0u);
    EXPECT_EQ(r.fn, 0u);
}

TEST(Match, DuplicateDetectionsSingleMatchRule) {
    std::vector<Detection> dets = {{0, {0, 0, 2, 2}, 0.9}, {0, {0, 0, 2, 2}, 0.8}};
    std::vector<Box> gts = {{0, 0, 2, 2}};
    MatchResult r = match_detections(dets, gts, 0.5);
    EXPECT_TRUE(r.tp[0]);
    EXPECT_FALSE(r.tp[1]);
    EXPECT_EQ(r.fn, 0u);
}

// independent greedy re-implementation used as the randomized oracle
static std::pair<std::vector<bool>, std::size_t> match_oracle(const std::vector<Detection>& dets,
                                                              const std::vector<Box>& gts,
                                                              double thresh) {
    std::vector<bool> flags(dets.size(), false);
    std::vector<bool> used(gts.size(), false);
    for (std::size_t d = 0; d < dets.size(); ++d) {
        double best = -1.0;
        std::size_t pick = gts.size();
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (used[g]) continue;
            const Box& a = dets[d].box;
            const Box& b = gts[g];
            const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
            const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
            double v = 0.0;
            if (iw > 0 && ih > 0) {
                const double inter = iw * ih;
                v = inter / (a.area() + b.area() - inter);
            }
            if (v >= thresh && v > best) {
                best = v;
                pick = g;
            }
        }
        if (pick < gts.size()) {
            used[pick] = true;
            flags[d] = true;
        }
    }
    std::size_t fn = 0;
    for (bool u : used) fn += u ? 0 : 1;
    return {flags, fn};
}

TEST(Match, RandomizedScenesMatchOracleAndCountingIdentities) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        CounterRng rng(seed, fnv1a64("match"));
        std::vector<Detection> dets;
        std::vector<Box> gts;
        const std::size_t nd = rng.next_below(8);
        const std::size_t ng = rng.next_below(6);
        auto random_box = [&]() {
            const double x = rng.uniform(0, 20), y = rng.uniform(0, 20);
            return Box{x, y, x + rng.uniform(1, 8), y + rng.uniform(1, 8)};
        };
        for (std::size_t i = 0; i < nd; ++i)
            dets.push_back({0, random_box(), 1.0 - 0.01 * static_cast<double>(i)});
        for (std::size_t i = 0; i < ng; ++i) gts.push_back(random_box());
        MatchResult r = match_detections(dets, gts, 0.3);
        auto [flags, fn] = match_oracle(dets, gts, 0.3);
        EXPECT_EQ(r.tp, flags);
        EXPECT_EQ(r.fn, fn);
        EXPECT_EQ(r.tp_count() + r.fp_count(), dets.size());
        EXPECT_EQ(r.tp_count() + r.fn, gts.size());
    }
}

TEST(AveragePrecision, PerfectDetector) {
    auto ap = average_precision({true}, 1);
    ASSERT_TRUE(ap.has_value());
    EXPECT_DOUBLE_EQ(*ap, 1.0);
}

TEST(AveragePrecision, HandIntegratedFpTp) {
    auto ap = average_precision({false, true}, 1);
    ASSERT_TRUE(ap.has_value());
    EXPECT_NEAR(*ap, 0.5, 1e-12);
}

TEST(AveragePrecision, HandIntegratedTpFpTp) {
    auto ap = average_precision({true, false, true}, 2);
    ASSERT_TRUE(ap.has_value());
    EXPECT_NEAR(*ap, 5.0 / 6.0, 1e-12);
}

TEST(AveragePrecision, UndefinedAndZeroCases) {
    EXPECT_FALSE(average_precision({}, 0).has_value());
    auto ap = average_precision({false, false}, 0);
    ASSERT_TRUE(ap.has_value());
    EXPECT_DOUBLE_EQ(*ap, 0.0);
}

TEST(AveragePrecision, AppendingFpNeverIncreases) {
    CounterRng rng(5, 0);
    std::vector<bool> flags;
    double prev = 1.0;
    for (int i = 0; i < 30; ++i) {
        flags.push_back(rng.next_unit() < 0.5);
        auto ap = average_precision(flags, 10);
        if (!flags.back()) {
            EXPECT_LE(*ap, prev + 1e-15);
        }
        prev = *ap;
    }
}

TEST(AveragePrecision, TopTpNeverDecreases) {
    CounterRng rng(6, 0);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<bool> flags;
        const std::size_t n = 1 + rng.next_below(10);
        for (std::size_t i = 0; i < n; ++i) flags.push_back(rng.next_unit() < 0.4);
        const std::size_t gt = 5 + rng.next_below(5);
        auto base = average_precision(flags, gt);
        std::vector<bool> with_top = flags;
        with_top.insert(with_top.begin(), true);
        auto better = average_precision(with_top, gt);
        EXPECT_GE(*better, *base - 1e-15);
    }
}

TEST(MapSuite, ThresholdGridIsExactlyCocoStyle) {
    const auto& t = iou_thresholds();
    ASSERT_EQ(t.size(), 10u);
    for (int k = 0; k < 10; ++k) EXPECT_DOUBLE_EQ(t[k], 0.50 + 0.05 * k);
}

TEST(MapSuite, PerfectDetectionsGiveOnes) {
    std::vector<std::vector<GroundTruthBox>> gts(3);
    std::vector<std::vector<Detection>> dets(3);
    CounterRng rng(7, 0);
    for (std::size_t img = 0; img < 3; ++img) {
        for (int i = 0; i < 3; ++i) {
            const double x = rng.uniform(0, 30), y = rng.uniform(0, 30);
            Box b{x, y, x + rng.uniform(2, 8), y + rng.uniform(2, 8)};
            const int cls = static_cast<int>(rng.next_below(2));
            gts[img].push_back({cls, b});
            dets[img].push_back({cls, b, rng.uniform(0.5, 1.0)});
        }
    }
    EvalReport report = map_suite(dets, gts, {0, 1});
    EXPECT_DOUBLE_EQ(report.map50, 1.0);
    EXPECT_DOUBLE_EQ(report.map75, 1.0);
    EXPECT_DOUBLE_EQ(report.map, 1.0);
}

TEST(MapSuite, TotalMissGivesZeros) {
    std::vector<std::vector<GroundTruthBox>> gts = {{{0, {0, 0, 10, 10}}}};
    std::vector<std::vector<Detection>> dets = {{{0, {40, 40, 41, 41}, 0.9}}};
    EvalReport report = map_suite(dets, gts, {0});
    EXPECT_DOUBLE_EQ(report.map50, 0.0);
    EXPECT_DOUBLE_EQ(report.map75, 0.0);
    EXPECT_DOUBLE_EQ(report.map, 0.0);
}

TEST(MapSuite, EmptyClassSetGivesEmptyReport) {
    EvalReport report = map_suite({}, {}, {});
    EXPECT_TRUE(report.per_class_ap.empty());
    EXPECT_DOUBLE_EQ(report.map, 0.0);
}

// Fully independent evaluator: flat loops, envelope computed by explicit
// O(n^2) max scan, per-class per-threshold.
static double oracle_map_suite(const std::vector<std::vector<Detection>>& dets,
                               const std::vector<std::vector<GroundTruthBox>>& gts,
                               const std::vector<int>& classes, double thresh,
                               std::map<int, double>* per_class = nullptr) {
    double sum = 0.0;
    int counted = 0;
    for (int cls : classes) {
        struct Item {
            double conf;
            std::size_t img;
            Box box;
        };
        std::vector<Item> pool;
        std::size_t gt_total = 0;
        for (std::size_t img = 0; img < dets.size(); ++img) {
            for (const auto& d : dets[img])
                if (d.class_id == cls) pool.push_back({d.confidence, img, d.box});
            for (const auto& g : gts[img])
                if (g.class_id == cls) ++gt_total;
        }
        std::stable_sort(pool.begin(), pool.end(),
                         [](const Item& a, const Item& b) { return a.conf > b.conf; });
        if (gt_total == 0 && pool.empty()) continue;
        ++counted;
        if (gt_total == 0) continue;  // AP 0 contributes nothing
        std::vector<std::vector<bool>> used(gts.size());
        for (std::size_t img = 0; img < gts.size(); ++img)
            used[img].assign(gts[img].size(), false);
        std::vector<bool> flags;
        for (const auto& item : pool) {
            double best = -1;
            std::size_t pick = SIZE_MAX;
            const auto& img_gts = gts[item.img];
            for (std::size_t g = 0; g < img_gts.size(); ++g) {
                if (img_gts[g].class_id != cls || used[item.img][g]) continue;
                const double v = iou(item.box, img_gts[g].box);
                if (v >= thresh && v > best) {
                    best = v;
                    pick = g;
                }
            }
            if (pick != SIZE_MAX) {
                used[item.img][pick] = true;
                flags.push_back(true);
            } else {
                flags.push_back(false);
            }
        }
        // envelope by explicit scan
        std::vector<double> prec(flags.size()), rec(flags.size());
        std::size_t tp = 0;
        for (std::size_t k = 0; k < flags.size(); ++k) {
            tp += flags[k] ? 1 : 0;
            prec[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
            rec[k] = static_cast<double>(tp) / static_cast<double>(gt_total);
        }
        double ap = 0.0, prev = 0.0;
        for (std::size_t k = 0; k < flags.size(); ++k) {
            double env = 0.0;
            for (std::size_t j = k; j < flags.size(); ++j) env = std::max(env, prec[j]);
            ap += (rec[k] - prev) * env;
            prev = rec[k];
        }
        sum += ap;
        if (per_class) (*per_class)[cls] = ap;
    }
    return counted > 0 ? sum / counted : 0.0;
}

TEST(MapSuite, RandomizedScenesMatchIndependentEvaluator) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        CounterRng rng(seed, fnv1a64("mapsuite"));
        const std::size_t images = 1 + rng.next_below(4);
        std::vector<std::vector<Detection>> dets(images);
        std::vector<std::vector<GroundTruthBox>> gts(images);
        std::vector<int> classes = {0, 1, 2};
        for (std::size_t img = 0; img < images; ++img) {
            const std::size_t ng = rng.next_below(4);
            for (std::size_t i = 0; i < ng; ++i) {
                const double x = rng.uniform(0, 40), y = rng.uniform(0, 40);
                gts[img].push_back({static_cast<int>(rng.next_below(3)),
                                    {x, y, x + rng.uniform(2, 10), y + rng.uniform(2, 10)}});
            }
            const std::size_t nd = rng.next_below(6);
            for (std::size_t i = 0; i < nd; ++i) {
                Box base = ng > 0 && rng.next_unit() < 0.6
                               ? gts[img][rng.next_below(ng)].box
                               : Box{rng.uniform(0, 40), rng.uniform(0, 40), 0, 0};
                if (base.x_max == 0) {
                    base.x_max = base.x_min + rng.uniform(2, 10);
                    base.y_max = base.y_min + rng.uniform(2, 10);
                }
                // jitter
                const double dx = rng.uniform(-2, 2), dy = rng.uniform(-2, 2);
                Box b{base.x_min + dx, base.y_min + dy, base.x_max + dx, base.y_max + dy};
                dets[img].push_back({static_cast<int>(rng.next_below(3)), b,
                                     rng.uniform(0.05, 1.0)});
            }
        }
        EvalReport report = map_suite(dets, gts, classes);
        // compare threshold-by-threshold means against the flat oracle
        double oracle_mean = 0.0;
        const auto& thresholds = iou_thresholds();
        double oracle50 = oracle_map_suite(dets, gts, classes, 0.50);
        double oracle75 = oracle_map_suite(dets, gts, classes, 0.75);
        for (double t : thresholds) oracle_mean += oracle_map_suite(dets, gts, classes, t);
        oracle_mean /= static_cast<double>(thresholds.size());
        EXPECT_NEAR(report.map50, oracle50, 1e-12) << "seed " << seed;
        EXPECT_NEAR(report.map75, oracle75, 1e-12) << "seed " << seed;
        EXPECT_NEAR(report.map, oracle_mean, 1e-12) << "seed " << seed;
    }
}

TEST(MapSuite, ApNonincreasingInThresholdAndMapBounded) {
    CounterRng rng(31, 0);
    std::vector<std::vector<Detection>> dets(2);
    std::vector<std::vector<GroundTruthBox>> gts(2);
    for (std::size_t img = 0; img < 2; ++img) {
        for (int i = 0; i < 4; ++i) {
            const double x = rng.uniform(0, 30), y = rng.uniform(0, 30);
            Box g{x, y, x + rng.uniform(3, 9), y + rng.uniform(3, 9)};
            gts[img].push_back({0, g});
            Box d{g.x_min + rng.uniform(-1.5, 1.5), g.y_min + rng.uniform(-1.5, 1.5),
                  g.x_max + rng.uniform(-1.5, 1.5), g.y_max + rng.uniform(-1.5, 1.5)};
            dets[img].push_back({0, d, rng.uniform(0.1, 1.0)});
        }
    }
    EvalReport report = map_suite(dets, gts, {0});
    const auto& aps = report.per_class_ap.at(0);
    bool monotone = true;
    for (std::size_t k = 1; k < aps.size(); ++k) {
        EXPECT_LE(aps[k], aps[k - 1] + 1e-12);
        if (aps[k] > aps[k - 1]) monotone = false;
    }
    if (monotone) EXPECT_LE(report.map, report.map50 + 1e-12);
}

TEST(MapSuite, InvariantUnderMonotoneConfidenceRescaling) {
    CounterRng rng(33, 0);
    std::vector<std::vector<Detection>> dets(2), rescaled(2);
    std::vector<std::vector<GroundTruthBox>> gts(2);
    for (std::size_t img = 0; img < 2; ++img) {
        for (int i = 0; i < 5; ++i) {
            const double x = rng.uniform(0, 30), y = rng.uniform(0, 30);
            Box g{x, y, x + rng.uniform(3, 9), y + rng.uniform(3, 9)};
            gts[img].push_back({0, g});
            Box d{g.x_min + rng.uniform(-2, 2), g.y_min + rng.uniform(-2, 2),
                  g.x_max + rng.uniform(-2, 2), g.y_max + rng.uniform(-2, 2)};
            const double conf = rng.uniform(0.1, 0.9);
            dets[img].push_back({0, d, conf});
            rescaled[img].push_back({0, d, std::tanh(3.0 * conf) * 0.5 + 0.5});
        }
    }
    EvalReport a = map_suite(dets, gts, {0});
    EvalReport b = map_suite(rescaled, gts, {0});
    EXPECT_DOUBLE_EQ(a.map, b.map);
    EXPECT_DOUBLE_EQ(a.map50, b.map50);
}

TEST(EvalReportJson, StableKeys) {
    std::vector<std::vector<GroundTruthBox>> gts = {{{2, {0, 0, 4, 4}}}};
    std::vector<std::vector<Detection>> dets = {{{2, {0, 0, 4, 4}, 0.8}}};
    EvalReport report = map_suite(dets, gts, {2});
    const std::string json = report.to_json();
    EXPECT_NE(json.find("\"per_class_ap\""), std::string::npos);
    EXPECT_NE(json.find("\"map50\""), std::string::npos);
    EXPECT_NE(json.find("\"map75\""), std::string::npos);
    EXPECT_NE(json.find("\"0.50\""), std::string::npos);
}
