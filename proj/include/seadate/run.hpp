#pragma once

#include <filesystem>
#include <iosfwd>

#include "seadate/checkpoint.hpp"
#include "seadate/config.hpp"
#include "seadate/evaluation.hpp"
#include "seadate/gradcheck.hpp"

namespace seadate {

struct TrainArtifacts {
    std::filesystem::path final_checkpoint;
    std::vector<StepStats> trace;
};

/// Full training run: deterministic epoch shuffles keyed by (seed, epoch),
/// JSONL trace + CSV loss curve + periodic checkpoints under out_dir.
/// `log` (optional) receives one line per epoch.
TrainArtifacts train_model(const RunConfig& cfg, const Dataset& train_data,
                           const std::filesystem::path& out_dir, std::ostream* log = nullptr);

/// Inference + COCO-style mAP over a dataset.
EvalReport evaluate_dataset(DetectorModel& model, const Dataset& data, const EvalConfig& eval);

/// Cumulative precision/recall points of one class at one IoU threshold,
/// pooled over the dataset in confidence order. Rows: confidence, precision,
/// recall.
std::vector<std::array<double, 3>> pr_curve(DetectorModel& model, const Dataset& data,
                                            const EvalConfig& eval, int class_id,
                                            double iou_thresh);

/// The Table-I / Table-III style grid: DTF at positions 1-4 (CL off), plus
/// DTF-off/CL-off, DTF-off/CL-on and DTF-on/CL-on at the best position.
/// Each cell trains from scratch with the shared seed and identical data
/// order. Returns the table as JSON.
nlohmann::json run_ablation(const RunConfig& cfg, const Dataset& train_data,
                            const Dataset& test_data, const std::filesystem::path& out_dir,
                            std::ostream* log = nullptr);

/// Finite-difference suites behind the gradcheck command. Scope is one of
/// primitives|dtf|cl|detector|all.
std::vector<GradCheckReport> gradcheck_suite(const std::string& scope);

}  // namespace seadate
