#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "seadate/detector.hpp"

namespace seadate {

struct TrainSchedule {
    std::size_t epochs = 15;
    std::size_t checkpoint_every = 5;  // epochs between checkpoints; 0 = final only
};

struct EvalConfig {
    double conf_thresh = 0.25;
    double nms_iou = 0.5;
};

struct DataConfig {
    GenConfig gen;
    std::size_t train_count = 200;
    std::size_t test_count = 50;
    std::string dir = "data";
};

/// Union of all knobs for one run; fully serializable, and the echo written to
/// the output directory reproduces the run exactly.
struct RunConfig {
    std::uint64_t seed = 42;
    std::string out_dir = "run";
    DataConfig data;
    BackboneConfig model;
    CLConfig cl;
    LossWeights loss;
    OptimConfig optim;
    TrainSchedule train;
    EvalConfig eval;

    void validate() const;
};

nlohmann::json to_json(const BackboneConfig& cfg);
BackboneConfig backbone_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CLConfig& cfg);
CLConfig cl_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunConfig& cfg);
/// Missing fields keep their defaults; unknown fields are an error.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Parse a config file, apply the SEADATE_SEED environment override, validate.
RunConfig load_run_config(const std::filesystem::path& path);

void write_config_echo(const RunConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace seadate
