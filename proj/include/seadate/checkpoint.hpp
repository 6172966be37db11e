#pragma once

#include <filesystem>
#include <optional>

#include "seadate/detector.hpp"

namespace seadate {

// Checkpoint directory layout:
//   manifest.json  - format tag, step, configs, tensor table (name/shape/offset)
//   params.bin     - model tensors back to back, each in SDT1 format
//   momentum.bin   - optimizer velocity buffers, same table order (optional)
//   queue.bin      - key queue state (optional)

void save_checkpoint(const std::filesystem::path& dir, DetectorModel& model,
                     std::size_t step, std::uint64_t seed,
                     SGDOptimizer* optimizer = nullptr, const KeyQueue* queue = nullptr);

struct Checkpoint {
    DetectorModel model;
    std::size_t step = 0;
    std::uint64_t seed = 0;
    std::optional<KeyQueue> queue;
    std::map<std::string, Tensor> momentum;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace seadate
