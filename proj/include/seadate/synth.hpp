#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "seadate/errors.hpp"
#include "seadate/evaluation.hpp"
#include "seadate/tensor.hpp"

namespace seadate {

enum class Visibility { kBoth, kAOnly, kBOnly };

std::string visibility_name(Visibility v);
Visibility visibility_from_name(const std::string& name);

struct ObjectGT {
    int class_id = 0;
    Box box;
    Visibility visibility = Visibility::kBoth;
};

/// One paired-modality scene: a visible-like and a thermal-like render of the
/// same object layout, with per-object visibility flags.
struct SceneSample {
    std::size_t index = 0;
    Tensor img_a;  // {1,H,W}
    Tensor img_b;  // {1,H,W}
    std::vector<ObjectGT> objects;
    bool placement_reduced = false;  // fewer objects than drawn, after retries
};

struct GenConfig {
    std::size_t image_size = 64;
    std::size_t min_objects = 1;
    std::size_t max_objects = 4;
    int num_classes = 3;         // shape vocabulary: square, disk, triangle, ring
    double complementarity = 0.5;  // fraction visible in exactly one modality
    double noise = 0.02;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Pure function of (config, index): layout, visibility, intensities and noise
/// are all drawn from counter-based streams keyed by the sample index.
SceneSample generate_scene(const GenConfig& cfg, std::size_t index);

/// Renders one modality ('a' or 'b') of a given object list, with the same
/// noise stream generate_scene would use for that (config, index).
Tensor render_modality(const GenConfig& cfg, std::size_t index,
                       const std::vector<ObjectGT>& objects, char modality);

struct Dataset {
    GenConfig config;
    std::vector<SceneSample> samples;

    std::size_t size() const { return samples.size(); }
};

/// Writes count samples plus manifest.json (config echo, per-sample checksums)
/// and annotations.jsonl into dir.
void write_dataset(const GenConfig& cfg, std::size_t count, const std::filesystem::path& dir);

/// Loads a dataset back, verifying the per-sample checksums recorded in the
/// manifest. Image payloads come back at f32 storage precision.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace seadate
