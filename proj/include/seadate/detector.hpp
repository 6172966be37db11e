#pragma once

#include <array>
#include <map>
#include <optional>

#include "seadate/contrastive.hpp"
#include "seadate/synth.hpp"

namespace seadate {

/// Which modality the detector consumes. kA/kB feed the chosen image to both
/// streams, giving the single-modality baselines of the ablation study.
enum class InputModality { kBoth, kA, kB };

std::string modality_name(InputModality m);
InputModality modality_from_name(const std::string& name);

struct BackboneConfig {
    std::vector<std::size_t> stage_widths{8, 16, 32, 64};
    std::size_t image_size = 64;
    std::vector<int> fusion_positions{1};
    bool dtf_enabled = true;
    bool cl_enabled = true;
    int num_classes = 3;
    int attention_heads = 2;
    int attention_groups = 2;
    int ffn_ratio = 2;
    InputModality modality = InputModality::kBoth;

    void validate() const;
};

struct LossWeights {
    double alpha1 = 1.0;
    double alpha2 = 0.1;
    double lambda_obj = 1.0;
    double lambda_loc = 0.05;
    double lambda_cls = 0.5;
    std::array<double, 3> a{1.0, 1.0, 1.0};
    std::array<double, 3> b{1.0, 1.0, 1.0};
    std::array<double, 3> c{1.0, 1.0, 1.0};

    void validate() const;
};

struct StageParams {
    Var w;  // {Cout,Cin,3,3}
    Var b;  // {Cout}
};

struct ScaleHeadParams {
    Var w;  // {C_s, 1+4+K}
    Var b;  // {1, 1+4+K}
};

/// Toy dual-stream detector: four conv stages per stream (conv3x3 + ReLU +
/// 2x downsample), optional DTF blocks at stage boundaries, a per-cell linear
/// head on the three deepest fused scales, optional contrastive heads.
struct DetectorModel {
    BackboneConfig cfg;
    CLConfig cl;
    std::array<StageParams, 4> stream_a, stream_b;
    std::map<int, DTFBlock> dtf;  // keyed by fusion position 1..4
    std::array<ScaleHeadParams, 3> heads;
    ProjectionHead head_q, head_k;

    void visit(const ParamVisitor& fn);
    std::size_t parameter_count();
};

DetectorModel make_detector(const BackboneConfig& cfg, const CLConfig& cl, std::uint64_t seed);

struct HeadGeometry {
    std::size_t image_size = 0;
    int num_classes = 0;
    std::array<std::size_t, 3> grid{};   // cells per side, finest first
    std::array<double, 3> stride{};
};

HeadGeometry head_geometry(const BackboneConfig& cfg);

struct BackboneOut {
    std::array<FeatureMap, 3> pyramid;  // fused (sum) maps of stages 2..4
    FeatureMap deep_a, deep_b;          // stage-4 per-stream features, for CL
};

BackboneOut backbone_forward(const Var& img_a, const Var& img_b, DetectorModel& model);

struct HeadOut {
    HeadGeometry geometry;
    std::array<Var, 3> obj;  // {HW,1} logits
    std::array<Var, 3> reg;  // {HW,4}: center offsets (pre-sigmoid), log w/h
    std::array<Var, 3> cls;  // {HW,K} logits
};

HeadOut head_forward(const BackboneOut& features, DetectorModel& model);

struct CellTarget {
    std::size_t cell = 0;
    Box box;
    int class_id = 0;
};

struct TargetAssignment {
    std::array<std::vector<CellTarget>, 3> positives;
    std::array<Tensor, 3> objectness;  // {HW,1} of 0/1
};

/// Center-cell assignment at the scale whose stride best matches the box size:
/// the coarsest scale with stride <= max(w,h) is preferred, falling back to
/// finer scales (then coarser) when the center cell is already taken.
TargetAssignment assign_targets(const std::vector<ObjectGT>& gts, const HeadGeometry& g);

struct DetectionLoss {
    Var total;     // lambda-weighted sum of the three terms
    double obj = 0.0, loc = 0.0, cls = 0.0;  // weighted component values
};

DetectionLoss detection_loss(const HeadOut& pred, const TargetAssignment& targets,
                             const LossWeights& w);

Var total_loss(const Var& l_o, const Var& l_c, double alpha1, double alpha2);

/// Cells above conf_thresh decoded (boxes clamped into the image), then
/// greedy per-class NMS at IoU >= nms_iou; result sorted by confidence.
std::vector<Detection> decode_and_nms(const HeadOut& pred, double conf_thresh, double nms_iou);

struct OptimConfig {
    double lr = 0.01;
    double momentum = 0.98;
    double weight_decay = 0.001;
    std::size_t batch_size = 4;
};

/// SGD with momentum: v <- mu*v + (g + wd*p); p <- p - lr*v. Zeroes grads
/// after each step.
class SGDOptimizer {
public:
    explicit SGDOptimizer(OptimConfig cfg) : cfg_(cfg) {}

    const OptimConfig& config() const { return cfg_; }
    void step(DetectorModel& model);
    std::map<std::string, Tensor>& buffers() { return velocity_; }

private:
    OptimConfig cfg_;
    std::map<std::string, Tensor> velocity_;
};

struct StepStats {
    double l_obj = 0.0, l_loc = 0.0, l_cls = 0.0, l_c = 0.0, total = 0.0;
};

/// One SGD step on a batch: per-sample forward/backward (gradients are
/// additive), contrastive keys pushed after the whole batch, then the
/// parameter update. Throws NumericError with a parameter/grad norm dump if
/// the loss goes non-finite.
StepStats train_step(const std::vector<const SceneSample*>& batch, DetectorModel& model,
                     SGDOptimizer& opt, KeyQueue& queue, const LossWeights& weights);

/// Inference on one sample (modality selection per model config).
std::vector<Detection> run_inference(const SceneSample& sample, DetectorModel& model,
                                     double conf_thresh, double nms_iou);

}  // namespace seadate
