#include "seadate/detector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "seadate/rng.hpp"

namespace seadate {

std::string modality_name(InputModality m) {
    switch (m) {
        case InputModality::kBoth: return "both";
        case InputModality::kA: return "a";
        case InputModality::kB: return "b";
    }
    return "both";
}

InputModality modality_from_name(const std::string& name) {
    if (name == "both") return InputModality::kBoth;
    if (name == "a" || name == "rgb") return InputModality::kA;
    if (name == "b" || name == "ir") return InputModality::kB;
    throw ConfigError("unknown modality: " + name);
}

void BackboneConfig::validate() const {
    if (stage_widths.size() != 4) throw ConfigError("backbone needs exactly 4 stage widths");
    for (std::size_t w : stage_widths) {
        if (w < 2) throw ConfigError("stage widths must be >= 2");
    }
    if (image_size % 16 != 0 || image_size == 0) {
        throw ConfigError("image size must be divisible by 2^4, got " +
                          std::to_string(image_size));
    }
    if (dtf_enabled) {
        if (fusion_positions.empty()) {
            throw ConfigError("DTF enabled but no fusion positions given");
        }
        for (int p : fusion_positions) {
            if (p < 1 || p > 4) throw ConfigError("fusion positions must be in 1..4");
            const std::size_t c = stage_widths[static_cast<std::size_t>(p - 1)];
            if (c % static_cast<std::size_t>(attention_heads) != 0) {
                throw ConfigError("stage " + std::to_string(p) + " width " + std::to_string(c) +
                                  " not divisible by " + std::to_string(attention_heads) +
                                  " attention heads");
            }
            if (c % static_cast<std::size_t>(attention_groups) != 0) {
                throw ConfigError("stage " + std::to_string(p) + " width " + std::to_string(c) +
                                  " not divisible by " + std::to_string(attention_groups) +
                                  " channel groups");
            }
        }
    }
    if (num_classes < 1) throw ConfigError("num_classes must be positive");
    if (attention_heads < 1 || attention_groups < 1 || ffn_ratio < 1) {
        throw ConfigError("attention heads/groups and ffn ratio must be positive");
    }
}

void LossWeights::validate() const {
    auto nonneg = [](double v) { return v >= 0.0; };
    if (!nonneg(alpha1) || !nonneg(alpha2) || !nonneg(lambda_obj) || !nonneg(lambda_loc) ||
        !nonneg(lambda_cls)) {
        throw ConfigError("loss weights must be nonnegative");
    }
    for (int h = 0; h < 3; ++h) {
        if (!nonneg(a[h]) || !nonneg(b[h]) || !nonneg(c[h])) {
            throw ConfigError("per-layer loss weights must be nonnegative");
        }
    }
}

void DetectorModel::visit(const ParamVisitor& fn) {
    for (int s = 0; s < 4; ++s) {
        fn("stream_a.stage" + std::to_string(s + 1) + ".w", stream_a[s].w);
        fn("stream_a.stage" + std::to_string(s + 1) + ".b", stream_a[s].b);
        fn("stream_b.stage" + std::to_string(s + 1) + ".w", stream_b[s].w);
        fn("stream_b.stage" + std::to_string(s + 1) + ".b", stream_b[s].b);
    }
    for (auto& [pos, block] : dtf) {
        visit_params(block, "dtf.pos" + std::to_string(pos), fn);
    }
    for (int h = 0; h < 3; ++h) {
        fn("head.scale" + std::to_string(h) + ".w", heads[h].w);
        fn("head.scale" + std::to_string(h) + ".b", heads[h].b);
    }
    if (cfg.cl_enabled) {
        visit_params(head_q, "cl.head_q", fn);
        visit_params(head_k, "cl.head_k", fn);
    }
}

std::size_t DetectorModel::parameter_count() {
    std::size_t n = 0;
    visit([&n](const std::string&, Var& v) { n += v.value().numel(); });
    return n;
}

DetectorModel make_detector(const BackboneConfig& cfg, const CLConfig& cl, std::uint64_t seed) {
    cfg.validate();
    DetectorModel model;
    model.cfg = cfg;
    model.cl = cl;
    std::size_t cin = 1;
    for (int s = 0; s < 4; ++s) {
        const std::size_t cout = cfg.stage_widths[static_cast<std::size_t>(s)];
        const std::size_t fan_in = cin * 9;
        const std::string sa = "stream_a.stage" + std::to_string(s + 1);
        const std::string sb = "stream_b.stage" + std::to_string(s + 1);
        model.stream_a[s].w = init_param({cout, cin, 3, 3}, fan_in, seed, sa + ".w");
        model.stream_a[s].b = init_param({cout}, fan_in, seed, sa + ".b");
        model.stream_b[s].w = init_param({cout, cin, 3, 3}, fan_in, seed, sb + ".w");
        model.stream_b[s].b = init_param({cout}, fan_in, seed, sb + ".b");
        cin = cout;
    }
    if (cfg.dtf_enabled) {
        for (int pos : cfg.fusion_positions) {
            const std::size_t c = cfg.stage_widths[static_cast<std::size_t>(pos - 1)];
            model.dtf.emplace(pos, make_dtf_block(c, cfg.attention_heads, cfg.attention_groups,
                                                  cfg.ffn_ratio, seed,
                                                  "dtf.pos" + std::to_string(pos)));
        }
    }
    const std::size_t out_width = 1 + 4 + static_cast<std::size_t>(cfg.num_classes);
    for (int h = 0; h < 3; ++h) {
        const std::size_t c = cfg.stage_widths[static_cast<std::size_t>(h + 1)];
        const std::string name = "head.scale" + std::to_string(h);
        model.heads[h].w = init_param({c, out_width}, c, seed, name + ".w");
        model.heads[h].b = init_param({1, out_width}, c, seed, name + ".b");
    }
    if (cfg.cl_enabled) {
        model.head_q = make_projection_head(cfg.stage_widths[3], cl.embed_dim, seed, "cl.head_q");
        model.head_k = make_projection_head(cfg.stage_widths[3], cl.embed_dim, seed, "cl.head_k");
    }
    return model;
}

HeadGeometry head_geometry(const BackboneConfig& cfg) {
    HeadGeometry g;
    g.image_size = cfg.image_size;
    g.num_classes = cfg.num_classes;
    for (int h = 0; h < 3; ++h) {
        g.grid[h] = cfg.image_size >> (h + 2);
        g.stride[h] = static_cast<double>(cfg.image_size) / static_cast<double>(g.grid[h]);
    }
    return g;
}

BackboneOut backbone_forward(const Var& img_a, const Var& img_b, DetectorModel& model) {
    const auto& cfg = model.cfg;
    if (img_a.value().rank() != 3 || !img_a.value().same_shape(img_b.value())) {
        throw DimensionError("backbone_forward: images must share shape {1,H,W}, got " +
                             shape_str(img_a.value().shape()) + " and " +
                             shape_str(img_b.value().shape()));
    }
    if (img_a.value().extent(1) != cfg.image_size || img_a.value().extent(2) != cfg.image_size) {
        throw DimensionError("backbone_forward: expected " + std::to_string(cfg.image_size) +
                             "-pixel images, got " + shape_str(img_a.value().shape()));
    }

    Var xa = img_a, xb = img_b;
    if (cfg.modality == InputModality::kA) xb = img_a;
    if (cfg.modality == InputModality::kB) xa = img_b;

    BackboneOut out;
    for (int s = 0; s < 4; ++s) {
        xa = avg_pool2(relu(conv2d_3x3(xa, model.stream_a[s].w, model.stream_a[s].b)));
        xb = avg_pool2(relu(conv2d_3x3(xb, model.stream_b[s].w, model.stream_b[s].b)));
        const int pos = s + 1;
        if (cfg.dtf_enabled &&
            std::find(cfg.fusion_positions.begin(), cfg.fusion_positions.end(), pos) !=
                cfg.fusion_positions.end()) {
            auto [fa, fb] = dtf_fuse(FeatureMap(xa), FeatureMap(xb), model.dtf.at(pos));
            xa = fa.map;
            xb = fb.map;
        }
        if (s >= 1) out.pyramid[s - 1] = FeatureMap(add(xa, xb));
    }
    out.deep_a = FeatureMap(xa);
    out.deep_b = FeatureMap(xb);
    return out;
}

HeadOut head_forward(const BackboneOut& features, DetectorModel& model) {
    HeadOut out;
    out.geometry = head_geometry(model.cfg);
    const std::size_t k = static_cast<std::size_t>(model.cfg.num_classes);
    for (int h = 0; h < 3; ++h) {
        Var tokens = tokens_from_map(features.pyramid[h].map);
        Var raw = add_rowvec(matmul(tokens, model.heads[h].w), model.heads[h].b);
        auto parts = split(raw, 1, {1, 4, k});
        out.obj[h] = parts[0];
        out.reg[h] = parts[1];
        out.cls[h] = parts[2];
    }
    return out;
}

TargetAssignment assign_targets(const std::vector<ObjectGT>& gts, const HeadGeometry& g) {
    TargetAssignment ta;
    for (int h = 0; h < 3; ++h) ta.objectness[h] = Tensor({g.grid[h] * g.grid[h], 1});
    std::array<std::vector<bool>, 3> taken;
    for (int h = 0; h < 3; ++h) taken[h].assign(g.grid[h] * g.grid[h], false);

    auto cell_of = [&](const Box& box, int h) {
        const double stride = g.stride[h];
        const auto limit = static_cast<long>(g.grid[h] - 1);
        long col = static_cast<long>(std::floor(box.center_x() / stride));
        long row = static_cast<long>(std::floor(box.center_y() / stride));
        col = std::clamp(col, 0L, limit);  // borders clamp inward
        row = std::clamp(row, 0L, limit);
        return static_cast<std::size_t>(row) * g.grid[h] + static_cast<std::size_t>(col);
    };

    for (const auto& gt : gts) {
        const double size = std::max(gt.box.width(), gt.box.height());
        int preferred = 0;
        for (int h = 2; h >= 0; --h) {
            if (g.stride[h] <= size) {
                preferred = h;
                break;
            }
        }
        // preferred first, then finer scales, then coarser
        std::vector<int> order;
        for (int h = preferred; h >= 0; --h) order.push_back(h);
        for (int h = preferred + 1; h < 3; ++h) order.push_back(h);
        for (int h : order) {
            const std::size_t cell = cell_of(gt.box, h);
            if (taken[h][cell]) continue;
            taken[h][cell] = true;
            ta.positives[h].push_back({cell, gt.box, gt.class_id});
            ta.objectness[h][cell] = 1.0;
            break;
        }
    }
    return ta;
}

namespace {

struct ScaleLoc {
    Var loc;  // mean(1 - IoU) over positives
    Var cls;
};

// Decoded-box IoU against the assigned ground truth, built on the tape so the
// regression head trains through it.
Var loc_iou_loss(const Var& reg_rows, const std::vector<CellTarget>& positives,
                 const HeadGeometry& g, int h) {
    const std::size_t n = positives.size();
    const double stride = g.stride[h];
    Tensor col_base({n, 1}), row_base({n, 1});
    Tensor bx1({n, 1}), by1({n, 1}), bx2({n, 1}), by2({n, 1}), barea({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
        col_base[i] = static_cast<double>(positives[i].cell % g.grid[h]);
        row_base[i] = static_cast<double>(positives[i].cell / g.grid[h]);
        bx1[i] = positives[i].box.x_min;
        by1[i] = positives[i].box.y_min;
        bx2[i] = positives[i].box.x_max;
        by2[i] = positives[i].box.y_max;
        barea[i] = positives[i].box.area();
    }
    auto parts = split(reg_rows, 1, {1, 1, 1, 1});
    Var cx = scale(add(sigmoid(parts[0]), Var::constant(col_base)), stride);
    Var cy = scale(add(sigmoid(parts[1]), Var::constant(row_base)), stride);
    Var w = scale(exp_elem(parts[2]), stride);
    Var hgt = scale(exp_elem(parts[3]), stride);
    Var x1 = sub(cx, scale(w, 0.5));
    Var x2 = add(cx, scale(w, 0.5));
    Var y1 = sub(cy, scale(hgt, 0.5));
    Var y2 = add(cy, scale(hgt, 0.5));

    Var iw = relu(sub(elem_min(x2, Var::constant(bx2)), elem_max(x1, Var::constant(bx1))));
    Var ih = relu(sub(elem_min(y2, Var::constant(by2)), elem_max(y1, Var::constant(by1))));
    Var inter = mul(iw, ih);
    Var uni = sub(add(mul(w, hgt), Var::constant(barea)), inter);
    Var iou_vec = divide(inter, uni);
    return mean_all(sub(Var::constant(Tensor::full({n, 1}, 1.0)), iou_vec));
}

Var cls_ce_loss(const Var& cls_rows, const std::vector<CellTarget>& positives, int num_classes) {
    const std::size_t n = positives.size();
    Tensor onehot({n, static_cast<std::size_t>(num_classes)});
    for (std::size_t i = 0; i < n; ++i) {
        onehot[i * static_cast<std::size_t>(num_classes) +
               static_cast<std::size_t>(positives[i].class_id)] = 1.0;
    }
    Var picked = sum_all(mul(log_softmax_rows(cls_rows), Var::constant(onehot)));
    return scale(picked, -1.0 / static_cast<double>(n));
}

}  // namespace

DetectionLoss detection_loss(const HeadOut& pred, const TargetAssignment& targets,
                             const LossWeights& w) {
    w.validate();
    const HeadGeometry& g = pred.geometry;
    Var obj_sum, loc_sum, cls_sum;
    for (int h = 0; h < 3; ++h) {
        Var obj_h = bce_with_logits_mean(pred.obj[h], targets.objectness[h]);
        obj_sum = obj_sum ? add(obj_sum, scale(obj_h, w.a[h])) : scale(obj_h, w.a[h]);
        const auto& positives = targets.positives[h];
        if (positives.empty()) continue;  // empty scales contribute 0 to loc/cls
        std::vector<std::size_t> cells;
        cells.reserve(positives.size());
        for (const auto& p : positives) cells.push_back(p.cell);
        Var loc_h = loc_iou_loss(gather_rows(pred.reg[h], cells), positives, g, h);
        Var cls_h = cls_ce_loss(gather_rows(pred.cls[h], cells), positives, g.num_classes);
        loc_sum = loc_sum ? add(loc_sum, scale(loc_h, w.b[h])) : scale(loc_h, w.b[h]);
        cls_sum = cls_sum ? add(cls_sum, scale(cls_h, w.c[h])) : scale(cls_h, w.c[h]);
    }
    DetectionLoss out;
    Var total = scale(obj_sum, w.lambda_obj);
    out.obj = total.value()[0];
    if (loc_sum) {
        Var weighted = scale(loc_sum, w.lambda_loc);
        out.loc = weighted.value()[0];
        total = add(total, weighted);
    }
    if (cls_sum) {
        Var weighted = scale(cls_sum, w.lambda_cls);
        out.cls = weighted.value()[0];
        total = add(total, weighted);
    }
    out.total = total;
    return out;
}

Var total_loss(const Var& l_o, const Var& l_c, double alpha1, double alpha2) {
    if (alpha1 < 0.0 || alpha2 < 0.0) throw ConfigError("loss weights must be nonnegative");
    if (!l_c) return scale(l_o, alpha1);
    return add(scale(l_o, alpha1), scale(l_c, alpha2));
}

std::vector<Detection> decode_and_nms(const HeadOut& pred, double conf_thresh, double nms_iou) {
    if (conf_thresh < 0.0 || conf_thresh > 1.0 || nms_iou < 0.0 || nms_iou > 1.0) {
        throw ConfigError("decode_and_nms thresholds must lie in [0,1]");
    }
    const HeadGeometry& g = pred.geometry;
    const double img = static_cast<double>(g.image_size);
    std::vector<Detection> all;
    for (int h = 0; h < 3; ++h) {
        const Tensor& obj = pred.obj[h].value();
        const Tensor& reg = pred.reg[h].value();
        const Tensor& cls = pred.cls[h].value();
        const std::size_t cells = g.grid[h] * g.grid[h];
        const double stride = g.stride[h];
        const auto k = static_cast<std::size_t>(g.num_classes);
        for (std::size_t cell = 0; cell < cells; ++cell) {
            const double p_obj = 1.0 / (1.0 + std::exp(-obj[cell]));
            // softmax over class logits
            double mx = cls.at(cell, 0);
            for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, cls.at(cell, j));
            double denom = 0.0;
            for (std::size_t j = 0; j < k; ++j) denom += std::exp(cls.at(cell, j) - mx);
            std::size_t best = 0;
            for (std::size_t j = 1; j < k; ++j) {
                if (cls.at(cell, j) > cls.at(cell, best)) best = j;
            }
            const double p_cls = std::exp(cls.at(cell, best) - mx) / denom;
            const double conf = p_obj * p_cls;
            if (conf <= conf_thresh) continue;
            const double col = static_cast<double>(cell % g.grid[h]);
            const double row = static_cast<double>(cell / g.grid[h]);
            const double cx = (col + 1.0 / (1.0 + std::exp(-reg.at(cell, 0)))) * stride;
            const double cy = (row + 1.0 / (1.0 + std::exp(-reg.at(cell, 1)))) * stride;
            const double bw = std::exp(reg.at(cell, 2)) * stride;
            const double bh = std::exp(reg.at(cell, 3)) * stride;
            Box box{std::clamp(cx - bw / 2, 0.0, img), std::clamp(cy - bh / 2, 0.0, img),
                    std::clamp(cx + bw / 2, 0.0, img), std::clamp(cy + bh / 2, 0.0, img)};
            if (box.width() <= 0.0 || box.height() <= 0.0) continue;
            all.push_back({static_cast<int>(best), box, conf});
        }
    }
    std::stable_sort(all.begin(), all.end(), [](const Detection& a, const Detection& b) {
        return a.confidence > b.confidence;
    });
    std::vector<Detection> kept;
    for (const auto& det : all) {
        bool suppressed = false;
        for (const auto& winner : kept) {
            if (winner.class_id == det.class_id && iou(winner.box, det.box) >= nms_iou) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(det);
    }
    return kept;
}

void SGDOptimizer::step(DetectorModel& model) {
    model.visit([this](const std::string& name, Var& param) {
        Tensor& value = param.mutable_value();
        const Tensor& grad = param.grad();
        auto [it, inserted] = velocity_.try_emplace(name, Tensor(value.shape()));
        Tensor& vel = it->second;
        if (!vel.same_shape(value)) {
            throw DimensionError("optimizer buffer shape mismatch for " + name);
        }
        for (std::size_t i = 0; i < value.numel(); ++i) {
            const double g = grad[i] + cfg_.weight_decay * value[i];
            vel[i] = cfg_.momentum * vel[i] + g;
            value[i] -= cfg_.lr * vel[i];
        }
        param.zero_grad();
    });
}

StepStats train_step(const std::vector<const SceneSample*>& batch, DetectorModel& model,
                     SGDOptimizer& opt, KeyQueue& queue, const LossWeights& weights) {
    if (batch.empty()) throw ConfigError("train_step: empty batch");
    weights.validate();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const bool cl_on = model.cfg.cl_enabled;
    StepStats stats;
    std::vector<Tensor> new_keys;

    for (const SceneSample* sample : batch) {
        Var img_a = Var::constant(sample->img_a);
        Var img_b = Var::constant(sample->img_b);
        BackboneOut features = backbone_forward(img_a, img_b, model);
        HeadOut pred = head_forward(features, model);
        TargetAssignment targets = assign_targets(sample->objects, pred.geometry);
        DetectionLoss det = detection_loss(pred, targets, weights);

        Var l_c;
        if (cl_on) {
            Var z_q = pool_and_project(features.deep_a, model.head_q);
            Var z_k = pool_and_project(features.deep_b, model.head_k);
            l_c = infonce_loss(z_q, z_k, queue, model.cl.temperature);
            new_keys.push_back(z_k.value());
        }
        Var total = total_loss(det.total, l_c, weights.alpha1, weights.alpha2);
        const double total_value = total.value()[0];
        if (!std::isfinite(total_value)) {
            std::ostringstream os;
            os << "non-finite loss on sample " << sample->index << ": obj " << det.obj
               << " loc " << det.loc << " cls " << det.cls;
            model.visit([&os](const std::string& name, Var& p) {
                os << "\n  " << name << " |w|=" << p.value().l2_norm()
                   << " |g|=" << p.grad().l2_norm();
            });
            throw NumericError(os.str());
        }
        stats.l_obj += det.obj * inv_b;
        stats.l_loc += det.loc * inv_b;
        stats.l_cls += det.cls * inv_b;
        if (cl_on) stats.l_c += l_c.value()[0] * inv_b;
        stats.total += total_value * inv_b;
        // scaled seed makes per-sample backward equal to batch-mean backward
        backward(total, Tensor::scalar(inv_b));
    }
    if (cl_on) {
        for (const auto& key : new_keys) queue.push(key);
    }
    opt.step(model);
    return stats;
}

std::vector<Detection> run_inference(const SceneSample& sample, DetectorModel& model,
                                     double conf_thresh, double nms_iou) {
    BackboneOut features =
        backbone_forward(Var::constant(sample.img_a), Var::constant(sample.img_b), model);
    HeadOut pred = head_forward(features, model);
    return decode_and_nms(pred, conf_thresh, nms_iou);
}

}  // namespace seadate
