#include "seadate/run.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include "seadate/rng.hpp"

namespace seadate {

namespace {

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    CounterRng rng(seed, CounterRng::mix(fnv1a64("epoch-order"), epoch));
    for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);
    return order;
}

void write_trace_line(std::ostream& out, std::size_t step, const StepStats& s) {
    nlohmann::json line = {{"step", step},   {"l_obj", s.l_obj}, {"l_loc", s.l_loc},
                           {"l_cls", s.l_cls}, {"l_c", s.l_c},     {"total", s.total}};
    out << line.dump() << "\n";
}

}  // namespace

TrainArtifacts train_model(const RunConfig& cfg, const Dataset& train_data,
                           const std::filesystem::path& out_dir, std::ostream* log) {
    cfg.validate();
    if (train_data.size() == 0) throw ConfigError("train_model: empty dataset");
    std::filesystem::create_directories(out_dir);

    DetectorModel model = make_detector(cfg.model, cfg.cl, cfg.seed);
    SGDOptimizer opt(cfg.optim);
    KeyQueue queue(cfg.cl.queue_capacity, cfg.cl.embed_dim);

    std::ofstream trace_out(out_dir / "trace.jsonl");
    std::ofstream curve(out_dir / "loss_curve.csv");
    if (!trace_out || !curve) {
        throw std::runtime_error("cannot write training outputs in " + out_dir.string());
    }
    curve << "step,l_obj,l_loc,l_cls,l_c,total\n";

    TrainArtifacts artifacts;
    std::size_t step = 0;
    if (cfg.train.epochs == 0) {
        // empty run keeps the initial parameters
        save_checkpoint(out_dir / "checkpoint_final", model, 0, cfg.seed, &opt, &queue);
        artifacts.final_checkpoint = out_dir / "checkpoint_final";
        return artifacts;
    }

    for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        const auto order = epoch_order(train_data.size(), cfg.seed, epoch);
        double epoch_total = 0.0;
        std::size_t epoch_steps = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.optim.batch_size) {
            std::vector<const SceneSample*> batch;
            for (std::size_t k = at; k < std::min(at + cfg.optim.batch_size, order.size()); ++k) {
                batch.push_back(&train_data.samples[order[k]]);
            }
            StepStats stats = train_step(batch, model, opt, queue, cfg.loss);
            write_trace_line(trace_out, step, stats);
            curve << step << "," << stats.l_obj << "," << stats.l_loc << "," << stats.l_cls
                  << "," << stats.l_c << "," << stats.total << "\n";
            artifacts.trace.push_back(stats);
            epoch_total += stats.total;
            ++epoch_steps;
            ++step;
        }
        if (log) {
            (*log) << "epoch " << epoch + 1 << "/" << cfg.train.epochs << " mean total "
                   << epoch_total / static_cast<double>(epoch_steps) << "\n";
        }
        const bool last = epoch + 1 == cfg.train.epochs;
        if (!last && cfg.train.checkpoint_every > 0 &&
            (epoch + 1) % cfg.train.checkpoint_every == 0) {
            save_checkpoint(out_dir / ("checkpoint_epoch" + std::to_string(epoch + 1)), model,
                            step, cfg.seed, &opt, &queue);
        }
    }
    save_checkpoint(out_dir / "checkpoint_final", model, step, cfg.seed, &opt, &queue);
    artifacts.final_checkpoint = out_dir / "checkpoint_final";
    return artifacts;
}

namespace {

std::vector<std::vector<GroundTruthBox>> dataset_ground_truth(const Dataset& data) {
    std::vector<std::vector<GroundTruthBox>> gts(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (const auto& obj : data.samples[i].objects) {
            gts[i].push_back({obj.class_id, obj.box});
        }
    }
    return gts;
}

}  // namespace

EvalReport evaluate_dataset(DetectorModel& model, const Dataset& data, const EvalConfig& eval) {
    if (model.cfg.num_classes != data.config.num_classes) {
        throw ConfigError("checkpoint expects " + std::to_string(model.cfg.num_classes) +
                          " classes, dataset has " + std::to_string(data.config.num_classes));
    }
    if (model.cfg.image_size != data.config.image_size) {
        throw ConfigError("checkpoint expects " + std::to_string(model.cfg.image_size) +
                          "px images, dataset has " + std::to_string(data.config.image_size));
    }
    std::vector<std::vector<Detection>> dets(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        dets[i] = run_inference(data.samples[i], model, eval.conf_thresh, eval.nms_iou);
    }
    std::vector<int> classes;
    for (int c = 0; c < data.config.num_classes; ++c) classes.push_back(c);
    return map_suite(dets, dataset_ground_truth(data), classes);
}

std::vector<std::array<double, 3>> pr_curve(DetectorModel& model, const Dataset& data,
                                            const EvalConfig& eval, int class_id,
                                            double iou_thresh) {
    struct Item {
        double conf;
        bool tp;
    };
    std::vector<Item> pooled;
    std::size_t gt_count = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto dets = run_inference(data.samples[i], model, eval.conf_thresh, eval.nms_iou);
        std::vector<Detection> class_dets;
        for (const auto& d : dets) {
            if (d.class_id == class_id) class_dets.push_back(d);
        }
        std::vector<Box> gts;
        for (const auto& obj : data.samples[i].objects) {
            if (obj.class_id == class_id) gts.push_back(obj.box);
        }
        gt_count += gts.size();
        MatchResult match = match_detections(class_dets, gts, iou_thresh);
        for (std::size_t k = 0; k < class_dets.size(); ++k) {
            pooled.push_back({class_dets[k].confidence, match.tp[k]});
        }
    }
    std::stable_sort(pooled.begin(), pooled.end(),
                     [](const Item& a, const Item& b) { return a.conf > b.conf; });
    std::vector<std::array<double, 3>> points;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < pooled.size(); ++k) {
        tp += pooled[k].tp ? 1 : 0;
        points.push_back({pooled[k].conf, static_cast<double>(tp) / static_cast<double>(k + 1),
                          gt_count > 0 ? static_cast<double>(tp) / static_cast<double>(gt_count)
                                       : 0.0});
    }
    return points;
}

nlohmann::json run_ablation(const RunConfig& cfg, const Dataset& train_data,
                            const Dataset& test_data, const std::filesystem::path& out_dir,
                            std::ostream* log) {
    std::filesystem::create_directories(out_dir);

    struct Cell {
        std::string name;
        bool dtf;
        bool cl;
        std::optional<int> position;
    };
    std::vector<Cell> cells;
    for (int pos = 1; pos <= 4; ++pos) {
        cells.push_back({"dtf_pos" + std::to_string(pos), true, false, pos});
    }
    cells.push_back({"dtf_off_cl_off", false, false, std::nullopt});
    cells.push_back({"dtf_off_cl_on", false, true, std::nullopt});

    nlohmann::json table = nlohmann::json::array();
    double best_map = -1.0;
    int best_position = cfg.model.fusion_positions.empty() ? 1 : cfg.model.fusion_positions[0];

    auto run_cell = [&](const Cell& cell) {
        RunConfig cell_cfg = cfg;
        cell_cfg.model.dtf_enabled = cell.dtf;
        cell_cfg.model.cl_enabled = cell.cl;
        cell_cfg.model.fusion_positions =
            cell.position ? std::vector<int>{*cell.position} : std::vector<int>{};
        if (!cell.dtf) cell_cfg.model.fusion_positions.clear();
        cell_cfg.validate();
        if (log) (*log) << "ablation cell " << cell.name << "\n";
        const auto cell_dir = out_dir / cell.name;
        TrainArtifacts artifacts = train_model(cell_cfg, train_data, cell_dir, log);
        Checkpoint ckpt = load_checkpoint(artifacts.final_checkpoint);
        EvalReport report = evaluate_dataset(ckpt.model, test_data, cfg.eval);
        nlohmann::json row = {{"name", cell.name},
                              {"dtf", cell.dtf},
                              {"cl", cell.cl},
                              {"map50", report.map50},
                              {"map75", report.map75},
                              {"map", report.map}};
        if (cell.position) {
            row["fusion_position"] = *cell.position;
        } else {
            row["fusion_position"] = nullptr;
        }
        table.push_back(row);
        return report;
    };

    for (const auto& cell : cells) {
        EvalReport report = run_cell(cell);
        if (cell.dtf && !cell.cl && report.map > best_map) {
            best_map = report.map;
            best_position = *cell.position;
        }
    }
    run_cell({"dtf_on_cl_on_pos" + std::to_string(best_position), true, true, best_position});

    nlohmann::json result = {{"cells", table}, {"best_position", best_position}};
    std::ofstream out(out_dir / "ablation.json");
    if (!out) throw std::runtime_error("cannot write ablation table in " + out_dir.string());
    out << result.dump(2) << "\n";
    return result;
}

// -- gradcheck suites -----------------------------------------------------------

namespace {

GradCheckReport check_primitive(const std::string& name,
                                const std::function<Var(const std::vector<Var>&)>& op,
                                const std::vector<Tensor>& inputs, std::uint64_t seed) {
    return grad_check(name, op, inputs, 1e-6, 1e-5, seed);
}

void primitives_suite(std::vector<GradCheckReport>& out) {
    const std::uint64_t s = fnv1a64("gradcheck-primitives");
    out.push_back(check_primitive(
        "matmul", [](const std::vector<Var>& v) { return matmul(v[0], v[1]); },
        {random_tensor({3, 4}, s, 0), random_tensor({4, 2}, s, 1)}, s));
    out.push_back(check_primitive(
        "transpose", [](const std::vector<Var>& v) { return transpose(v[0]); },
        {random_tensor({3, 5}, s, 2)}, s));
    out.push_back(check_primitive(
        "add", [](const std::vector<Var>& v) { return add(v[0], v[1]); },
        {random_tensor({3, 4}, s, 3), random_tensor({3, 4}, s, 4)}, s));
    out.push_back(check_primitive(
        "sub", [](const std::vector<Var>& v) { return sub(v[0], v[1]); },
        {random_tensor({3, 4}, s, 5), random_tensor({3, 4}, s, 6)}, s));
    out.push_back(check_primitive(
        "mul", [](const std::vector<Var>& v) { return mul(v[0], v[1]); },
        {random_tensor({3, 4}, s, 7), random_tensor({3, 4}, s, 8)}, s));
    out.push_back(check_primitive(
        "divide", [](const std::vector<Var>& v) { return divide(v[0], v[1]); },
        {random_tensor({3, 4}, s, 9), random_tensor({3, 4}, s, 10, 0.5, 2.0)}, s));
    out.push_back(check_primitive(
        "scale", [](const std::vector<Var>& v) { return scale(v[0], 1.7); },
        {random_tensor({3, 4}, s, 11)}, s));
    out.push_back(check_primitive(
        "add_rowvec", [](const std::vector<Var>& v) { return add_rowvec(v[0], v[1]); },
        {random_tensor({4, 3}, s, 12), random_tensor({1, 3}, s, 13)}, s));
    out.push_back(check_primitive(
        "relu", [](const std::vector<Var>& v) { return relu(v[0]); },
        {random_tensor({4, 4}, s, 14)}, s));
    out.push_back(check_primitive(
        "sigmoid", [](const std::vector<Var>& v) { return sigmoid(v[0]); },
        {random_tensor({4, 4}, s, 15, -3.0, 3.0)}, s));
    out.push_back(check_primitive(
        "exp", [](const std::vector<Var>& v) { return exp_elem(v[0]); },
        {random_tensor({3, 3}, s, 16)}, s));
    out.push_back(check_primitive(
        "elem_min", [](const std::vector<Var>& v) { return elem_min(v[0], v[1]); },
        {random_tensor({3, 4}, s, 17), random_tensor({3, 4}, s, 18)}, s));
    out.push_back(check_primitive(
        "elem_max", [](const std::vector<Var>& v) { return elem_max(v[0], v[1]); },
        {random_tensor({3, 4}, s, 19), random_tensor({3, 4}, s, 20)}, s));
    out.push_back(check_primitive(
        "softmax_rows", [](const std::vector<Var>& v) { return softmax_rows(v[0]); },
        {random_tensor({4, 5}, s, 21, -2.0, 2.0)}, s));
    out.push_back(check_primitive(
        "log_softmax_rows", [](const std::vector<Var>& v) { return log_softmax_rows(v[0]); },
        {random_tensor({3, 6}, s, 22, -2.0, 2.0)}, s));
    out.push_back(check_primitive(
        "layer_norm",
        [](const std::vector<Var>& v) { return layer_norm(v[0], v[1], v[2], 1e-5); },
        {random_tensor({2, 8}, s, 23), random_tensor({1, 8}, s, 24, 0.5, 1.5),
         random_tensor({1, 8}, s, 25)},
        s));
    out.push_back(check_primitive(
        "concat", [](const std::vector<Var>& v) { return concat({v[0], v[1]}, 0); },
        {random_tensor({2, 3}, s, 26), random_tensor({4, 3}, s, 27)}, s));
    out.push_back(check_primitive(
        "split", [](const std::vector<Var>& v) { return split(v[0], 1, {2, 3})[1]; },
        {random_tensor({3, 5}, s, 28)}, s));
    out.push_back(check_primitive(
        "gather_rows", [](const std::vector<Var>& v) { return gather_rows(v[0], {2, 0, 2}); },
        {random_tensor({4, 3}, s, 29)}, s));
    out.push_back(check_primitive(
        "mean_rows", [](const std::vector<Var>& v) { return mean_rows(v[0]); },
        {random_tensor({5, 3}, s, 30)}, s));
    out.push_back(check_primitive(
        "mean_all", [](const std::vector<Var>& v) { return mean_all(v[0]); },
        {random_tensor({3, 4}, s, 31)}, s));
    out.push_back(check_primitive(
        "l2_normalize_rows",
        [](const std::vector<Var>& v) { return l2_normalize_rows(v[0]); },
        {random_tensor({3, 5}, s, 32, 0.3, 2.0)}, s));
    out.push_back(check_primitive(
        "conv2d_3x3",
        [](const std::vector<Var>& v) { return conv2d_3x3(v[0], v[1], v[2]); },
        {random_tensor({2, 4, 5}, s, 33), random_tensor({3, 2, 3, 3}, s, 34),
         random_tensor({3}, s, 35)},
        s));
    out.push_back(check_primitive(
        "avg_pool2", [](const std::vector<Var>& v) { return avg_pool2(v[0]); },
        {random_tensor({2, 4, 6}, s, 36)}, s));
    Tensor bce_targets = random_tensor({3, 4}, s, 37, 0.0, 1.0);
    out.push_back(check_primitive(
        "bce_with_logits",
        [bce_targets](const std::vector<Var>& v) {
            return bce_with_logits_mean(v[0], bce_targets);
        },
        {random_tensor({3, 4}, s, 38, -2.0, 2.0)}, s));
    out.push_back(check_primitive(
        "feed_forward",
        [](const std::vector<Var>& v) { return feed_forward(v[0], v[1], v[2], v[3], v[4]); },
        {random_tensor({2, 3}, s, 39), random_tensor({3, 6}, s, 40),
         random_tensor({1, 6}, s, 41), random_tensor({6, 3}, s, 42),
         random_tensor({1, 3}, s, 43)},
        s));
    out.push_back(check_primitive(
        "scaled_dot_attention",
        [](const std::vector<Var>& v) { return scaled_dot_attention(v[0], v[1], v[2], 0.6); },
        {random_tensor({3, 2}, s, 44), random_tensor({4, 2}, s, 45),
         random_tensor({4, 3}, s, 46)},
        s));
}

void dtf_suite(std::vector<GradCheckReport>& out) {
    const std::uint64_t s = fnv1a64("gradcheck-dtf");
    const std::size_t hw = 2, c = 4;
    const int heads = 2, groups = 2;

    // spatial stack over inputs and every parameter
    {
        SpatialMHAParams proto = make_spatial_params(c, heads, 2, s, "gc.spatial");
        std::vector<Tensor> inputs = {random_tensor({hw, c}, s, 100),
                                      random_tensor({hw, c}, s, 101)};
        visit_params(proto, "gc.spatial", [&](const std::string&, Var& p) {
            inputs.push_back(p.value());
        });
        auto op = [heads](const std::vector<Var>& v) {
            SpatialMHAParams p;
            p.heads = heads;
            std::size_t i = 2;
            for (int h = 0; h < heads; ++h) {
                p.w_q.push_back(v[i++]);
                p.w_k.push_back(v[i++]);
                p.w_v.push_back(v[i++]);
            }
            p.out_proj = v[i++];
            p.ln1_gamma = v[i++];
            p.ln1_beta = v[i++];
            p.ffn.w1 = v[i++];
            p.ffn.b1 = v[i++];
            p.ffn.w2 = v[i++];
            p.ffn.b2 = v[i++];
            p.ln2_gamma = v[i++];
            p.ln2_beta = v[i++];
            return spatial_attention_forward(v[0], v[1], p);
        };
        out.push_back(grad_check("spatial_attention_stack", op, inputs, 1e-6, 1e-5, s));
    }
    // channel stack
    {
        ChannelGroupParams proto = make_channel_params(c, groups, 2, s, "gc.channel");
        std::vector<Tensor> inputs = {random_tensor({3, c}, s, 102)};
        visit_params(proto, "gc.channel", [&](const std::string&, Var& p) {
            inputs.push_back(p.value());
        });
        auto op = [groups](const std::vector<Var>& v) {
            ChannelGroupParams p;
            p.groups = groups;
            std::size_t i = 1;
            for (int g = 0; g < groups; ++g) {
                p.w_q.push_back(v[i++]);
                p.w_k.push_back(v[i++]);
                p.w_v.push_back(v[i++]);
            }
            p.ln1_gamma = v[i++];
            p.ln1_beta = v[i++];
            p.ffn.w1 = v[i++];
            p.ffn.b1 = v[i++];
            p.ffn.w2 = v[i++];
            p.ffn.b2 = v[i++];
            p.ln2_gamma = v[i++];
            p.ln2_beta = v[i++];
            return channel_group_attention_forward(v[0], p);
        };
        out.push_back(grad_check("channel_attention_stack", op, inputs, 1e-6, 1e-5, s));
    }
}

void cl_suite(std::vector<GradCheckReport>& out) {
    const std::uint64_t s = fnv1a64("gradcheck-cl");
    KeyQueue queue(8, 4);
    for (std::uint64_t i = 0; i < 3; ++i) {
        Tensor k = random_tensor({1, 4}, s, 200 + i, -1.0, 1.0);
        const double norm = k.l2_norm();
        for (std::size_t j = 0; j < 4; ++j) k[j] /= norm;
        queue.push(k);
    }
    auto unit = [&](std::uint64_t stream) {
        Tensor t = random_tensor({1, 4}, s, stream, -1.0, 1.0);
        const double norm = t.l2_norm();
        for (std::size_t j = 0; j < 4; ++j) t[j] /= norm;
        return t;
    };
    out.push_back(grad_check(
        "infonce_loss",
        [&queue](const std::vector<Var>& v) { return infonce_loss(v[0], v[1], queue, 0.07); },
        {unit(210), unit(211)}, 1e-6, 1e-5, s));

    ProjectionHead proto = make_projection_head(3, 4, s, "gc.head");
    std::vector<Tensor> inputs = {random_tensor({3, 2, 2}, s, 220, 0.1, 1.0),
                                  proto.w1.value(), proto.b1.value(), proto.w2.value(),
                                  proto.b2.value()};
    out.push_back(grad_check(
        "pool_and_project",
        [](const std::vector<Var>& v) {
            ProjectionHead h;
            h.w1 = v[1];
            h.b1 = v[2];
            h.w2 = v[3];
            h.b2 = v[4];
            h.embed_dim = 4;
            return pool_and_project(FeatureMap(v[0]), h);
        },
        inputs, 1e-6, 1e-5, s));
}

void detector_suite(std::vector<GradCheckReport>& out) {
    const std::uint64_t s = fnv1a64("gradcheck-detector");
    // detection loss w.r.t. head outputs on a small synthetic scene
    BackboneConfig cfg;
    cfg.stage_widths = {4, 4, 6, 6};
    cfg.image_size = 16;
    cfg.dtf_enabled = false;
    cfg.cl_enabled = false;
    cfg.fusion_positions = {};
    HeadGeometry g = head_geometry(cfg);
    GenConfig gen;
    gen.image_size = 16;
    gen.min_objects = 1;
    gen.max_objects = 2;
    gen.num_classes = 3;
    gen.seed = s;
    SceneSample scene = generate_scene(gen, 0);
    TargetAssignment ta = assign_targets(scene.objects, g);
    LossWeights w;
    std::vector<Tensor> inputs;
    for (int h = 0; h < 3; ++h) {
        const std::size_t cells = g.grid[h] * g.grid[h];
        inputs.push_back(random_tensor({cells, 1}, s, 300 + 3 * h, -2, 2));
        inputs.push_back(random_tensor({cells, 4}, s, 301 + 3 * h, -1, 1));
        inputs.push_back(random_tensor({cells, 3}, s, 302 + 3 * h, -2, 2));
    }
    out.push_back(grad_check(
        "detection_loss",
        [&](const std::vector<Var>& v) {
            HeadOut pred;
            pred.geometry = g;
            for (int h = 0; h < 3; ++h) {
                pred.obj[h] = v[3 * h];
                pred.reg[h] = v[3 * h + 1];
                pred.cls[h] = v[3 * h + 2];
            }
            return detection_loss(pred, ta, w).total;
        },
        inputs, 1e-6, 1e-5, s));

    // full-detector spot check: random 32 parameter coordinates at tol 1e-4
    DetectorModel model = make_detector(
        [] {
            BackboneConfig c;
            c.stage_widths = {4, 4, 6, 6};
            c.image_size = 16;
            c.fusion_positions = {1};
            c.num_classes = 3;
            return c;
        }(),
        CLConfig{0.07, 8, 6}, s);
    KeyQueue queue(8, 6);
    Tensor key = random_tensor({1, 6}, s, 400, -1, 1);
    const double norm = key.l2_norm();
    for (std::size_t j = 0; j < 6; ++j) key[j] /= norm;
    queue.push(key);

    auto loss_of = [&]() {
        BackboneOut features = backbone_forward(Var::constant(scene.img_a),
                                                Var::constant(scene.img_b), model);
        HeadOut pred = head_forward(features, model);
        TargetAssignment targets = assign_targets(scene.objects, pred.geometry);
        DetectionLoss det = detection_loss(pred, targets, w);
        Var z_q = pool_and_project(features.deep_a, model.head_q);
        Var z_k = pool_and_project(features.deep_b, model.head_k);
        return total_loss(det.total, infonce_loss(z_q, z_k, queue, 0.07), w.alpha1, w.alpha2);
    };
    Var loss = loss_of();
    backward(loss);
    std::map<std::string, Tensor> grads;
    model.visit([&](const std::string& name, Var& p) { grads[name] = p.grad(); });
    std::vector<std::pair<std::string, std::size_t>> coords;
    model.visit([&](const std::string& name, Var& p) {
        for (std::size_t i = 0; i < p.value().numel(); ++i) coords.emplace_back(name, i);
    });

    GradCheckReport spot;
    spot.op = "full_detector_spot";
    CounterRng rng(s, fnv1a64("spot-coords"));
    const double h = 1e-5;
    for (int trial = 0; trial < 32; ++trial) {
        const auto& [name, idx] = coords[rng.next_below(coords.size())];
        Var target;
        model.visit([&](const std::string& n, Var& p) {
            if (n == name) target = p;
        });
        const double orig = target.value()[idx];
        target.mutable_value()[idx] = orig + h;
        const double up = loss_of().value()[0];
        target.mutable_value()[idx] = orig - h;
        const double down = loss_of().value()[0];
        target.mutable_value()[idx] = orig;
        const double numeric = (up - down) / (2 * h);
        const double analytic = grads.at(name)[idx];
        if (std::max(std::abs(analytic), std::abs(numeric)) < 1e-7) continue;
        const double rel = std::abs(analytic - numeric) /
                           std::max({std::abs(analytic), std::abs(numeric), 1e-12});
        spot.max_rel_error = std::max(spot.max_rel_error, rel);
    }
    spot.pass = spot.max_rel_error < 1e-4;
    spot.per_input.emplace_back("32 random coordinates", spot.max_rel_error);
    out.push_back(spot);
}

}  // namespace

std::vector<GradCheckReport> gradcheck_suite(const std::string& scope) {
    std::vector<GradCheckReport> out;
    if (scope == "primitives" || scope == "all") primitives_suite(out);
    if (scope == "dtf" || scope == "all") dtf_suite(out);
    if (scope == "cl" || scope == "all") cl_suite(out);
    if (scope == "detector" || scope == "all") detector_suite(out);
    if (out.empty()) {
        throw ConfigError("unknown gradcheck scope \"" + scope +
                          "\" (expected primitives|dtf|cl|detector|all)");
    }
    return out;
}

}  // namespace seadate
