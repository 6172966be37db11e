#include "seadate/config.hpp"

#include <cstdlib>
#include <fstream>

namespace seadate {

namespace {

// Missing keys keep their defaults; unknown keys fail loudly.
template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void check_known_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                      const std::string& section) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) {
            if (key == k) {
                ok = true;
                break;
            }
        }
        if (!ok) throw ConfigError("unknown config field \"" + key + "\" in " + section);
    }
}

}  // namespace

void RunConfig::validate() const {
    data.gen.validate();
    model.validate();
    loss.validate();
    if (cl.temperature <= 0.0) throw ConfigError("cl.temperature must be positive");
    if (cl.queue_capacity == 0 || cl.embed_dim == 0) {
        throw ConfigError("cl.queue_capacity and cl.embed_dim must be positive");
    }
    if (optim.batch_size == 0) throw ConfigError("optim.batch_size must be positive");
    if (optim.lr < 0 || optim.momentum < 0 || optim.momentum >= 1 || optim.weight_decay < 0) {
        throw ConfigError("optimizer settings out of range");
    }
    if (eval.conf_thresh < 0 || eval.conf_thresh > 1 || eval.nms_iou < 0 || eval.nms_iou > 1) {
        throw ConfigError("eval thresholds must lie in [0,1]");
    }
    if (model.image_size != data.gen.image_size) {
        throw ConfigError("model.image_size and data.image_size must agree");
    }
    if (model.num_classes != data.gen.num_classes) {
        throw ConfigError("model.num_classes and data.num_classes must agree");
    }
}

nlohmann::json to_json(const BackboneConfig& cfg) {
    return {{"stage_widths", cfg.stage_widths},
            {"image_size", cfg.image_size},
            {"fusion_positions", cfg.fusion_positions},
            {"dtf", cfg.dtf_enabled},
            {"cl", cfg.cl_enabled},
            {"num_classes", cfg.num_classes},
            {"attention_heads", cfg.attention_heads},
            {"attention_groups", cfg.attention_groups},
            {"ffn_ratio", cfg.ffn_ratio},
            {"modality", modality_name(cfg.modality)}};
}

BackboneConfig backbone_from_json(const nlohmann::json& j) {
    check_known_keys(j,
                     {"stage_widths", "image_size", "fusion_positions", "dtf", "cl",
                      "num_classes", "attention_heads", "attention_groups", "ffn_ratio",
                      "modality"},
                     "model");
    BackboneConfig cfg;
    read_field(j, "stage_widths", cfg.stage_widths);
    read_field(j, "image_size", cfg.image_size);
    read_field(j, "fusion_positions", cfg.fusion_positions);
    read_field(j, "dtf", cfg.dtf_enabled);
    read_field(j, "cl", cfg.cl_enabled);
    read_field(j, "num_classes", cfg.num_classes);
    read_field(j, "attention_heads", cfg.attention_heads);
    read_field(j, "attention_groups", cfg.attention_groups);
    read_field(j, "ffn_ratio", cfg.ffn_ratio);
    if (j.contains("modality")) cfg.modality = modality_from_name(j.at("modality"));
    return cfg;
}

nlohmann::json to_json(const CLConfig& cfg) {
    return {{"temperature", cfg.temperature},
            {"queue_capacity", cfg.queue_capacity},
            {"embed_dim", cfg.embed_dim}};
}

CLConfig cl_from_json(const nlohmann::json& j) {
    check_known_keys(j, {"temperature", "queue_capacity", "embed_dim"}, "cl");
    CLConfig cfg;
    read_field(j, "temperature", cfg.temperature);
    read_field(j, "queue_capacity", cfg.queue_capacity);
    read_field(j, "embed_dim", cfg.embed_dim);
    return cfg;
}

nlohmann::json to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["data"] = {{"image_size", cfg.data.gen.image_size},
                 {"min_objects", cfg.data.gen.min_objects},
                 {"max_objects", cfg.data.gen.max_objects},
                 {"num_classes", cfg.data.gen.num_classes},
                 {"complementarity", cfg.data.gen.complementarity},
                 {"noise", cfg.data.gen.noise},
                 {"seed", cfg.data.gen.seed},
                 {"train_count", cfg.data.train_count},
                 {"test_count", cfg.data.test_count},
                 {"dir", cfg.data.dir}};
    j["model"] = to_json(cfg.model);
    j["cl"] = to_json(cfg.cl);
    j["loss"] = {{"alpha1", cfg.loss.alpha1},
                 {"alpha2", cfg.loss.alpha2},
                 {"lambda_obj", cfg.loss.lambda_obj},
                 {"lambda_loc", cfg.loss.lambda_loc},
                 {"lambda_cls", cfg.loss.lambda_cls},
                 {"a", cfg.loss.a},
                 {"b", cfg.loss.b},
                 {"c", cfg.loss.c}};
    j["optim"] = {{"lr", cfg.optim.lr},
                  {"momentum", cfg.optim.momentum},
                  {"weight_decay", cfg.optim.weight_decay},
                  {"batch_size", cfg.optim.batch_size}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"checkpoint_every", cfg.train.checkpoint_every}};
    j["eval"] = {{"conf_thresh", cfg.eval.conf_thresh}, {"nms_iou", cfg.eval.nms_iou}};
    return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    check_known_keys(
        j, {"seed", "out_dir", "data", "model", "cl", "loss", "optim", "train", "eval"},
        "top level");
    RunConfig cfg;
    read_field(j, "seed", cfg.seed);
    read_field(j, "out_dir", cfg.out_dir);
    bool data_seed_given = false;
    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_known_keys(d,
                         {"image_size", "min_objects", "max_objects", "num_classes",
                          "complementarity", "noise", "seed", "train_count", "test_count",
                          "dir"},
                         "data");
        read_field(d, "image_size", cfg.data.gen.image_size);
        read_field(d, "min_objects", cfg.data.gen.min_objects);
        read_field(d, "max_objects", cfg.data.gen.max_objects);
        read_field(d, "num_classes", cfg.data.gen.num_classes);
        read_field(d, "complementarity", cfg.data.gen.complementarity);
        read_field(d, "noise", cfg.data.gen.noise);
        if (d.contains("seed")) {
            data_seed_given = true;
            read_field(d, "seed", cfg.data.gen.seed);
        }
        read_field(d, "train_count", cfg.data.train_count);
        read_field(d, "test_count", cfg.data.test_count);
        read_field(d, "dir", cfg.data.dir);
    }
    if (j.contains("model")) cfg.model = backbone_from_json(j.at("model"));
    if (j.contains("cl")) cfg.cl = cl_from_json(j.at("cl"));
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        check_known_keys(
            l, {"alpha1", "alpha2", "lambda_obj", "lambda_loc", "lambda_cls", "a", "b", "c"},
            "loss");
        read_field(l, "alpha1", cfg.loss.alpha1);
        read_field(l, "alpha2", cfg.loss.alpha2);
        read_field(l, "lambda_obj", cfg.loss.lambda_obj);
        read_field(l, "lambda_loc", cfg.loss.lambda_loc);
        read_field(l, "lambda_cls", cfg.loss.lambda_cls);
        read_field(l, "a", cfg.loss.a);
        read_field(l, "b", cfg.loss.b);
        read_field(l, "c", cfg.loss.c);
    }
    if (j.contains("optim")) {
        const auto& o = j.at("optim");
        check_known_keys(o, {"lr", "momentum", "weight_decay", "batch_size"}, "optim");
        read_field(o, "lr", cfg.optim.lr);
        read_field(o, "momentum", cfg.optim.momentum);
        read_field(o, "weight_decay", cfg.optim.weight_decay);
        read_field(o, "batch_size", cfg.optim.batch_size);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_known_keys(t, {"epochs", "checkpoint_every"}, "train");
        read_field(t, "epochs", cfg.train.epochs);
        read_field(t, "checkpoint_every", cfg.train.checkpoint_every);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        check_known_keys(e, {"conf_thresh", "nms_iou"}, "eval");
        read_field(e, "conf_thresh", cfg.eval.conf_thresh);
        read_field(e, "nms_iou", cfg.eval.nms_iou);
    }
    if (!data_seed_given) cfg.data.gen.seed = cfg.seed;
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    RunConfig cfg;
    try {
        cfg = run_config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config field error in " + path.string() + ": " + e.what());
    }
    if (const char* env = std::getenv("SEADATE_SEED")) {
        cfg.seed = std::strtoull(env, nullptr, 10);
        cfg.data.gen.seed = cfg.seed;
    }
    cfg.validate();
    return cfg;
}

void write_config_echo(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir / "config_resolved.json");
    if (!out) throw std::runtime_error("cannot write config echo in " + out_dir.string());
    out << to_json(cfg).dump(2) << "\n";
}

}  // namespace seadate
