#include "seadate/synth.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "seadate/rng.hpp"

namespace seadate {

std::string visibility_name(Visibility v) {
    switch (v) {
        case Visibility::kBoth: return "both";
        case Visibility::kAOnly: return "a_only";
        case Visibility::kBOnly: return "b_only";
    }
    return "both";
}

Visibility visibility_from_name(const std::string& name) {
    if (name == "both") return Visibility::kBoth;
    if (name == "a_only") return Visibility::kAOnly;
    if (name == "b_only") return Visibility::kBOnly;
    throw ConfigError("unknown visibility: " + name);
}

void GenConfig::validate() const {
    if (image_size < 16) throw ConfigError("image_size must be >= 16");
    if (min_objects == 0 || max_objects < min_objects) {
        throw ConfigError("object count range must satisfy 1 <= min <= max");
    }
    if (num_classes < 1 || num_classes > 4) {
        throw ConfigError("num_classes must be in [1,4] (shape vocabulary)");
    }
    if (complementarity < 0.0 || complementarity > 1.0) {
        throw ConfigError("complementarity must be in [0,1], got " +
                          std::to_string(complementarity));
    }
    if (noise < 0.0) throw ConfigError("noise amplitude must be >= 0");
}

namespace {

constexpr double kBackground = 0.1;
constexpr double kMaxPlacementIou = 0.3;
constexpr int kPlacementRetries = 20;

void render_object(std::vector<double>& img, std::size_t size, const ObjectGT& obj,
                   double intensity) {
    const auto x0 = static_cast<std::size_t>(obj.box.x_min);
    const auto y0 = static_cast<std::size_t>(obj.box.y_min);
    const auto x1 = static_cast<std::size_t>(obj.box.x_max);
    const auto y1 = static_cast<std::size_t>(obj.box.y_max);
    const double cx = obj.box.center_x(), cy = obj.box.center_y();
    const double r = 0.5 * std::min(obj.box.width(), obj.box.height());
    for (std::size_t y = y0; y < y1 && y < size; ++y) {
        for (std::size_t x = x0; x < x1 && x < size; ++x) {
            const double px = static_cast<double>(x) + 0.5;
            const double py = static_cast<double>(y) + 0.5;
            bool inside = false;
            switch (obj.class_id) {
                case 0:  // filled square
                    inside = true;
                    break;
                case 1: {  // disk
                    const double dx = px - cx, dy = py - cy;
                    inside = dx * dx + dy * dy <= r * r;
                    break;
                }
                case 2: {  // upward triangle
                    const double frac = (py - obj.box.y_min) / obj.box.height();
                    inside = std::abs(px - cx) <= frac * 0.5 * obj.box.width();
                    break;
                }
                default: {  // ring
                    const double dx = px - cx, dy = py - cy;
                    const double d2 = dx * dx + dy * dy;
                    inside = d2 <= r * r && d2 >= (0.55 * r) * (0.55 * r);
                    break;
                }
            }
            if (inside) img[y * size + x] += intensity;
        }
    }
}

struct SceneLayout {
    std::vector<ObjectGT> objects;
    std::vector<double> intensities;
    bool reduced = false;
};

SceneLayout draw_layout(const GenConfig& cfg, std::size_t index) {
    CounterRng rng(cfg.seed, CounterRng::mix(fnv1a64("scene-layout"), index));
    SceneLayout layout;
    const std::size_t span = cfg.max_objects - cfg.min_objects + 1;
    const std::size_t want = cfg.min_objects + rng.next_below(span);
    const std::size_t lo = std::max<std::size_t>(4, cfg.image_size / 8);
    const std::size_t hi = std::max(lo + 1, cfg.image_size / 3);
    for (std::size_t i = 0; i < want; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
            const std::size_t w = lo + rng.next_below(hi - lo + 1);
            const std::size_t h = lo + rng.next_below(hi - lo + 1);
            const std::size_t x0 = 1 + rng.next_below(cfg.image_size - w - 2);
            const std::size_t y0 = 1 + rng.next_below(cfg.image_size - h - 2);
            Box box{static_cast<double>(x0), static_cast<double>(y0),
                    static_cast<double>(x0 + w), static_cast<double>(y0 + h)};
            bool clash = false;
            for (const auto& prev : layout.objects) {
                if (iou(box, prev.box) >= kMaxPlacementIou) {
                    clash = true;
                    break;
                }
            }
            if (clash) continue;
            ObjectGT obj;
            obj.class_id = static_cast<int>(rng.next_below(cfg.num_classes));
            obj.box = box;
            const double u = rng.next_unit();
            if (u < cfg.complementarity / 2.0) {
                obj.visibility = Visibility::kAOnly;
            } else if (u < cfg.complementarity) {
                obj.visibility = Visibility::kBOnly;
            } else {
                obj.visibility = Visibility::kBoth;
            }
            layout.objects.push_back(obj);
            layout.intensities.push_back(rng.uniform(0.35, 0.8));
            placed = true;
        }
        if (!placed) layout.reduced = true;
    }
    return layout;
}

Tensor render(const GenConfig& cfg, std::size_t index, const std::vector<ObjectGT>& objects,
              const std::vector<double>& intensities, char modality) {
    const std::size_t n = cfg.image_size;
    std::vector<double> img(n * n, kBackground);
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const Visibility v = objects[i].visibility;
        const bool visible = modality == 'a' ? v != Visibility::kBOnly : v != Visibility::kAOnly;
        if (visible) render_object(img, n, objects[i], intensities[i]);
    }
    const char* stream = modality == 'a' ? "noise-a" : "noise-b";
    CounterRng noise(cfg.seed, CounterRng::mix(fnv1a64(stream), index));
    for (double& px : img) px += cfg.noise * (2.0 * noise.next_unit() - 1.0);
    return Tensor({1, n, n}, std::move(img));
}

}  // namespace

SceneSample generate_scene(const GenConfig& cfg, std::size_t index) {
    cfg.validate();
    SceneLayout layout = draw_layout(cfg, index);
    SceneSample sample;
    sample.index = index;
    sample.objects = layout.objects;
    sample.placement_reduced = layout.reduced;
    sample.img_a = render(cfg, index, layout.objects, layout.intensities, 'a');
    sample.img_b = render(cfg, index, layout.objects, layout.intensities, 'b');
    return sample;
}

Tensor render_modality(const GenConfig& cfg, std::size_t index,
                       const std::vector<ObjectGT>& objects, char modality) {
    SceneLayout layout = draw_layout(cfg, index);
    // intensities follow the drawn layout; selected objects keep their slot
    std::vector<double> intensities;
    for (const auto& obj : objects) {
        bool found = false;
        for (std::size_t i = 0; i < layout.objects.size(); ++i) {
            if (layout.objects[i].box.x_min == obj.box.x_min &&
                layout.objects[i].box.y_min == obj.box.y_min &&
                layout.objects[i].class_id == obj.class_id) {
                intensities.push_back(layout.intensities[i]);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("render_modality: object not part of this scene");
    }
    return render(cfg, index, objects, intensities, modality);
}

// -- on-disk format ------------------------------------------------------------

namespace {

constexpr char kSampleMagic[4] = {'S', 'D', 'S', '1'};

std::string sample_filename(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%06zu.bin", index);
    return buf;
}

std::string checksum_of_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return hex;
}

nlohmann::json config_to_json(const GenConfig& cfg) {
    return {{"image_size", cfg.image_size},   {"min_objects", cfg.min_objects},
            {"max_objects", cfg.max_objects}, {"num_classes", cfg.num_classes},
            {"complementarity", cfg.complementarity}, {"noise", cfg.noise},
            {"seed", cfg.seed}};
}

GenConfig config_from_json(const nlohmann::json& j) {
    GenConfig cfg;
    cfg.image_size = j.at("image_size").get<std::size_t>();
    cfg.min_objects = j.at("min_objects").get<std::size_t>();
    cfg.max_objects = j.at("max_objects").get<std::size_t>();
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.complementarity = j.at("complementarity").get<double>();
    cfg.noise = j.at("noise").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

}  // namespace

void write_dataset(const GenConfig& cfg, std::size_t count, const std::filesystem::path& dir) {
    cfg.validate();
    std::filesystem::create_directories(dir);
    nlohmann::json samples_meta = nlohmann::json::array();
    std::ofstream ann(dir / "annotations.jsonl");
    if (!ann) throw std::runtime_error("cannot write annotations in " + dir.string());
    for (std::size_t i = 0; i < count; ++i) {
        SceneSample sample = generate_scene(cfg, i);
        const std::string name = sample_filename(i);
        {
            std::ofstream out(dir / name, std::ios::binary);
            if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
            out.write(kSampleMagic, 4);
            const std::uint32_t idx = static_cast<std::uint32_t>(i);
            out.write(reinterpret_cast<const char*>(&idx), 4);
            write_tensor(out, sample.img_a);
            write_tensor(out, sample.img_b);
        }
        for (const auto& obj : sample.objects) {
            nlohmann::json line = {{"index", i},
                                   {"class", obj.class_id},
                                   {"x_min", obj.box.x_min},
                                   {"y_min", obj.box.y_min},
                                   {"x_max", obj.box.x_max},
                                   {"y_max", obj.box.y_max},
                                   {"visibility", visibility_name(obj.visibility)}};
            ann << line.dump() << "\n";
        }
        samples_meta.push_back({{"file", name},
                                {"checksum", checksum_of_file(dir / name)},
                                {"objects", sample.objects.size()},
                                {"placement_reduced", sample.placement_reduced}});
    }
    nlohmann::json manifest = {{"format", "seadate-dataset-v1"},
                               {"config", config_to_json(cfg)},
                               {"count", count},
                               {"samples", samples_meta}};
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("no manifest.json in " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(mf);
    Dataset ds;
    ds.config = config_from_json(manifest.at("config"));
    const std::size_t count = manifest.at("count").get<std::size_t>();
    const auto& samples_meta = manifest.at("samples");
    if (samples_meta.size() != count) {
        throw std::runtime_error("manifest count mismatch in " + dir.string());
    }

    ds.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& meta = samples_meta[i];
        const std::string name = meta.at("file").get<std::string>();
        const std::string expect = meta.at("checksum").get<std::string>();
        if (checksum_of_file(dir / name) != expect) {
            throw std::runtime_error("checksum mismatch for sample " + std::to_string(i) +
                                     " (" + name + ")");
        }
        std::ifstream in(dir / name, std::ios::binary);
        char magic[4];
        in.read(magic, 4);
        std::uint32_t idx = 0;
        in.read(reinterpret_cast<char*>(&idx), 4);
        if (!in || std::memcmp(magic, kSampleMagic, 4) != 0 || idx != i) {
            throw std::runtime_error("bad sample header in " + name);
        }
        ds.samples[i].index = i;
        ds.samples[i].img_a = read_tensor(in);
        ds.samples[i].img_b = read_tensor(in);
        ds.samples[i].placement_reduced = meta.at("placement_reduced").get<bool>();
    }

    std::ifstream ann(dir / "annotations.jsonl");
    if (!ann) throw std::runtime_error("no annotations.jsonl in " + dir.string());
    std::string line;
    while (std::getline(ann, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        const std::size_t idx = j.at("index").get<std::size_t>();
        if (idx >= count) throw std::runtime_error("annotation index out of range");
        ObjectGT obj;
        obj.class_id = j.at("class").get<int>();
        obj.box = {j.at("x_min").get<double>(), j.at("y_min").get<double>(),
                   j.at("x_max").get<double>(), j.at("y_max").get<double>()};
        obj.visibility = visibility_from_name(j.at("visibility").get<std::string>());
        ds.samples[idx].objects.push_back(obj);
    }
    return ds;
}

}  // namespace seadate
