#include "seadate/checkpoint.hpp"

#include <fstream>

#include "json.hpp"
#include "seadate/config.hpp"

namespace seadate {

namespace {

constexpr const char* kFormat = "seadate-checkpoint-v1";

nlohmann::json write_tensor_table(const std::filesystem::path& file,
                                  const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    nlohmann::json table = nlohmann::json::array();
    for (const auto& [name, tensor] : tensors) {
        const auto offset = static_cast<std::size_t>(out.tellp());
        write_tensor(out, tensor);
        table.push_back({{"name", name}, {"shape", tensor.shape()}, {"offset", offset}});
    }
    return table;
}

std::map<std::string, Tensor> read_tensor_table(const std::filesystem::path& file,
                                                const nlohmann::json& table) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + file.string());
    std::map<std::string, Tensor> out;
    for (const auto& entry : table) {
        in.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::size_t>()));
        Tensor t = read_tensor(in);
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        if (t.shape() != shape) {
            throw std::runtime_error("checkpoint tensor " +
                                     entry.at("name").get<std::string>() + " has shape " +
                                     shape_str(t.shape()) + ", manifest says " +
                                     shape_str(shape));
        }
        out.emplace(entry.at("name").get<std::string>(), std::move(t));
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, DetectorModel& model,
                     std::size_t step, std::uint64_t seed, SGDOptimizer* optimizer,
                     const KeyQueue* queue) {
    std::filesystem::create_directories(dir);
    std::vector<std::pair<std::string, Tensor>> params;
    model.visit([&](const std::string& name, Var& p) { params.emplace_back(name, p.value()); });
    nlohmann::json manifest;
    manifest["format"] = kFormat;
    manifest["step"] = step;
    manifest["seed"] = seed;
    manifest["backbone"] = to_json(model.cfg);
    manifest["cl_config"] = to_json(model.cl);
    manifest["tensors"] = write_tensor_table(dir / "params.bin", params);

    if (optimizer) {
        std::vector<std::pair<std::string, Tensor>> buffers;
        for (const auto& [name, tensor] : optimizer->buffers()) buffers.emplace_back(name, tensor);
        manifest["momentum"] = write_tensor_table(dir / "momentum.bin", buffers);
    }
    if (queue) {
        std::ofstream out(dir / "queue.bin", std::ios::binary);
        queue->save(out);
        manifest["queue"] = true;
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write checkpoint manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("no checkpoint manifest in " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(mf);
    if (manifest.at("format").get<std::string>() != kFormat) {
        throw std::runtime_error("unknown checkpoint format in " + dir.string());
    }
    Checkpoint ckpt;
    ckpt.step = manifest.at("step").get<std::size_t>();
    ckpt.seed = manifest.at("seed").get<std::uint64_t>();
    BackboneConfig backbone = backbone_from_json(manifest.at("backbone"));
    CLConfig cl = cl_from_json(manifest.at("cl_config"));
    ckpt.model = make_detector(backbone, cl, ckpt.seed);

    auto tensors = read_tensor_table(dir / "params.bin", manifest.at("tensors"));
    ckpt.model.visit([&](const std::string& name, Var& p) {
        auto it = tensors.find(name);
        if (it == tensors.end()) {
            throw std::runtime_error("checkpoint missing tensor " + name);
        }
        if (!it->second.same_shape(p.value())) {
            throw std::runtime_error("checkpoint tensor " + name + " has shape " +
                                     shape_str(it->second.shape()) + ", model expects " +
                                     shape_str(p.value().shape()));
        }
        p.mutable_value() = it->second;
        tensors.erase(it);
    });
    if (!tensors.empty()) {
        throw std::runtime_error("checkpoint has unused tensor " + tensors.begin()->first);
    }

    if (manifest.contains("momentum")) {
        ckpt.momentum = read_tensor_table(dir / "momentum.bin", manifest.at("momentum"));
    }
    if (manifest.contains("queue") && manifest.at("queue").get<bool>()) {
        std::ifstream in(dir / "queue.bin", std::ios::binary);
        if (!in) throw std::runtime_error("checkpoint queue.bin missing in " + dir.string());
        ckpt.queue = KeyQueue::load(in);
    }
    return ckpt;
}

}  // namespace seadate
