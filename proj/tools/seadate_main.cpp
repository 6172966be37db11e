// seadate: data generation, gradient checking, training, evaluation and the
// ablation harness for the dual-attention fusion detector.
//
// Exit codes: 0 success, 1 validation/configuration error, 2 numerical failure
// (failed gradient check or non-finite loss).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "seadate/run.hpp"

namespace fs = std::filesystem;
using namespace seadate;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

int cmd_gen_data(const std::string& config_path, std::string out_dir) {
    RunConfig cfg = load_run_config(config_path);
    if (out_dir.empty()) out_dir = cfg.data.dir;
    write_config_echo(cfg, out_dir);
    GenConfig gen = cfg.data.gen;
    write_dataset(gen, cfg.data.train_count, fs::path(out_dir) / "train");
    // test split draws from a disjoint index range of the same stream space
    GenConfig test_gen = gen;
    test_gen.seed = CounterRng::mix(gen.seed, fnv1a64("test-split"));
    write_dataset(test_gen, cfg.data.test_count, fs::path(out_dir) / "test");
    std::cout << "wrote " << cfg.data.train_count << " train and " << cfg.data.test_count
              << " test samples to " << out_dir << "\n";
    return kExitOk;
}

int cmd_gradcheck(const std::string& scope, const std::string& out_path) {
    auto reports = gradcheck_suite(scope);
    bool all_pass = true;
    std::printf("%-28s %-14s %s\n", "op", "max rel error", "status");
    for (const auto& r : reports) {
        all_pass = all_pass && r.pass;
        std::printf("%-28s %-14.3e %s\n", r.op.c_str(), r.max_rel_error,
                    r.pass ? "pass" : "FAIL");
        if (!r.diagnostic.empty()) std::printf("    %s\n", r.diagnostic.c_str());
    }
    if (!out_path.empty()) {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : reports) {
            j.push_back({{"op", r.op},
                         {"max_rel_error", r.max_rel_error},
                         {"pass", r.pass},
                         {"diagnostic", r.diagnostic}});
        }
        std::ofstream out(out_path);
        out << j.dump(2) << "\n";
    }
    std::printf("%s\n", all_pass ? "gradcheck: all suites pass" : "gradcheck: FAILURES");
    return all_pass ? kExitOk : kExitNumerical;
}

int cmd_train(const std::string& config_path, std::string out_dir) {
    RunConfig cfg = load_run_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    write_config_echo(cfg, cfg.out_dir);
    Dataset train_data = load_dataset(fs::path(cfg.data.dir) / "train");
    TrainArtifacts artifacts = train_model(cfg, train_data, cfg.out_dir, &std::cout);
    if (!artifacts.trace.empty()) {
        const StepStats& last = artifacts.trace.back();
        nlohmann::json summary = {{"steps", artifacts.trace.size()},
                                  {"l_o", last.l_obj + last.l_loc + last.l_cls},
                                  {"l_c", last.l_c},
                                  {"total", last.total}};
        std::cout << summary.dump() << "\n";
    }
    std::cout << "final checkpoint: " << artifacts.final_checkpoint.string() << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_dir, const std::string& dataset_dir,
             const std::string& out_path, double conf_thresh, double nms_iou) {
    Checkpoint ckpt = load_checkpoint(checkpoint_dir);
    Dataset data = load_dataset(dataset_dir);
    EvalConfig eval{conf_thresh, nms_iou};
    EvalReport report = evaluate_dataset(ckpt.model, data, eval);

    const fs::path out(out_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream report_out(out);
    if (!report_out) throw std::runtime_error("cannot write report to " + out_path);
    report_out << report.to_json() << "\n";

    // PR curve plot data at IoU 0.5, one CSV per class
    for (int c = 0; c < ckpt.model.cfg.num_classes; ++c) {
        auto points = pr_curve(ckpt.model, data, eval, c, 0.5);
        const fs::path curve_path =
            out.parent_path() / ("pr_curve_class" + std::to_string(c) + "_iou50.csv");
        std::ofstream curve(curve_path);
        curve << "confidence,precision,recall\n";
        for (const auto& p : points) curve << p[0] << "," << p[1] << "," << p[2] << "\n";
    }
    std::cout << report.to_json() << "\n";
    return kExitOk;
}

int cmd_ablate(const std::string& config_path, std::string out_dir) {
    RunConfig cfg = load_run_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    write_config_echo(cfg, cfg.out_dir);
    Dataset train_data = load_dataset(fs::path(cfg.data.dir) / "train");
    Dataset test_data = load_dataset(fs::path(cfg.data.dir) / "test");
    nlohmann::json table = run_ablation(cfg, train_data, test_data, cfg.out_dir, &std::cout);
    std::cout << table.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // keep the large attention buffers on the heap instead of mmap churn
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
#endif
    CLI::App app{"dual-attention fusion detector with contrastive learning"};
    app.require_subcommand(1);

    std::string config_path, out_dir, scope = "all", out_path;
    std::string checkpoint_dir, dataset_dir;
    double conf_thresh = 0.25, nms_iou = 0.5;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic paired-modality dataset");
    gen->add_option("--config", config_path, "run config JSON")->required();
    gen->add_option("--out", out_dir, "output directory (default: data.dir from config)");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    gc->add_option("--scope", scope, "primitives|dtf|cl|detector|all");
    gc->add_option("--out", out_path, "write the report as JSON");

    auto* train = app.add_subcommand("train", "train a detector");
    train->add_option("--config", config_path, "run config JSON")->required();
    train->add_option("--out", out_dir, "output directory (default: out_dir from config)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
    eval->add_option("--dataset", dataset_dir, "dataset directory")->required();
    eval->add_option("--out", out_path, "report JSON path")->required();
    eval->add_option("--conf-thresh", conf_thresh, "decode confidence threshold");
    eval->add_option("--nms-iou", nms_iou, "NMS IoU threshold");

    auto* ablate = app.add_subcommand("ablate", "fusion-position and module on/off grid");
    ablate->add_option("--config", config_path, "run config JSON")->required();
    ablate->add_option("--out", out_dir, "output directory (default: out_dir from config)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
        if (gc->parsed()) return cmd_gradcheck(scope, out_path);
        if (train->parsed()) return cmd_train(config_path, out_dir);
        if (eval->parsed()) return cmd_eval(checkpoint_dir, dataset_dir, out_path, conf_thresh,
                                            nms_iou);
        if (ablate->parsed()) return cmd_ablate(config_path, out_dir);
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitValidation;
}
