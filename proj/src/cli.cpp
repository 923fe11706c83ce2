#include "tandem/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "tandem/error.hpp"
#include "tandem/gradcheck.hpp"
#include "tandem/inference.hpp"
#include "tandem/manifest.hpp"
#include "tandem/metrics.hpp"
#include "tandem/phantom.hpp"
#include "tandem/postprocess.hpp"
#include "tandem/selftest.hpp"

namespace tandem {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kImageSuffix = "_image.segv";
constexpr const char* kLabelSuffix = "_label.segv";
constexpr const char* kLiverProbSuffix = "_liver_prob.segv";
constexpr const char* kLesionProbSuffix = "_lesion_prob.segv";

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write '" + path.string() + "'");
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir + "'");
}

/// Case ids of files named <id><suffix> in `dir`, sorted.
std::vector<std::string> case_ids(const std::string& dir, const std::string& suffix) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: '" + dir + "'");
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name.size() > suffix.size() && name.ends_with(suffix))
            ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw IoError("no *" + suffix + " files in '" + dir + "'");
    return ids;
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

/// Runs body(i) for i in [0, n) on up to `jobs` threads. The first error is
/// rethrown after all threads finish.
void for_each_index(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

class ManifestWriter {
public:
    ManifestWriter(std::string command, std::string dir)
        : dir_(std::move(dir)), begin_(std::chrono::steady_clock::now()) {
        manifest.command = std::move(command);
        manifest.started_at = utc_timestamp();
    }

    void write() {
        manifest.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin_).count();
        ensure_dir(dir_);
        write_text(fs::path(dir_) / "manifest.json", manifest.to_json() + "\n");
    }

    RunManifest manifest;

private:
    std::string dir_;
    std::chrono::steady_clock::time_point begin_;
};

void print_progress(std::ostream& out, const HistoryEntry& e) {
    char buf[160];
    if (e.train_loss)
        std::snprintf(buf, sizeof buf, "stage %d epoch %zu step %zu train_loss %.6f val_loss %.6f", e.stage, e.epoch,
                      e.step, *e.train_loss, e.val_loss);
    else
        std::snprintf(buf, sizeof buf, "initial val_loss %.6f", e.val_loss);
    out << buf << '\n' << std::flush;
}

/// Shared tail of train and train-context.
void write_training_outputs(const TrainResult& result, const std::string& out_dir, ManifestWriter& mw) {
    ensure_dir(out_dir);
    save_checkpoint(in_dir(out_dir, "best.ckpt"), result.best().checkpoint);
    save_checkpoint(in_dir(out_dir, "last.ckpt"), result.last().checkpoint);
    write_text(fs::path(out_dir) / "loss.csv", loss_csv(result));
    for (const char* name : {"best.ckpt", "last.ckpt", "loss.csv", "split.json"})
        mw.manifest.outputs.push_back(in_dir(out_dir, name));
}

struct TrainingData {
    std::vector<Case> train, validation;
    std::string split_json;
};

TrainingData split_cases(std::vector<Case> cases, const TrainConfig& config) {
    const DatasetSplit split = split_by_volume(cases.size(), config.validation_fraction, config.seed);
    TrainingData data;
    json j{{"train", json::array()}, {"validation", json::array()}};
    for (std::size_t i : split.train) {
        j["train"].push_back(cases[i].id);
        data.train.push_back(std::move(cases[i]));
    }
    for (std::size_t i : split.validation) {
        j["validation"].push_back(cases[i].id);
        data.validation.push_back(std::move(cases[i]));
    }
    data.split_json = j.dump(2) + "\n";
    return data;
}

int cmd_gen_phantom(const std::string& spec_path, const std::string& out_dir, std::size_t count, std::ostream& out) {
    ManifestWriter mw("gen-phantom", out_dir);
    const PhantomSpec base = PhantomSpec::from_json(read_text(spec_path));
    base.validate();
    json config = json::parse(base.to_json());
    config["count"] = count;
    mw.manifest.config_json = config.dump();
    mw.manifest.seed = base.seed;
    mw.manifest.inputs = {spec_path};
    ensure_dir(out_dir);
    for (std::size_t i = 0; i < count; ++i) {
        PhantomSpec spec = base;
        spec.seed = base.seed + i;
        const Phantom p = generate_phantom(spec);
        char id[32];
        std::snprintf(id, sizeof id, "phantom_%03zu", i);
        const std::string image = in_dir(out_dir, id + std::string(kImageSuffix));
        const std::string labels = in_dir(out_dir, id + std::string(kLabelSuffix));
        write_volume(p.image, image);
        write_volume(p.labels, labels);
        mw.manifest.outputs.push_back(image);
        mw.manifest.outputs.push_back(labels);
        out << id << ": " << p.lesions.size() << " lesions\n";
    }
    mw.write();
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& out_dir,
              std::ostream& out) {
    ManifestWriter mw("train", out_dir);
    const TrainConfig config = TrainConfig::from_json(read_text(config_path));
    config.validate();
    mw.manifest.config_json = config.to_json();
    mw.manifest.seed = config.seed;
    mw.manifest.inputs = {config_path, data_dir};
    TrainingData data = split_cases(load_cases(data_dir), config);
    TandemModel model(config.architecture);
    const TrainResult result =
        train(model, data.train, data.validation, config, [&](const HistoryEntry& e) { print_progress(out, e); });
    write_training_outputs(result, out_dir, mw);
    write_text(fs::path(out_dir) / "split.json", data.split_json);
    out << "best: stage " << result.best().stage << " epoch " << result.best().epoch << " val_loss "
        << result.best().val_loss << '\n';
    mw.write();
    return kExitOk;
}

int cmd_train_context(const std::string& base_path, const std::string& config_path, const std::string& data_dir,
                      const std::string& out_dir, std::ostream& out) {
    ManifestWriter mw("train-context", out_dir);
    const TrainConfig config = TrainConfig::from_json(read_text(config_path));
    config.validate();
    json cfg = json::parse(config.to_json());
    cfg["base_checkpoint"] = base_path;
    mw.manifest.config_json = cfg.dump();
    mw.manifest.seed = config.seed;
    mw.manifest.inputs = {base_path, config_path, data_dir};
    TandemModel model = load_base_model(base_path);
    TrainingData data = split_cases(load_cases(data_dir), config);
    const TrainResult result = train_context_combiner(model, data.train, data.validation, config,
                                                      [&](const HistoryEntry& e) { print_progress(out, e); });
    write_training_outputs(result, out_dir, mw);
    write_text(fs::path(out_dir) / "split.json", data.split_json);
    out << "best: epoch " << result.best().epoch << " val_loss " << result.best().val_loss << '\n';
    mw.write();
    return kExitOk;
}

int cmd_predict(const std::vector<std::string>& checkpoints, const std::vector<std::string>& contexts,
                const std::string& input_dir, const std::string& out_dir, std::size_t jobs, bool no_tta,
                std::ostream& out) {
    ManifestWriter mw("predict", out_dir);
    const auto models = load_ensemble(checkpoints, contexts);
    std::vector<std::unique_ptr<TandemPredictor>> predictors;
    std::vector<const SlicePredictor*> views;
    for (const auto& m : models) {
        predictors.push_back(std::make_unique<TandemPredictor>(m));
        views.push_back(predictors.back().get());
    }
    PredictOptions options;
    options.context = !contexts.empty();
    options.tta = !no_tta;
    mw.manifest.config_json =
        json{{"checkpoints", checkpoints}, {"context", contexts}, {"tta", options.tta}}.dump();
    mw.manifest.inputs = checkpoints;
    mw.manifest.inputs.insert(mw.manifest.inputs.end(), contexts.begin(), contexts.end());
    mw.manifest.inputs.push_back(input_dir);
    const auto ids = case_ids(input_dir, kImageSuffix);
    ensure_dir(out_dir);
    for_each_index(ids.size(), jobs, [&](std::size_t i) {
        const Volume raw = read_image(in_dir(input_dir, ids[i] + kImageSuffix));
        const PredictionVolume pv = predict_volume(views, raw, options);
        write_volume(pv.liver_prob, in_dir(out_dir, ids[i] + kLiverProbSuffix));
        write_volume(pv.lesion_prob, in_dir(out_dir, ids[i] + kLesionProbSuffix));
    });
    for (const auto& id : ids) {
        mw.manifest.outputs.push_back(in_dir(out_dir, id + kLiverProbSuffix));
        mw.manifest.outputs.push_back(in_dir(out_dir, id + kLesionProbSuffix));
    }
    out << "predicted " << ids.size() << " volumes with " << models.size() << " model(s)\n";
    mw.write();
    return kExitOk;
}

int cmd_postprocess(const std::string& pred_dir, const std::string& out_dir, const std::string& config_path,
                    std::size_t jobs, std::ostream& out) {
    ManifestWriter mw("postprocess", out_dir);
    PostprocessConfig config;
    if (!config_path.empty()) {
        config = PostprocessConfig::from_json(read_text(config_path));
        mw.manifest.inputs.push_back(config_path);
    }
    config.validate();
    mw.manifest.config_json = config.to_json();
    mw.manifest.inputs.push_back(pred_dir);
    const auto ids = case_ids(pred_dir, kLiverProbSuffix);
    ensure_dir(out_dir);
    for_each_index(ids.size(), jobs, [&](std::size_t i) {
        PredictionVolume pv{read_image(in_dir(pred_dir, ids[i] + kLiverProbSuffix)),
                            read_image(in_dir(pred_dir, ids[i] + kLesionProbSuffix))};
        write_volume(finalize(pv, config), in_dir(out_dir, ids[i] + kLabelSuffix));
    });
    for (const auto& id : ids) mw.manifest.outputs.push_back(in_dir(out_dir, id + kLabelSuffix));
    out << "post-processed " << ids.size() << " volumes\n";
    mw.write();
    return kExitOk;
}

int cmd_evaluate(const std::string& pred_dir, const std::string& gt_dir, const std::string& out_dir,
                 std::size_t jobs, std::ostream& out) {
    ManifestWriter mw("evaluate", out_dir);
    const EvalConfig config;
    mw.manifest.config_json = json{{"connectivity", config.connectivity},
                                   {"detection_thresholds", config.detection_thresholds},
                                   {"segmentation_iou_threshold", config.segmentation_iou_threshold}}
                                  .dump();
    mw.manifest.inputs = {pred_dir, gt_dir};
    const auto ids = case_ids(gt_dir, kLabelSuffix);
    std::vector<CaseReport> reports(ids.size());
    for_each_index(ids.size(), jobs, [&](std::size_t i) {
        const std::string pred_path = in_dir(pred_dir, ids[i] + kLabelSuffix);
        if (!fs::exists(pred_path)) throw IoError("missing prediction '" + pred_path + "'");
        reports[i] = evaluate_case(read_labels(pred_path), read_labels(in_dir(gt_dir, ids[i] + kLabelSuffix)), config,
                                   ids[i]);
    });
    const Summary summary = aggregate(reports);
    ensure_dir(out_dir);
    write_text(fs::path(out_dir) / "cases.csv", cases_csv(reports));
    write_text(fs::path(out_dir) / "summary.csv", summary_csv(summary));
    write_text(fs::path(out_dir) / "report.json", report_json(reports, summary));
    for (const char* name : {"cases.csv", "summary.csv", "report.json"}) mw.manifest.outputs.push_back(in_dir(out_dir, name));
    out << summary_csv(summary);
    mw.write();
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& out_dir, std::ostream& out) {
    ManifestWriter mw("gradcheck", out_dir);
    GradcheckOptions options;
    options.seed = seed;
    mw.manifest.config_json =
        json{{"seed", options.seed}, {"step", options.step}, {"tolerance", options.tolerance}}.dump();
    mw.manifest.seed = seed;
    double worst = 0.0;
    for (const auto& c : run_gradcheck_suite(options)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-32s %6zu  %.3e%s", c.name.c_str(), c.elements, c.error,
                      c.error <= options.tolerance ? "" : "  FAIL");
        out << buf << '\n';
        worst = std::max(worst, c.error);
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "max relative error %.3e\n", worst);
    out << buf;
    mw.write();
    return worst <= options.tolerance ? kExitOk : kExitValidation;
}

int cmd_selftest(const std::string& out_dir, std::ostream& out) {
    ManifestWriter mw("selftest", out_dir);
    bool ok = true;
    for (const auto& r : run_selftest()) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name;
        if (!r.passed) out << ": " << r.detail;
        out << '\n';
        ok = ok && r.passed;
    }
    mw.write();
    return ok ? kExitOk : kExitValidation;
}

}  // namespace

std::vector<Case> load_cases(const std::string& dir) {
    std::vector<Case> cases;
    for (const auto& id : case_ids(dir, kImageSuffix)) {
        const std::string labels = in_dir(dir, id + kLabelSuffix);
        if (!fs::exists(labels)) throw IoError("image '" + id + "' has no labels at '" + labels + "'");
        Case c{id, read_image(in_dir(dir, id + kImageSuffix)), read_labels(labels)};
        if (!(c.image.dims == c.labels.dims)) throw DimensionError("case '" + id + "': image and labels differ in dims");
        cases.push_back(std::move(c));
    }
    return cases;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Tandem liver and lesion segmentation toolkit", "tandemseg"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string spec, out_dir, config, data, base, input, pred, gt;
    std::size_t count = 1, jobs = 1;
    std::uint64_t seed = 0;
    bool no_tta = false;
    std::vector<std::string> checkpoints, contexts;

    auto* gen = app.add_subcommand("gen-phantom", "Write deterministic phantom volume pairs");
    gen->add_option("--spec", spec, "Phantom spec JSON")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_option("--count", count, "Number of phantoms; seeds are spec.seed + i")->check(CLI::PositiveNumber);

    auto* tr = app.add_subcommand("train", "Two-stage training of the tandem model");
    tr->add_option("--config", config, "Training config JSON")->required()->check(CLI::ExistingFile);
    tr->add_option("--data", data, "Directory of <id>_image.segv / <id>_label.segv pairs")->required();
    tr->add_option("--out", out_dir, "Output directory")->required();

    auto* tc = app.add_subcommand("train-context", "Train the cross-slice combiner on a frozen base model");
    tc->add_option("--base", base, "Base tandem checkpoint")->required();
    tc->add_option("--config", config, "Training config JSON")->required()->check(CLI::ExistingFile);
    tc->add_option("--data", data, "Directory of labelled cases")->required();
    tc->add_option("--out", out_dir, "Output directory")->required();

    auto* pr = app.add_subcommand("predict", "Probability volumes from an ensemble of checkpoints");
    pr->add_option("--checkpoint", checkpoints, "Tandem checkpoint (repeatable)")->required()->check(CLI::ExistingFile);
    pr->add_option("--context", contexts, "Combiner checkpoint paired with each --checkpoint (repeatable)")
        ->check(CLI::ExistingFile);
    pr->add_option("--input", input, "Directory of <id>_image.segv volumes")->required();
    pr->add_option("--out", out_dir, "Output directory")->required();
    pr->add_option("--jobs", jobs, "Volumes processed in parallel")->check(CLI::PositiveNumber);
    pr->add_flag("--no-tta", no_tta, "Disable flip test-time augmentation");

    auto* pp = app.add_subcommand("postprocess", "Label volumes from probability volumes");
    pp->add_option("--pred", pred, "Directory of probability volumes")->required();
    pp->add_option("--out", out_dir, "Output directory")->required();
    pp->add_option("--config", config, "Post-processing config JSON")->check(CLI::ExistingFile);
    pp->add_option("--jobs", jobs, "Volumes processed in parallel")->check(CLI::PositiveNumber);

    auto* ev = app.add_subcommand("evaluate", "Segmentation and detection reports");
    ev->add_option("--pred", pred, "Directory of predicted <id>_label.segv")->required();
    ev->add_option("--gt", gt, "Directory of reference <id>_label.segv")->required();
    ev->add_option("--out", out_dir, "Output directory")->required();
    ev->add_option("--jobs", jobs, "Volumes evaluated in parallel")->check(CLI::PositiveNumber);

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    gc->add_option("--seed", seed, "Seed for shapes and values");
    gc->add_option("--out", out_dir, "Directory for manifest.json")->default_val(".");

    auto* st = app.add_subcommand("selftest", "Fixed-answer fixtures across modules");
    st->add_option("--out", out_dir, "Directory for manifest.json")->default_val(".");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gen) return cmd_gen_phantom(spec, out_dir, count, out);
        if (*tr) return cmd_train(config, data, out_dir, out);
        if (*tc) return cmd_train_context(base, config, data, out_dir, out);
        if (*pr) return cmd_predict(checkpoints, contexts, input, out_dir, jobs, no_tta, out);
        if (*pp) return cmd_postprocess(pred, out_dir, config, jobs, out);
        if (*ev) return cmd_evaluate(pred, gt, out_dir, jobs, out);
        if (*gc) return cmd_gradcheck(seed, out_dir, out);
        if (*st) return cmd_selftest(out_dir, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace tandem
