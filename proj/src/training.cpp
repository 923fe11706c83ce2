#include "tandem/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <numeric>

#include "tandem/error.hpp"

namespace tandem {

using nlohmann::json;

namespace {

constexpr std::uint64_t kShuffleTag = 0x5A1Eu;
constexpr std::uint64_t kAugmentTag = 0xA06u;
constexpr std::uint64_t kDropoutTag = 0xD20Fu;
constexpr std::uint64_t kSplitTag = 0x5B117u;

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t tag) { return mix_seed(seed ^ mix_seed(tag)); }

void require_binary(const Tensor& t) {
    const auto d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d[i] != 0.0 && d[i] != 1.0)
            throw ValidationError("dice target must be binary, found " + std::to_string(d[i]) + " at element " +
                                  std::to_string(i));
}

double dice_from_sums(double inter, double sp, double sg, const DiceConfig& c) {
    return 1.0 - (2.0 * inter + c.smoothing) / (sp + sg + c.smoothing);
}

struct DiceSums {
    double inter = 0, sp = 0, sg = 0;

    void add(std::span<const Real> p, std::span<const Real> g, bool squared) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            inter += p[i] * g[i];
            sp += squared ? p[i] * p[i] : p[i];
            sg += g[i];  // binary, so g == g^2
        }
    }
};

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

StageConfig stage_from_json(const json& j, StageConfig s) {
    s.epochs = j.value("epochs", s.epochs);
    s.batch_size = j.value("batch_size", s.batch_size);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    if (j.contains("resolution")) {
        const auto r = j["resolution"].get<std::string>();
        if (r == "half") s.resolution = Resolution::Half;
        else if (r == "full") s.resolution = Resolution::Full;
        else throw ConfigError("unknown resolution '" + r + "' (expected half or full)");
    }
    return s;
}

json stage_to_json(const StageConfig& s) {
    return {{"epochs", s.epochs},
            {"batch_size", s.batch_size},
            {"learning_rate", s.learning_rate},
            {"resolution", s.resolution == Resolution::Half ? "half" : "full"}};
}

void check_stage(const StageConfig& s, const char* name) {
    if (s.batch_size < 1) throw ConfigError(std::string(name) + ".batch_size must be at least 1");
    if (!(s.learning_rate > 0)) throw ConfigError(std::string(name) + ".learning_rate must be positive");
}

Tensor stack_batch(const std::vector<const Tensor*>& parts) {
    Shape shape = parts.front()->shape();
    const std::size_t per = parts.front()->numel();
    std::vector<Real> data;
    data.reserve(per * parts.size());
    for (const Tensor* t : parts) {
        if (t->shape() != parts.front()->shape()) throw DimensionError("cannot batch tensors of different shapes");
        data.insert(data.end(), t->data().begin(), t->data().end());
    }
    shape[0] *= parts.size();
    return Tensor(shape, std::move(data));
}

CheckpointMeta meta_for(CheckpointKind kind, int stage, std::size_t epoch, std::size_t step, double val) {
    CheckpointMeta m;
    m.kind = kind;
    m.stage = stage;
    m.epoch = epoch;
    m.step = step;
    m.val_loss = val;
    return m;
}

}  // namespace

Tensor dice_loss(const Tensor& pred, const Tensor& target, const DiceConfig& config) {
    if (pred.shape() != target.shape())
        throw DimensionError("dice_loss: prediction " + shape_string(pred.shape()) + " vs target " +
                             shape_string(target.shape()));
    if (!(config.smoothing > 0)) throw ConfigError("dice smoothing must be positive");
    require_binary(target);
    const Real g_sum = std::accumulate(target.data().begin(), target.data().end(), Real{0});
    Tensor inter = ops::sum(ops::mul(pred, target));
    Tensor p_sum = config.squared_denominator ? ops::sum(ops::mul(pred, pred)) : ops::sum(pred);
    Tensor num = ops::add_scalar(ops::scale(inter, 2.0), config.smoothing);
    Tensor den = ops::add_scalar(p_sum, g_sum + config.smoothing);
    return ops::add_scalar(ops::scale(ops::div(num, den), -1.0), 1.0);
}

Targets make_targets(const std::vector<const LabelSlice*>& labels) {
    if (labels.empty()) throw DimensionError("make_targets: empty batch");
    const std::size_t h = labels.front()->h, w = labels.front()->w;
    std::vector<Real> liver, lesion;
    liver.reserve(labels.size() * h * w);
    lesion.reserve(labels.size() * h * w);
    for (const LabelSlice* l : labels) {
        if (l->h != h || l->w != w) throw DimensionError("make_targets: slices differ in extent");
        for (std::uint8_t v : l->data) {
            liver.push_back(v >= kLiver ? 1.0 : 0.0);
            lesion.push_back(v == kLesion ? 1.0 : 0.0);
        }
    }
    const Shape shape{labels.size(), 1, h, w};
    return {Tensor(shape, std::move(liver)), Tensor(shape, std::move(lesion))};
}

Tensor total_loss(const Tensor& liver_prob, const Tensor& lesion_prob, const Targets& targets, const LossWeights& weights,
                  const DiceConfig& dice) {
    return ops::add(ops::scale(dice_loss(liver_prob, targets.liver, dice), weights.liver),
                    ops::scale(dice_loss(lesion_prob, targets.lesion, dice), weights.lesion));
}

// ---- config

void TrainConfig::validate() const {
    check_stage(stage1, "stage1");
    check_stage(stage2, "stage2");
    check_stage(context, "context");
    if (!(stage2.learning_rate < stage1.learning_rate))
        throw ConfigError("stage2.learning_rate must be below stage1.learning_rate");
    if (!(rmsprop_rho >= 0 && rmsprop_rho < 1)) throw ConfigError("rmsprop rho must lie in [0, 1)");
    if (!(rmsprop_eps > 0)) throw ConfigError("rmsprop eps must be positive");
    if (!(dice.smoothing > 0)) throw ConfigError("dice smoothing must be positive");
    if (!(weights.liver >= 0 && weights.lesion >= 0)) throw ConfigError("loss weights must be non-negative");
    if (!(validation_fraction >= 0 && validation_fraction < 1))
        throw ConfigError("validation_fraction must lie in [0, 1)");
    augment.validate();
    architecture.validate();
}

std::string TrainConfig::to_json() const {
    json j;
    j["stage1"] = stage_to_json(stage1);
    j["stage2"] = stage_to_json(stage2);
    j["context"] = stage_to_json(context);
    j["rmsprop"] = {{"rho", rmsprop_rho}, {"eps", rmsprop_eps}};
    j["dice"] = {{"smoothing", dice.smoothing}, {"squared_denominator", dice.squared_denominator}};
    j["loss_weights"] = {{"liver", weights.liver}, {"lesion", weights.lesion}};
    j["validation_fraction"] = validation_fraction;
    j["seed"] = seed;
    j["precision"] = single_precision ? "single" : "double";
    j["augmentation"] = json::parse(augment.to_json());
    j["architecture"] = json::parse(architecture.to_json());
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    TrainConfig c;
    try {
        const json j = json::parse(text);
        if (j.contains("stage1")) c.stage1 = stage_from_json(j["stage1"], c.stage1);
        if (j.contains("stage2")) c.stage2 = stage_from_json(j["stage2"], c.stage2);
        if (j.contains("context")) c.context = stage_from_json(j["context"], c.context);
        if (j.contains("rmsprop")) {
            c.rmsprop_rho = j["rmsprop"].value("rho", c.rmsprop_rho);
            c.rmsprop_eps = j["rmsprop"].value("eps", c.rmsprop_eps);
        }
        if (j.contains("dice")) {
            c.dice.smoothing = j["dice"].value("smoothing", c.dice.smoothing);
            c.dice.squared_denominator = j["dice"].value("squared_denominator", c.dice.squared_denominator);
        }
        if (j.contains("loss_weights")) {
            c.weights.liver = j["loss_weights"].value("liver", c.weights.liver);
            c.weights.lesion = j["loss_weights"].value("lesion", c.weights.lesion);
        }
        c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
        c.seed = j.value("seed", c.seed);
        if (j.contains("precision")) {
            const auto p = j["precision"].get<std::string>();
            if (p != "single" && p != "double") throw ConfigError("precision must be single or double");
            c.single_precision = p == "single";
        }
        if (j.contains("augmentation")) c.augment = AugmentConfig::from_json(j["augmentation"].dump());
        if (j.contains("architecture")) c.architecture = ArchConfig::from_json(j["architecture"].dump());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("training config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---- data

DatasetSplit split_by_volume(std::size_t case_count, double validation_fraction, std::uint64_t seed) {
    std::size_t n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(case_count)));
    if (validation_fraction > 0 && case_count >= 2) n_val = std::max<std::size_t>(n_val, 1);
    if (case_count > 0) n_val = std::min(n_val, case_count - 1);
    Rng rng(derived_seed(seed, kSplitTag));
    const auto order = permutation(case_count, rng);
    DatasetSplit s;
    s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(s.validation.begin(), s.validation.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

std::vector<SliceSample> liver_slices(const std::vector<Case>& cases) {
    std::vector<SliceSample> out;
    for (const auto& c : cases) {
        if (c.image.dims != c.labels.dims)
            throw DimensionError("case " + c.id + ": image and label dims differ");
        validate_labels(c.labels);
        const Volume scaled = scale_intensities(c.image);
        for (std::size_t z : slices_with_liver(c.labels))
            out.push_back({extract_slice(scaled, z), extract_slice(c.labels, z), c.id, z});
    }
    return out;
}

Batch make_batch(const std::vector<const SliceSample*>& samples) {
    if (samples.empty()) throw DimensionError("make_batch: empty batch");
    const std::size_t h = samples.front()->image.h, w = samples.front()->image.w;
    std::vector<Real> img;
    img.reserve(samples.size() * h * w);
    std::vector<const LabelSlice*> labels;
    for (const SliceSample* s : samples) {
        if (s->image.h != h || s->image.w != w || s->labels.h != h || s->labels.w != w)
            throw DimensionError("make_batch: slices differ in extent");
        img.insert(img.end(), s->image.data.begin(), s->image.data.end());
        labels.push_back(&s->labels);
    }
    return {Tensor(Shape{samples.size(), 1, h, w}, std::move(img)), make_targets(labels)};
}

// ---- training

double validation_loss(const TandemModel& model, const std::vector<SliceSample>& samples, const TrainConfig& config,
                       std::size_t chunk) {
    if (samples.empty()) throw ConfigError("validation set is empty");
    NoGradGuard no_grad;
    DiceSums liver, lesion;
    const bool sq = config.dice.squared_denominator;
    for (std::size_t i = 0; i < samples.size(); i += chunk) {
        std::vector<const SliceSample*> part;
        for (std::size_t k = i; k < std::min(samples.size(), i + chunk); ++k) part.push_back(&samples[k]);
        const Batch b = make_batch(part);
        const auto out = model.forward(b.image, ForwardContext{Mode::Eval, nullptr});
        liver.add(out.liver_prob.data(), b.targets.liver.data(), sq);
        lesion.add(out.lesion_prob.data(), b.targets.lesion.data(), sq);
    }
    return config.weights.liver * dice_from_sums(liver.inter, liver.sp, liver.sg, config.dice) +
           config.weights.lesion * dice_from_sums(lesion.inter, lesion.sp, lesion.sg, config.dice);
}

double train_step(const TandemModel& model, const Batch& batch, std::vector<Tensor>& params, RmspropState& state,
                  const TrainConfig& config, Rng& dropout_rng) {
    for (auto& p : params) p.zero_grad();
    const auto out = model.forward(batch.image, ForwardContext{Mode::Train, &dropout_rng});
    Tensor loss = total_loss(out.liver_prob, out.lesion_prob, batch.targets, config.weights, config.dice);
    loss.backward();
    rmsprop_step(params, state);
    return loss.item();
}

std::size_t argmin_val_loss(const std::vector<HistoryEntry>& history, std::size_t first, std::size_t last) {
    last = std::min(last, history.size());
    if (first >= last) throw UsageError("argmin over an empty history range");
    std::size_t best = first;
    for (std::size_t i = first + 1; i < last; ++i)
        if (history[i].val_loss < history[best].val_loss) best = i;
    return best;
}

namespace {

struct StageRunner {
    TandemModel& model;
    const TrainConfig& config;
    const std::vector<SliceSample>& train_samples;
    const std::vector<SliceSample>& val_samples;
    const ProgressFn& progress;
    TrainResult& result;
    std::size_t step = 0;
    std::uint64_t samples_drawn = 0;

    void run(int stage, const StageConfig& sc) {
        auto params = tensors_of(model.base_parameters());
        RmspropState state(params, sc.learning_rate, config.rmsprop_rho, config.rmsprop_eps);
        const bool half = sc.resolution == Resolution::Half;
        const std::uint64_t aug_seed = derived_seed(config.seed, kAugmentTag);
        const std::uint64_t drop_seed = derived_seed(config.seed, kDropoutTag);
        for (std::size_t epoch = 1; epoch <= sc.epochs; ++epoch) {
            Rng shuffle = Rng::stream(derived_seed(config.seed, kShuffleTag), (static_cast<std::uint64_t>(stage) << 32) | epoch);
            const auto order = permutation(train_samples.size(), shuffle);
            double loss_sum = 0;
            std::size_t batches = 0;
            for (std::size_t i = 0; i < order.size(); i += sc.batch_size) {
                std::vector<SliceSample> drawn;
                for (std::size_t k = i; k < std::min(order.size(), i + sc.batch_size); ++k) {
                    const SliceSample& s = train_samples[order[k]];
                    Rng aug = Rng::stream(aug_seed, samples_drawn++);
                    auto [img, lab] = augment_pair(s.image, s.labels, config.augment, aug);
                    if (half) {
                        img = downscale_slice(img);
                        lab = downscale_slice(lab);
                    }
                    drawn.push_back({std::move(img), std::move(lab), s.case_id, s.z});
                }
                std::vector<const SliceSample*> ptrs;
                for (const auto& d : drawn) ptrs.push_back(&d);
                Rng dropout = Rng::stream(drop_seed, step);
                loss_sum += train_step(model, make_batch(ptrs), params, state, config, dropout);
                ++batches;
                ++step;
            }
            record(stage, epoch, loss_sum / static_cast<double>(batches));
        }
    }

    void record(int stage, std::size_t epoch, std::optional<double> train_loss) {
        HistoryEntry e;
        e.stage = stage;
        e.epoch = epoch;
        e.step = step;
        e.train_loss = train_loss;
        e.val_loss = validation_loss(model, val_samples, config);
        e.checkpoint = snapshot(model, meta_for(CheckpointKind::Tandem, stage, epoch, step, e.val_loss));
        result.history.push_back(std::move(e));
        if (progress) progress(result.history.back());
    }
};

void check_half_resolution(const std::vector<SliceSample>& samples, const ArchConfig& arch) {
    const std::size_t m = arch.required_multiple();
    for (const auto& s : samples)
        if (s.image.h % (2 * m) || s.image.w % (2 * m))
            throw ConfigError("half-resolution stage needs slice extents divisible by " + std::to_string(2 * m) +
                              ", got " + std::to_string(s.image.h) + "x" + std::to_string(s.image.w));
}

}  // namespace

TrainResult train(TandemModel& model, const std::vector<Case>& train_cases, const std::vector<Case>& val_cases,
                  const TrainConfig& config, const ProgressFn& progress) {
    config.validate();
    PrecisionScope precision_scope(config.single_precision ? Precision::Single : Precision::Double);
    const auto train_samples = liver_slices(train_cases);
    const auto val_samples = liver_slices(val_cases);
    if (train_samples.empty()) throw ConfigError("training set has no liver-containing slices");
    if (val_samples.empty()) throw ConfigError("validation set has no liver-containing slices");
    for (const auto& t : train_cases)
        for (const auto& v : val_cases)
            if (t.id == v.id) throw ConfigError("case '" + t.id + "' appears in both training and validation sets");
    if (config.stage1.epochs > 0 && config.stage1.resolution == Resolution::Half)
        check_half_resolution(train_samples, model.config());
    if (config.stage2.epochs > 0 && config.stage2.resolution == Resolution::Half)
        check_half_resolution(train_samples, model.config());

    TrainResult result;
    for (const auto& c : train_cases) result.train_case_ids.push_back(c.id);
    StageRunner runner{model, config, train_samples, val_samples, progress, result};
    runner.record(0, 0, std::nullopt);
    runner.run(1, config.stage1);
    const std::size_t stage1_best = argmin_val_loss(result.history);
    load_into(model, result.history[stage1_best].checkpoint);
    runner.run(2, config.stage2);
    result.best_index = argmin_val_loss(result.history);
    load_into(model, result.best().checkpoint);
    return result;
}

// ---- cross-slice combiner

namespace {

struct ContextSample {
    std::array<const SliceRepresentation*, 3> reprs;
    const LabelSlice* labels;
};

/// Representations of every slice needed as a neighbour of a liver slice.
struct ContextData {
    std::vector<std::map<std::size_t, SliceRepresentation>> reprs;  // per case
    std::vector<LabelSlice> labels;
    std::vector<ContextSample> samples;
};

ContextData precompute_context(const TandemModel& model, const std::vector<Case>& cases) {
    NoGradGuard no_grad;
    ContextData data;
    data.reprs.resize(cases.size());
    std::vector<std::pair<std::size_t, std::size_t>> middles;
    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
        const Case& c = cases[ci];
        if (c.image.dims != c.labels.dims) throw DimensionError("case " + c.id + ": image and label dims differ");
        validate_labels(c.labels);
        const Volume scaled = scale_intensities(c.image);
        const auto dims = c.image.dims;
        for (std::size_t z : slices_with_liver(c.labels)) {
            for (std::size_t n : context_neighbours(z, dims.d)) {
                if (data.reprs[ci].count(n)) continue;
                const auto img = extract_slice(scaled, n);
                const Tensor x(Shape{1, 1, dims.h, dims.w}, std::vector<Real>(img.data.begin(), img.data.end()));
                data.reprs[ci][n] = model.forward(x, ForwardContext{Mode::Eval, nullptr}).repr;
            }
            middles.emplace_back(ci, z);
        }
    }
    data.labels.reserve(middles.size());
    for (const auto& [ci, z] : middles) data.labels.push_back(extract_slice(cases[ci].labels, z));
    for (std::size_t k = 0; k < middles.size(); ++k) {
        const auto [ci, z] = middles[k];
        const auto nb = context_neighbours(z, cases[ci].image.dims.d);
        data.samples.push_back({{&data.reprs[ci].at(nb[0]), &data.reprs[ci].at(nb[1]), &data.reprs[ci].at(nb[2])},
                                &data.labels[k]});
    }
    return data;
}

std::pair<std::array<SliceRepresentation, 3>, Targets> context_batch(const std::vector<const ContextSample*>& samples) {
    std::array<SliceRepresentation, 3> reprs;
    for (std::size_t j = 0; j < 3; ++j) {
        std::vector<const Tensor*> f1, f2;
        for (const ContextSample* s : samples) {
            f1.push_back(&s->reprs[j]->fcn1);
            f2.push_back(&s->reprs[j]->fcn2);
        }
        reprs[j] = {stack_batch(f1), stack_batch(f2)};
    }
    std::vector<const LabelSlice*> labels;
    for (const ContextSample* s : samples) labels.push_back(s->labels);
    return {reprs, make_targets(labels)};
}

double context_loss(const TandemModel& model, const ContextData& data, const TrainConfig& config, std::size_t chunk = 8) {
    if (data.samples.empty()) throw ConfigError("validation set is empty");
    NoGradGuard no_grad;
    DiceSums liver, lesion;
    const bool sq = config.dice.squared_denominator;
    for (std::size_t i = 0; i < data.samples.size(); i += chunk) {
        std::vector<const ContextSample*> part;
        for (std::size_t k = i; k < std::min(data.samples.size(), i + chunk); ++k) part.push_back(&data.samples[k]);
        const auto [reprs, targets] = context_batch(part);
        const auto [lp, sp] = model.context_forward(reprs);
        liver.add(lp.data(), targets.liver.data(), sq);
        lesion.add(sp.data(), targets.lesion.data(), sq);
    }
    return config.weights.liver * dice_from_sums(liver.inter, liver.sp, liver.sg, config.dice) +
           config.weights.lesion * dice_from_sums(lesion.inter, lesion.sp, lesion.sg, config.dice);
}

}  // namespace

TrainResult train_context_combiner(TandemModel& model, const std::vector<Case>& train_cases,
                                   const std::vector<Case>& val_cases, const TrainConfig& config,
                                   const ProgressFn& progress) {
    config.validate();
    PrecisionScope precision_scope(config.single_precision ? Precision::Single : Precision::Double);
    model.enable_combiner();
    const ContextData train_data = precompute_context(model, train_cases);
    const ContextData val_data = precompute_context(model, val_cases);
    if (train_data.samples.empty()) throw ConfigError("training set has no liver-containing slices");
    if (val_data.samples.empty()) throw ConfigError("validation set has no liver-containing slices");

    TrainResult result;
    for (const auto& c : train_cases) result.train_case_ids.push_back(c.id);
    std::size_t step = 0;
    const auto record = [&](int stage, std::size_t epoch, std::optional<double> train_loss) {
        HistoryEntry e;
        e.stage = stage;
        e.epoch = epoch;
        e.step = step;
        e.train_loss = train_loss;
        e.val_loss = context_loss(model, val_data, config);
        e.checkpoint = snapshot(model, meta_for(CheckpointKind::Context, stage, epoch, step, e.val_loss));
        result.history.push_back(std::move(e));
        if (progress) progress(result.history.back());
    };
    record(0, 0, std::nullopt);

    auto params = tensors_of(model.combiner_parameters());
    const StageConfig& sc = config.context;
    RmspropState state(params, sc.learning_rate, config.rmsprop_rho, config.rmsprop_eps);
    for (std::size_t epoch = 1; epoch <= sc.epochs; ++epoch) {
        Rng shuffle = Rng::stream(derived_seed(config.seed, kShuffleTag), (std::uint64_t{3} << 32) | epoch);
        const auto order = permutation(train_data.samples.size(), shuffle);
        double loss_sum = 0;
        std::size_t batches = 0;
        for (std::size_t i = 0; i < order.size(); i += sc.batch_size) {
            std::vector<const ContextSample*> part;
            for (std::size_t k = i; k < std::min(order.size(), i + sc.batch_size); ++k)
                part.push_back(&train_data.samples[order[k]]);
            const auto [reprs, targets] = context_batch(part);
            for (auto& p : params) p.zero_grad();
            const auto [lp, sp] = model.context_forward(reprs);
            Tensor loss = total_loss(lp, sp, targets, config.weights, config.dice);
            loss.backward();
            rmsprop_step(params, state);
            loss_sum += loss.item();
            ++batches;
            ++step;
        }
        record(1, epoch, loss_sum / static_cast<double>(batches));
    }
    result.best_index = argmin_val_loss(result.history);
    load_into(model, result.best().checkpoint);
    return result;
}

double context_validation_loss(const TandemModel& model, const std::vector<Case>& cases, const TrainConfig& config,
                               bool use_combiner) {
    PrecisionScope precision_scope(config.single_precision ? Precision::Single : Precision::Double);
    if (!use_combiner) return validation_loss(model, liver_slices(cases), config);
    return context_loss(model, precompute_context(model, cases), config);
}

TandemModel load_base_model(const std::string& path) {
    if (!std::filesystem::exists(path)) throw UsageError("base checkpoint not found: " + path);
    const Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.meta.kind != CheckpointKind::Tandem) throw UsageError("base checkpoint " + path + " is not a tandem checkpoint");
    return model_from_checkpoint(ckpt);
}

std::string loss_csv(const TrainResult& result) {
    std::string out = "epoch,stage,train_loss,val_loss\n";
    char buf[128];
    for (const auto& e : result.history) {
        std::string train;
        if (e.train_loss) {
            std::snprintf(buf, sizeof buf, "%.9g", *e.train_loss);
            train = buf;
        }
        std::snprintf(buf, sizeof buf, "%zu,%d,%s,%.9g\n", e.epoch, e.stage, train.c_str(), e.val_loss);
        out += buf;
    }
    return out;
}

}  // namespace tandem
