#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tandem/architecture.hpp"
#include "tandem/augment.hpp"
#include "tandem/model_io.hpp"
#include "tandem/optim.hpp"
#include "tandem/preprocess.hpp"
#include "tandem/volume.hpp"

namespace tandem {

struct DiceConfig {
    double smoothing = 1.0;
    /// Denominator sum(p^2) + sum(g^2) instead of sum(p) + sum(g).
    bool squared_denominator = false;
};

/// 1 - (2 sum(p g) + s) / (sum(p) + sum(g) + s), pooled over every element
/// of the batch. Throws ValidationError unless `target` is binary.
Tensor dice_loss(const Tensor& pred, const Tensor& target, const DiceConfig& config = {});

struct LossWeights {
    double liver = 0.5;
    double lesion = 0.5;
};

/// Binary targets derived from a label batch: liver = labels >= 1, lesion = labels == 2.
struct Targets {
    Tensor liver;   // [N,1,H,W]
    Tensor lesion;  // [N,1,H,W]
};

Targets make_targets(const std::vector<const LabelSlice*>& labels);

Tensor total_loss(const Tensor& liver_prob, const Tensor& lesion_prob, const Targets& targets,
                  const LossWeights& weights = {}, const DiceConfig& dice = {});

enum class Resolution { Half, Full };

struct StageConfig {
    std::size_t epochs = 0;
    std::size_t batch_size = 1;
    double learning_rate = 1e-3;
    Resolution resolution = Resolution::Full;
};

struct TrainConfig {
    StageConfig stage1{200, 40, 1e-3, Resolution::Half};
    StageConfig stage2{30, 10, 1e-4, Resolution::Full};
    /// Combiner pass; its resolution is always full.
    StageConfig context{10, 10, 1e-4, Resolution::Full};
    double rmsprop_rho = 0.9;
    double rmsprop_eps = 1e-8;
    DiceConfig dice;
    LossWeights weights;
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;
    bool single_precision = true;
    AugmentConfig augment;
    ArchConfig architecture;

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

/// One labelled volume. Image intensities are raw; scaling happens on load.
struct Case {
    std::string id;
    Volume image;
    SegVolume labels;
};

struct SliceSample {
    ImageSlice image;  // intensity-scaled
    LabelSlice labels;
    std::string case_id;
    std::size_t z = 0;
};

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Volume-level split. Validation gets round(fraction * n) cases, at least
/// one when fraction > 0 and n >= 2; the assignment is a seeded shuffle.
DatasetSplit split_by_volume(std::size_t case_count, double validation_fraction, std::uint64_t seed);

/// Liver-containing slices of the given cases, scaled, in (case, z) order.
std::vector<SliceSample> liver_slices(const std::vector<Case>& cases);

/// Batch tensors in sample order.
struct Batch {
    Tensor image;  // [N,1,H,W]
    Targets targets;
};

Batch make_batch(const std::vector<const SliceSample*>& samples);

/// Pooled validation loss of the whole sample set, eval mode, no augmentation.
double validation_loss(const TandemModel& model, const std::vector<SliceSample>& samples, const TrainConfig& config,
                       std::size_t chunk = 8);

/// One RMSprop step on `params` for a forward pass in train mode. Returns the loss.
double train_step(const TandemModel& model, const Batch& batch, std::vector<Tensor>& params, RmspropState& state,
                  const TrainConfig& config, Rng& dropout_rng);

struct HistoryEntry {
    int stage = 0;  // 0 = initial parameters
    std::size_t epoch = 0;
    std::size_t step = 0;
    std::optional<double> train_loss;
    double val_loss = 0.0;
    Checkpoint checkpoint;
};

struct TrainResult {
    std::vector<HistoryEntry> history;
    std::size_t best_index = 0;
    /// Case ids whose slices fed gradient steps.
    std::vector<std::string> train_case_ids;

    const HistoryEntry& best() const { return history.at(best_index); }
    const HistoryEntry& last() const { return history.back(); }
};

/// Index of the minimum validation loss among entries [first, last), earliest on ties.
std::size_t argmin_val_loss(const std::vector<HistoryEntry>& history, std::size_t first = 0,
                            std::size_t last = static_cast<std::size_t>(-1));

using ProgressFn = std::function<void(const HistoryEntry&)>;

/// Two-stage schedule. Stage 1 trains on half-resolution slices; stage 2
/// resumes from the best stage-1 entry at full resolution. Validation always
/// runs at full resolution. On return the model holds the best parameters.
TrainResult train(TandemModel& model, const std::vector<Case>& train_cases, const std::vector<Case>& val_cases,
                  const TrainConfig& config, const ProgressFn& progress = {});

/// Trains only the cross-slice combiner on top of the frozen base model.
/// Neighbouring representations are computed once, in eval mode. Returns
/// Context-kind checkpoints; on return the model holds the best combiner.
TrainResult train_context_combiner(TandemModel& model, const std::vector<Case>& train_cases,
                                   const std::vector<Case>& val_cases, const TrainConfig& config,
                                   const ProgressFn& progress = {});

/// Loads the frozen base for combiner training. Throws UsageError when the
/// file does not exist or is not a tandem checkpoint.
TandemModel load_base_model(const std::string& path);

/// Columns epoch,stage,train_loss,val_loss; train_loss is empty for the
/// initial entry. Numbers use %.9g.
std::string loss_csv(const TrainResult& result);

/// Per-target validation loss of the combiner (or, without one, the
/// per-slice classifiers) over middle slices, for comparison runs.
double context_validation_loss(const TandemModel& model, const std::vector<Case>& cases, const TrainConfig& config,
                               bool use_combiner);

}  // namespace tandem
