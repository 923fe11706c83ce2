#pragma once

#include <array>
#include <atomic>
#include <memory>
#include <utility>
#include <vector>

#include "tandem/architecture.hpp"
#include "tandem/model_io.hpp"
#include "tandem/preprocess.hpp"
#include "tandem/volume.hpp"

namespace tandem {

/// Frozen per-slice model as seen by inference. Inputs are [N,1,H,W]
/// intensity-scaled slices; outputs are probabilities of the same extent.
/// Implementations must be safe to call from several threads at once.
class SlicePredictor {
public:
    virtual ~SlicePredictor() = default;

    std::pair<Tensor, Tensor> predict(const Tensor& slice) const;
    SliceRepresentation features(const Tensor& slice) const;
    std::pair<Tensor, Tensor> predict_context(const std::array<SliceRepresentation, 3>& reprs) const;

    virtual bool has_context() const { return false; }
    /// Spatial extents must be multiples of this.
    virtual std::size_t required_multiple() const { return 1; }

    /// Number of predict() plus features() calls so far.
    std::size_t forward_calls() const { return calls_.load(); }

protected:
    virtual std::pair<Tensor, Tensor> do_predict(const Tensor& slice) const = 0;
    virtual SliceRepresentation do_features(const Tensor& slice) const;
    virtual std::pair<Tensor, Tensor> do_predict_context(const std::array<SliceRepresentation, 3>& reprs) const;

private:
    mutable std::atomic<std::size_t> calls_{0};
};

/// Adapter running a TandemModel in eval mode without gradient recording.
class TandemPredictor : public SlicePredictor {
public:
    explicit TandemPredictor(const TandemModel& model) : model_(model) {}

    bool has_context() const override { return model_.has_combiner(); }
    std::size_t required_multiple() const override { return model_.config().required_multiple(); }

protected:
    std::pair<Tensor, Tensor> do_predict(const Tensor& slice) const override;
    SliceRepresentation do_features(const Tensor& slice) const override;
    std::pair<Tensor, Tensor> do_predict_context(const std::array<SliceRepresentation, 3>& reprs) const override;

private:
    const TandemModel& model_;
};

/// Mean over the four flips {id, h, v, hv} of flip^-1(model(flip(x))).
std::pair<ImageSlice, ImageSlice> predict_slice_tta(const SlicePredictor& model, const ImageSlice& scaled);

struct PredictOptions {
    bool context = false;
    bool tta = true;
    std::size_t jobs = 1;
};

struct PredictionVolume {
    Volume liver_prob;
    Volume lesion_prob;
};

/// Scales the raw volume, reflect-pads H and W up to the models' required
/// multiple, predicts every slice (with flip TTA and, optionally, the
/// cross-slice combiner), averages the models with equal weights and crops
/// back. Output is identical for any number of jobs.
PredictionVolume predict_volume(const std::vector<const SlicePredictor*>& models, const Volume& raw,
                                const PredictOptions& options = {});

/// Reflect-pads the trailing edge of each slice so H and W become multiples of `m`.
Volume pad_reflect(const Volume& v, std::size_t m);
Volume crop(const Volume& v, std::size_t h, std::size_t w);

/// Tandem models from checkpoint files; `context_paths` is empty or pairs
/// one combiner checkpoint with each base.
std::vector<TandemModel> load_ensemble(const std::vector<std::string>& base_paths,
                                       const std::vector<std::string>& context_paths);

}  // namespace tandem
