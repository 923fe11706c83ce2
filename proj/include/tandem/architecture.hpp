#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tandem/layers.hpp"

namespace tandem {

enum class BlockKind { A, B };
enum class Resample { None, Down, Up };

const char* to_string(BlockKind k);
const char* to_string(Resample r);

struct BlockSpec {
    BlockKind kind = BlockKind::B;
    std::size_t filters = 32;
    Resample resample = Resample::None;
};

/// Residual block with a short skip.
///
/// Main path, kind A:  BN -> ReLU -> [maxpool] -> conv3x3 -> dropout -> [upsample]
/// Main path, kind B:  BN -> ReLU -> conv3x3 (stride 2 when down) -> dropout
///                     -> BN -> ReLU -> conv3x3 -> dropout -> [upsample]
/// Skip path: the input resampled the same way (maxpool for A, grid
/// subsampling for B, nearest upsampling for up blocks) and, when the channel
/// count changes, projected by a bias-free 1x1 convolution.
class Block {
public:
    Block(BlockSpec spec, std::size_t in_channels, double dropout_p, double bn_momentum, double bn_eps, Rng& init);

    Tensor forward(const Tensor& x, const ForwardContext& ctx) const;

    const BlockSpec& spec() const { return spec_; }
    std::size_t in_channels() const { return in_channels_; }
    std::size_t conv_count() const { return conv2_ ? 2 : 1; }
    bool has_projection() const { return projection_.has_value(); }

    void collect(const std::string& prefix, std::vector<NamedTensor>& params) const;
    void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& buffers) const;
    /// Main-path convolutions only (excludes the skip projection).
    std::vector<Tensor> main_path_convolution_tensors() const;

private:
    BlockSpec spec_;
    std::size_t in_channels_;
    double dropout_p_;
    BatchNorm2d bn1_;
    Conv2d conv1_;
    std::optional<BatchNorm2d> bn2_;
    std::optional<Conv2d> conv2_;
    std::optional<Conv2d> projection_;
};

/// Closed-form trainable parameter count of one block.
std::size_t block_parameter_count(const BlockSpec& spec, std::size_t in_channels);

struct FcnConfig {
    std::size_t input_channels = 1;
    std::size_t initial_filters = 32;
    std::vector<BlockSpec> down_blocks;
    std::vector<BlockSpec> up_blocks;
    double dropout_p = 0.1;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    std::size_t depth() const { return down_blocks.size(); }
    /// Throws ConfigError unless the expanding path mirrors the contracting path.
    void validate() const;
};

/// Options that only exist for ablation and inspection.
struct FcnForwardOptions {
    bool long_skips = true;
};

/// Intermediate outputs recorded during one FCN forward pass.
struct FcnTrace {
    std::vector<Tensor> contracting;  // initial conv output, then each down block output
    std::size_t long_skip_additions = 0;
};

/// UNet-like FCN: initial 3x3 conv, contracting blocks, mirrored expanding
/// blocks. Expanding block j consumes the previous output, adds the
/// contracting output at its resolution (long skip) and passes it on; the
/// last addition merges with the initial conv output, so the representation
/// has `initial_filters` channels at the input's spatial extent.
class Fcn {
public:
    Fcn(FcnConfig config, Rng& init);

    Tensor forward(const Tensor& x, const ForwardContext& ctx, const FcnForwardOptions& options = {},
                   FcnTrace* trace = nullptr) const;

    const FcnConfig& config() const { return config_; }
    std::size_t representation_channels() const { return config_.initial_filters; }
    const Conv2d& initial_conv() const { return initial_; }
    const std::vector<Block>& down_blocks() const { return down_; }
    const std::vector<Block>& up_blocks() const { return up_; }

    void collect(const std::string& prefix, std::vector<NamedTensor>& params) const;
    void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& buffers) const;

private:
    FcnConfig config_;
    Conv2d initial_;
    std::vector<Block> down_;
    std::vector<Block> up_;
};

/// User-facing architecture description (the JSON config file).
struct ArchConfig {
    std::size_t depth = 4;
    std::size_t initial_filters = 32;
    std::vector<std::size_t> filters{32, 64, 128, 256};  // per contracting level
    std::vector<BlockKind> block_kinds{BlockKind::A, BlockKind::B, BlockKind::B, BlockKind::B};
    double dropout_p = 0.1;
    bool context_enabled = false;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    std::uint64_t seed = 0;

    void validate() const;
    /// FCN config for the given number of input channels.
    FcnConfig fcn_config(std::size_t input_channels) const;
    /// Extents must be divisible by this.
    std::size_t required_multiple() const { return std::size_t{1} << depth; }

    std::string to_json() const;
    static ArchConfig from_json(const std::string& text);

    bool operator==(const ArchConfig&) const = default;
};

/// Pre-classifier representations of one slice.
struct SliceRepresentation {
    Tensor fcn1;  // [N, C1, H, W]
    Tensor fcn2;  // [N, C2, H, W]
};

struct TandemOutput {
    Tensor liver_prob;   // [N,1,H,W]
    Tensor lesion_prob;  // [N,1,H,W]
    SliceRepresentation repr;
};

/// Cross-slice combiner: per target, a 3x3 convolution over the stacked
/// representations of slices z-1, z, z+1 followed by a new 1x1 classifier.
class ContextCombiner {
public:
    ContextCombiner(std::size_t fcn1_channels, std::size_t fcn2_channels, Rng& init);

    Conv2d liver_mix;
    Conv2d liver_classifier;
    Conv2d lesion_mix;
    Conv2d lesion_classifier;

    void collect(const std::string& prefix, std::vector<NamedTensor>& params) const;
};

/// Two FCNs in tandem. FCN 1 sees the slice; FCN 2 sees the slice
/// concatenated with FCN 1's representation. Each representation feeds a
/// 1x1 convolution + sigmoid classifier.
class TandemModel {
public:
    explicit TandemModel(ArchConfig config);

    TandemOutput forward(const Tensor& slice, const ForwardContext& ctx) const;

    /// Middle-slice probabilities from three neighbouring representations.
    /// Requires the combiner.
    std::pair<Tensor, Tensor> context_forward(const std::array<SliceRepresentation, 3>& reprs) const;

    const ArchConfig& config() const { return config_; }
    const Fcn& fcn1() const { return fcn1_; }
    const Fcn& fcn2() const { return fcn2_; }
    const Conv2d& liver_classifier() const { return liver_classifier_; }
    const Conv2d& lesion_classifier() const { return lesion_classifier_; }

    bool has_combiner() const { return combiner_ != nullptr; }
    ContextCombiner& combiner();
    const ContextCombiner& combiner() const;
    /// Creates the combiner initialised to reproduce the per-slice classifiers:
    /// the mix convolutions pass the middle slice through unchanged and the new
    /// classifiers start as copies of the base classifiers.
    void enable_combiner();

    /// FCN 1, FCN 2 and both classifiers.
    std::vector<NamedTensor> base_parameters() const;
    std::vector<NamedTensor> combiner_parameters() const;
    std::vector<NamedTensor> buffers() const;

private:
    ArchConfig config_;
    Rng init_;
    Fcn fcn1_;
    Conv2d liver_classifier_;
    Fcn fcn2_;
    Conv2d lesion_classifier_;
    std::unique_ptr<ContextCombiner> combiner_;
};

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named);

/// Neighbour indices (z-1, z, z+1) with edge replication at the volume ends.
std::array<std::size_t, 3> context_neighbours(std::size_t z, std::size_t depth);

}  // namespace tandem
