#include "tandem/architecture.hpp"

#include <json.hpp>

#include "tandem/error.hpp"

namespace tandem {

using nlohmann::json;

// The representations are sums of residual branches and long skips, so their
// scale grows with depth (fcn2 sees fcn1's features too). He-normal heads
// would start with logits far past sigmoid saturation; a small head keeps
// every output near 0.5 at initialisation, and RMSprop's per-parameter
// normalisation makes the small gradient scale harmless.
constexpr double kClassifierInitStd = 1e-3;

const char* to_string(BlockKind k) { return k == BlockKind::A ? "A" : "B"; }

const char* to_string(Resample r) {
    switch (r) {
        case Resample::Down: return "down";
        case Resample::Up: return "up";
        default: return "none";
    }
}

// ---------------------------------------------------------------- Block

Block::Block(BlockSpec spec, std::size_t in_channels, double dropout_p, double bn_momentum, double bn_eps,
             Rng& init)
    : spec_(spec), in_channels_(in_channels), dropout_p_(dropout_p), bn1_(in_channels, bn_momentum, bn_eps) {
    if (spec.filters == 0) throw ConfigError("block filters must be positive");
    const bool strided = spec.kind == BlockKind::B && spec.resample == Resample::Down;
    conv1_ = Conv2d(in_channels, spec.filters, 3, strided ? 2 : 1, true, init);
    if (spec.kind == BlockKind::B) {
        bn2_.emplace(spec.filters, bn_momentum, bn_eps);
        conv2_.emplace(spec.filters, spec.filters, 3, 1, true, init);
    }
    if (in_channels != spec.filters) projection_.emplace(in_channels, spec.filters, 1, 1, false, init);
}

Tensor Block::forward(const Tensor& x, const ForwardContext& ctx) const {
    if (spec_.resample == Resample::Down && (x.dim(2) % 2 || x.dim(3) % 2))
        throw DimensionError("down block received odd spatial extent " + std::to_string(x.dim(2)) + "x" +
                             std::to_string(x.dim(3)));

    Tensor h = ops::relu(bn1_.forward(x, ctx.mode));
    if (spec_.kind == BlockKind::A && spec_.resample == Resample::Down) h = ops::maxpool2x2(h);
    h = ops::dropout(conv1_.forward(h), dropout_p_, ctx.rng, ctx.mode);
    if (conv2_) {
        h = ops::relu(bn2_->forward(h, ctx.mode));
        h = ops::dropout(conv2_->forward(h), dropout_p_, ctx.rng, ctx.mode);
    }
    if (spec_.resample == Resample::Up) h = ops::upsample_nearest2x(h);

    Tensor skip = x;
    switch (spec_.resample) {
        case Resample::Down:
            skip = spec_.kind == BlockKind::A ? ops::maxpool2x2(skip) : ops::subsample2x(skip);
            if (projection_) skip = projection_->forward(skip);
            break;
        case Resample::Up:
            if (projection_) skip = projection_->forward(skip);
            skip = ops::upsample_nearest2x(skip);
            break;
        case Resample::None:
            if (projection_) skip = projection_->forward(skip);
            break;
    }
    return ops::add(h, skip);
}

void Block::collect(const std::string& prefix, std::vector<NamedTensor>& params) const {
    bn1_.collect(prefix + ".bn1", params);
    conv1_.collect(prefix + ".conv1", params);
    if (bn2_) bn2_->collect(prefix + ".bn2", params);
    if (conv2_) conv2_->collect(prefix + ".conv2", params);
    if (projection_) projection_->collect(prefix + ".proj", params);
}

void Block::collect_buffers(const std::string& prefix, std::vector<NamedTensor>& buffers) const {
    bn1_.collect_buffers(prefix + ".bn1", buffers);
    if (bn2_) bn2_->collect_buffers(prefix + ".bn2", buffers);
}

std::vector<Tensor> Block::main_path_convolution_tensors() const {
    std::vector<Tensor> out{conv1_.weight, conv1_.bias};
    if (conv2_) {
        out.push_back(conv2_->weight);
        out.push_back(conv2_->bias);
    }
    return out;
}

std::size_t block_parameter_count(const BlockSpec& spec, std::size_t in_channels) {
    const std::size_t f = spec.filters;
    std::size_t count = 2 * in_channels + (in_channels * f * 9 + f);
    if (spec.kind == BlockKind::B) count += 2 * f + (f * f * 9 + f);
    if (in_channels != f) count += in_channels * f;
    return count;
}

// ---------------------------------------------------------------- FCN

void FcnConfig::validate() const {
    if (input_channels == 0 || initial_filters == 0) throw ConfigError("FCN channel counts must be positive");
    if (!(dropout_p >= 0 && dropout_p < 1)) throw ConfigError("dropout_p must lie in [0, 1)");
    if (down_blocks.empty()) throw ConfigError("FCN needs at least one contracting block");
    if (up_blocks.size() != down_blocks.size())
        throw ConfigError("expanding path has " + std::to_string(up_blocks.size()) +
                          " blocks but contracting path has " + std::to_string(down_blocks.size()));
    const std::size_t depth = down_blocks.size();
    for (std::size_t i = 0; i < depth; ++i) {
        if (down_blocks[i].resample != Resample::Down)
            throw ConfigError("contracting block " + std::to_string(i) + " must downsample");
        if (up_blocks[i].resample != Resample::Up)
            throw ConfigError("expanding block " + std::to_string(i) + " must upsample");
    }
    for (std::size_t j = 0; j < depth; ++j) {
        const std::size_t target = j + 1 < depth ? down_blocks[depth - 2 - j].filters : initial_filters;
        if (up_blocks[j].filters != target)
            throw ConfigError("expanding block " + std::to_string(j) + " has " + std::to_string(up_blocks[j].filters) +
                              " filters but must restore " + std::to_string(target) +
                              " channels of its contracting level");
        if (up_blocks[j].kind != down_blocks[depth - 1 - j].kind)
            throw ConfigError("expanding block " + std::to_string(j) + " kind does not mirror the contracting path");
    }
}

Fcn::Fcn(FcnConfig config, Rng& init) : config_(std::move(config)) {
    config_.validate();
    initial_ = Conv2d(config_.input_channels, config_.initial_filters, 3, 1, true, init);
    std::size_t channels = config_.initial_filters;
    for (const auto& spec : config_.down_blocks) {
        down_.emplace_back(spec, channels, config_.dropout_p, config_.bn_momentum, config_.bn_eps, init);
        channels = spec.filters;
    }
    for (const auto& spec : config_.up_blocks) {
        up_.emplace_back(spec, channels, config_.dropout_p, config_.bn_momentum, config_.bn_eps, init);
        channels = spec.filters;
    }
}

Tensor Fcn::forward(const Tensor& x, const ForwardContext& ctx, const FcnForwardOptions& options,
                    FcnTrace* trace) const {
    if (x.rank() != 4 || x.dim(1) != config_.input_channels)
        throw DimensionError("FCN expects [N," + std::to_string(config_.input_channels) + ",H,W] input, got " +
                             shape_string(x.shape()));
    std::size_t h = x.dim(2), w = x.dim(3);
    for (std::size_t level = 0; level < down_.size(); ++level) {
        if (h % 2 || w % 2)
            throw DimensionError("spatial extent " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                                 " is not divisible at contracting level " + std::to_string(level) + " (extent " +
                                 std::to_string(h) + "x" + std::to_string(w) + " is odd)");
        h /= 2;
        w /= 2;
    }

    std::vector<Tensor> contracting;
    Tensor cur = initial_.forward(x);
    contracting.push_back(cur);
    for (const auto& block : down_) {
        cur = block.forward(cur, ctx);
        contracting.push_back(cur);
    }
    std::size_t additions = 0;
    const std::size_t depth = down_.size();
    for (std::size_t j = 0; j < depth; ++j) {
        cur = up_[j].forward(cur, ctx);
        if (options.long_skips) {
            cur = ops::add(cur, contracting[depth - 1 - j]);
            ++additions;
        }
    }
    if (trace) {
        trace->contracting = std::move(contracting);
        trace->long_skip_additions = additions;
    }
    return cur;
}

void Fcn::collect(const std::string& prefix, std::vector<NamedTensor>& params) const {
    initial_.collect(prefix + ".initial", params);
    for (std::size_t i = 0; i < down_.size(); ++i) down_[i].collect(prefix + ".down" + std::to_string(i), params);
    for (std::size_t i = 0; i < up_.size(); ++i) up_[i].collect(prefix + ".up" + std::to_string(i), params);
}

void Fcn::collect_buffers(const std::string& prefix, std::vector<NamedTensor>& buffers) const {
    for (std::size_t i = 0; i < down_.size(); ++i)
        down_[i].collect_buffers(prefix + ".down" + std::to_string(i), buffers);
    for (std::size_t i = 0; i < up_.size(); ++i) up_[i].collect_buffers(prefix + ".up" + std::to_string(i), buffers);
}

// ---------------------------------------------------------------- ArchConfig

void ArchConfig::validate() const {
    if (depth == 0) throw ConfigError("architecture depth must be at least 1");
    if (filters.size() != depth)
        throw ConfigError("architecture lists " + std::to_string(filters.size()) + " filter counts for depth " +
                          std::to_string(depth));
    if (block_kinds.size() != depth)
        throw ConfigError("architecture lists " + std::to_string(block_kinds.size()) + " block kinds for depth " +
                          std::to_string(depth));
    if (initial_filters == 0) throw ConfigError("initial_filters must be positive");
    for (auto f : filters)
        if (f == 0) throw ConfigError("filter counts must be positive");
    if (!(dropout_p >= 0 && dropout_p < 1)) throw ConfigError("dropout_p must lie in [0, 1)");
    if (!(bn_eps > 0)) throw ConfigError("bn_eps must be positive");
}

FcnConfig ArchConfig::fcn_config(std::size_t input_channels) const {
    validate();
    FcnConfig c;
    c.input_channels = input_channels;
    c.initial_filters = initial_filters;
    c.dropout_p = dropout_p;
    c.bn_momentum = bn_momentum;
    c.bn_eps = bn_eps;
    for (std::size_t i = 0; i < depth; ++i) c.down_blocks.push_back({block_kinds[i], filters[i], Resample::Down});
    for (std::size_t j = 0; j < depth; ++j) {
        const std::size_t target = j + 1 < depth ? filters[depth - 2 - j] : initial_filters;
        c.up_blocks.push_back({block_kinds[depth - 1 - j], target, Resample::Up});
    }
    return c;
}

std::string ArchConfig::to_json() const {
    json j;
    j["depth"] = depth;
    j["initial_filters"] = initial_filters;
    j["filters"] = filters;
    std::vector<std::string> kinds;
    for (auto k : block_kinds) kinds.emplace_back(to_string(k));
    j["block_kinds"] = kinds;
    j["dropout_p"] = dropout_p;
    j["context_enabled"] = context_enabled;
    j["bn_momentum"] = bn_momentum;
    j["bn_eps"] = bn_eps;
    j["seed"] = seed;
    return j.dump();
}

ArchConfig ArchConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("architecture config is not valid JSON: ") + e.what());
    }
    ArchConfig c;
    try {
        c.depth = j.value("depth", c.depth);
        c.initial_filters = j.value("initial_filters", c.initial_filters);
        if (j.contains("filters")) {
            c.filters = j["filters"].get<std::vector<std::size_t>>();
        } else if (c.depth != 4) {
            c.filters.clear();
            for (std::size_t i = 0; i < c.depth; ++i) c.filters.push_back(c.initial_filters << i);
        }
        if (j.contains("block_kinds")) {
            c.block_kinds.clear();
            for (const auto& k : j["block_kinds"]) {
                const auto s = k.get<std::string>();
                if (s == "A") c.block_kinds.push_back(BlockKind::A);
                else if (s == "B") c.block_kinds.push_back(BlockKind::B);
                else throw ConfigError("unknown block kind '" + s + "'");
            }
        } else {
            c.block_kinds.assign(c.depth, BlockKind::B);
            c.block_kinds[0] = BlockKind::A;
        }
        c.dropout_p = j.value("dropout_p", c.dropout_p);
        c.context_enabled = j.value("context_enabled", c.context_enabled);
        c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
        c.bn_eps = j.value("bn_eps", c.bn_eps);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("architecture config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------- Tandem

ContextCombiner::ContextCombiner(std::size_t c1, std::size_t c2, Rng& init)
    : liver_mix(3 * c1, c1, 3, 1, true, init),
      liver_classifier(c1, 1, 1, 1, true, init),
      lesion_mix(3 * c2, c2, 3, 1, true, init),
      lesion_classifier(c2, 1, 1, 1, true, init) {}

void ContextCombiner::collect(const std::string& prefix, std::vector<NamedTensor>& params) const {
    liver_mix.collect(prefix + ".liver_mix", params);
    liver_classifier.collect(prefix + ".liver_classifier", params);
    lesion_mix.collect(prefix + ".lesion_mix", params);
    lesion_classifier.collect(prefix + ".lesion_classifier", params);
}

TandemModel::TandemModel(ArchConfig config)
    : config_(std::move(config)),
      init_(config_.seed),
      fcn1_(config_.fcn_config(1), init_),
      liver_classifier_(config_.initial_filters, 1, 1, 1, true, init_, kClassifierInitStd),
      fcn2_(config_.fcn_config(config_.initial_filters + 1), init_),
      lesion_classifier_(config_.initial_filters, 1, 1, 1, true, init_, kClassifierInitStd) {
    if (config_.context_enabled) enable_combiner();
}

TandemOutput TandemModel::forward(const Tensor& slice, const ForwardContext& ctx) const {
    if (slice.rank() != 4 || slice.dim(1) != 1)
        throw DimensionError("tandem model expects [N,1,H,W] slices, got " + shape_string(slice.shape()));
    TandemOutput out;
    out.repr.fcn1 = fcn1_.forward(slice, ctx);
    out.liver_prob = ops::sigmoid(liver_classifier_.forward(out.repr.fcn1));
    out.repr.fcn2 = fcn2_.forward(ops::concat_channels({slice, out.repr.fcn1}), ctx);
    out.lesion_prob = ops::sigmoid(lesion_classifier_.forward(out.repr.fcn2));
    return out;
}

std::pair<Tensor, Tensor> TandemModel::context_forward(const std::array<SliceRepresentation, 3>& reprs) const {
    const auto& cb = combiner();
    for (const auto& r : reprs)
        if (r.fcn1.shape() != reprs[1].fcn1.shape() || r.fcn2.shape() != reprs[1].fcn2.shape())
            throw DimensionError("context_forward: neighbouring representations differ in shape (" +
                                 shape_string(r.fcn1.shape()) + " vs " + shape_string(reprs[1].fcn1.shape()) + ")");
    Tensor liver = cb.liver_mix.forward(ops::concat_channels({reprs[0].fcn1, reprs[1].fcn1, reprs[2].fcn1}));
    Tensor lesion = cb.lesion_mix.forward(ops::concat_channels({reprs[0].fcn2, reprs[1].fcn2, reprs[2].fcn2}));
    return {ops::sigmoid(cb.liver_classifier.forward(liver)), ops::sigmoid(cb.lesion_classifier.forward(lesion))};
}

ContextCombiner& TandemModel::combiner() {
    if (!combiner_) throw UsageError("model has no cross-slice combiner");
    return *combiner_;
}

const ContextCombiner& TandemModel::combiner() const {
    if (!combiner_) throw UsageError("model has no cross-slice combiner");
    return *combiner_;
}

namespace {

void make_pass_through(Conv2d& mix, const Conv2d& base_classifier, Conv2d& classifier) {
    const std::size_t c = mix.out_channels();
    auto w = mix.weight.mutable_data();
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) w[((ch * 3 * c) + c + ch) * 9 + 4] = 1.0;  // middle slice, centre tap
    auto b = mix.bias.mutable_data();
    std::fill(b.begin(), b.end(), 0.0);
    std::copy(base_classifier.weight.data().begin(), base_classifier.weight.data().end(),
              classifier.weight.mutable_data().begin());
    std::copy(base_classifier.bias.data().begin(), base_classifier.bias.data().end(),
              classifier.bias.mutable_data().begin());
}

}  // namespace

void TandemModel::enable_combiner() {
    Rng init(mix_seed(config_.seed) ^ 0xC0u);
    combiner_ = std::make_unique<ContextCombiner>(fcn1_.representation_channels(), fcn2_.representation_channels(), init);
    make_pass_through(combiner_->liver_mix, liver_classifier_, combiner_->liver_classifier);
    make_pass_through(combiner_->lesion_mix, lesion_classifier_, combiner_->lesion_classifier);
}

std::vector<NamedTensor> TandemModel::base_parameters() const {
    std::vector<NamedTensor> p;
    fcn1_.collect("fcn1", p);
    liver_classifier_.collect("liver_classifier", p);
    fcn2_.collect("fcn2", p);
    lesion_classifier_.collect("lesion_classifier", p);
    return p;
}

std::vector<NamedTensor> TandemModel::combiner_parameters() const {
    std::vector<NamedTensor> p;
    if (combiner_) combiner_->collect("context", p);
    return p;
}

std::vector<NamedTensor> TandemModel::buffers() const {
    std::vector<NamedTensor> b;
    fcn1_.collect_buffers("fcn1", b);
    fcn2_.collect_buffers("fcn2", b);
    return b;
}

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named) {
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (const auto& n : named) out.push_back(n.tensor);
    return out;
}

std::array<std::size_t, 3> context_neighbours(std::size_t z, std::size_t depth) {
    if (depth == 0 || z >= depth) throw DimensionError("slice index out of range");
    return {z == 0 ? 0 : z - 1, z, z + 1 < depth ? z + 1 : depth - 1};
}

}  // namespace tandem
