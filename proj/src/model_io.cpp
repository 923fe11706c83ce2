#include "tandem/model_io.hpp"

#include <json.hpp>
#include <map>

#include "tandem/error.hpp"

namespace tandem {

using nlohmann::json;

namespace {

constexpr const char* kMetaName = "__meta__";

std::vector<NamedTensor> tensors_for(const TandemModel& model, CheckpointKind kind) {
    if (kind == CheckpointKind::Context) return model.combiner_parameters();
    auto all = model.base_parameters();
    for (auto& b : model.buffers()) all.push_back(b);
    return all;
}

}  // namespace

Checkpoint snapshot(const TandemModel& model, const CheckpointMeta& meta) {
    Checkpoint c;
    c.arch = model.config();
    c.meta = meta;
    for (const auto& nt : tensors_for(model, meta.kind)) c.arrays.push_back(to_named_array(nt.name, nt.tensor));
    return c;
}

void load_into(TandemModel& model, const Checkpoint& ckpt) {
    if (ckpt.meta.kind == CheckpointKind::Context && !model.has_combiner()) model.enable_combiner();
    auto targets = tensors_for(model, ckpt.meta.kind);
    std::map<std::string, const NamedArray*> by_name;
    for (const auto& a : ckpt.arrays) by_name[a.name] = &a;
    if (by_name.size() != targets.size())
        throw Error("checkpoint/architecture mismatch: checkpoint has " + std::to_string(by_name.size()) +
                    " entries, model expects " + std::to_string(targets.size()));
    for (auto& t : targets) {
        auto it = by_name.find(t.name);
        if (it == by_name.end()) throw Error("checkpoint/architecture mismatch: missing entry '" + t.name + "'");
        if (it->second->shape != t.tensor.shape())
            throw Error("checkpoint/architecture mismatch: entry '" + t.name + "' has shape " +
                        shape_string(it->second->shape) + ", model expects " + shape_string(t.tensor.shape()));
    }
    for (auto& t : targets) {
        const auto& values = by_name[t.name]->values;
        auto dst = t.tensor.mutable_data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = values[i];
    }
}

TandemModel model_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.meta.kind != CheckpointKind::Tandem) throw UsageError("expected a tandem checkpoint");
    ArchConfig arch = ckpt.arch;
    arch.context_enabled = false;
    TandemModel model(arch);
    load_into(model, ckpt);
    return model;
}

std::vector<NamedArray> checkpoint_entries(const Checkpoint& ckpt) {
    json meta;
    meta["architecture"] = ckpt.arch.to_json();
    meta["kind"] = ckpt.meta.kind == CheckpointKind::Tandem ? "tandem" : "context";
    meta["stage"] = ckpt.meta.stage;
    meta["epoch"] = ckpt.meta.epoch;
    meta["step"] = ckpt.meta.step;
    meta["val_loss"] = ckpt.meta.val_loss ? json(*ckpt.meta.val_loss) : json(nullptr);
    auto entries = ckpt.arrays;
    entries.push_back(text_entry(kMetaName, meta.dump()));
    return entries;
}

Checkpoint checkpoint_from_entries(const std::vector<NamedArray>& entries) {
    Checkpoint c;
    bool found = false;
    for (const auto& e : entries) {
        if (e.name != kMetaName) {
            c.arrays.push_back(e);
            continue;
        }
        found = true;
        json meta;
        try {
            meta = json::parse(entry_text(e));
            c.arch = ArchConfig::from_json(meta.at("architecture").get<std::string>());
            c.meta.kind = meta.at("kind").get<std::string>() == "context" ? CheckpointKind::Context : CheckpointKind::Tandem;
            c.meta.stage = meta.value("stage", 0);
            c.meta.epoch = meta.value("epoch", std::size_t{0});
            c.meta.step = meta.value("step", std::size_t{0});
            if (meta.contains("val_loss") && !meta["val_loss"].is_null()) c.meta.val_loss = meta["val_loss"].get<double>();
        } catch (const json::exception& ex) {
            throw ParseError(std::string("invalid checkpoint metadata: ") + ex.what(), 0);
        }
    }
    if (!found) throw ParseError("checkpoint lacks the __meta__ entry", 0);
    return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) { write_ckpt(path, checkpoint_entries(ckpt)); }

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_entries(read_ckpt(path)); }

}  // namespace tandem
