#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tandem/architecture.hpp"
#include "tandem/checkpoint.hpp"

namespace tandem {

enum class CheckpointKind { Tandem, Context };

struct CheckpointMeta {
    CheckpointKind kind = CheckpointKind::Tandem;
    int stage = 0;  // 0 = initial parameters
    std::size_t epoch = 0;
    std::size_t step = 0;
    std::optional<double> val_loss;
};

/// Parameters and buffers of a model (or of its combiner only) with the
/// architecture config and training metadata. Stored as CKPT1 with an extra
/// "__meta__" text entry holding JSON.
struct Checkpoint {
    std::vector<NamedArray> arrays;
    ArchConfig arch;
    CheckpointMeta meta;
};

Checkpoint snapshot(const TandemModel& model, const CheckpointMeta& meta);
/// Copies values into the model. Throws Error naming the first missing,
/// unexpected or mis-shaped entry.
void load_into(TandemModel& model, const Checkpoint& ckpt);
/// Builds a model from a tandem checkpoint.
TandemModel model_from_checkpoint(const Checkpoint& ckpt);

std::vector<NamedArray> checkpoint_entries(const Checkpoint& ckpt);
Checkpoint checkpoint_from_entries(const std::vector<NamedArray>& entries);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tandem
