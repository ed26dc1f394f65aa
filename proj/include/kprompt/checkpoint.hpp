#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "kprompt/encoder.hpp"
#include "kprompt/optimizer.hpp"

namespace kprompt {

// Versioned binary container: magic "KPCK", model config, training progress,
// named parameter tensors as little-endian float32, optional optimizer moments.
// Parameters live f32-quantized in memory, so save/load round-trips bitwise.
struct TrainProgress {
    std::uint32_t epochs_done = 0;
    std::uint64_t global_step = 0;
    std::uint64_t seed = 0;
};

struct Checkpoint {
    ModelParams params;
    TrainProgress progress;
    bool has_optimizer = false;
    int optim_step = 0;
    std::map<std::string, Matrix> first_moment;
    std::map<std::string, Matrix> second_moment;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const TrainProgress& progress, const AdamW* optimizer = nullptr);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace kprompt
