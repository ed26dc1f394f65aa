#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kprompt/checkpoint.hpp"
#include "kprompt/encoder.hpp"
#include "kprompt/objectives.hpp"
#include "kprompt/optimizer.hpp"
#include "kprompt/pipeline.hpp"

namespace kprompt {

struct TrainerConfig {
    ModelConfig model;        // vocab_size / max_position are filled by train()
    PipelineConfig pipeline;
    OptimConfig optim;        // warmup_steps / total_steps are filled by train()
    double warmup_frac = 0.1;
    double lambda = 0.5;
    double mu = 0.5;
    int batch_size = 8;
    int epochs = 6;
    int stop_after_epochs = 0;  // >0: halt early, keeping the full-run schedule
    std::uint64_t seed = 17;
    double holdout_frac = 0.1;
    std::string out_dir = ".";

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double mlm = 0.0, pri = 0.0, mpm = 0.0, total = 0.0;
    double holdout_mpm_acc = 0.0;
    int holdout_mpm_n = 0;
};

struct TrainResult {
    std::vector<EpochStats> epochs;
    std::string final_checkpoint;
    std::string metrics_path;  // per-step csv: step,mlm,pri,mpm,total,lr
    std::string epochs_path;   // per-epoch csv
    double mpm_chance = 0.0;   // 1 / (1 + N)
};

TrainResult train(const TrainerConfig& cfg, const DataBundle& data,
                  const std::string& resume_path = "");

// Held-out MPM top-1 accuracy on deterministically rebuilt masked prompts.
std::pair<double, int> evaluate_mpm(const ModelParams& params, const DataBundle& data,
                                    const std::vector<std::size_t>& indices,
                                    const PipelineConfig& pcfg, std::uint64_t seed);

}  // namespace kprompt
