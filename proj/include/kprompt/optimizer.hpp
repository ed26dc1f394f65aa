#pragma once

#include <map>
#include <string>

#include "kprompt/encoder.hpp"

namespace kprompt {

struct OptimConfig {
    double lr = 1e-5;  // peak learning rate
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 1.0;  // global-norm clip; <= 0 disables
    int warmup_steps = 0;
    int total_steps = 0;  // 0 -> constant lr after warm-up

    void validate() const;
};

// Piecewise-linear schedule: 0 -> peak over warmup_steps, peak -> 0 at
// total_steps. `step` is 1-based.
double lr_at(const OptimConfig& cfg, int step);

// Decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
// After every step parameters and moments are rounded through float32 so
// checkpoints round-trip bitwise.
class AdamW {
public:
    AdamW(const OptimConfig& cfg, const ModelParams& params);

    void step(ModelParams& params, Gradients& grads);

    int steps_taken() const { return step_; }
    double last_lr() const { return last_lr_; }
    const OptimConfig& config() const { return cfg_; }
    const std::map<std::string, Matrix>& first_moment() const { return m_; }
    const std::map<std::string, Matrix>& second_moment() const { return v_; }

    // Checkpoint resume; shapes must match the params this was built from.
    void restore(int step, std::map<std::string, Matrix> m, std::map<std::string, Matrix> v);

private:
    OptimConfig cfg_;
    std::map<std::string, Matrix> m_, v_;
    int step_ = 0;
    double last_lr_ = 0.0;
};

}  // namespace kprompt
