#include "kprompt/optimizer.hpp"

#include <cmath>

#include "kprompt/errors.hpp"

namespace kprompt {

void OptimConfig::validate() const {
    if (lr < 0.0) throw ConfigError("optimizer: lr must be non-negative");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ConfigError("optimizer: betas must lie in [0,1)");
    if (eps <= 0.0) throw ConfigError("optimizer: eps must be positive");
    if (weight_decay < 0.0) throw ConfigError("optimizer: weight decay must be non-negative");
    if (warmup_steps < 0 || total_steps < 0) throw ConfigError("optimizer: step counts must be non-negative");
    if (total_steps > 0 && warmup_steps > total_steps)
        throw ConfigError("optimizer: warmup exceeds total steps");
}

double lr_at(const OptimConfig& cfg, int step) {
    if (step < 1) throw ConfigError("lr_at: step is 1-based");
    if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps)
        return cfg.lr * static_cast<double>(step) / cfg.warmup_steps;
    if (cfg.total_steps > cfg.warmup_steps) {
        double frac = static_cast<double>(cfg.total_steps - step) /
                      (cfg.total_steps - cfg.warmup_steps);
        return cfg.lr * std::max(0.0, frac);
    }
    return cfg.lr;
}

AdamW::AdamW(const OptimConfig& cfg, const ModelParams& params) : cfg_(cfg) {
    cfg_.validate();
    for (const auto& [name, t] : params.tensors()) {
        m_[name] = Matrix(t.rows, t.cols);
        v_[name] = Matrix(t.rows, t.cols);
    }
}

void AdamW::step(ModelParams& params, Gradients& grads) {
    ++step_;
    double lr = lr_at(cfg_, step_);
    last_lr_ = lr;

    if (cfg_.clip_norm > 0.0) {
        double norm = grads.global_norm();
        if (!std::isfinite(norm)) throw NumericalError("optimizer: non-finite gradient norm");
        if (norm > cfg_.clip_norm) grads.scale(cfg_.clip_norm / norm);
    }

    double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, step_);

    for (auto& [name, mom1] : m_) {
        Matrix& mom2 = v_.at(name);
        Matrix& p = params.at(name);
        const Matrix* g = grads.find(name);
        for (std::size_t i = 0; i < p.a.size(); ++i) {
            double gi = g ? g->a[i] : 0.0;
            double m = cfg_.beta1 * mom1.a[i] + (1.0 - cfg_.beta1) * gi;
            double v = cfg_.beta2 * mom2.a[i] + (1.0 - cfg_.beta2) * gi * gi;
            mom1.a[i] = m;
            mom2.a[i] = v;
            double update = (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
            p.a[i] -= lr * (update + cfg_.weight_decay * p.a[i]);
        }
    }

    params.quantize_f32();
    for (auto& [name, t] : m_)
        for (double& x : t.a) x = static_cast<double>(static_cast<float>(x));
    for (auto& [name, t] : v_)
        for (double& x : t.a) x = static_cast<double>(static_cast<float>(x));
    params.bump_version();
}

void AdamW::restore(int step, std::map<std::string, Matrix> m, std::map<std::string, Matrix> v) {
    if (step < 0) throw DataError("optimizer restore: negative step");
    for (auto& [name, t] : m_) {
        auto it = m.find(name);
        if (it == m.end() || !it->second.same_shape(t))
            throw DataError("optimizer restore: first-moment tensor mismatch: " + name);
        t = std::move(it->second);
    }
    for (auto& [name, t] : v_) {
        auto it = v.find(name);
        if (it == v.end() || !it->second.same_shape(t))
            throw DataError("optimizer restore: second-moment tensor mismatch: " + name);
        t = std::move(it->second);
    }
    step_ = step;
}

}  // namespace kprompt
