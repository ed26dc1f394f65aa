#include "kprompt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "kprompt/errors.hpp"

namespace kprompt {

namespace {

constexpr std::uint64_t kInitTag = 0x696e6974;   // parameter init stream
constexpr std::uint64_t kEpochTag = 0x65706f63;  // epoch shuffle stream
constexpr std::uint64_t kEvalTag = 0x6576616c;   // held-out eval stream

std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(12) << x;
    return os.str();
}

}  // namespace

void TrainerConfig::validate() const {
    pipeline.validate();
    if (lambda < 0.0 || lambda > 1.0 || mu < 0.0 || mu > 1.0)
        throw ConfigError("trainer: lambda and mu must lie in [0,1]");
    if (batch_size < 1) throw ConfigError("trainer: batch size must be positive");
    if (epochs < 1) throw ConfigError("trainer: epochs must be positive");
    if (stop_after_epochs < 0 || stop_after_epochs > epochs)
        throw ConfigError("trainer: stop_after_epochs must lie in 0..epochs");
    if (warmup_frac < 0.0 || warmup_frac > 1.0)
        throw ConfigError("trainer: warmup fraction must lie in [0,1]");
    if (holdout_frac < 0.0 || holdout_frac >= 1.0)
        throw ConfigError("trainer: holdout fraction must lie in [0,1)");
    if (out_dir.empty()) throw ConfigError("trainer: out_dir must be set");
}

std::pair<double, int> evaluate_mpm(const ModelParams& params, const DataBundle& data,
                                    const std::vector<std::size_t>& indices,
                                    const PipelineConfig& pcfg, std::uint64_t seed) {
    PipelineConfig eval_cfg = pcfg;
    eval_cfg.enable_pri = false;  // no PRI supervision needed; labels only drive corruption
    eval_cfg.enable_mpm = true;
    eval_cfg.mlm_rate = 0.0;

    // Mirror the training input distribution: every other prompt-bearing
    // example carries one corrupted distractor prompt, so the metric rewards
    // filling the masked entity in the presence of the same noise the model
    // was trained under.
    int hits = 0, n = 0, flip = 0;
    for (std::size_t idx : indices) {
        const PreparedSentence& ps = data.prepared[idx];
        if (ps.prompts.empty()) continue;
        int label = (flip++ % 2 == 0) ? 1 : 0;
        Rng rng(mix_seed(seed, kEvalTag, static_cast<std::uint64_t>(idx)));
        ExampleSupervision ex = build_example(ps, data.kg, data.vocab, eval_cfg, label, rng);
        if (!ex.mpm) continue;
        auto [hidden, tape] = forward(params, ex.seq);
        MpmResult res = mpm_forward(hidden, *ex.mpm, params, data.verb, data.vocab);
        bool top1 = true;
        for (std::size_t i = 1; i < res.scores.size(); ++i)
            if (res.scores[i] >= res.scores[0]) top1 = false;
        hits += top1 ? 1 : 0;
        ++n;
    }
    return {n > 0 ? static_cast<double>(hits) / n : 0.0, n};
}

TrainResult train(const TrainerConfig& cfg, const DataBundle& data,
                  const std::string& resume_path) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);

    ModelConfig model_cfg = cfg.model;
    model_cfg.vocab_size = static_cast<int>(data.vocab.size());
    model_cfg.max_position = cfg.pipeline.max_seq_len;
    model_cfg.validate();

    std::size_t n_total = data.prepared.size();
    auto holdout_n = static_cast<std::size_t>(std::floor(cfg.holdout_frac * n_total));
    std::size_t train_n = n_total - holdout_n;
    if (train_n == 0) throw DataError("trainer: no training sentences after holdout split");

    std::vector<std::size_t> train_idx(train_n), holdout_idx(holdout_n);
    for (std::size_t i = 0; i < train_n; ++i) train_idx[i] = i;
    for (std::size_t i = 0; i < holdout_n; ++i) holdout_idx[i] = train_n + i;

    int steps_per_epoch = static_cast<int>((train_n + cfg.batch_size - 1) / cfg.batch_size);
    OptimConfig optim_cfg = cfg.optim;
    optim_cfg.total_steps = steps_per_epoch * cfg.epochs;
    optim_cfg.warmup_steps =
        static_cast<int>(std::llround(cfg.warmup_frac * optim_cfg.total_steps));
    optim_cfg.validate();

    ModelParams params;
    std::optional<AdamW> optimizer;
    int start_epoch = 0;
    std::uint64_t global_step = 0;

    if (resume_path.empty()) {
        Rng init_rng(mix_seed(cfg.seed, kInitTag));
        params = ModelParams::init(model_cfg, init_rng);
        optimizer.emplace(optim_cfg, params);
    } else {
        Checkpoint ck = load_checkpoint(resume_path);
        if (ck.progress.seed != cfg.seed)
            throw ConfigError("resume: checkpoint seed does not match the configured seed");
        if (!(ck.params.config().hidden == model_cfg.hidden &&
              ck.params.config().layers == model_cfg.layers &&
              ck.params.config().heads == model_cfg.heads &&
              ck.params.config().ffn_mult == model_cfg.ffn_mult &&
              ck.params.config().vocab_size == model_cfg.vocab_size))
            throw ConfigError("resume: checkpoint model shape does not match the configuration");
        if (!ck.has_optimizer) throw DataError("resume: checkpoint lacks optimizer state");
        params = std::move(ck.params);
        optimizer.emplace(optim_cfg, params);
        optimizer->restore(ck.optim_step, std::move(ck.first_moment), std::move(ck.second_moment));
        start_epoch = static_cast<int>(ck.progress.epochs_done);
        global_step = ck.progress.global_step;
    }

    TrainResult result;
    result.mpm_chance = 1.0 / (1.0 + cfg.pipeline.num_negatives);
    result.metrics_path = cfg.out_dir + "/metrics.csv";
    result.epochs_path = cfg.out_dir + "/epochs.csv";
    result.final_checkpoint = cfg.out_dir + "/model.kpck";

    std::ofstream metrics, epochs_csv;
    if (start_epoch == 0) {
        metrics.open(result.metrics_path, std::ios::trunc);
        epochs_csv.open(result.epochs_path, std::ios::trunc);
        metrics << "step,mlm,pri,mpm,total,lr\n";
        epochs_csv << "epoch,mlm,pri,mpm,total,holdout_mpm_acc,holdout_mpm_n\n";
    } else {
        metrics.open(result.metrics_path, std::ios::app);
        epochs_csv.open(result.epochs_path, std::ios::app);
    }
    if (!metrics || !epochs_csv) throw DataError("trainer: cannot write metrics under " + cfg.out_dir);

    std::string last_good = resume_path;
    int end_epoch = cfg.stop_after_epochs > 0 ? cfg.stop_after_epochs : cfg.epochs;

    for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
        Rng epoch_rng(mix_seed(cfg.seed, kEpochTag, static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order = train_idx;
        epoch_rng.shuffle(order);

        // Alternate PRI classes over the epoch's prompt-bearing sentences.
        std::vector<int> pri_labels(order.size(), 1);
        int flip = 0;
        for (std::size_t i = 0; i < order.size(); ++i)
            if (!data.prepared[order[i]].prompts.empty()) pri_labels[i] = (flip++ % 2 == 0) ? 1 : 0;

        double ep_mlm = 0, ep_pri = 0, ep_mpm = 0, ep_total = 0;
        int steps_this_epoch = 0;

        try {
            for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
                std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
                std::vector<ExampleSupervision> batch;
                batch.reserve(b1 - b0);
                for (std::size_t i = b0; i < b1; ++i) {
                    std::size_t idx = order[i];
                    Rng ex_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch),
                                        static_cast<std::uint64_t>(idx)));
                    batch.push_back(build_example(data.prepared[idx], data.kg, data.vocab,
                                                  cfg.pipeline, pri_labels[i], ex_rng));
                }

                Gradients grads;
                LossBreakdown lb = total_loss(params, batch, data.verb, data.vocab, cfg.lambda,
                                              cfg.mu, &grads);
                optimizer->step(params, grads);
                ++global_step;

                metrics << global_step << ',' << fmt(lb.mlm) << ',' << fmt(lb.pri) << ','
                        << fmt(lb.mpm) << ',' << fmt(lb.total) << ',' << fmt(optimizer->last_lr())
                        << '\n';

                ep_mlm += lb.mlm;
                ep_pri += lb.pri;
                ep_mpm += lb.mpm;
                ep_total += lb.total;
                ++steps_this_epoch;
            }
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + (last_good.empty()
                                     ? " (no checkpoint written yet)"
                                     : " (last good checkpoint: " + last_good + ")"));
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mlm = ep_mlm / steps_this_epoch;
        stats.pri = ep_pri / steps_this_epoch;
        stats.mpm = ep_mpm / steps_this_epoch;
        stats.total = ep_total / steps_this_epoch;
        auto [acc, n_eval] = evaluate_mpm(params, data, holdout_idx, cfg.pipeline, cfg.seed);
        stats.holdout_mpm_acc = acc;
        stats.holdout_mpm_n = n_eval;
        result.epochs.push_back(stats);

        epochs_csv << stats.epoch << ',' << fmt(stats.mlm) << ',' << fmt(stats.pri) << ','
                   << fmt(stats.mpm) << ',' << fmt(stats.total) << ',' << fmt(stats.holdout_mpm_acc)
                   << ',' << stats.holdout_mpm_n << '\n';
        epochs_csv.flush();

        TrainProgress progress{static_cast<std::uint32_t>(epoch + 1), global_step, cfg.seed};
        std::string ck_path = cfg.out_dir + "/checkpoint_epoch" + std::to_string(epoch) + ".kpck";
        save_checkpoint(ck_path, params, progress, &*optimizer);
        save_checkpoint(result.final_checkpoint, params, progress, &*optimizer);
        last_good = ck_path;
    }

    return result;
}

}  // namespace kprompt
