#pragma once

#include <optional>
#include <unordered_map>
#include <vector>

#include "kprompt/assembler.hpp"
#include "kprompt/encoder.hpp"
#include "kprompt/kb.hpp"
#include "kprompt/prompt.hpp"
#include "kprompt/vocab.hpp"

namespace kprompt {

// Relevance-inspection supervision for one prompt of a sequence.
struct PriExample {
    int prompt_idx = -1;
    int trig_open = -1;
    int trig_close = -1;
    int label = 1;  // 1 relevant, 0 corrupted
};

// Masked-entity supervision: rank the positive against sampled negatives.
struct MpmExample {
    int prompt_idx = -1;
    int mask_pos = -1;
    EntityId positive = kNoEntity;
    std::vector<EntityId> negatives;
    std::unordered_map<EntityId, double> q;  // sampling scores, all candidates
};

struct PromptRep {
    std::vector<double> boundary_sum;  // F(x_[K]) + F(x_[/K])
    std::vector<double> pre_ln;        // sigmoid(boundary_sum * W1)
    LayerNormTape ln;
    std::vector<double> h_p;
};

// h_P = LN(sigmoid((F(x_[K]) + F(x_[/K])) W1))
PromptRep prompt_representation(const Matrix& hidden, int trig_open, int trig_close,
                                const ModelParams& p);

struct PriResult {
    double loss = 0.0;
    double probs[2] = {0.0, 0.0};
    PromptRep rep;
};

PriResult pri_forward(const Matrix& hidden, const PriExample& ex, const ModelParams& p);
void pri_backward(const PriResult& res, const PriExample& ex, const ModelParams& p, double scale,
                  Gradients& grads, Matrix& d_hidden);

struct MaskRep {
    std::vector<double> hidden_row;  // F(x_[MASK])
    std::vector<double> pre_ln;      // sigmoid(hidden_row * W2)
    LayerNormTape ln;
    std::vector<double> h_m;
};

struct MpmResult {
    double loss = 0.0;
    std::vector<EntityId> candidates;  // positive first, then negatives
    std::vector<double> scores;        // g(e|P) per candidate
    std::vector<double> probs;         // softmax over scores
    std::vector<std::vector<double>> cand_embed;  // mean mention input embedding
    MaskRep rep;
};

// g(e|P) = mean over mentions of h_[MASK]^T x_v  -  log q(e)
double mpm_score(const Matrix& hidden, const MpmExample& ex, EntityId e, const ModelParams& p,
                 const VerbalizerTable& verb, const Vocab& vocab);

MpmResult mpm_forward(const Matrix& hidden, const MpmExample& ex, const ModelParams& p,
                      const VerbalizerTable& verb, const Vocab& vocab);
void mpm_backward(const MpmResult& res, const MpmExample& ex, const ModelParams& p,
                  const VerbalizerTable& verb, const Vocab& vocab, double scale, Gradients& grads,
                  Matrix& d_hidden);

struct MlmResult {
    double loss = 0.0;  // mean over supervised positions
    std::vector<int> positions;
    std::vector<std::vector<double>> probs;  // per position, over the vocab
};

// Tied output head: logits = hidden_row * emb.tok^T + task.mlm.bias
std::vector<double> mlm_logits(const Matrix& hidden, int pos, const ModelParams& p);

MlmResult mlm_forward(const Matrix& hidden, const std::vector<int>& labels, const ModelParams& p);
void mlm_backward(const MlmResult& res, const std::vector<int>& labels, const Matrix& hidden,
                  const ModelParams& p, double scale, Gradients& grads, Matrix& d_hidden);

struct ExampleSupervision {
    InputSequence seq;
    std::optional<PriExample> pri;
    std::optional<MpmExample> mpm;
};

struct LossBreakdown {
    double mlm = 0.0, pri = 0.0, mpm = 0.0, total = 0.0;
    int mlm_count = 0, pri_count = 0, mpm_count = 0;
};

// total = mean MLM + lambda * mean PRI + mu * mean MPM, each mean taken over
// the examples that carry that kind of supervision. When grads is non-null the
// exactly matching gradient is accumulated.
LossBreakdown total_loss(const ModelParams& p, const std::vector<ExampleSupervision>& batch,
                         const VerbalizerTable& verb, const Vocab& vocab, double lambda, double mu,
                         Gradients* grads = nullptr, Rng* dropout_rng = nullptr);

}  // namespace kprompt
